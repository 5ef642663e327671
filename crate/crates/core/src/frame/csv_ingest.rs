use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, ColumnFrame, FeatureColumn, LabelColumn};
use crate::error::{Error, Result};

/// Which CSV header columns play which role. Features are read in the order
/// listed here, which becomes the frame's feature order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvRoles {
    /// When absent, row ids are assigned 0..N in file order.
    pub row_id: Option<String>,
    pub features: Vec<String>,
    pub treatment: String,
    pub outcome: String,
}

pub fn read_csv(path: impl AsRef<Path>, roles: &CsvRoles) -> Result<ColumnFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv_from_reader(file, roles)
}

/// Empty feature cells become NULL; the literal `NaN` becomes a NaN payload.
pub fn read_csv_from_reader(reader: impl Read, roles: &CsvRoles) -> Result<ColumnFrame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(format!("csv has no column {name:?}")))
    };
    let id_col = roles.row_id.as_deref().map(col).transpose()?;
    let feat_cols = roles.features.iter().map(|f| col(f)).collect::<Result<Vec<_>>>()?;
    let t_col = col(&roles.treatment)?;
    let y_col = col(&roles.outcome)?;

    let mut ids = Vec::new();
    let mut cells: Vec<Vec<Cell>> = vec![Vec::new(); feat_cols.len()];
    let mut labels = Vec::new();
    let mut outcome = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        ids.push(match id_col {
            Some(c) => field(c)
                .parse::<u64>()
                .map_err(|e| Error::parse(line, format!("row id: {e}")))?,
            None => i as u64,
        });
        for (k, &c) in feat_cols.iter().enumerate() {
            let raw = field(c);
            let cell = match raw {
                "" => Cell::Null,
                "NaN" => Cell::Nan,
                s => Cell::Value(
                    s.parse::<f64>()
                        .map_err(|e| Error::parse(line, format!("feature {:?}: {e}", roles.features[k])))?,
                ),
            };
            cells[k].push(cell);
        }
        labels.push(field(t_col).to_owned());
        outcome.push(match field(y_col) {
            "0" | "0.0" => 0,
            "1" | "1.0" => 1,
            other => return Err(Error::parse(line, format!("outcome must be 0 or 1, got {other:?}"))),
        });
    }
    let features = roles
        .features
        .iter()
        .zip(cells)
        .map(|(name, c)| FeatureColumn::from_cells(name.clone(), c))
        .collect();
    ColumnFrame::new(ids, features, LabelColumn::from_labels(labels), outcome)
}
