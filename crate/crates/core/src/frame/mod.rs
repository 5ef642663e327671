//! Columnar data model with explicit missingness and stable row identity.
//!
//! A feature cell is *missing* when its validity bit is unset (NULL) or its
//! payload is NaN. The two encodings are kept apart at this layer, so they
//! hash differently, while every consumer above it routes them the same way.

mod csv_ingest;
mod partition;

use std::collections::{HashMap, HashSet};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use csv_ingest::{read_csv, read_csv_from_reader, CsvRoles};
pub use partition::{AssignmentRule, PartitionedFrame, PerturbationKind, PerturbationSpec, SortKey};

/// Decoded view of a single feature cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Value(f64),
    Null,
    Nan,
}

impl Cell {
    pub fn is_missing(self) -> bool {
        !matches!(self, Cell::Value(_))
    }
}

/// A named float64 column with a validity bitmap.
#[derive(Debug, Clone)]
pub struct FeatureColumn {
    name: String,
    values: Vec<f64>,
    validity: Vec<bool>,
}

impl FeatureColumn {
    /// All cells valid; NaN payloads are kept as NaN-encoded missing cells.
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Self {
        let validity = vec![true; values.len()];
        Self {
            name: name.into(),
            values,
            validity,
        }
    }

    /// `None` becomes a NULL cell.
    pub fn from_options(name: impl Into<String>, cells: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (values, validity) = cells
            .into_iter()
            .map(|c| match c {
                Some(v) => (v, true),
                None => (0.0, false),
            })
            .unzip();
        Self {
            name: name.into(),
            values,
            validity,
        }
    }

    pub fn from_cells(name: impl Into<String>, cells: impl IntoIterator<Item = Cell>) -> Self {
        let (values, validity) = cells
            .into_iter()
            .map(|c| match c {
                Cell::Value(v) => (v, true),
                Cell::Nan => (f64::NAN, true),
                Cell::Null => (0.0, false),
            })
            .unzip();
        Self {
            name: name.into(),
            values,
            validity,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw payloads. NULL cells hold an unspecified payload; check
    /// [`validity`](Self::validity) before trusting a value.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    pub fn cell(&self, i: usize) -> Cell {
        if !self.validity[i] {
            Cell::Null
        } else if self.values[i].is_nan() {
            Cell::Nan
        } else {
            Cell::Value(self.values[i])
        }
    }

    /// Present value, or `None` for either missing encoding.
    #[inline]
    pub fn get(&self, i: usize) -> Option<f64> {
        let v = self.values[i];
        if self.validity[i] && !v.is_nan() {
            Some(v)
        } else {
            None
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.get(i).is_none()).count()
    }

    fn take(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            validity: idx.iter().map(|&i| self.validity[i]).collect(),
        }
    }

    fn bitwise_eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.len() == other.len()
            && (0..self.len()).all(|i| match (self.cell(i), other.cell(i)) {
                (Cell::Value(a), Cell::Value(b)) => a.to_bits() == b.to_bits(),
                (a, b) => a == b,
            })
    }
}

/// Dictionary-encoded string label column (treatment labels).
#[derive(Debug, Clone, Default)]
pub struct LabelColumn {
    dictionary: Vec<String>,
    codes: Vec<u32>,
}

impl LabelColumn {
    pub fn from_labels<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        let mut lookup: HashMap<String, u32> = HashMap::new();
        let mut dictionary = Vec::new();
        let codes = labels
            .into_iter()
            .map(|l| {
                let l = l.as_ref();
                *lookup.entry(l.to_owned()).or_insert_with(|| {
                    dictionary.push(l.to_owned());
                    (dictionary.len() - 1) as u32
                })
            })
            .collect();
        Self { dictionary, codes }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.dictionary[self.codes[i] as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.codes.iter().map(|&c| self.dictionary[c as usize].as_str())
    }

    /// Distinct labels in order of first appearance in the current row order.
    pub fn first_appearance_order(&self) -> Vec<String> {
        let mut seen = vec![false; self.dictionary.len()];
        let mut out = Vec::new();
        for &c in &self.codes {
            if !seen[c as usize] {
                seen[c as usize] = true;
                out.push(self.dictionary[c as usize].clone());
            }
        }
        out
    }

    /// Maps every row to its index in `vocabulary`. Labels outside the
    /// vocabulary are a contract violation.
    pub fn encode(&self, vocabulary: &[String]) -> Result<Vec<u32>> {
        let mut map = Vec::with_capacity(self.dictionary.len());
        for label in &self.dictionary {
            match vocabulary.iter().position(|v| v == label) {
                Some(p) => map.push(Some(p as u32)),
                None => map.push(None),
            }
        }
        self.codes
            .iter()
            .map(|&c| {
                map[c as usize].ok_or_else(|| {
                    Error::contract(format!(
                        "treatment label {:?} is outside the fixed vocabulary {:?}",
                        self.dictionary[c as usize], vocabulary
                    ))
                })
            })
            .collect()
    }

    fn take(&self, idx: &[usize]) -> Self {
        Self {
            dictionary: self.dictionary.clone(),
            codes: idx.iter().map(|&i| self.codes[i]).collect(),
        }
    }
}

/// Immutable columnar dataset: row ids, ordered feature columns, a treatment
/// label column and a binary outcome.
#[derive(Debug, Clone)]
pub struct ColumnFrame {
    row_ids: Vec<u64>,
    features: Vec<FeatureColumn>,
    treatment: LabelColumn,
    outcome: Vec<u8>,
}

impl ColumnFrame {
    pub fn new(
        row_ids: Vec<u64>,
        features: Vec<FeatureColumn>,
        treatment: LabelColumn,
        outcome: Vec<u8>,
    ) -> Result<Self> {
        let n = row_ids.len();
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::schema(format!(
                "column lengths differ: {n} row ids, {} treatments, {} outcomes",
                treatment.len(),
                outcome.len()
            )));
        }
        let mut names = HashSet::new();
        for f in &features {
            if f.len() != n {
                return Err(Error::schema(format!(
                    "feature {:?} has {} cells, expected {n}",
                    f.name,
                    f.len()
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::schema(format!("duplicate feature column {:?}", f.name)));
            }
        }
        if let Some(bad) = outcome.iter().find(|&&y| y > 1) {
            return Err(Error::schema(format!("outcome must be 0 or 1, found {bad}")));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = row_ids.iter().find(|&&id| !seen.insert(id)) {
            return Err(Error::schema(format!("duplicate row id {dup}")));
        }
        Ok(Self {
            row_ids,
            features,
            treatment,
            outcome,
        })
    }

    /// A frame with the same schema and no rows.
    pub fn empty_like(&self) -> Self {
        self.take(&[])
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn features(&self) -> &[FeatureColumn] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureColumn> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn treatment(&self) -> &LabelColumn {
        &self.treatment
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    /// Gathers rows by position, in the given order.
    pub fn take(&self, idx: &[usize]) -> Self {
        Self {
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            features: self.features.iter().map(|f| f.take(idx)).collect(),
            treatment: self.treatment.take(idx),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
        }
    }

    /// Keeps only rows whose id is in `ids`, preserving frame order.
    pub fn filter_row_ids(&self, ids: &HashSet<u64>) -> Self {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| ids.contains(&self.row_ids[i])).collect();
        self.take(&idx)
    }

    /// Same rows with the feature columns reordered (or subset) by name.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let features = names
            .iter()
            .map(|n| {
                self.feature(n)
                    .cloned()
                    .ok_or_else(|| Error::schema(format!("feature column {n:?} not found")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            row_ids: self.row_ids.clone(),
            features,
            treatment: self.treatment.clone(),
            outcome: self.outcome.clone(),
        })
    }

    /// Row-wise concatenation. All frames must share the feature order.
    pub fn concat(frames: &[ColumnFrame]) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::invalid("cannot concatenate zero frames"));
        };
        let names = first.feature_names();
        for f in frames {
            if f.feature_names() != names {
                return Err(Error::schema("frames disagree on feature order"));
            }
        }
        let row_ids = frames.iter().flat_map(|f| f.row_ids.iter().copied()).collect();
        let features = (0..names.len())
            .map(|j| FeatureColumn {
                name: names[j].clone(),
                values: frames
                    .iter()
                    .flat_map(|f| f.features[j].values.iter().copied())
                    .collect(),
                validity: frames
                    .iter()
                    .flat_map(|f| f.features[j].validity.iter().copied())
                    .collect(),
            })
            .collect();
        let treatment = LabelColumn::from_labels(frames.iter().flat_map(|f| f.treatment.iter()));
        let outcome = frames.iter().flat_map(|f| f.outcome.iter().copied()).collect();
        ColumnFrame::new(row_ids, features, treatment, outcome)
    }

    /// Rows reordered by ascending row id.
    pub fn sorted_by_row_id(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.sort_by_key(|&i| self.row_ids[i]);
        self.take(&idx)
    }

    /// Order-sensitive digest of the canonical serialization; see
    /// [`frame_checksum`].
    pub fn checksum(&self) -> String {
        frame_checksum(self)
    }

    /// Order-insensitive content digest: the checksum of the frame sorted by
    /// row id. Used by manifests, whose locked row set must survive
    /// repartitioning and shuffles.
    pub fn content_digest(&self) -> String {
        self.sorted_by_row_id().checksum()
    }

    /// Bitwise equality: same row order, same feature order, same cells
    /// (NULL and NaN distinguished, values compared by bit pattern).
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.row_ids == other.row_ids
            && self.features.len() == other.features.len()
            && self.features.iter().zip(&other.features).all(|(a, b)| a.bitwise_eq(b))
            && self.treatment.iter().eq(other.treatment.iter())
            && self.outcome == other.outcome
    }
}

impl PartialEq for ColumnFrame {
    fn eq(&self, other: &Self) -> bool {
        self.bitwise_eq(other)
    }
}

const CELL_VALUE: u8 = 0;
const CELL_NULL: u8 = 1;
const CELL_NAN: u8 = 2;

/// SHA-256 over the canonical byte serialization, rendered as hex.
///
/// Layout (all integers little-endian):
/// `b"policykit-frame\x01"`, `n_rows: u64`, `n_features: u64`, every row id
/// as `u64`; then per feature column in order: name length `u64`, UTF-8
/// name, and per cell a tag byte (0 value, 1 NULL, 2 NaN) followed by the
/// `f64` bits (zero for NULL, the payload bits for NaN); then each treatment
/// label as length `u64` plus UTF-8 bytes; then one byte per outcome.
pub fn frame_checksum(frame: &ColumnFrame) -> String {
    let mut h = Sha256::new();
    h.update(b"policykit-frame\x01");
    h.update((frame.n_rows() as u64).to_le_bytes());
    h.update((frame.features.len() as u64).to_le_bytes());
    for id in &frame.row_ids {
        h.update(id.to_le_bytes());
    }
    let mut buf = Vec::with_capacity(9 * frame.n_rows());
    for col in &frame.features {
        h.update((col.name.len() as u64).to_le_bytes());
        h.update(col.name.as_bytes());
        buf.clear();
        for i in 0..col.len() {
            let (tag, bits) = match col.cell(i) {
                Cell::Value(v) => (CELL_VALUE, v.to_bits()),
                Cell::Null => (CELL_NULL, 0),
                Cell::Nan => (CELL_NAN, col.values[i].to_bits()),
            };
            buf.push(tag);
            buf.extend_from_slice(&bits.to_le_bytes());
        }
        h.update(&buf);
    }
    for label in frame.treatment.iter() {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
    }
    h.update(&frame.outcome);
    hex::encode(h.finalize())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// `n` rows, two features (one with NULLs), ids starting at 100.
    pub fn small_frame(n: usize) -> ColumnFrame {
        let ids: Vec<u64> = (0..n as u64).map(|i| 100 + i).collect();
        let a = FeatureColumn::from_values("a", (0..n).map(|i| i as f64 * 0.1).collect());
        let b = FeatureColumn::from_options("b", (0..n).map(|i| if i % 3 == 0 { None } else { Some(i as f64) }));
        let t = LabelColumn::from_labels((0..n).map(|i| if i % 2 == 0 { "control" } else { "treat" }));
        let y = (0..n).map(|i| (i % 4 == 1) as u8).collect();
        ColumnFrame::new(ids, vec![a, b], t, y).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::small_frame;
    use super::*;

    #[test]
    fn rejects_ragged_and_duplicate_ids() {
        let t = LabelColumn::from_labels(["a", "b"]);
        let err = ColumnFrame::new(
            vec![1, 2],
            vec![FeatureColumn::from_values("x", vec![1.0])],
            t.clone(),
            vec![0, 1],
        );
        assert!(matches!(err, Err(Error::Schema(_))));
        let err = ColumnFrame::new(vec![1, 1], vec![], t, vec![0, 1]);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn identical_frames_share_checksum() {
        assert_eq!(small_frame(10).checksum(), small_frame(10).checksum());
    }

    #[test]
    fn checksum_is_sensitive_to_feature_order() {
        let f = small_frame(10);
        let swapped = f.select_features(&["b".into(), "a".into()]).unwrap();
        assert_ne!(f.checksum(), swapped.checksum());
        assert!(f != swapped);
    }

    #[test]
    fn null_and_nan_are_distinct_but_both_missing() {
        let mk = |cell| {
            ColumnFrame::new(
                vec![0],
                vec![FeatureColumn::from_cells("x", [cell])],
                LabelColumn::from_labels(["control"]),
                vec![0],
            )
            .unwrap()
        };
        let null = mk(Cell::Null);
        let nan = mk(Cell::Nan);
        assert_ne!(null.checksum(), nan.checksum());
        assert_eq!(null.features()[0].get(0), None);
        assert_eq!(nan.features()[0].get(0), None);
        assert!(null.features()[0].cell(0).is_missing());
        assert!(nan.features()[0].cell(0).is_missing());
    }

    #[test]
    fn content_digest_ignores_row_order() {
        let f = small_frame(10);
        let rev: Vec<usize> = (0..10).rev().collect();
        let r = f.take(&rev);
        assert_ne!(f.checksum(), r.checksum());
        assert_eq!(f.content_digest(), r.content_digest());
    }

    #[test]
    fn encode_rejects_unknown_labels() {
        let f = small_frame(4);
        assert_eq!(
            f.treatment().encode(&["treat".into(), "control".into()]).unwrap(),
            vec![1, 0, 1, 0]
        );
        assert!(matches!(
            f.treatment().encode(&["control".into()]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn first_appearance_follows_row_order() {
        let l = LabelColumn::from_labels(["b", "a", "b", "c"]);
        assert_eq!(l.first_appearance_order(), vec!["b", "a", "c"]);
        let rev = l.take(&[3, 2, 1, 0]);
        assert_eq!(rev.first_appearance_order(), vec!["c", "b", "a"]);
    }
}
