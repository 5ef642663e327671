use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io, HarnessError, Result};
use crate::spec::Block;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CaseStatus {
    Pass,
    Fail { reason: String },
    SkippedTooLarge { candidate_rows: u64, threshold: u64 },
    SkippedTooSlow { estimated_seconds: f64, cap_seconds: f64 },
}

impl CaseStatus {
    pub fn is_skipped(&self) -> bool {
        matches!(
            self,
            CaseStatus::SkippedTooLarge { .. } | CaseStatus::SkippedTooSlow { .. }
        )
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, CaseStatus::Fail { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            CaseStatus::Pass => "pass",
            CaseStatus::Fail { .. } => "fail",
            CaseStatus::SkippedTooLarge { .. } => "skipped_too_large",
            CaseStatus::SkippedTooSlow { .. } => "skipped_too_slow",
        }
    }

    pub fn detail(&self) -> String {
        match self {
            CaseStatus::Pass => String::new(),
            CaseStatus::Fail { reason } => reason.clone(),
            CaseStatus::SkippedTooLarge {
                candidate_rows,
                threshold,
            } => {
                format!("candidate_rows {candidate_rows} > threshold {threshold}")
            }
            CaseStatus::SkippedTooSlow {
                estimated_seconds,
                cap_seconds,
            } => format!("estimated {estimated_seconds:.1}s > cap {cap_seconds:.1}s"),
        }
    }

    /// `Pass` when `ok`, otherwise a failure carrying `reason`.
    pub fn check(ok: bool, reason: impl FnOnce() -> String) -> Self {
        if ok {
            CaseStatus::Pass
        } else {
            CaseStatus::Fail { reason: reason() }
        }
    }
}

/// One grid point of a block. `timings` hold wall-clock derived numbers
/// and are excluded from semantic comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub inputs: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, Value>,
    #[serde(flatten)]
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
}

fn json(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("record field serializes")
}

impl CaseRecord {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            status: CaseStatus::Pass,
            timings: BTreeMap::new(),
        }
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs.insert(key.to_owned(), json(value));
        self
    }

    pub fn output(&mut self, key: &str, value: impl Serialize) {
        self.outputs.insert(key.to_owned(), json(value));
    }

    pub fn timing(&mut self, key: &str, value: f64) {
        self.timings.insert(key.to_owned(), value);
    }

    /// Runs `body`; an error becomes a failed case rather than aborting the
    /// block.
    pub fn run(mut self, body: impl FnOnce(&mut Self) -> policykit::Result<CaseStatus>) -> Self {
        self.status = match body(&mut self) {
            Ok(status) => status,
            Err(e) => CaseStatus::Fail {
                reason: format!("error: {e}"),
            },
        };
        self
    }
}

/// A titled table rendered into markdown summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Rows built from wall-clock measurements.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timing_dependent: bool,
}

impl SummaryTable {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            timing_dependent: false,
        }
    }

    pub fn timed(mut self) -> Self {
        self.timing_dependent = true;
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
    pub debug_assertions: bool,
}

impl Environment {
    pub fn capture() -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION").to_owned(),
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub block: Block,
    pub seed: u64,
    pub knobs: Value,
    pub environment: Environment,
    pub cases: Vec<CaseRecord>,
    #[serde(default)]
    pub tables: Vec<SummaryTable>,
    pub passed: bool,
}

impl ResultBundle {
    pub fn new(block: Block, seed: u64, knobs: Value) -> Self {
        Self {
            block,
            seed,
            knobs,
            environment: Environment::capture(),
            cases: Vec::new(),
            tables: Vec::new(),
            passed: true,
        }
    }

    pub fn push(&mut self, case: CaseRecord) {
        self.passed &= !case.status.is_failure();
        self.cases.push(case);
    }

    pub fn case(&self, id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseRecord> {
        self.cases.iter().filter(|c| c.status.is_failure())
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let failed = self.failures().count();
        let skipped = self.cases.iter().filter(|c| c.status.is_skipped()).count();
        (self.cases.len() - failed - skipped, failed, skipped)
    }

    /// Everything that must repeat under a fixed seed: the bundle without
    /// timings, timed tables or the environment.
    pub fn semantic_view(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("bundle serializes");
        let obj = v.as_object_mut().expect("bundle is an object");
        obj.remove("environment");
        for case in obj["cases"].as_array_mut().expect("cases array") {
            case.as_object_mut().expect("case object").remove("timings");
        }
        obj["tables"]
            .as_array_mut()
            .expect("tables array")
            .retain(|t| t.get("timing_dependent").is_none());
        v
    }

    pub fn file_name(&self) -> String {
        format!("{}-seed{}.bundle.json", self.block, self.seed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(self.file_name());
        fs::write(&path, self.to_json()).map_err(io(&path))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Bundle {
            path: path.to_owned(),
            source,
        })
    }
}

/// Every bundle file in `dir`, ordered by block then seed.
pub fn read_bundles(dir: &Path) -> Result<Vec<ResultBundle>> {
    let mut bundles = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.to_string_lossy().ends_with(".bundle.json") {
            bundles.push(ResultBundle::read(&path)?);
        }
    }
    bundles.sort_by_key(|b| (b.block, b.seed));
    Ok(bundles)
}
