//! Collect-less multi-treatment split search.
//!
//! Stage one turns a frame into a fixed [`PrefixTable`] per feature using
//! explicit [`Boundaries`] with a dedicated missing bin. Stage two expands
//! every interior cut into both missing-value routes, checks candidate
//! validity, scores valid candidates with the DDP max-envelope, and picks
//! the winner under a strict total order:
//!
//! 1. higher score;
//! 2. lower threshold boundary;
//! 3. lower candidate bin;
//! 4. missing values routed left before right;
//! 5. lexicographically smaller feature name.
//!
//! Three execution paths compute the same answer: a driver-collect
//! reference that materializes every candidate centrally, a relational plan
//! (grouped aggregate, then cumulative window), and a feature-sharded
//! executor-local path that only ships per-feature winners.

mod bucket;
mod naive;
mod paths;
mod prefix;
mod quantile;
mod relational;
mod score;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bucket::Boundaries;
pub use naive::{naive_variant_best_split, NaiveOptions, NaiveVariant};
pub use paths::{best_split, SplitInput};
pub use prefix::{build_prefix_sums, build_prefix_sums_partitioned, PrefixTable};
pub use quantile::{approximate_boundaries, QuantileSummary};
pub use score::{compare_candidates, ddp_max, expand_and_score, BranchCounts, CandidateScore, InvalidReason};

/// Which branch receives missing-bin rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NanDirection {
    Left,
    Right,
}

impl NanDirection {
    pub const BOTH: [NanDirection; 2] = [NanDirection::Left, NanDirection::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            NanDirection::Left => "left",
            NanDirection::Right => "right",
        }
    }
}

impl fmt::Display for NanDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionPath {
    #[default]
    ReferenceDriverCollect,
    RelationalWindowed,
    PartitionedExecutorLocal,
}

impl ExecutionPath {
    pub const ALL: [ExecutionPath; 3] = [
        ExecutionPath::ReferenceDriverCollect,
        ExecutionPath::RelationalWindowed,
        ExecutionPath::PartitionedExecutorLocal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionPath::ReferenceDriverCollect => "reference_driver_collect",
            ExecutionPath::RelationalWindowed => "relational_windowed",
            ExecutionPath::PartitionedExecutorLocal => "partitioned_executor_local",
        }
    }
}

impl fmt::Display for ExecutionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExecutionPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExecutionPath::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown execution path {s:?}")))
    }
}

pub const DEFAULT_SAFETY_SKIP_THRESHOLD: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub min_leaf_size: u64,
    pub control_label_override: Option<String>,
    /// Largest candidate table the driver-collect path will materialize.
    pub safety_skip_threshold: u64,
    pub execution_path: ExecutionPath,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            min_leaf_size: 1,
            control_label_override: None,
            safety_skip_threshold: DEFAULT_SAFETY_SKIP_THRESHOLD,
            execution_path: ExecutionPath::default(),
        }
    }
}

impl SplitConfig {
    pub fn with_path(&self, path: ExecutionPath) -> Self {
        Self {
            execution_path: path,
            ..self.clone()
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.min_leaf_size == 0 {
            return Err(Error::invalid("min_leaf_size must be at least 1"));
        }
        Ok(())
    }
}

/// The winning candidate with its branch diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSplit {
    pub feature: String,
    pub candidate_bin: usize,
    pub threshold: f64,
    pub nan_direction: NanDirection,
    pub score: f64,
    pub control_label: String,
    pub left: BranchCounts,
    pub right: BranchCounts,
}

impl BestSplit {
    /// `(feature, bin, threshold, direction, score)` rendered with
    /// round-trip floats; equal strings mean bit-identical tuples.
    pub fn tuple_string(&self) -> String {
        format!(
            "({:?}, {}, {:?}, {:?}, {:?})",
            self.feature,
            self.candidate_bin,
            self.threshold,
            self.nan_direction.as_str(),
            self.score
        )
    }

    /// Same feature, bin, threshold bits and direction.
    pub fn same_identity(&self, other: &BestSplit) -> bool {
        self.feature == other.feature
            && self.candidate_bin == other.candidate_bin
            && self.threshold.to_bits() == other.threshold.to_bits()
            && self.nan_direction == other.nan_direction
    }
}

/// Result of a split search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SplitOutcome {
    Ok(BestSplit),
    NoValidCandidate { reason: String },
    SkippedTooLarge { candidate_rows: u64 },
}

impl SplitOutcome {
    pub fn best(&self) -> Option<&BestSplit> {
        match self {
            SplitOutcome::Ok(b) => Some(b),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            SplitOutcome::Ok(_) => "ok",
            SplitOutcome::NoValidCandidate { .. } => "no_valid_candidate",
            SplitOutcome::SkippedTooLarge { .. } => "skipped_too_large",
        }
    }

    /// Status plus tuple; equal strings mean the same decision bit for bit.
    pub fn decision_string(&self) -> String {
        match self {
            SplitOutcome::Ok(b) => b.tuple_string(),
            other => other.status().to_owned(),
        }
    }
}

/// Rows of the candidate table: `F * (B - 1) * T`.
pub fn candidate_row_count(n_features: u64, n_bins: u64, n_treatments: u64) -> Result<u64> {
    if n_features == 0 || n_bins < 2 || n_treatments == 0 {
        return Err(Error::invalid(format!(
            "candidate_row_count needs F >= 1, B >= 2, T >= 1; got ({n_features}, {n_bins}, {n_treatments})"
        )));
    }
    Ok(n_features * (n_bins - 1) * n_treatments)
}

/// Control label priority: explicit override, then a case-insensitive
/// `control`, then an exact `"0"`, then the lexicographically smallest label.
pub fn select_control(labels: &[String], override_label: Option<&str>) -> Result<String> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot select a control from an empty label set"));
    }
    if let Some(o) = override_label {
        return if labels.iter().any(|l| l == o) {
            Ok(o.to_owned())
        } else {
            Err(Error::contract(format!(
                "control override {o:?} is not in the treatment vocabulary"
            )))
        };
    }
    let pick = labels
        .iter()
        .filter(|l| l.eq_ignore_ascii_case("control"))
        .min()
        .or_else(|| labels.iter().find(|l| *l == "0"))
        .or_else(|| labels.iter().min())
        .expect("non-empty");
    Ok(pick.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn control_priority() {
        assert_eq!(
            select_control(&labels(&["Control", "offerA"]), None).unwrap(),
            "Control"
        );
        assert_eq!(select_control(&labels(&["0", "1", "2"]), None).unwrap(), "0");
        assert_eq!(select_control(&labels(&["z_arm", "a_arm"]), None).unwrap(), "a_arm");
        assert_eq!(
            select_control(&labels(&["b", "CONTROL", "0"]), None).unwrap(),
            "CONTROL"
        );
        assert_eq!(select_control(&labels(&["b", "a"]), Some("b")).unwrap(), "b");
        assert!(matches!(
            select_control(&labels(&["b", "a"]), Some("c")),
            Err(Error::ContractViolation(_))
        ));
        assert!(matches!(select_control(&[], None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn candidate_rows_law() {
        assert_eq!(candidate_row_count(10, 32, 4).unwrap(), 1240);
        assert_eq!(candidate_row_count(1000, 32, 4).unwrap(), 124_000);
        assert_eq!(candidate_row_count(1, 2, 1).unwrap(), 1);
        assert!(candidate_row_count(0, 32, 4).is_err());
    }

    #[test]
    fn outcome_serializes_with_status_tag() {
        let s = serde_json::to_string(&SplitOutcome::SkippedTooLarge {
            candidate_rows: 124_000,
        })
        .unwrap();
        assert_eq!(s, r#"{"status":"skipped_too_large","candidate_rows":124000}"#);
    }
}
