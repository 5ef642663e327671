use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use policykit::synth::{MissingEncoding, MissingFocus};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    P1,
    P2,
    C1,
    C2,
    E1,
    F1,
    F2,
    F3,
    S1,
    S2,
}

impl Block {
    pub const ALL: [Block; 10] = [
        Block::P1,
        Block::P2,
        Block::C1,
        Block::C2,
        Block::E1,
        Block::F1,
        Block::F2,
        Block::F3,
        Block::S1,
        Block::S2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::P1 => "P1",
            Block::P2 => "P2",
            Block::C1 => "C1",
            Block::C2 => "C2",
            Block::E1 => "E1",
            Block::F1 => "F1",
            Block::F2 => "F2",
            Block::F3 => "F3",
            Block::S1 => "S1",
            Block::S2 => "S2",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Block::P1 => "inference throughput ladder",
            Block::P2 => "split-search scale and safety skip",
            Block::C1 => "inference backend parity",
            Block::C2 => "split-search path parity",
            Block::E1 => "locked-manifest witness preservation",
            Block::F1 => "naive variant failure catalog",
            Block::F2 => "boundary perturbation witness",
            Block::F3 => "missingness exactness grid",
            Block::S1 => "layout perturbation robustness",
            Block::S2 => "vectorized backend crossover",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Block {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Spec(format!("unknown block {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P1Knobs {
    pub n_rows: Vec<usize>,
    pub n_features: usize,
    pub n_treatments: usize,
    pub n_trees: usize,
    pub depth: usize,
    pub partitions: usize,
    pub batch_size: usize,
    pub repeats: usize,
    /// anti_pattern is timed on this many leading rows.
    pub anti_pattern_rows: usize,
    pub case_timeout_seconds: f64,
    pub min_vectorized_speedup: f64,
    pub min_broadcast_speedup: f64,
}

impl Default for P1Knobs {
    fn default() -> Self {
        Self {
            n_rows: vec![100_000, 1_000_000],
            n_features: 32,
            n_treatments: 4,
            n_trees: 50,
            depth: 7,
            partitions: 8,
            batch_size: 10_000,
            repeats: 3,
            anti_pattern_rows: 1_000,
            case_timeout_seconds: 120.0,
            min_vectorized_speedup: 10.0,
            min_broadcast_speedup: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P2Knobs {
    pub n_rows: usize,
    pub feature_counts: Vec<usize>,
    pub n_treatments: usize,
    pub n_bins: usize,
    pub partitions: usize,
    pub safety_skip_threshold: u64,
    pub min_leaf_size: u64,
}

impl Default for P2Knobs {
    fn default() -> Self {
        Self {
            n_rows: 100_000,
            feature_counts: vec![10, 50, 250, 1000],
            n_treatments: 4,
            n_bins: 32,
            partitions: 8,
            safety_skip_threshold: 100_000,
            min_leaf_size: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C1Knobs {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_treatments: usize,
    pub n_trees: usize,
    pub depth: usize,
    pub p_miss: f64,
    pub partitions: usize,
    pub batch_size: usize,
    pub tolerance: f64,
    /// anti_pattern pairs are compared on this many leading rows.
    pub anti_pattern_rows: usize,
}

impl Default for C1Knobs {
    fn default() -> Self {
        Self {
            n_rows: 100_000,
            n_features: 32,
            n_treatments: 4,
            n_trees: 50,
            depth: 7,
            p_miss: 0.05,
            partitions: 8,
            batch_size: 10_000,
            tolerance: 1e-9,
            anti_pattern_rows: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C2Knobs {
    pub n_rows: usize,
    pub n_treatments: usize,
    pub p_miss: f64,
    pub n_bins: usize,
    pub partitions: usize,
    pub min_leaf_size: u64,
    pub random_instances: usize,
    pub score_tolerance: f64,
}

impl Default for C2Knobs {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            n_treatments: 4,
            p_miss: 0.1,
            n_bins: 32,
            partitions: 8,
            min_leaf_size: 50,
            random_instances: 100,
            score_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct E1Knobs {
    pub n_rows: usize,
    pub treatments: Vec<usize>,
    pub p_miss: Vec<f64>,
    pub depths: Vec<usize>,
    pub partitions: Vec<usize>,
    pub n_bins: usize,
    pub min_leaf_size: u64,
    pub holdout_fraction: f64,
}

impl Default for E1Knobs {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            treatments: vec![4, 8],
            p_miss: vec![0.0, 0.3],
            depths: vec![1, 2, 3, 4],
            partitions: vec![1, 4, 16],
            n_bins: 32,
            min_leaf_size: 50,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F1Knobs {
    pub n_rows: usize,
    pub n_treatments: usize,
    pub p_miss: f64,
    pub n_bins: usize,
    pub partitions: usize,
    pub min_leaf_size: u64,
    pub shuffles: usize,
    pub quantile_epsilon: f64,
}

impl Default for F1Knobs {
    fn default() -> Self {
        Self {
            n_rows: 100_000,
            n_treatments: 4,
            p_miss: 0.1,
            n_bins: 32,
            partitions: 8,
            min_leaf_size: 50,
            shuffles: 8,
            quantile_epsilon: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F2Knobs {
    pub n_rows: usize,
    pub n_treatments: usize,
    pub p_miss: f64,
    pub n_bins: usize,
    pub boundary: f64,
    pub shifted_boundary: f64,
    pub depth: usize,
    pub min_leaf_size: u64,
    pub holdout_fraction: f64,
    pub quantile_epsilon: f64,
}

impl Default for F2Knobs {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            n_treatments: 4,
            p_miss: 0.1,
            n_bins: 32,
            boundary: 0.5,
            shifted_boundary: 0.4999999999,
            depth: 2,
            min_leaf_size: 50,
            holdout_fraction: 0.2,
            quantile_epsilon: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F3Knobs {
    pub n_rows: usize,
    pub n_treatments: usize,
    pub p_miss: Vec<f64>,
    pub encodings: Vec<MissingEncoding>,
    pub focuses: Vec<MissingFocus>,
    pub n_bins: usize,
    pub partitions: usize,
    pub depth: usize,
    pub min_leaf_size: u64,
    pub holdout_fraction: f64,
    pub n_trees: usize,
    pub tree_depth: usize,
}

impl Default for F3Knobs {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            n_treatments: 4,
            p_miss: vec![0.0, 0.1, 0.3, 0.5],
            encodings: vec![MissingEncoding::Null, MissingEncoding::Nan],
            focuses: vec![
                MissingFocus::ControlArm,
                MissingFocus::TreatedArms,
                MissingFocus::PositiveOutcome,
            ],
            n_bins: 32,
            partitions: 4,
            depth: 2,
            min_leaf_size: 50,
            holdout_fraction: 0.2,
            n_trees: 20,
            tree_depth: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct S1Knobs {
    pub n_rows: usize,
    pub n_treatments: usize,
    pub p_miss: f64,
    pub n_bins: usize,
    pub partitions: usize,
    pub depth: usize,
    pub min_leaf_size: u64,
    pub holdout_fraction: f64,
}

impl Default for S1Knobs {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            n_treatments: 4,
            p_miss: 0.1,
            n_bins: 32,
            partitions: 4,
            depth: 3,
            min_leaf_size: 50,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct S2Knobs {
    pub n_rows: usize,
    pub n_features: usize,
    pub batch_sizes: Vec<usize>,
    pub depths: Vec<usize>,
    pub tree_counts: Vec<usize>,
    pub treatments: Vec<usize>,
    pub partitions: usize,
    pub repeats: usize,
    pub case_timeout_seconds: f64,
}

impl Default for S2Knobs {
    fn default() -> Self {
        Self {
            n_rows: 100_000,
            n_features: 32,
            batch_sizes: vec![1_000, 10_000, 50_000],
            depths: vec![3, 7],
            tree_counts: vec![10, 50],
            treatments: vec![4, 8],
            partitions: 8,
            repeats: 3,
            case_timeout_seconds: 120.0,
        }
    }
}

/// The knob set of one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BlockKnobs {
    P1(P1Knobs),
    P2(P2Knobs),
    C1(C1Knobs),
    C2(C2Knobs),
    E1(E1Knobs),
    F1(F1Knobs),
    F2(F2Knobs),
    F3(F3Knobs),
    S1(S1Knobs),
    S2(S2Knobs),
}

fn knobs_from<T: DeserializeOwned>(block: Block, table: toml::Table) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| HarnessError::Spec(format!("{block} knobs: {e}")))
}

impl BlockKnobs {
    pub fn defaults(block: Block) -> Self {
        match block {
            Block::P1 => BlockKnobs::P1(P1Knobs::default()),
            Block::P2 => BlockKnobs::P2(P2Knobs::default()),
            Block::C1 => BlockKnobs::C1(C1Knobs::default()),
            Block::C2 => BlockKnobs::C2(C2Knobs::default()),
            Block::E1 => BlockKnobs::E1(E1Knobs::default()),
            Block::F1 => BlockKnobs::F1(F1Knobs::default()),
            Block::F2 => BlockKnobs::F2(F2Knobs::default()),
            Block::F3 => BlockKnobs::F3(F3Knobs::default()),
            Block::S1 => BlockKnobs::S1(S1Knobs::default()),
            Block::S2 => BlockKnobs::S2(S2Knobs::default()),
        }
    }

    /// Parses the knob table for `block`; unlisted knobs keep defaults and
    /// unknown knobs are rejected.
    pub fn from_table(block: Block, table: toml::Table) -> Result<Self> {
        Ok(match block {
            Block::P1 => BlockKnobs::P1(knobs_from(block, table)?),
            Block::P2 => BlockKnobs::P2(knobs_from(block, table)?),
            Block::C1 => BlockKnobs::C1(knobs_from(block, table)?),
            Block::C2 => BlockKnobs::C2(knobs_from(block, table)?),
            Block::E1 => BlockKnobs::E1(knobs_from(block, table)?),
            Block::F1 => BlockKnobs::F1(knobs_from(block, table)?),
            Block::F2 => BlockKnobs::F2(knobs_from(block, table)?),
            Block::F3 => BlockKnobs::F3(knobs_from(block, table)?),
            Block::S1 => BlockKnobs::S1(knobs_from(block, table)?),
            Block::S2 => BlockKnobs::S2(knobs_from(block, table)?),
        })
    }

    pub fn block(&self) -> Block {
        match self {
            BlockKnobs::P1(_) => Block::P1,
            BlockKnobs::P2(_) => Block::P2,
            BlockKnobs::C1(_) => Block::C1,
            BlockKnobs::C2(_) => Block::C2,
            BlockKnobs::E1(_) => Block::E1,
            BlockKnobs::F1(_) => Block::F1,
            BlockKnobs::F2(_) => Block::F2,
            BlockKnobs::F3(_) => Block::F3,
            BlockKnobs::S1(_) => Block::S1,
            BlockKnobs::S2(_) => Block::S2,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("knobs serialize")
    }
}

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub block: Block,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub knobs: BlockKnobs,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    block: String,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    knobs: toml::Table,
}

#[derive(Serialize)]
struct RawSpecOut<'a> {
    block: Block,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<&'a PathBuf>,
    knobs: &'a BlockKnobs,
}

impl ExperimentSpec {
    pub fn new(block: Block, seed: u64) -> Self {
        Self {
            block,
            seed,
            out: None,
            knobs: BlockKnobs::defaults(block),
        }
    }

    pub fn with_knobs(mut self, knobs: BlockKnobs) -> Self {
        self.block = knobs.block();
        self.knobs = knobs;
        self
    }

    /// ```toml
    /// block = "C1"
    /// seed = 7
    /// out = "results"
    ///
    /// [knobs]
    /// n_rows = 20000
    /// ```
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let block: Block = raw.block.parse()?;
        let spec = Self {
            block,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            out: raw.out,
            knobs: BlockKnobs::from_table(block, raw.knobs)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RawSpecOut {
            block: self.block,
            seed: self.seed,
            out: self.out.as_ref(),
            knobs: &self.knobs,
        })
        .expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.knobs.block() != self.block {
            return Err(HarnessError::Spec(format!(
                "block {} with {} knobs",
                self.block,
                self.knobs.block()
            )));
        }
        let bad = |what: &str| Err(HarnessError::Spec(format!("{}: {what}", self.block)));
        let fraction = |p: f64| (0.0..1.0).contains(&p);
        match &self.knobs {
            BlockKnobs::P1(k) if k.n_rows.is_empty() || k.repeats == 0 || k.batch_size == 0 => {
                bad("n_rows, repeats and batch_size must be non-empty and positive")
            }
            BlockKnobs::P2(k) if k.feature_counts.is_empty() => bad("feature_counts is empty"),
            BlockKnobs::C1(k) if !(k.tolerance >= 0.0) || k.batch_size == 0 || !fraction(k.p_miss) => {
                bad("tolerance, batch_size or p_miss out of range")
            }
            BlockKnobs::C2(k) if !fraction(k.p_miss) => bad("p_miss out of range"),
            BlockKnobs::E1(k)
                if k.treatments.is_empty()
                    || k.depths.is_empty()
                    || k.partitions.is_empty()
                    || !k.p_miss.iter().all(|&p| fraction(p)) =>
            {
                bad("empty grid axis or p_miss out of range")
            }
            BlockKnobs::F1(k) if k.shuffles == 0 || !fraction(k.p_miss) => bad("shuffles must be positive"),
            BlockKnobs::F3(k) if !k.p_miss.iter().all(|&p| fraction(p)) => bad("p_miss out of range"),
            BlockKnobs::S2(k) if k.batch_sizes.contains(&0) || k.repeats == 0 => {
                bad("batch sizes and repeats must be positive")
            }
            _ => Ok(()),
        }
    }
}
