//! Partition-parallel forest scoring.
//!
//! Four backends share one contract: every row gets the mean of its
//! per-tree leaf payloads, whatever the backend, batch size or partition
//! count. They differ only in where model setup happens and in the shape
//! of the data the traversal reads.
//!
//! | backend | model setup | traversal input |
//! |---|---|---|
//! | `anti_pattern` | parse forest text for every row | one record per row |
//! | `broadcast_rowwise` | parse once per partition | one record per row |
//! | `vectorized_columnar` | compile on first batch of a partition | columnar slices |
//! | `vectorized_rowmajor` | compile on first batch of a partition | transposed row-major batch |

mod parity;
mod rowwise;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{forest_from_text, ColumnarBatch, ForestArrays, RowMajorBatch, VectorizedForest};
use crate::frame::{ColumnFrame, FeatureColumn, PartitionedFrame};

pub use parity::{check_parity, compare_scores, ParityReport, ScoreColumn, DEFAULT_TOLERANCE};
use rowwise::{Record, RowwiseModel};

pub const DEFAULT_BATCH_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    AntiPattern,
    BroadcastRowwise,
    VectorizedColumnar,
    VectorizedRowmajor,
}

impl BackendKind {
    pub const ALL: [BackendKind; 4] = [
        BackendKind::AntiPattern,
        BackendKind::BroadcastRowwise,
        BackendKind::VectorizedColumnar,
        BackendKind::VectorizedRowmajor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::AntiPattern => "anti_pattern",
            BackendKind::BroadcastRowwise => "broadcast_rowwise",
            BackendKind::VectorizedColumnar => "vectorized_columnar",
            BackendKind::VectorizedRowmajor => "vectorized_rowmajor",
        }
    }

    pub fn is_vectorized(self) -> bool {
        matches!(self, BackendKind::VectorizedColumnar | BackendKind::VectorizedRowmajor)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown backend {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceBackend {
    pub kind: BackendKind,
    /// Rows per scoring batch; only the vectorized kinds batch.
    pub batch_size: usize,
}

impl InferenceBackend {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_batch_size(self, batch_size: usize) -> Self {
        Self { batch_size, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

impl fmt::Display for InferenceBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// Scores plus the number of model initializations performed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRun {
    pub scores: ScoreColumn,
    pub init_count: usize,
}

/// Worker pool for partition scoring.
#[derive(Debug)]
pub struct Engine {
    pool: Option<rayon::ThreadPool>,
}

impl Default for Engine {
    fn default() -> Self {
        Self { pool: None }
    }
}

impl Engine {
    /// `None` uses all available hardware threads.
    pub fn new(workers: Option<usize>) -> Result<Self> {
        let pool = match workers {
            None => None,
            Some(0) => return Err(Error::invalid("worker count must be at least 1")),
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid(format!("worker pool: {e}")))?,
            ),
        };
        Ok(Self { pool })
    }

    pub fn score(&self, pf: &PartitionedFrame, forest: &ForestArrays, backend: InferenceBackend) -> Result<ScoreRun> {
        backend.check()?;
        forest.validate(None).into_result()?;
        let text = (backend.kind == BackendKind::AntiPattern).then(|| forest.to_text());
        let job = || {
            pf.partitions()
                .par_iter()
                .map(|part| score_partition(part, forest, text.as_deref(), backend))
                .collect::<Result<Vec<_>>>()
        };
        let parts = match &self.pool {
            Some(pool) => pool.install(job)?,
            None => job()?,
        };
        let mut row_ids = Vec::with_capacity(pf.n_rows());
        let mut values = Vec::with_capacity(pf.n_rows() * forest.n_treatments);
        let mut init_count = 0;
        for (part, (scores, inits)) in pf.partitions().iter().zip(parts) {
            row_ids.extend_from_slice(part.row_ids());
            values.extend(scores);
            init_count += inits;
        }
        Ok(ScoreRun {
            scores: ScoreColumn::new(row_ids, forest.n_treatments, values)?,
            init_count,
        })
    }

    pub fn measure_throughput(
        &self,
        pf: &PartitionedFrame,
        forest: &ForestArrays,
        backend: InferenceBackend,
        repeats: usize,
    ) -> Result<Throughput> {
        if repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        self.score(pf, forest, backend)?;
        let samples = (0..repeats)
            .map(|_| {
                let start = Instant::now();
                self.score(pf, forest, backend)?;
                Ok(start.elapsed().as_secs_f64())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Throughput::from_samples(pf.n_rows(), samples))
    }
}

/// Per-row score vectors for every row of `pf`, in partition order.
pub fn score(pf: &PartitionedFrame, forest: &ForestArrays, backend: InferenceBackend) -> Result<ScoreColumn> {
    Engine::default().score(pf, forest, backend).map(|r| r.scores)
}

/// Median wall time of `repeats` timed runs after one warmup.
pub fn measure_throughput(
    pf: &PartitionedFrame,
    forest: &ForestArrays,
    backend: InferenceBackend,
    repeats: usize,
) -> Result<Throughput> {
    Engine::default().measure_throughput(pf, forest, backend, repeats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub rows: usize,
    pub rows_per_second: f64,
    pub wall_seconds: f64,
    pub samples: Vec<f64>,
}

impl Throughput {
    /// Lower median, so `rows_per_second` pairs with an observed sample.
    pub fn from_samples(rows: usize, samples: Vec<f64>) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let wall_seconds = sorted[(sorted.len() - 1) / 2];
        Self {
            rows,
            rows_per_second: rows as f64 / wall_seconds,
            wall_seconds,
            samples,
        }
    }
}

fn forest_columns<'a>(part: &'a ColumnFrame, forest: &ForestArrays) -> Result<Vec<&'a FeatureColumn>> {
    forest
        .feature_names
        .iter()
        .map(|name| {
            part.feature(name)
                .ok_or_else(|| Error::schema(format!("feature column {name:?} missing")))
        })
        .collect()
}

fn record<'a>(names: &'a [String], columns: &[&FeatureColumn], row: usize) -> Record<'a> {
    names
        .iter()
        .zip(columns)
        .map(|(n, c)| (n.as_str(), c.get(row)))
        .collect()
}

fn score_partition(
    part: &ColumnFrame,
    forest: &ForestArrays,
    text: Option<&str>,
    backend: InferenceBackend,
) -> Result<(Vec<f64>, usize)> {
    let columns = forest_columns(part, forest)?;
    let n = part.n_rows();
    let mut out = Vec::with_capacity(n * forest.n_treatments);
    let mut inits = 0;
    match backend.kind {
        BackendKind::AntiPattern => {
            let text = text.expect("serialized forest");
            for row in 0..n {
                let model = RowwiseModel::from_forest(&forest_from_text(text)?);
                inits += 1;
                let rec = record(&forest.feature_names, &columns, row);
                model.score_row(&rec, &mut out)?;
            }
        }
        BackendKind::BroadcastRowwise => {
            let model = RowwiseModel::from_forest(forest);
            inits += 1;
            for row in 0..n {
                let rec = record(&forest.feature_names, &columns, row);
                model.score_row(&rec, &mut out)?;
            }
        }
        BackendKind::VectorizedColumnar | BackendKind::VectorizedRowmajor => {
            let mut model: Option<VectorizedForest> = None;
            for start in (0..n).step_by(backend.batch_size) {
                let len = backend.batch_size.min(n - start);
                let m = model.get_or_insert_with(|| {
                    inits += 1;
                    VectorizedForest::compile(forest)
                });
                let batch = ColumnarBatch::new(&columns, start, len);
                if backend.kind == BackendKind::VectorizedColumnar {
                    m.score_into(&batch, &mut out)?;
                } else {
                    m.score_into(&RowMajorBatch::transpose_from(&batch), &mut out)?;
                }
            }
        }
    }
    Ok((out, inits))
}
