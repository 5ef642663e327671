use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Engine, InferenceBackend};
use crate::error::{Error, Result};
use crate::forest::ForestArrays;
use crate::frame::PartitionedFrame;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Row-major `[n x T]` score vectors with their row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreColumn {
    row_ids: Vec<u64>,
    width: usize,
    values: Vec<f64>,
}

impl ScoreColumn {
    pub fn new(row_ids: Vec<u64>, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != row_ids.len() * width {
            return Err(Error::schema(format!(
                "{} score values for {} rows of width {width}",
                values.len(),
                row_ids.len()
            )));
        }
        Ok(Self { row_ids, width, values })
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn sorted_by_row_id(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_unstable_by_key(|&i| self.row_ids[i]);
        Self {
            row_ids: order.iter().map(|&i| self.row_ids[i]).collect(),
            width: self.width,
            values: order.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    /// SHA-256 over row ids and value bits in row-id order.
    pub fn checksum(&self) -> String {
        let sorted = self.sorted_by_row_id();
        let mut h = Sha256::new();
        h.update(b"policykit-scores\x01");
        h.update((sorted.len() as u64).to_le_bytes());
        h.update((sorted.width as u64).to_le_bytes());
        for (i, id) in sorted.row_ids.iter().enumerate() {
            h.update(id.to_le_bytes());
            for v in sorted.row(i) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub reference_backend: String,
    pub candidate_backend: String,
    pub rows: usize,
    /// Rows where some entry differs by more than `tolerance`.
    pub mismatch_rows: usize,
    pub max_abs_delta: f64,
    pub checksum_equal: bool,
    pub tolerance: f64,
}

impl ParityReport {
    pub fn passed(&self) -> bool {
        self.mismatch_rows == 0
    }
}

/// Row-id aligned comparison of two score columns.
pub fn compare_scores(
    reference_name: &str,
    reference: &ScoreColumn,
    candidate_name: &str,
    candidate: &ScoreColumn,
    tolerance: f64,
) -> Result<ParityReport> {
    if reference.width != candidate.width {
        return Err(Error::Alignment(format!(
            "score widths differ: {} vs {}",
            reference.width, candidate.width
        )));
    }
    if reference.len() != candidate.len() {
        return Err(Error::Alignment(format!(
            "row counts differ: {} vs {}",
            reference.len(),
            candidate.len()
        )));
    }
    let position: HashMap<u64, usize> = candidate.row_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut mismatch_rows = 0;
    let mut max_abs_delta = 0.0f64;
    for (i, id) in reference.row_ids.iter().enumerate() {
        let j = *position
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("row id {id} missing from {candidate_name}")))?;
        let mut mismatch = false;
        for (a, b) in reference.row(i).iter().zip(candidate.row(j)) {
            let delta = if a.to_bits() == b.to_bits() {
                0.0
            } else if a.is_nan() || b.is_nan() {
                f64::INFINITY
            } else {
                (a - b).abs()
            };
            max_abs_delta = max_abs_delta.max(delta);
            mismatch |= delta > tolerance;
        }
        mismatch_rows += usize::from(mismatch);
    }
    Ok(ParityReport {
        reference_backend: reference_name.to_owned(),
        candidate_backend: candidate_name.to_owned(),
        rows: reference.len(),
        mismatch_rows,
        max_abs_delta,
        checksum_equal: reference.checksum() == candidate.checksum(),
        tolerance,
    })
}

/// Scores `pf` with both backends and compares the results.
pub fn check_parity(
    pf: &PartitionedFrame,
    forest: &ForestArrays,
    reference: InferenceBackend,
    candidate: InferenceBackend,
    tolerance: f64,
) -> Result<ParityReport> {
    let engine = Engine::default();
    let a = engine.score(pf, forest, reference)?.scores;
    let b = engine.score(pf, forest, candidate)?.scores;
    compare_scores(reference.kind.as_str(), &a, candidate.kind.as_str(), &b, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_comparison_is_clean() {
        let s = ScoreColumn::new(vec![3, 1], 2, vec![0.1, 0.9, 0.5, 0.5]).unwrap();
        let r = compare_scores("a", &s, "a", &s, DEFAULT_TOLERANCE).unwrap();
        assert_eq!((r.mismatch_rows, r.max_abs_delta, r.checksum_equal), (0, 0.0, true));
    }

    #[test]
    fn alignment_is_by_row_id() {
        let a = ScoreColumn::new(vec![1, 2], 1, vec![0.1, 0.2]).unwrap();
        let b = ScoreColumn::new(vec![2, 1], 1, vec![0.2, 0.1]).unwrap();
        let r = compare_scores("a", &a, "b", &b, 0.0).unwrap();
        assert_eq!(r.mismatch_rows, 0);
        assert!(r.checksum_equal);
        let c = ScoreColumn::new(vec![2, 5], 1, vec![0.2, 0.1]).unwrap();
        assert!(matches!(
            compare_scores("a", &a, "c", &c, 0.0),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn small_fault_is_counted() {
        let a = ScoreColumn::new(vec![1, 2], 1, vec![0.1, 0.2]).unwrap();
        let b = ScoreColumn::new(vec![1, 2], 1, vec![0.1, 0.2 + 1e-6]).unwrap();
        let r = compare_scores("a", &a, "b", &b, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(r.mismatch_rows, 1);
        assert!(r.max_abs_delta > 9e-7);
        assert!(!r.checksum_equal);
    }
}
