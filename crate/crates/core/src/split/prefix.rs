use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Boundaries;
use crate::error::{Error, Result};
use crate::frame::{ColumnFrame, FeatureColumn, PartitionedFrame};

/// Per-bin, per-treatment sufficient statistics for one feature.
///
/// Matrices are row-major with the treatment axis innermost and always
/// `T` wide, so zero-support cells are explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixTable {
    pub feature: String,
    pub cuts: Vec<f64>,
    pub n_bins: usize,
    pub treatments: Vec<String>,
    /// `[B][T]`
    pub opps: Vec<u64>,
    /// `[B][T]`
    pub accepts: Vec<u64>,
    pub missing_opps: Vec<u64>,
    pub missing_accepts: Vec<u64>,
    /// `[B - 1][T]`, `left_opps[c][t] = sum(opps[b][t] for b <= c)`
    pub left_opps: Vec<u64>,
    pub left_accepts: Vec<u64>,
    /// Non-missing totals per treatment.
    pub total_opps: Vec<u64>,
    pub total_accepts: Vec<u64>,
}

impl PrefixTable {
    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.n_bins - 1
    }

    pub(crate) fn from_bin_counts(boundaries: &Boundaries, treatments: &[String], counts: BinCounts) -> Self {
        let t = treatments.len();
        let b = counts.n_bins;
        let mut left_opps = Vec::with_capacity((b - 1) * t);
        let mut left_accepts = Vec::with_capacity((b - 1) * t);
        let mut run_o = vec![0u64; t];
        let mut run_a = vec![0u64; t];
        for bin in 0..b {
            for k in 0..t {
                run_o[k] += counts.opps[bin * t + k];
                run_a[k] += counts.accepts[bin * t + k];
            }
            if bin + 1 < b {
                left_opps.extend_from_slice(&run_o);
                left_accepts.extend_from_slice(&run_a);
            }
        }
        let split = b * t;
        Self {
            feature: boundaries.feature().to_owned(),
            cuts: boundaries.cuts().to_vec(),
            n_bins: b,
            treatments: treatments.to_vec(),
            missing_opps: counts.opps[split..].to_vec(),
            missing_accepts: counts.accepts[split..].to_vec(),
            opps: counts.opps[..split].to_vec(),
            accepts: counts.accepts[..split].to_vec(),
            left_opps,
            left_accepts,
            total_opps: run_o,
            total_accepts: run_a,
        }
    }

    pub fn right_opps(&self, candidate: usize, treatment: usize) -> u64 {
        let t = self.n_treatments();
        self.total_opps[treatment] - self.left_opps[candidate * t + treatment]
    }

    pub fn right_accepts(&self, candidate: usize, treatment: usize) -> u64 {
        let t = self.n_treatments();
        self.total_accepts[treatment] - self.left_accepts[candidate * t + treatment]
    }

    /// Does some `(bin, treatment)` cell have zero opportunities?
    pub fn has_zero_support_cell(&self) -> bool {
        self.opps.iter().any(|&o| o == 0)
    }
}

/// Dense `(B + 1) x T` tallies; the last row is the missing bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BinCounts {
    pub n_bins: usize,
    pub n_treatments: usize,
    pub opps: Vec<u64>,
    pub accepts: Vec<u64>,
}

impl BinCounts {
    pub fn zeros(n_bins: usize, n_treatments: usize) -> Self {
        let len = (n_bins + 1) * n_treatments;
        Self {
            n_bins,
            n_treatments,
            opps: vec![0; len],
            accepts: vec![0; len],
        }
    }

    #[inline]
    pub fn add(&mut self, bin: usize, treatment: u32, outcome: u8) {
        let i = bin * self.n_treatments + treatment as usize;
        self.opps[i] += 1;
        self.accepts[i] += u64::from(outcome);
    }

    pub fn merge(mut self, other: &BinCounts) -> Self {
        self.opps.iter_mut().zip(&other.opps).for_each(|(a, b)| *a += b);
        self.accepts.iter_mut().zip(&other.accepts).for_each(|(a, b)| *a += b);
        self
    }

    /// Tallies over `rows` (or every row) of one shard.
    pub fn tally(
        column: &FeatureColumn,
        boundaries: &Boundaries,
        codes: &[u32],
        outcome: &[u8],
        rows: Option<&[usize]>,
        n_treatments: usize,
    ) -> Self {
        let mut counts = Self::zeros(boundaries.n_bins(), n_treatments);
        let mut visit = |i: usize| counts.add(boundaries.bucketize(column.get(i)), codes[i], outcome[i]);
        match rows {
            Some(rows) => rows.iter().copied().for_each(&mut visit),
            None => (0..codes.len()).for_each(&mut visit),
        }
        counts
    }
}

fn check_feature<'a>(frame: &'a ColumnFrame, feature: &str, boundaries: &Boundaries) -> Result<&'a FeatureColumn> {
    if boundaries.feature() != feature {
        return Err(Error::invalid(format!(
            "boundaries are for {:?}, not {feature:?}",
            boundaries.feature()
        )));
    }
    frame
        .feature(feature)
        .ok_or_else(|| Error::schema(format!("feature column {feature:?} missing")))
}

/// Prefix table for one feature over a whole frame.
pub fn build_prefix_sums(
    frame: &ColumnFrame,
    feature: &str,
    boundaries: &Boundaries,
    treatments: &[String],
) -> Result<PrefixTable> {
    let column = check_feature(frame, feature, boundaries)?;
    let codes = frame.treatment().encode(treatments)?;
    let counts = BinCounts::tally(column, boundaries, &codes, frame.outcome(), None, treatments.len());
    Ok(PrefixTable::from_bin_counts(boundaries, treatments, counts))
}

/// Shard-wise aggregation merged by integer addition.
pub fn build_prefix_sums_partitioned(
    data: &PartitionedFrame,
    feature: &str,
    boundaries: &Boundaries,
    treatments: &[String],
) -> Result<PrefixTable> {
    let shards = data
        .partitions()
        .par_iter()
        .map(|p| {
            let column = check_feature(p, feature, boundaries)?;
            let codes = p.treatment().encode(treatments)?;
            Ok(BinCounts::tally(
                column,
                boundaries,
                &codes,
                p.outcome(),
                None,
                treatments.len(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = shards.iter().fold(
        BinCounts::zeros(boundaries.n_bins(), treatments.len()),
        BinCounts::merge,
    );
    Ok(PrefixTable::from_bin_counts(boundaries, treatments, counts))
}
