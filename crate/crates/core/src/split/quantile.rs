use super::Boundaries;
use crate::error::{Error, Result};
use crate::frame::PartitionedFrame;

/// Rank summary keeping every `ceil(eps * n)`-th sorted value with the
/// number of values it stands for. Summaries merge by concatenation, so
/// the answer depends on how the data was partitioned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantileSummary {
    samples: Vec<(f64, u64)>,
    count: u64,
}

impl QuantileSummary {
    pub fn from_values(mut values: Vec<f64>, epsilon: f64) -> Self {
        values.retain(|v| !v.is_nan());
        values.sort_by(f64::total_cmp);
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let step = ((epsilon * n as f64).ceil() as usize).max(1);
        let mut samples = Vec::with_capacity(n / step + 1);
        let mut start = 0;
        while start < n {
            let end = (start + step).min(n);
            samples.push((values[end - 1], (end - start) as u64));
            start = end;
        }
        Self {
            samples,
            count: n as u64,
        }
    }

    pub fn merge(mut self, other: &QuantileSummary) -> Self {
        self.samples.extend_from_slice(&other.samples);
        self.samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.count += other.count;
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Smallest sample whose cumulative weight reaches `q * count`.
    pub fn query(&self, q: f64) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let target = ((q * self.count as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for &(v, w) in &self.samples {
            seen += w;
            if seen >= target {
                return Some(v);
            }
        }
        self.samples.last().map(|s| s.0)
    }
}

/// Cuts at quantiles `k / n_bins` of one feature, recomputed from the data
/// as partitioned; duplicate cuts collapse.
pub fn approximate_boundaries(
    data: &PartitionedFrame,
    feature: &str,
    n_bins: usize,
    epsilon: f64,
) -> Result<Boundaries> {
    if n_bins < 2 || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(
            "approximate boundaries need n_bins >= 2 and 0 < epsilon < 1",
        ));
    }
    let mut summary = QuantileSummary::default();
    for part in data.partitions() {
        let col = part
            .feature(feature)
            .ok_or_else(|| Error::schema(format!("feature column {feature:?} missing")))?;
        let values = (0..col.len()).filter_map(|i| col.get(i)).collect();
        summary = summary.merge(&QuantileSummary::from_values(values, epsilon));
    }
    let mut cuts: Vec<f64> = (1..n_bins)
        .filter_map(|k| summary.query(k as f64 / n_bins as f64))
        .collect();
    cuts.dedup();
    if cuts.is_empty() {
        return Err(Error::invalid(format!("{feature}: no present values to summarize")));
    }
    Boundaries::new(feature, cuts)
}
