use rayon::prelude::*;

use super::prefix::BinCounts;
use super::score::{control_index, expand_with, rank, ScoreRules, Selector};
use super::{relational, Boundaries, ExecutionPath, NanDirection, PrefixTable, SplitConfig, SplitOutcome};
use crate::error::{Error, Result};
use crate::frame::PartitionedFrame;

/// Inputs shared by every execution path.
#[derive(Debug, Clone, Copy)]
pub struct SplitInput<'a> {
    pub data: &'a PartitionedFrame,
    /// One entry per searched feature, in search order.
    pub boundaries: &'a [Boundaries],
    /// Fixed treatment vocabulary; fixes the treatment axis of every table.
    pub vocabulary: &'a [String],
    /// Row indices per partition (a tree node); `None` means all rows.
    pub rows: Option<&'a [Vec<usize>]>,
}

impl<'a> SplitInput<'a> {
    pub fn new(data: &'a PartitionedFrame, boundaries: &'a [Boundaries], vocabulary: &'a [String]) -> Self {
        Self {
            data,
            boundaries,
            vocabulary,
            rows: None,
        }
    }

    pub fn with_rows(self, rows: &'a [Vec<usize>]) -> Self {
        Self {
            rows: Some(rows),
            ..self
        }
    }

    /// `sum over features of (B_f - 1) * T`.
    pub fn candidate_rows(&self) -> u64 {
        let t = self.vocabulary.len() as u64;
        self.boundaries.iter().map(|b| (b.n_bins() as u64 - 1) * t).sum()
    }
}

/// Encoded treatments per partition, checked against the input schema.
pub(crate) struct Prepared<'a> {
    pub input: SplitInput<'a>,
    pub codes: Vec<Vec<u32>>,
    pub feature_idx: Vec<usize>,
}

impl<'a> Prepared<'a> {
    pub fn new(input: SplitInput<'a>) -> Result<Self> {
        let parts = input.data.partitions();
        if let Some(rows) = input.rows {
            if rows.len() != parts.len() {
                return Err(Error::invalid(format!(
                    "row subsets cover {} partitions, data has {}",
                    rows.len(),
                    parts.len()
                )));
            }
        }
        let names = input.data.feature_names();
        let feature_idx = input
            .boundaries
            .iter()
            .map(|b| {
                names
                    .iter()
                    .position(|n| n == b.feature())
                    .ok_or_else(|| Error::schema(format!("feature column {:?} missing", b.feature())))
            })
            .collect::<Result<Vec<_>>>()?;
        let codes = parts
            .iter()
            .map(|p| p.treatment().encode(input.vocabulary))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input,
            codes,
            feature_idx,
        })
    }

    pub fn rows(&self, partition: usize) -> Option<&[usize]> {
        self.input.rows.map(|r| r[partition].as_slice())
    }

    /// Partition-local tallies for feature `f`, merged in partition order.
    pub fn table(&self, f: usize, boundaries: &Boundaries) -> PrefixTable {
        let t = self.input.vocabulary.len();
        let counts = self
            .input
            .data
            .partitions()
            .iter()
            .enumerate()
            .map(|(p, part)| {
                BinCounts::tally(
                    &part.features()[self.feature_idx[f]],
                    boundaries,
                    &self.codes[p],
                    part.outcome(),
                    self.rows(p),
                    t,
                )
            })
            .fold(BinCounts::zeros(boundaries.n_bins(), t), |acc, c| acc.merge(&c));
        PrefixTable::from_bin_counts(boundaries, self.input.vocabulary, counts)
    }

    /// Iterates the selected rows of every partition in partition order.
    pub fn for_each_row(&self, mut visit: impl FnMut(usize, usize)) {
        for (p, part) in self.input.data.partitions().iter().enumerate() {
            match self.rows(p) {
                Some(rows) => rows.iter().for_each(|&i| visit(p, i)),
                None => (0..part.n_rows()).for_each(|i| visit(p, i)),
            }
        }
    }
}

pub(crate) fn finish(selector: Selector, control: &str) -> SplitOutcome {
    match selector.best {
        Some(best) => SplitOutcome::Ok(best.into_best(control)),
        None => SplitOutcome::NoValidCandidate {
            reason: selector.reason(),
        },
    }
}

/// Best split under the configured execution path.
pub fn best_split(input: SplitInput<'_>, config: &SplitConfig) -> Result<SplitOutcome> {
    config.check()?;
    let prepared = Prepared::new(input)?;
    if input.boundaries.is_empty() {
        return Ok(SplitOutcome::NoValidCandidate {
            reason: "no features to search".into(),
        });
    }
    let control = super::select_control(input.vocabulary, config.control_label_override.as_deref())?;
    match config.execution_path {
        ExecutionPath::ReferenceDriverCollect => driver_collect(&prepared, config, &control),
        ExecutionPath::RelationalWindowed => relational::search(&prepared, config, &control),
        ExecutionPath::PartitionedExecutorLocal => executor_local(&prepared, config, &control),
    }
}

fn driver_collect(prepared: &Prepared<'_>, config: &SplitConfig, control: &str) -> Result<SplitOutcome> {
    let rows = prepared.input.candidate_rows();
    if rows > config.safety_skip_threshold {
        return Ok(SplitOutcome::SkippedTooLarge { candidate_rows: rows });
    }
    let rules = ScoreRules::contract(config);
    let mut all = Vec::new();
    for (f, b) in prepared.input.boundaries.iter().enumerate() {
        let table = prepared.table(f, b);
        let c = control_index(&table, config)?;
        all.extend(expand_with(&table, c, &NanDirection::BOTH, rules));
    }
    let mut selector = Selector::default();
    let (mut valid, invalid): (Vec<_>, Vec<_>) = all.into_iter().partition(|c| c.valid);
    invalid.into_iter().for_each(|c| selector.offer(c));
    valid.sort_by(rank);
    if let Some(first) = valid.into_iter().next() {
        selector.offer(first);
    }
    Ok(finish(selector, control))
}

fn executor_local(prepared: &Prepared<'_>, config: &SplitConfig, control: &str) -> Result<SplitOutcome> {
    let rules = ScoreRules::contract(config);
    let winners = prepared
        .input
        .boundaries
        .par_iter()
        .enumerate()
        .map(|(f, b)| {
            let table = prepared.table(f, b);
            let c = control_index(&table, config)?;
            let mut local = Selector::default();
            expand_with(&table, c, &NanDirection::BOTH, rules)
                .into_iter()
                .for_each(|cand| local.offer(cand));
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = winners.into_iter().fold(Selector::default(), |mut acc, s| {
        acc.absorb(s);
        acc
    });
    Ok(finish(merged, control))
}
