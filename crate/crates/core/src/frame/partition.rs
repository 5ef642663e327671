use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ColumnFrame;
use crate::error::{Error, Result};
use crate::rng::{mix64, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// Contiguous blocks; the first `n % p` partitions get one extra row.
    #[default]
    ByRowIndexBlock,
    /// `mix64(row_id) % p`, source order kept inside each partition.
    ByRowIdHash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    RowId,
    Feature(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Hash-shuffle all rows into a new partition count.
    Repartition(usize),
    /// Merge adjacent partitions down to a smaller count without moving rows
    /// across partition boundaries.
    Coalesce(usize),
    /// Seeded permutation of all rows, then block-split into the same count.
    ShuffleRows(u64),
    SortWithinPartition {
        key: SortKey,
        ascending: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Whether the perturbation happens before the manifest is locked. The
    /// frame operation itself ignores this; pipelines use it to decide where
    /// vocabulary and control are derived.
    pub applied_before_lock: bool,
}

/// A frame split into ordered shards.
#[derive(Debug, Clone)]
pub struct PartitionedFrame {
    partitions: Vec<ColumnFrame>,
    rule: AssignmentRule,
}

impl PartitionedFrame {
    pub fn partition(frame: &ColumnFrame, p: usize, rule: AssignmentRule) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("partition count must be at least 1"));
        }
        let n = frame.n_rows();
        let groups: Vec<Vec<usize>> = match rule {
            AssignmentRule::ByRowIndexBlock => block_ranges(n, p)
                .into_iter()
                .map(|(lo, hi)| (lo..hi).collect())
                .collect(),
            AssignmentRule::ByRowIdHash => {
                let mut groups = vec![Vec::new(); p];
                for (i, &id) in frame.row_ids().iter().enumerate() {
                    groups[(mix64(id) % p as u64) as usize].push(i);
                }
                groups
            }
        };
        Ok(Self {
            partitions: groups.iter().map(|g| frame.take(g)).collect(),
            rule,
        })
    }

    /// One partition holding the whole frame.
    pub fn single(frame: ColumnFrame) -> Self {
        Self {
            partitions: vec![frame],
            rule: AssignmentRule::ByRowIndexBlock,
        }
    }

    pub fn partitions(&self) -> &[ColumnFrame] {
        &self.partitions
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn rule(&self) -> AssignmentRule {
        self.rule
    }

    pub fn n_rows(&self) -> usize {
        self.partitions.iter().map(|p| p.n_rows()).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.partitions[0].feature_names()
    }

    /// Partitions concatenated in index order.
    pub fn concat(&self) -> ColumnFrame {
        ColumnFrame::concat(&self.partitions).expect("partitions share one schema")
    }

    pub fn apply_perturbation(&self, spec: &PerturbationSpec) -> Result<Self> {
        match &spec.kind {
            PerturbationKind::Repartition(p) => Self::partition(&self.concat(), *p, AssignmentRule::ByRowIdHash),
            PerturbationKind::Coalesce(p) => {
                if *p == 0 || *p > self.partition_count() {
                    return Err(Error::invalid(format!(
                        "cannot coalesce {} partitions into {p}",
                        self.partition_count()
                    )));
                }
                let partitions = block_ranges(self.partition_count(), *p)
                    .into_iter()
                    .map(|(lo, hi)| ColumnFrame::concat(&self.partitions[lo..hi]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self {
                    partitions,
                    rule: self.rule,
                })
            }
            PerturbationKind::ShuffleRows(seed) => {
                let all = self.concat();
                let mut idx: Vec<usize> = (0..all.n_rows()).collect();
                SeededRng::new(*seed).shuffle(&mut idx);
                Self::partition(&all.take(&idx), self.partition_count(), AssignmentRule::ByRowIndexBlock)
            }
            PerturbationKind::SortWithinPartition { key, ascending } => {
                let partitions = self
                    .partitions
                    .iter()
                    .map(|p| sort_partition(p, key, *ascending))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self {
                    partitions,
                    rule: self.rule,
                })
            }
        }
    }
}

/// Balanced contiguous ranges: sizes differ by at most one, larger first.
fn block_ranges(n: usize, p: usize) -> Vec<(usize, usize)> {
    let base = n / p;
    let extra = n % p;
    let mut lo = 0;
    (0..p)
        .map(|k| {
            let hi = lo + base + usize::from(k < extra);
            let r = (lo, hi);
            lo = hi;
            r
        })
        .collect()
}

fn sort_partition(frame: &ColumnFrame, key: &SortKey, ascending: bool) -> Result<ColumnFrame> {
    let mut idx: Vec<usize> = (0..frame.n_rows()).collect();
    match key {
        SortKey::RowId => {
            let ids = frame.row_ids();
            idx.sort_by(|&a, &b| directed(ids[a].cmp(&ids[b]), ascending));
        }
        SortKey::Feature(name) => {
            let col = frame
                .feature(name)
                .ok_or_else(|| Error::schema(format!("sort key {name:?} not found")))?;
            // Missing cells sort last in either direction.
            idx.sort_by(|&a, &b| match (col.get(a), col.get(b)) {
                (Some(x), Some(y)) => directed(x.total_cmp(&y), ascending),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            });
        }
    }
    Ok(frame.take(&idx))
}

fn directed(o: Ordering, ascending: bool) -> Ordering {
    if ascending {
        o
    } else {
        o.reverse()
    }
}
