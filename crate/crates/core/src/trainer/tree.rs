use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::Manifest;
use crate::error::{Error, Result};
use crate::frame::{ColumnFrame, PartitionedFrame};
use crate::split::{best_split, ExecutionPath, NanDirection, SplitConfig, SplitInput, SplitOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafNode {
    pub path: String,
    /// Per-treatment response rate in vocabulary order.
    pub policy: Vec<f64>,
    pub n_rows: u64,
    /// Treatments with no training rows here; their rate is reported as 0.
    pub unsupported: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub path: String,
    pub feature: String,
    pub threshold: f64,
    pub candidate_bin: usize,
    pub nan_direction: NanDirection,
    pub score: f64,
    pub n_rows: u64,
    pub left: Box<PolicyNode>,
    pub right: Box<PolicyNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyNode {
    Leaf(LeafNode),
    Split(SplitNode),
}

impl PolicyNode {
    pub fn path(&self) -> &str {
        match self {
            PolicyNode::Leaf(l) => &l.path,
            PolicyNode::Split(s) => &s.path,
        }
    }
}

/// A single greedy policy tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTree {
    pub root: PolicyNode,
    pub treatments: Vec<String>,
    pub control_label: String,
}

impl PolicyTree {
    pub fn depth(&self) -> usize {
        fn walk(n: &PolicyNode) -> usize {
            match n {
                PolicyNode::Leaf(_) => 0,
                PolicyNode::Split(s) => 1 + walk(&s.left).max(walk(&s.right)),
            }
        }
        walk(&self.root)
    }

    /// Every node in breadth-first order.
    pub fn nodes_bfs(&self) -> Vec<&PolicyNode> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([&self.root]);
        while let Some(n) = queue.pop_front() {
            out.push(n);
            if let PolicyNode::Split(s) = n {
                queue.push_back(&s.left);
                queue.push_back(&s.right);
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<&LeafNode> {
        self.nodes_bfs()
            .into_iter()
            .filter_map(|n| match n {
                PolicyNode::Leaf(l) => Some(l),
                _ => None,
            })
            .collect()
    }

    pub fn control_index(&self) -> usize {
        self.treatments
            .iter()
            .position(|t| *t == self.control_label)
            .expect("control is in the vocabulary")
    }
}

enum Expanded {
    Leaf(LeafNode),
    Split {
        split: crate::split::BestSplit,
        n_rows: u64,
    },
}

fn leaf(path: &str, data: &PartitionedFrame, codes: &[Vec<u32>], rows: &[Vec<usize>], vocab: &[String]) -> LeafNode {
    let t = vocab.len();
    let mut opps = vec![0u64; t];
    let mut accepts = vec![0u64; t];
    for (p, part) in data.partitions().iter().enumerate() {
        for &i in &rows[p] {
            let k = codes[p][i] as usize;
            opps[k] += 1;
            accepts[k] += u64::from(part.outcome()[i]);
        }
    }
    LeafNode {
        path: path.to_owned(),
        policy: opps
            .iter()
            .zip(&accepts)
            .map(|(&o, &a)| if o == 0 { 0.0 } else { a as f64 / o as f64 })
            .collect(),
        n_rows: opps.iter().sum(),
        unsupported: vocab
            .iter()
            .zip(&opps)
            .filter(|(_, &o)| o == 0)
            .map(|(l, _)| l.clone())
            .collect(),
    }
}

/// Greedy breadth-first training against a locked manifest.
///
/// Nodes expand in path order (`""`, `"L"`, `"R"`, `"LL"`, ...). Each node
/// takes the best split over every manifest feature with the manifest
/// boundaries and becomes a leaf at `max_depth`, when no candidate is
/// valid, or when it has fewer than `2 * min_leaf_size` rows.
pub fn train(data: &PartitionedFrame, manifest: &Manifest, execution_path: ExecutionPath) -> Result<PolicyTree> {
    manifest.verify()?;
    manifest.verify_frame(&data.concat())?;
    let vocab = manifest.treatment_vocabulary();
    let training = manifest.training();
    let config = SplitConfig {
        min_leaf_size: training.min_leaf_size,
        control_label_override: Some(manifest.control_label().to_owned()),
        execution_path,
        ..SplitConfig::default()
    };
    let codes = data
        .partitions()
        .iter()
        .map(|p| p.treatment().encode(vocab))
        .collect::<Result<Vec<_>>>()?;
    let col_idx: Vec<Vec<usize>> = data
        .partitions()
        .iter()
        .map(|p| {
            manifest
                .feature_names()
                .iter()
                .map(|n| {
                    p.feature_index(n)
                        .ok_or_else(|| Error::schema(format!("feature column {n:?} missing")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut done: BTreeMap<String, Expanded> = BTreeMap::new();
    let all_rows: Vec<Vec<usize>> = data.partitions().iter().map(|p| (0..p.n_rows()).collect()).collect();
    let mut queue = VecDeque::from([(String::new(), all_rows)]);
    while let Some((path, rows)) = queue.pop_front() {
        let n_rows: u64 = rows.iter().map(|r| r.len() as u64).sum();
        let stop = path.len() >= training.max_depth || n_rows < 2 * training.min_leaf_size;
        let outcome = if stop {
            None
        } else {
            let input = SplitInput::new(data, manifest.boundaries(), vocab).with_rows(&rows);
            match best_split(input, &config)? {
                SplitOutcome::Ok(b) => Some(b),
                SplitOutcome::NoValidCandidate { .. } => None,
                SplitOutcome::SkippedTooLarge { candidate_rows } => {
                    return Err(Error::UnsupportedConfiguration(format!(
                        "driver-collect split search skipped at node {path:?}: {candidate_rows} candidate rows"
                    )))
                }
            }
        };
        let Some(split) = outcome else {
            done.insert(path.clone(), Expanded::Leaf(leaf(&path, data, &codes, &rows, vocab)));
            continue;
        };
        let f = manifest
            .feature_names()
            .iter()
            .position(|n| *n == split.feature)
            .expect("split feature comes from the manifest");
        let mut left = Vec::with_capacity(rows.len());
        let mut right = Vec::with_capacity(rows.len());
        for (p, part) in data.partitions().iter().enumerate() {
            let col = &part.features()[col_idx[p][f]];
            let (l, r): (Vec<usize>, Vec<usize>) = rows[p].iter().partition(|&&i| match col.get(i) {
                None => split.nan_direction == NanDirection::Left,
                Some(v) => v <= split.threshold,
            });
            left.push(l);
            right.push(r);
        }
        queue.push_back((format!("{path}L"), left));
        queue.push_back((format!("{path}R"), right));
        done.insert(path, Expanded::Split { split, n_rows });
    }

    fn assemble(path: &str, done: &mut BTreeMap<String, Expanded>) -> PolicyNode {
        match done.remove(path).expect("every queued node is expanded") {
            Expanded::Leaf(l) => PolicyNode::Leaf(l),
            Expanded::Split { split, n_rows } => PolicyNode::Split(SplitNode {
                path: path.to_owned(),
                left: Box::new(assemble(&format!("{path}L"), done)),
                right: Box::new(assemble(&format!("{path}R"), done)),
                feature: split.feature,
                threshold: split.threshold,
                candidate_bin: split.candidate_bin,
                nan_direction: split.nan_direction,
                score: split.score,
                n_rows,
            }),
        }
    }
    Ok(PolicyTree {
        root: assemble("", &mut done),
        treatments: vocab.to_vec(),
        control_label: manifest.control_label().to_owned(),
    })
}

/// Per-row policy assignment, in frame row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignments {
    pub row_ids: Vec<u64>,
    pub width: usize,
    /// `[n x T]` row-major.
    pub policy: Vec<f64>,
    pub top_treatment: Vec<usize>,
    pub leaf_path: Vec<String>,
}

impl Assignments {
    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn policy_row(&self, i: usize) -> &[f64] {
        &self.policy[i * self.width..(i + 1) * self.width]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn top_treatment(policy: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in policy.iter().enumerate().skip(1) {
        if v > policy[best] {
            best = i;
        }
    }
    best
}

/// Routes every row with the forest rules (`<=` goes left, missing follows
/// the node's direction).
pub fn assign(tree: &PolicyTree, frame: &ColumnFrame) -> Result<Assignments> {
    let n = frame.n_rows();
    let width = tree.treatments.len();
    let mut out = Assignments {
        row_ids: frame.row_ids().to_vec(),
        width,
        policy: Vec::with_capacity(n * width),
        top_treatment: Vec::with_capacity(n),
        leaf_path: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut node = &tree.root;
        let leaf = loop {
            match node {
                PolicyNode::Leaf(l) => break l,
                PolicyNode::Split(s) => {
                    let col = frame
                        .feature(&s.feature)
                        .ok_or_else(|| Error::schema(format!("feature column {:?} missing", s.feature)))?;
                    let left = match col.get(i) {
                        None => s.nan_direction == NanDirection::Left,
                        Some(v) => v <= s.threshold,
                    };
                    node = if left { &s.left } else { &s.right };
                }
            }
        };
        out.policy.extend_from_slice(&leaf.policy);
        out.top_treatment.push(top_treatment(&leaf.policy));
        out.leaf_path.push(leaf.path.clone());
    }
    Ok(out)
}
