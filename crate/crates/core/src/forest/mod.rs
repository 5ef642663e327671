//! Array-native policy forests.
//!
//! A tree is a set of parallel node arrays plus a leaf payload matrix with
//! one row per node and one column per treatment. Routing:
//!
//! * continuous node: left iff `value <= split_value`;
//! * categorical node: left iff `value == split_value` (exact float
//!   equality on integer-coded categories);
//! * missing value (NULL or NaN), either node kind: left iff
//!   `nan_goes_left`.
//!
//! A forest scores a row as the arithmetic mean of its trees' payloads,
//! summed in tree order starting from the first tree's payload and divided
//! by the tree count.

mod kernel;
mod random;
mod text;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernel::{ColumnarBatch, FeatureSource, RowMajorBatch, VectorizedForest, VectorizedTree};
pub use random::{random_forest, RandomForestSpec};
pub use text::{forest_from_text, forest_to_text, FOREST_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    InternalContinuous,
    InternalCategorical,
    Leaf,
}

impl NodeKind {
    pub fn is_leaf(self) -> bool {
        self == NodeKind::Leaf
    }
}

/// Parallel node arrays for one tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeArrays {
    pub node_type: Vec<NodeKind>,
    pub feature_index: Vec<usize>,
    pub split_value: Vec<f64>,
    pub left_child: Vec<usize>,
    pub right_child: Vec<usize>,
    pub nan_goes_left: Vec<bool>,
    /// Row-major `[n_nodes x payload_width]`.
    pub leaf_payload: Vec<f64>,
    pub payload_width: usize,
}

impl TreeArrays {
    /// A single-leaf tree.
    pub fn leaf(payload: Vec<f64>) -> Self {
        let width = payload.len();
        Self {
            node_type: vec![NodeKind::Leaf],
            feature_index: vec![0],
            split_value: vec![f64::NAN],
            left_child: vec![0],
            right_child: vec![0],
            nan_goes_left: vec![false],
            leaf_payload: payload,
            payload_width: width,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_type.len()
    }

    pub fn payload(&self, node: usize) -> &[f64] {
        &self.leaf_payload[node * self.payload_width..(node + 1) * self.payload_width]
    }

    /// Default traversal step budget: four times the node count.
    pub fn default_step_budget(&self) -> usize {
        4 * self.n_nodes()
    }

    /// Scores a batch with this tree alone; `[n x T]` row-major.
    pub fn traverse_batch(&self, batch: &dyn FeatureSource) -> Result<Vec<f64>> {
        let t = self.payload_width;
        let kernel = VectorizedTree::compile(self, 0);
        let leaves = kernel.route(batch, self.default_step_budget())?;
        let mut out = Vec::with_capacity(leaves.len() * t);
        for leaf in leaves {
            out.extend_from_slice(self.payload(leaf as usize));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestArrays {
    pub trees: Vec<TreeArrays>,
    pub n_treatments: usize,
    pub feature_names: Vec<String>,
    pub treatment_labels: Vec<String>,
}

impl ForestArrays {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self, step_budget: Option<usize>) -> ValidationReport {
        validate_forest(self, step_budget)
    }

    /// Mean of the per-tree score vectors; `[n x T]` row-major.
    pub fn score(&self, batch: &dyn FeatureSource) -> Result<Vec<f64>> {
        score_forest(self, batch)
    }

    pub fn to_text(&self) -> String {
        forest_to_text(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        forest_from_text(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub tree: Option<usize>,
    pub node: Option<usize>,
    pub message: String,
}

/// Structural check results; violations are entries, not errors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            let msgs: Vec<String> = self
                .violations
                .iter()
                .map(|v| match (v.tree, v.node) {
                    (Some(t), Some(n)) => format!("tree {t} node {n}: {}", v.message),
                    (Some(t), None) => format!("tree {t}: {}", v.message),
                    _ => v.message.clone(),
                })
                .collect();
            Err(Error::Validation(msgs.join("; ")))
        }
    }

    fn push(&mut self, tree: Option<usize>, node: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation {
            tree,
            node,
            message: message.into(),
        });
    }
}

/// Checks array shapes, child and feature indices, and that the longest
/// root-to-leaf walk fits in the step budget (default `4 * n_nodes` per
/// tree). Cycles always exceed the budget.
pub fn validate_forest(forest: &ForestArrays, step_budget: Option<usize>) -> ValidationReport {
    let mut report = ValidationReport::default();
    if forest.trees.is_empty() {
        report.push(None, None, "forest has no trees");
    }
    if forest.treatment_labels.len() != forest.n_treatments {
        report.push(
            None,
            None,
            format!(
                "{} treatment labels for {} treatments",
                forest.treatment_labels.len(),
                forest.n_treatments
            ),
        );
    }
    let f = forest.n_features();
    for (ti, tree) in forest.trees.iter().enumerate() {
        let n = tree.n_nodes();
        let t = Some(ti);
        if n == 0 {
            report.push(t, None, "tree has no nodes");
            continue;
        }
        let lens = [
            tree.feature_index.len(),
            tree.split_value.len(),
            tree.left_child.len(),
            tree.right_child.len(),
            tree.nan_goes_left.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            report.push(t, None, format!("array lengths {lens:?} differ from node count {n}"));
            continue;
        }
        if tree.payload_width != forest.n_treatments {
            report.push(
                t,
                None,
                format!(
                    "dimension mismatch: payload has {} columns, forest has {} treatments",
                    tree.payload_width, forest.n_treatments
                ),
            );
        }
        if tree.leaf_payload.len() != n * tree.payload_width {
            report.push(
                t,
                None,
                format!(
                    "payload has {} cells, expected {}",
                    tree.leaf_payload.len(),
                    n * tree.payload_width
                ),
            );
            continue;
        }
        let mut structurally_ok = true;
        for node in 0..n {
            if tree.node_type[node].is_leaf() {
                continue;
            }
            for (side, child) in [("left", tree.left_child[node]), ("right", tree.right_child[node])] {
                if child >= n {
                    report.push(t, Some(node), format!("{side} child {child} out of range"));
                    structurally_ok = false;
                } else if child == node {
                    report.push(t, Some(node), format!("{side} child points to itself"));
                    structurally_ok = false;
                }
            }
            if tree.feature_index[node] >= f {
                report.push(
                    t,
                    Some(node),
                    format!("feature index {} outside [0, {f})", tree.feature_index[node]),
                );
            }
        }
        if !structurally_ok {
            continue;
        }
        let budget = step_budget.unwrap_or_else(|| tree.default_step_budget());
        match longest_walk(tree) {
            Ok(steps) if steps <= budget => {}
            Ok(steps) => report.push(
                t,
                Some(0),
                format!("step budget exceeded: longest walk {steps} > budget {budget}"),
            ),
            Err(node) => report.push(
                t,
                Some(node),
                format!("step budget exceeded: cycle through node {node}"),
            ),
        }
    }
    report
}

/// Longest root-to-leaf edge count, or the node that closes a cycle.
fn longest_walk(tree: &TreeArrays) -> std::result::Result<usize, usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unseen,
        Open,
        Done(usize),
    }
    let mut mark = vec![Mark::Unseen; tree.n_nodes()];
    // Explicit stack: (node, children_pushed).
    let mut stack = vec![(0usize, false)];
    while let Some((node, expanded)) = stack.pop() {
        if tree.node_type[node].is_leaf() {
            mark[node] = Mark::Done(0);
            continue;
        }
        let kids = [tree.left_child[node], tree.right_child[node]];
        if expanded {
            let depth = kids
                .iter()
                .map(|&k| match mark[k] {
                    Mark::Done(d) => d,
                    _ => unreachable!("children finish before parent"),
                })
                .max()
                .unwrap_or(0);
            mark[node] = Mark::Done(depth + 1);
            continue;
        }
        match mark[node] {
            Mark::Done(_) => continue,
            Mark::Open => return Err(node),
            Mark::Unseen => {}
        }
        mark[node] = Mark::Open;
        stack.push((node, true));
        for k in kids {
            match mark[k] {
                Mark::Open => return Err(k),
                Mark::Unseen => stack.push((k, false)),
                Mark::Done(_) => {}
            }
        }
    }
    match mark[0] {
        Mark::Done(d) => Ok(d),
        _ => Err(0),
    }
}

pub fn score_forest(forest: &ForestArrays, batch: &dyn FeatureSource) -> Result<Vec<f64>> {
    if forest.trees.is_empty() {
        return Err(Error::invalid("cannot score with an empty forest"));
    }
    VectorizedForest::compile(forest).score(batch)
}
