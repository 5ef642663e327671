use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::forest::{ForestArrays, NodeKind, TreeArrays};

/// Object-graph form of a tree, the shape a row-at-a-time scorer walks.
#[derive(Debug, Clone)]
enum RowNode {
    Leaf(Vec<f64>),
    Split {
        feature: String,
        threshold: f64,
        categorical: bool,
        nan_left: bool,
        left: Box<RowNode>,
        right: Box<RowNode>,
    },
}

impl RowNode {
    fn build(tree: &TreeArrays, names: &[String], node: usize) -> Self {
        match tree.node_type[node] {
            NodeKind::Leaf => RowNode::Leaf(tree.payload(node).to_vec()),
            kind => RowNode::Split {
                feature: names[tree.feature_index[node]].clone(),
                threshold: tree.split_value[node],
                categorical: kind == NodeKind::InternalCategorical,
                nan_left: tree.nan_goes_left[node],
                left: Box::new(Self::build(tree, names, tree.left_child[node])),
                right: Box::new(Self::build(tree, names, tree.right_child[node])),
            },
        }
    }
}

/// One row keyed by feature name.
pub(crate) type Record<'a> = HashMap<&'a str, Option<f64>>;

#[derive(Debug, Clone)]
pub(crate) struct RowwiseModel {
    trees: Vec<RowNode>,
    width: usize,
}

impl RowwiseModel {
    /// Expects a validated forest.
    pub fn from_forest(forest: &ForestArrays) -> Self {
        Self {
            trees: forest
                .trees
                .iter()
                .map(|t| RowNode::build(t, &forest.feature_names, 0))
                .collect(),
            width: forest.n_treatments,
        }
    }

    pub fn score_row(&self, record: &Record<'_>, out: &mut Vec<f64>) -> Result<()> {
        let base = out.len();
        out.resize(base + self.width, 0.0);
        for (ti, root) in self.trees.iter().enumerate() {
            let mut node = root;
            let payload = loop {
                match node {
                    RowNode::Leaf(p) => break p,
                    RowNode::Split {
                        feature,
                        threshold,
                        categorical,
                        nan_left,
                        left,
                        right,
                    } => {
                        let value = *record
                            .get(feature.as_str())
                            .ok_or_else(|| Error::schema(format!("record lacks feature {feature:?}")))?;
                        let go_left = match value {
                            None => *nan_left,
                            Some(v) if *categorical => v == *threshold,
                            Some(v) => v <= *threshold,
                        };
                        node = if go_left { left } else { right };
                    }
                }
            };
            let dst = &mut out[base..];
            if ti == 0 {
                dst.copy_from_slice(payload);
            } else {
                dst.iter_mut().zip(payload).for_each(|(d, s)| *d += s);
            }
        }
        let n = self.trees.len() as f64;
        out[base..].iter_mut().for_each(|v| *v /= n);
        Ok(())
    }
}
