#![allow(dead_code)]

use policykit::forest::{ForestArrays, NodeKind, TreeArrays};
use policykit::frame::{Cell, ColumnFrame, FeatureColumn, LabelColumn};
use policykit::rng::SeededRng;

/// Mixed cells: grid values that hit categorical codes and thresholds,
/// uniform noise, NULL and NaN.
pub fn mixed_cell(rng: &mut SeededRng) -> Cell {
    match rng.below(10) {
        0 => Cell::Null,
        1 => Cell::Nan,
        2..=4 => Cell::Value(rng.below(5) as f64 * 0.25),
        _ => Cell::Value(rng.uniform()),
    }
}

pub fn random_frame(n: usize, features: &[String], labels: &[&str], seed: u64) -> ColumnFrame {
    let mut rng = SeededRng::new(seed);
    let columns = features
        .iter()
        .map(|f| FeatureColumn::from_cells(f.clone(), (0..n).map(|_| mixed_cell(&mut rng)).collect::<Vec<_>>()))
        .collect();
    let treatment = LabelColumn::from_labels((0..n).map(|_| labels[rng.below(labels.len() as u64) as usize]));
    let outcome = (0..n).map(|_| rng.bernoulli(0.3) as u8).collect();
    ColumnFrame::new(
        (0..n as u64).map(|i| 1000 + 3 * i).collect(),
        columns,
        treatment,
        outcome,
    )
    .unwrap()
}

/// Independent scalar walk: recursion over the arrays, one row at a time.
pub fn oracle_leaf(tree: &TreeArrays, row: &[Option<f64>], node: usize) -> usize {
    let go_left = |v: Option<f64>| match v {
        None => tree.nan_goes_left[node],
        Some(x) if x.is_nan() => tree.nan_goes_left[node],
        Some(x) => match tree.node_type[node] {
            NodeKind::InternalCategorical => x == tree.split_value[node],
            _ => x <= tree.split_value[node],
        },
    };
    match tree.node_type[node] {
        NodeKind::Leaf => node,
        _ => {
            let next = if go_left(row[tree.feature_index[node]]) {
                tree.left_child[node]
            } else {
                tree.right_child[node]
            };
            oracle_leaf(tree, row, next)
        }
    }
}

pub fn row_values(frame: &ColumnFrame, names: &[String], i: usize) -> Vec<Option<f64>> {
    names.iter().map(|n| frame.feature(n).unwrap().get(i)).collect()
}

/// Mean of per-tree oracle payloads, accumulated tree by tree.
pub fn oracle_forest_row(forest: &ForestArrays, row: &[Option<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; forest.n_treatments];
    for (ti, tree) in forest.trees.iter().enumerate() {
        let leaf = oracle_leaf(tree, row, 0);
        let p = &tree.leaf_payload[leaf * tree.payload_width..(leaf + 1) * tree.payload_width];
        for (a, b) in acc.iter_mut().zip(p) {
            *a = if ti == 0 { *b } else { *a + b };
        }
    }
    acc.iter().map(|a| a / forest.trees.len() as f64).collect()
}
