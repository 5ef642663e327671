//! Vectorized frontier traversal.
//!
//! Rows start at the root; each pass advances every still-active row by one
//! edge and drops rows that reached a leaf, until the frontier is empty.

use super::{ForestArrays, NodeKind, TreeArrays};
use crate::error::{Error, Result};
use crate::frame::FeatureColumn;

/// Positional feature access for a batch of rows. `None` means missing.
pub trait FeatureSource {
    fn n_rows(&self) -> usize;
    fn value(&self, row: usize, feature: usize) -> Option<f64>;

    /// Raw values and validity for one feature, when stored contiguously.
    /// Validity is `None` when every cell in the batch is valid.
    fn column(&self, _feature: usize) -> Option<(&[f64], Option<&[bool]>)> {
        None
    }
}

/// Zero-copy view over a row range of columnar buffers, with columns in
/// forest feature order.
#[derive(Debug, Clone)]
pub struct ColumnarBatch<'a> {
    values: Vec<&'a [f64]>,
    validity: Vec<&'a [bool]>,
    all_valid: Vec<bool>,
    len: usize,
}

impl<'a> ColumnarBatch<'a> {
    pub fn new(columns: &[&'a FeatureColumn], start: usize, len: usize) -> Self {
        let validity: Vec<&[bool]> = columns.iter().map(|c| &c.validity()[start..start + len]).collect();
        Self {
            values: columns.iter().map(|c| &c.values()[start..start + len]).collect(),
            all_valid: validity.iter().map(|v| v.iter().all(|&b| b)).collect(),
            validity,
            len,
        }
    }
}

impl FeatureSource for ColumnarBatch<'_> {
    fn n_rows(&self) -> usize {
        self.len
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> Option<f64> {
        let v = self.values[feature][row];
        if self.validity[feature][row] && !v.is_nan() {
            Some(v)
        } else {
            None
        }
    }

    fn column(&self, feature: usize) -> Option<(&[f64], Option<&[bool]>)> {
        let valid = (!self.all_valid[feature]).then_some(self.validity[feature]);
        Some((self.values[feature], valid))
    }
}

/// Dense row-major batch; missing cells are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMajorBatch {
    values: Vec<f64>,
    n_features: usize,
}

impl RowMajorBatch {
    pub fn new(values: Vec<f64>, n_features: usize) -> Self {
        assert!(
            n_features > 0 && values.len() % n_features == 0,
            "ragged row-major batch"
        );
        Self { values, n_features }
    }

    /// Materializes a columnar batch row by row.
    pub fn transpose_from(src: &ColumnarBatch<'_>) -> Self {
        let f = src.values.len();
        let mut values = Vec::with_capacity(src.len * f);
        for row in 0..src.len {
            for feature in 0..f {
                values.push(src.value(row, feature).unwrap_or(f64::NAN));
            }
        }
        Self {
            values,
            n_features: f.max(1),
        }
    }
}

impl FeatureSource for RowMajorBatch {
    fn n_rows(&self) -> usize {
        self.values.len() / self.n_features
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> Option<f64> {
        let v = self.values[row * self.n_features + feature];
        (!v.is_nan()).then_some(v)
    }
}

const BLOCK: usize = 2048;

const CONTINUOUS: u8 = 0;
const CATEGORICAL: u8 = 1;
const LEAF: u8 = 2;

#[derive(Debug, Clone, Copy)]
struct KernelNode {
    split: f64,
    feature: u32,
    left: u32,
    right: u32,
    kind: u8,
    nan_left: bool,
}

/// Compact per-node layout of one tree, built once per partition.
#[derive(Debug, Clone)]
pub struct VectorizedTree {
    nodes: Vec<KernelNode>,
    tree_index: usize,
}

impl VectorizedTree {
    pub fn compile(tree: &TreeArrays, tree_index: usize) -> Self {
        let nodes = (0..tree.n_nodes())
            .map(|i| KernelNode {
                split: tree.split_value[i],
                feature: tree.feature_index[i] as u32,
                left: tree.left_child[i] as u32,
                right: tree.right_child[i] as u32,
                kind: match tree.node_type[i] {
                    NodeKind::InternalContinuous => CONTINUOUS,
                    NodeKind::InternalCategorical => CATEGORICAL,
                    NodeKind::Leaf => LEAF,
                },
                nan_left: tree.nan_goes_left[i],
            })
            .collect();
        Self { nodes, tree_index }
    }

    /// Leaf node index reached by every row.
    ///
    /// The frontier is a list of `(node, start, end)` segments over a row
    /// index buffer. Each pass partitions every segment in place into its
    /// left and right children, so one pass reads one feature column per
    /// node.
    pub fn route<S: FeatureSource + ?Sized>(&self, src: &S, step_budget: usize) -> Result<Vec<u32>> {
        let mut at = vec![0u32; src.n_rows()];
        self.route_with(
            src,
            0..src.n_rows(),
            step_budget,
            &mut Frontier::default(),
            |leaf, rows| {
                for &r in rows {
                    at[r as usize] = leaf;
                }
            },
        )?;
        Ok(at)
    }

    /// Routes rows `range` of `src`, calling `on_leaf(leaf, rows)` once per
    /// reached leaf segment.
    fn route_with<S: FeatureSource + ?Sized>(
        &self,
        src: &S,
        range: std::ops::Range<usize>,
        step_budget: usize,
        buf: &mut Frontier,
        mut on_leaf: impl FnMut(u32, &[u32]),
    ) -> Result<()> {
        let n = range.len();
        if n == 0 {
            return Ok(());
        }
        buf.rows.clear();
        buf.rows.extend(range.start as u32..range.end as u32);
        if self.nodes[0].kind == LEAF {
            on_leaf(0, &buf.rows);
            return Ok(());
        }
        buf.scratch.resize(n, 0);
        buf.segments.clear();
        buf.segments.push((0, 0, n));
        let mut steps = 0usize;
        while !buf.segments.is_empty() {
            steps += 1;
            if steps > step_budget {
                return Err(Error::MalformedTree {
                    tree: self.tree_index,
                    reason: format!("step budget {step_budget} exceeded during scoring"),
                });
            }
            buf.next.clear();
            for &(node, s, e) in &buf.segments {
                let nd = self.nodes[node as usize];
                let mid = partition(src, &nd, &buf.rows[s..e], &mut buf.scratch[s..e]) + s;
                for (child, lo, hi) in [(nd.left, s, mid), (nd.right, mid, e)] {
                    if lo == hi {
                        continue;
                    }
                    if self.nodes[child as usize].kind == LEAF {
                        on_leaf(child, &buf.scratch[lo..hi]);
                    } else {
                        buf.next.push((child, lo, hi));
                    }
                }
            }
            std::mem::swap(&mut buf.rows, &mut buf.scratch);
            std::mem::swap(&mut buf.segments, &mut buf.next);
        }
        Ok(())
    }
}

/// Reusable traversal buffers.
#[derive(Debug, Default)]
struct Frontier {
    rows: Vec<u32>,
    scratch: Vec<u32>,
    segments: Vec<(u32, usize, usize)>,
    next: Vec<(u32, usize, usize)>,
}

/// Writes left-routed rows to the front of `out` and right-routed rows to
/// the back; returns the left count.
#[inline]
fn partition<S: FeatureSource + ?Sized>(src: &S, node: &KernelNode, rows: &[u32], out: &mut [u32]) -> usize {
    let feature = node.feature as usize;
    let (split, nan_left) = (node.split, node.nan_left);
    let categorical = node.kind == CATEGORICAL;
    // NaN fails both comparisons, so a NaN cell routes by `nan_left` alone.
    match src.column(feature) {
        Some((vals, None)) if categorical => split_rows(rows, out, |r| {
            let v = vals[r];
            (v == split) | (v.is_nan() & nan_left)
        }),
        Some((vals, None)) => split_rows(rows, out, |r| {
            let v = vals[r];
            (v <= split) | (v.is_nan() & nan_left)
        }),
        Some((vals, Some(valid))) if categorical => split_rows(rows, out, |r| {
            let v = vals[r];
            if valid[r] & !v.is_nan() {
                v == split
            } else {
                nan_left
            }
        }),
        Some((vals, Some(valid))) => split_rows(rows, out, |r| {
            let v = vals[r];
            if valid[r] & !v.is_nan() {
                v <= split
            } else {
                nan_left
            }
        }),
        None => split_rows(rows, out, |r| match src.value(r, feature) {
            None => nan_left,
            Some(v) if categorical => v == split,
            Some(v) => v <= split,
        }),
    }
}

#[inline(always)]
fn split_rows(rows: &[u32], out: &mut [u32], goes_left: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0usize, rows.len());
    for &r in rows {
        let left = goes_left(r as usize);
        out[lo] = r;
        out[hi - 1] = r;
        lo += usize::from(left);
        hi -= usize::from(!left);
    }
    lo
}

/// A forest compiled for batch scoring.
#[derive(Debug, Clone)]
pub struct VectorizedForest {
    trees: Vec<VectorizedTree>,
    payloads: Vec<Vec<f64>>,
    budgets: Vec<usize>,
    width: usize,
}

impl VectorizedForest {
    pub fn compile(forest: &ForestArrays) -> Self {
        Self {
            trees: forest
                .trees
                .iter()
                .enumerate()
                .map(|(i, t)| VectorizedTree::compile(t, i))
                .collect(),
            payloads: forest.trees.iter().map(|t| t.leaf_payload.clone()).collect(),
            budgets: forest.trees.iter().map(|t| t.default_step_budget()).collect(),
            width: forest.n_treatments,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn score<S: FeatureSource + ?Sized>(&self, src: &S) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.score_into(src, &mut out)?;
        Ok(out)
    }

    /// Appends `[n x T]` mean scores to `out`.
    pub fn score_into<S: FeatureSource + ?Sized>(&self, src: &S, out: &mut Vec<f64>) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::invalid("cannot score with an empty forest"));
        }
        let w = self.width;
        let base = out.len();
        out.resize(base + src.n_rows() * w, 0.0);
        let acc = &mut out[base..];
        let mut buf = Frontier::default();
        let n = src.n_rows();
        for start in (0..n).step_by(BLOCK) {
            for (ti, tree) in self.trees.iter().enumerate() {
                let payload = &self.payloads[ti];
                tree.route_with(
                    src,
                    start..n.min(start + BLOCK),
                    self.budgets[ti],
                    &mut buf,
                    |leaf, rows| {
                        let p = &payload[leaf as usize * w..(leaf as usize + 1) * w];
                        for &r in rows {
                            let dst = &mut acc[r as usize * w..(r as usize + 1) * w];
                            if ti == 0 {
                                dst.copy_from_slice(p);
                            } else {
                                for (d, s) in dst.iter_mut().zip(p) {
                                    *d += s;
                                }
                            }
                        }
                    },
                )?;
            }
        }
        let n_trees = self.trees.len() as f64;
        for v in acc.iter_mut() {
            *v /= n_trees;
        }
        Ok(())
    }
}
