//! Canonical forest text format, version 1.
//!
//! ```text
//! policykit-forest 1
//! treatments <T>
//! treatment <label>            (T lines, in order)
//! features <F>
//! feature <name>               (F lines, in order)
//! trees <K>
//! tree <index> <n_nodes> <payload_width>
//! node <i> <kind> <feature> <split> <left> <right> <nan_left> <payload...>
//! ```
//!
//! `kind` is `continuous`, `categorical` or `leaf`; `nan_left` is `1` or
//! `0`; floats use Rust's shortest round-trip rendering (`NaN`, `inf` and
//! exponents included), so a write/read cycle is bit exact. Labels and
//! names run to the end of their line.

use std::fmt::Write;

use super::{ForestArrays, NodeKind, TreeArrays};
use crate::error::{Error, Result};

pub const FOREST_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "policykit-forest";

pub fn forest_to_text(forest: &ForestArrays) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {FOREST_FORMAT_VERSION}");
    let _ = writeln!(s, "treatments {}", forest.n_treatments);
    for l in &forest.treatment_labels {
        let _ = writeln!(s, "treatment {l}");
    }
    let _ = writeln!(s, "features {}", forest.feature_names.len());
    for f in &forest.feature_names {
        let _ = writeln!(s, "feature {f}");
    }
    let _ = writeln!(s, "trees {}", forest.trees.len());
    for (ti, tree) in forest.trees.iter().enumerate() {
        let _ = writeln!(s, "tree {ti} {} {}", tree.n_nodes(), tree.payload_width);
        for i in 0..tree.n_nodes() {
            let kind = match tree.node_type[i] {
                NodeKind::InternalContinuous => "continuous",
                NodeKind::InternalCategorical => "categorical",
                NodeKind::Leaf => "leaf",
            };
            let _ = write!(
                s,
                "node {i} {kind} {} {:?} {} {} {}",
                tree.feature_index[i],
                tree.split_value[i],
                tree.left_child[i],
                tree.right_child[i],
                u8::from(tree.nan_goes_left[i])
            );
            for v in tree.payload(i) {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(Error::parse(self.line + 1, "unexpected end of forest text")),
        }
    }

    /// Next line, which must start with `keyword `; returns the remainder.
    fn keyed(&mut self, keyword: &str) -> Result<&'a str> {
        let l = self.next()?;
        l.strip_prefix(keyword)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::parse(self.line, format!("expected `{keyword}`")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }
}

fn num<T: std::str::FromStr>(lines: &Lines<'_>, tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| lines.err(format!("bad or missing {what}")))
}

pub fn forest_from_text(text: &str) -> Result<ForestArrays> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let version: u32 = {
        let v = lines.keyed(MAGIC)?;
        num(&lines, Some(v.trim()), "format version")?
    };
    if version != FOREST_FORMAT_VERSION {
        return Err(lines.err(format!("unsupported forest format version {version}")));
    }
    let n_treatments: usize = {
        let v = lines.keyed("treatments")?;
        num(&lines, Some(v.trim()), "treatment count")?
    };
    let treatment_labels = (0..n_treatments)
        .map(|_| lines.keyed("treatment").map(str::to_owned))
        .collect::<Result<Vec<_>>>()?;
    let n_features: usize = {
        let v = lines.keyed("features")?;
        num(&lines, Some(v.trim()), "feature count")?
    };
    let feature_names = (0..n_features)
        .map(|_| lines.keyed("feature").map(str::to_owned))
        .collect::<Result<Vec<_>>>()?;
    let n_trees: usize = {
        let v = lines.keyed("trees")?;
        num(&lines, Some(v.trim()), "tree count")?
    };
    let mut trees = Vec::with_capacity(n_trees);
    for expected in 0..n_trees {
        let mut head = lines.keyed("tree")?.split_whitespace();
        let idx: usize = num(&lines, head.next(), "tree index")?;
        if idx != expected {
            return Err(lines.err(format!("tree index {idx}, expected {expected}")));
        }
        let n_nodes: usize = num(&lines, head.next(), "node count")?;
        let width: usize = num(&lines, head.next(), "payload width")?;
        let mut tree = TreeArrays {
            node_type: Vec::with_capacity(n_nodes),
            feature_index: Vec::with_capacity(n_nodes),
            split_value: Vec::with_capacity(n_nodes),
            left_child: Vec::with_capacity(n_nodes),
            right_child: Vec::with_capacity(n_nodes),
            nan_goes_left: Vec::with_capacity(n_nodes),
            leaf_payload: Vec::with_capacity(n_nodes * width),
            payload_width: width,
        };
        for expected_node in 0..n_nodes {
            let mut tok = lines.keyed("node")?.split_whitespace();
            let i: usize = num(&lines, tok.next(), "node index")?;
            if i != expected_node {
                return Err(lines.err(format!("node index {i}, expected {expected_node}")));
            }
            tree.node_type.push(match tok.next() {
                Some("continuous") => NodeKind::InternalContinuous,
                Some("categorical") => NodeKind::InternalCategorical,
                Some("leaf") => NodeKind::Leaf,
                other => return Err(lines.err(format!("unknown node kind {other:?}"))),
            });
            tree.feature_index.push(num(&lines, tok.next(), "feature index")?);
            tree.split_value.push(num(&lines, tok.next(), "split value")?);
            tree.left_child.push(num(&lines, tok.next(), "left child")?);
            tree.right_child.push(num(&lines, tok.next(), "right child")?);
            tree.nan_goes_left.push(match tok.next() {
                Some("1") => true,
                Some("0") => false,
                other => return Err(lines.err(format!("bad nan_left flag {other:?}"))),
            });
            for _ in 0..width {
                tree.leaf_payload.push(num(&lines, tok.next(), "payload value")?);
            }
            if tok.next().is_some() {
                return Err(lines.err("trailing tokens on node line"));
            }
        }
        trees.push(tree);
    }
    Ok(ForestArrays {
        trees,
        n_treatments,
        feature_names,
        treatment_labels,
    })
}
