use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PolicyNode, PolicyTree};
use crate::error::{Error, Result};

pub const SIGNATURE_FORMAT_VERSION: u32 = 1;

/// Canonical text of a policy tree plus its SHA-256 digest.
///
/// ```text
/// policykit-tree-signature 1
/// treatments ["control", "t1"]
/// split "" "x_boundary" 0.5 15 right
/// leaf "L" [0.2, 0.35]
/// leaf "R" [0.31, 0.12]
/// ```
///
/// Records follow breadth-first node order. Strings are quoted with
/// escapes and floats use the shortest decimal that round-trips, so equal
/// text means bit-identical trees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSignature {
    pub text: String,
    pub digest: String,
}

fn floats(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn signature(tree: &PolicyTree) -> TreeSignature {
    let mut text = format!("policykit-tree-signature {SIGNATURE_FORMAT_VERSION}\n");
    let labels: Vec<String> = tree.treatments.iter().map(|t| format!("{t:?}")).collect();
    writeln!(text, "treatments [{}]", labels.join(", ")).expect("write to string");
    for node in tree.nodes_bfs() {
        match node {
            PolicyNode::Split(s) => writeln!(
                text,
                "split {:?} {:?} {:?} {} {}",
                s.path, s.feature, s.threshold, s.candidate_bin, s.nan_direction
            ),
            PolicyNode::Leaf(l) => writeln!(text, "leaf {:?} {}", l.path, floats(&l.policy)),
        }
        .expect("write to string");
    }
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    TreeSignature { text, digest }
}

impl TreeSignature {
    /// Rebuilds a signature from its text, checking the version header.
    pub fn from_text(text: &str) -> Result<Self> {
        let header = text.lines().next().unwrap_or_default();
        let expected = format!("policykit-tree-signature {SIGNATURE_FORMAT_VERSION}");
        if header != expected {
            return Err(Error::parse(1, format!("expected {expected:?}, found {header:?}")));
        }
        Ok(Self {
            digest: hex::encode(Sha256::digest(text.as_bytes())),
            text: text.to_owned(),
        })
    }

    /// Record lines without the header.
    pub fn records(&self) -> impl Iterator<Item = &str> {
        self.text.lines().skip(2)
    }
}
