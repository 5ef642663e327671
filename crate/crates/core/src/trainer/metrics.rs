use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{signature, Assignments, PolicyTree, TreeSignature};
use crate::error::{Error, Result};
use crate::frame::ColumnFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub value: f64,
    pub matched_rows: usize,
    /// No row received the treatment its policy picked.
    pub empty_match: bool,
}

fn positions(frame: &ColumnFrame) -> HashMap<u64, usize> {
    frame.row_ids().iter().enumerate().map(|(i, &id)| (id, i)).collect()
}

/// Mean outcome over rows whose observed treatment is the one the policy
/// picks; 0 with `empty_match` set when no row matches.
pub fn policy_value(assignments: &Assignments, treatments: &[String], frame: &ColumnFrame) -> Result<PolicyValue> {
    let pos = positions(frame);
    let mut matched = 0usize;
    let mut accepted = 0u64;
    for (k, id) in assignments.row_ids.iter().enumerate() {
        let i = *pos
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("row id {id} not in frame")))?;
        if frame.treatment().label(i) == treatments[assignments.top_treatment[k]] {
            matched += 1;
            accepted += u64::from(frame.outcome()[i]);
        }
    }
    Ok(PolicyValue {
        value: if matched == 0 {
            0.0
        } else {
            accepted as f64 / matched as f64
        },
        matched_rows: matched,
        empty_match: matched == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpliftMetrics {
    pub auuc: f64,
    pub qini: f64,
}

/// Best non-control entry minus the control entry.
pub fn uplift_proxy(policy: &[f64], control: usize) -> f64 {
    let best = policy
        .iter()
        .enumerate()
        .filter(|&(t, _)| t != control)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    best - policy[control]
}

fn trapezoid(k0: usize, k1: usize, g0: f64, g1: f64, n: f64) -> f64 {
    (k1 - k0) as f64 / n * ((g0 / n + g1 / n) / 2.0)
}

/// AUUC and Qini of a targeting score.
///
/// Rows are ranked by `proxy` descending, ties by row id ascending, and the
/// curve is only evaluated where the proxy changes, so tied rows enter
/// together. At depth `k` the gain is
/// `g(k) = (mean treated outcome - mean control outcome) * k` over the top
/// `k` rows (0 while either arm is empty there). AUUC is the trapezoid
/// area under `g(k) / n` against `k / n`; Qini subtracts the area under the
/// straight line from the origin to `g(n) / n`.
pub fn auuc_qini(row_ids: &[u64], proxy: &[f64], is_control: &[bool], outcome: &[u8]) -> Result<UpliftMetrics> {
    let n = row_ids.len();
    if proxy.len() != n || is_control.len() != n || outcome.len() != n {
        return Err(Error::invalid("auuc_qini inputs differ in length"));
    }
    if !is_control.iter().any(|&c| c) {
        return Err(Error::invalid("auuc_qini needs at least one control row"));
    }
    if is_control.iter().all(|&c| c) {
        return Err(Error::invalid("auuc_qini needs at least one treated row"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proxy[b].total_cmp(&proxy[a]).then(row_ids[a].cmp(&row_ids[b])));

    let (mut nt, mut nc, mut yt, mut yc) = (0u64, 0u64, 0u64, 0u64);
    let gain = |k: usize, nt: u64, nc: u64, yt: u64, yc: u64| {
        if nt == 0 || nc == 0 {
            0.0
        } else {
            (yt as f64 / nt as f64 - yc as f64 / nc as f64) * k as f64
        }
    };
    let nf = n as f64;
    let (mut last_k, mut last_g) = (0usize, 0.0f64);
    let mut area = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if is_control[i] {
            nc += 1;
            yc += u64::from(outcome[i]);
        } else {
            nt += 1;
            yt += u64::from(outcome[i]);
        }
        let end_of_group = k + 1 == n || proxy[order[k + 1]].to_bits() != proxy[i].to_bits();
        if end_of_group {
            let g = gain(k + 1, nt, nc, yt, yc);
            area += trapezoid(last_k, k + 1, last_g, g, nf);
            last_k = k + 1;
            last_g = g;
        }
    }
    let diagonal = trapezoid(0, n, 0.0, last_g, nf);
    Ok(UpliftMetrics {
        auuc: area,
        qini: area - diagonal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub policy_value: PolicyValue,
    pub uplift: UpliftMetrics,
}

/// A tree's signature plus what it does on a holdout frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub signature: TreeSignature,
    pub assignments: Assignments,
    pub metrics: HoldoutMetrics,
}

impl Witness {
    pub fn evaluate(tree: &PolicyTree, holdout: &ColumnFrame) -> Result<Self> {
        let assignments = super::assign(tree, holdout)?;
        let control = tree.control_index();
        let proxy: Vec<f64> = (0..assignments.len())
            .map(|i| uplift_proxy(assignments.policy_row(i), control))
            .collect();
        let is_control: Vec<bool> = holdout.treatment().iter().map(|l| l == tree.control_label).collect();
        let uplift = auuc_qini(holdout.row_ids(), &proxy, &is_control, holdout.outcome())?;
        let policy_value = policy_value(&assignments, &tree.treatments, holdout)?;
        Ok(Self {
            signature: signature(tree),
            assignments,
            metrics: HoldoutMetrics { policy_value, uplift },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub signature_equal: bool,
    pub policy_vector_mismatches: usize,
    pub leaf_mismatches: usize,
    pub top_assignment_agreement: f64,
    pub max_vector_delta: f64,
    pub policy_value_delta: f64,
    pub auuc_delta: f64,
    pub qini_delta: f64,
}

impl WitnessReport {
    /// Same signature, same vectors, same leaves.
    pub fn preserved(&self) -> bool {
        self.signature_equal && self.policy_vector_mismatches == 0 && self.leaf_mismatches == 0
    }
}

pub fn witness_compare(a: &Witness, b: &Witness) -> Result<WitnessReport> {
    let (aa, ba) = (&a.assignments, &b.assignments);
    if aa.len() != ba.len() || aa.width != ba.width {
        return Err(Error::Alignment("witnesses cover different holdouts".into()));
    }
    let pos: HashMap<u64, usize> = ba.row_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let (mut vec_mm, mut leaf_mm, mut agree) = (0usize, 0usize, 0usize);
    let mut max_delta = 0.0f64;
    for (i, id) in aa.row_ids.iter().enumerate() {
        let j = *pos
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("row id {id} missing from second witness")))?;
        let (pa, pb) = (aa.policy_row(i), ba.policy_row(j));
        if pa.iter().zip(pb).any(|(x, y)| x.to_bits() != y.to_bits()) {
            vec_mm += 1;
        }
        for (x, y) in pa.iter().zip(pb) {
            max_delta = max_delta.max((x - y).abs());
        }
        leaf_mm += usize::from(aa.leaf_path[i] != ba.leaf_path[j]);
        agree += usize::from(aa.top_treatment[i] == ba.top_treatment[j]);
    }
    let (ma, mb) = (&a.metrics, &b.metrics);
    Ok(WitnessReport {
        signature_equal: a.signature == b.signature,
        policy_vector_mismatches: vec_mm,
        leaf_mismatches: leaf_mm,
        top_assignment_agreement: if aa.is_empty() {
            1.0
        } else {
            agree as f64 / aa.len() as f64
        },
        max_vector_delta: max_delta,
        policy_value_delta: (ma.policy_value.value - mb.policy_value.value).abs(),
        auuc_delta: (ma.uplift.auuc - mb.uplift.auuc).abs(),
        qini_delta: (ma.uplift.qini - mb.uplift.qini).abs(),
    })
}
