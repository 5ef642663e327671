use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{select_control, BestSplit, NanDirection, PrefixTable, SplitConfig};
use crate::error::{Error, Result};

/// Per-treatment tallies for one branch after missing rows are routed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub opps: Vec<u64>,
    pub accepts: Vec<u64>,
}

impl BranchCounts {
    pub fn total(&self) -> u64 {
        self.opps.iter().sum()
    }

    /// `accepts / opps`, NaN where a treatment has no opportunities.
    pub fn rates(&self) -> Vec<f64> {
        self.opps
            .iter()
            .zip(&self.accepts)
            .map(|(&o, &a)| if o == 0 { f64::NAN } else { a as f64 / o as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvalidReason {
    NoTreatedArm,
    ZeroSupport { treatment: String, side: String },
    MinLeafSize { left: u64, right: u64, min_leaf_size: u64 },
    NonFiniteScore,
}

impl InvalidReason {
    pub fn kind(&self) -> &'static str {
        match self {
            InvalidReason::NoTreatedArm => "no_treated_arm",
            InvalidReason::ZeroSupport { .. } => "zero_support",
            InvalidReason::MinLeafSize { .. } => "min_leaf_size",
            InvalidReason::NonFiniteScore => "non_finite_score",
        }
    }
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::NoTreatedArm => f.write_str("control plus at least one non-control treatment required"),
            InvalidReason::ZeroSupport { treatment, side } => write!(
                f,
                "every treatment has positive support on both sides ({treatment:?} has none on the {side})"
            ),
            InvalidReason::MinLeafSize {
                left,
                right,
                min_leaf_size,
            } => {
                write!(f, "branch totals {left}/{right} below min_leaf_size {min_leaf_size}")
            }
            InvalidReason::NonFiniteScore => f.write_str("score is not finite"),
        }
    }
}

/// One `(feature, cut, missing route)` candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub feature: String,
    pub candidate_bin: usize,
    pub threshold: f64,
    pub nan_direction: NanDirection,
    pub left: BranchCounts,
    pub right: BranchCounts,
    pub rates_left: Vec<f64>,
    pub rates_right: Vec<f64>,
    /// Non-control treatments in vocabulary order.
    pub uplift_left: Vec<f64>,
    pub uplift_right: Vec<f64>,
    /// NaN when invalid.
    pub score: f64,
    pub valid: bool,
    pub invalid_reason: Option<InvalidReason>,
}

impl CandidateScore {
    pub(crate) fn into_best(self, control_label: &str) -> BestSplit {
        BestSplit {
            feature: self.feature,
            candidate_bin: self.candidate_bin,
            threshold: self.threshold,
            nan_direction: self.nan_direction,
            score: self.score,
            control_label: control_label.to_owned(),
            left: self.left,
            right: self.right,
        }
    }
}

pub(crate) fn ddp_unchecked(left: &[f64], right: &[f64]) -> f64 {
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    f64::max(max(right) - min(left), max(left) - min(right))
}

/// DDP max-envelope: the widest gap between the best uplift on one side
/// and the worst uplift on the other.
pub fn ddp_max(uplifts_left: &[f64], uplifts_right: &[f64]) -> Result<f64> {
    if uplifts_left.is_empty() || uplifts_right.is_empty() {
        return Err(Error::invalid("ddp_max needs at least one uplift on each side"));
    }
    Ok(ddp_unchecked(uplifts_left, uplifts_right))
}

/// Scoring knobs the naive variants bend.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScoreRules {
    pub min_leaf_size: u64,
    /// Drop treatments without support instead of rejecting the candidate.
    pub sparse_omit: bool,
}

impl ScoreRules {
    pub fn contract(config: &SplitConfig) -> Self {
        Self {
            min_leaf_size: config.min_leaf_size,
            sparse_omit: false,
        }
    }
}

fn uplifts(rates: &[f64], control: usize, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    rates
        .iter()
        .enumerate()
        .filter(|&(t, _)| t != control && keep(t))
        .map(|(_, &r)| r - rates[control])
        .collect()
}

pub(crate) fn score_candidate(
    table: &PrefixTable,
    candidate: usize,
    direction: NanDirection,
    control: usize,
    rules: ScoreRules,
) -> CandidateScore {
    let t = table.n_treatments();
    let route = |left: bool| {
        let mut b = BranchCounts {
            opps: Vec::with_capacity(t),
            accepts: Vec::with_capacity(t),
        };
        for k in 0..t {
            let (mut o, mut a) = if left {
                (
                    table.left_opps[candidate * t + k],
                    table.left_accepts[candidate * t + k],
                )
            } else {
                (table.right_opps(candidate, k), table.right_accepts(candidate, k))
            };
            if left == (direction == NanDirection::Left) {
                o += table.missing_opps[k];
                a += table.missing_accepts[k];
            }
            b.opps.push(o);
            b.accepts.push(a);
        }
        b
    };
    let left = route(true);
    let right = route(false);
    let rates_left = left.rates();
    let rates_right = right.rates();

    let (uplift_left, uplift_right) = if rules.sparse_omit {
        (
            uplifts(&rates_left, control, |k| left.opps[k] > 0),
            uplifts(&rates_right, control, |k| right.opps[k] > 0),
        )
    } else {
        (
            uplifts(&rates_left, control, |_| true),
            uplifts(&rates_right, control, |_| true),
        )
    };

    let invalid_reason = if t < 2 {
        Some(InvalidReason::NoTreatedArm)
    } else if let Some((k, side)) = (0..t).filter(|&k| !rules.sparse_omit || k == control).find_map(|k| {
        if left.opps[k] == 0 {
            Some((k, "left"))
        } else if right.opps[k] == 0 {
            Some((k, "right"))
        } else {
            None
        }
    }) {
        Some(InvalidReason::ZeroSupport {
            treatment: table.treatments[k].clone(),
            side: side.to_owned(),
        })
    } else if uplift_left.is_empty() || uplift_right.is_empty() {
        Some(InvalidReason::NoTreatedArm)
    } else if left.total() < rules.min_leaf_size || right.total() < rules.min_leaf_size {
        Some(InvalidReason::MinLeafSize {
            left: left.total(),
            right: right.total(),
            min_leaf_size: rules.min_leaf_size,
        })
    } else {
        None
    };

    let score = match invalid_reason {
        None => ddp_unchecked(&uplift_left, &uplift_right),
        Some(_) => f64::NAN,
    };
    let invalid_reason = match invalid_reason {
        None if !score.is_finite() => Some(InvalidReason::NonFiniteScore),
        other => other,
    };
    CandidateScore {
        feature: table.feature.clone(),
        candidate_bin: candidate,
        threshold: table.cuts[candidate],
        nan_direction: direction,
        left,
        right,
        rates_left,
        rates_right,
        uplift_left,
        uplift_right,
        score: if invalid_reason.is_none() { score } else { f64::NAN },
        valid: invalid_reason.is_none(),
        invalid_reason,
    }
}

pub(crate) fn expand_with(
    table: &PrefixTable,
    control: usize,
    directions: &[NanDirection],
    rules: ScoreRules,
) -> Vec<CandidateScore> {
    (0..table.n_candidates())
        .flat_map(|c| directions.iter().map(move |&d| (c, d)))
        .map(|(c, d)| score_candidate(table, c, d, control, rules))
        .collect()
}

pub(crate) fn control_index(table: &PrefixTable, config: &SplitConfig) -> Result<usize> {
    let control = select_control(&table.treatments, config.control_label_override.as_deref())?;
    Ok(table
        .treatments
        .iter()
        .position(|l| *l == control)
        .expect("selected from vocabulary"))
}

/// Both missing routes for every cut: `2 * (B - 1)` candidates.
pub fn expand_and_score(table: &PrefixTable, config: &SplitConfig) -> Result<Vec<CandidateScore>> {
    config.check()?;
    let control = control_index(table, config)?;
    Ok(expand_with(
        table,
        control,
        &NanDirection::BOTH,
        ScoreRules::contract(config),
    ))
}

/// Total order on valid candidates; `Less` means `a` wins.
pub(crate) fn rank(a: &CandidateScore, b: &CandidateScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.threshold.total_cmp(&b.threshold))
        .then_with(|| a.candidate_bin.cmp(&b.candidate_bin))
        .then_with(|| a.nan_direction.cmp(&b.nan_direction))
        .then_with(|| a.feature.cmp(&b.feature))
}

/// `Less` means `a` is preferred. Both candidates must be valid.
pub fn compare_candidates(a: &CandidateScore, b: &CandidateScore) -> Result<Ordering> {
    for c in [a, b] {
        if !c.valid {
            return Err(Error::invalid(format!(
                "cannot order invalid candidate {}[{}] {}",
                c.feature, c.candidate_bin, c.nan_direction
            )));
        }
    }
    Ok(rank(a, b))
}

/// Keeps the preferred valid candidate and counts invalid ones by kind.
#[derive(Debug, Default)]
pub(crate) struct Selector {
    pub best: Option<CandidateScore>,
    pub seen: u64,
    pub invalid: BTreeMap<&'static str, u64>,
}

impl Selector {
    pub fn offer(&mut self, c: CandidateScore) {
        self.seen += 1;
        if let Some(reason) = &c.invalid_reason {
            *self.invalid.entry(reason.kind()).or_default() += 1;
            return;
        }
        match &self.best {
            Some(b) if rank(b, &c) != Ordering::Greater => {}
            _ => self.best = Some(c),
        }
    }

    pub fn absorb(&mut self, other: Selector) {
        self.seen += other.seen;
        for (k, v) in other.invalid {
            *self.invalid.entry(k).or_default() += v;
        }
        if let Some(c) = other.best {
            self.seen -= 1;
            self.offer(c);
        }
    }

    pub fn reason(&self) -> String {
        let parts: Vec<String> = self.invalid.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        format!("no valid candidate among {} ({})", self.seen, parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::prefix::BinCounts;
    use crate::split::Boundaries;
    use proptest::prelude::*;

    fn table(cuts: Vec<f64>, t: usize, cells: &[(usize, usize, u64, u64)]) -> PrefixTable {
        let b = Boundaries::new("x", cuts).unwrap();
        let mut counts = BinCounts::zeros(b.n_bins(), t);
        for &(bin, k, o, a) in cells {
            counts.opps[bin * t + k] += o;
            counts.accepts[bin * t + k] += a;
        }
        let names = (0..t)
            .map(|k| if k == 0 { "control".into() } else { format!("t{k}") })
            .collect::<Vec<_>>();
        PrefixTable::from_bin_counts(&b, &names, counts)
    }

    #[test]
    fn ddp_examples() {
        assert_eq!(ddp_max(&[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.0);
        assert_eq!(ddp_max(&[0.1], &[0.3]).unwrap(), 0.3 - 0.1);
        assert_eq!(ddp_max(&[0.0, -0.2], &[0.4, 0.1]).unwrap(), 0.4 - (-0.2));
        assert!((ddp_max(&[0.0, -0.2], &[0.4, 0.1]).unwrap() - 0.6).abs() < 1e-15);
        assert!(ddp_max(&[], &[0.1]).is_err());
    }

    #[test]
    fn zero_support_on_one_side_is_invalid() {
        // t1 only exists in bin 0; candidate 0 leaves it nothing on the right.
        let tab = table(vec![0.5], 2, &[(0, 0, 5, 2), (0, 1, 5, 3), (1, 0, 5, 1)]);
        let cands = expand_and_score(&tab, &SplitConfig::default()).unwrap();
        assert_eq!(cands.len(), 2);
        for c in &cands {
            assert!(!c.valid);
            assert!(c.score.is_nan());
            let reason = c.invalid_reason.as_ref().unwrap();
            assert!(reason
                .to_string()
                .starts_with("every treatment has positive support on both sides"));
        }
    }

    #[test]
    fn routes_agree_without_missing() {
        let tab = table(
            vec![0.25, 0.5, 0.75],
            3,
            &[
                (0, 0, 4, 1),
                (0, 1, 3, 2),
                (0, 2, 5, 5),
                (1, 0, 2, 0),
                (1, 1, 7, 1),
                (1, 2, 1, 1),
                (2, 0, 3, 3),
                (2, 1, 2, 2),
                (2, 2, 6, 1),
                (3, 0, 2, 1),
                (3, 1, 4, 0),
                (3, 2, 3, 3),
            ],
        );
        let cands = expand_and_score(&tab, &SplitConfig::default()).unwrap();
        assert_eq!(cands.len(), 6);
        for pair in cands.chunks(2) {
            assert_eq!(pair[0].score.to_bits(), pair[1].score.to_bits());
        }
    }

    #[test]
    fn three_bins_by_hand() {
        // control/treat over bins 0,1,2 plus a missing tally.
        let tab = table(
            vec![1.0, 2.0],
            2,
            &[
                (0, 0, 4, 1),
                (0, 1, 4, 3),
                (1, 0, 2, 1),
                (1, 1, 2, 0),
                (2, 0, 4, 2),
                (2, 1, 2, 2),
                (3, 0, 2, 2),
                (3, 1, 2, 0),
            ],
        );
        let cands = expand_and_score(&tab, &SplitConfig::default()).unwrap();
        // candidate 0, missing left: L = c 6/3, t 6/3; R = c 6/3, t 4/2
        let c = &cands[0];
        assert_eq!((c.candidate_bin, c.nan_direction), (0, NanDirection::Left));
        assert_eq!(c.left.opps, vec![6, 6]);
        assert_eq!(c.right.opps, vec![6, 4]);
        let expect = f64::max(
            (2.0 / 4.0 - 3.0 / 6.0) - (3.0 / 6.0 - 3.0 / 6.0),
            (3.0 / 6.0 - 3.0 / 6.0) - (2.0 / 4.0 - 3.0 / 6.0),
        );
        assert_eq!(c.score, expect);
        // candidate 1, missing right: L = c 6/2, t 6/3; R = c 6/4, t 4/2
        let c = &cands[3];
        assert_eq!((c.candidate_bin, c.nan_direction), (1, NanDirection::Right));
        let ul = 3.0 / 6.0 - 2.0 / 6.0;
        let ur = 2.0 / 4.0 - 4.0 / 6.0;
        assert_eq!(c.score, f64::max(ur - ul, ul - ur));
    }

    #[test]
    fn min_leaf_counts_routed_missing() {
        let tab = table(
            vec![0.5],
            2,
            &[
                (0, 0, 1, 0),
                (0, 1, 1, 1),
                (1, 0, 3, 1),
                (1, 1, 3, 2),
                (2, 0, 2, 1),
                (2, 1, 2, 1),
            ],
        );
        let config = SplitConfig {
            min_leaf_size: 5,
            ..SplitConfig::default()
        };
        let cands = expand_and_score(&tab, &config).unwrap();
        assert!(matches!(
            cands[1].invalid_reason,
            Some(InvalidReason::MinLeafSize { left: 2, right: 10, .. })
        ));
        assert!(cands[0].valid, "{:?}", cands[0].invalid_reason);
    }

    fn valid(feature: &str, bin: usize, threshold: f64, dir: NanDirection, score: f64) -> CandidateScore {
        CandidateScore {
            feature: feature.into(),
            candidate_bin: bin,
            threshold,
            nan_direction: dir,
            left: BranchCounts {
                opps: vec![],
                accepts: vec![],
            },
            right: BranchCounts {
                opps: vec![],
                accepts: vec![],
            },
            rates_left: vec![],
            rates_right: vec![],
            uplift_left: vec![],
            uplift_right: vec![],
            score,
            valid: true,
            invalid_reason: None,
        }
    }

    #[test]
    fn ordering_examples() {
        use NanDirection::*;
        let a = valid("x", 3, 0.5, Left, 0.3);
        let b = valid("x", 3, 0.5, Left, 0.2);
        assert_eq!(compare_candidates(&a, &b).unwrap(), Ordering::Less);
        let a = valid("x", 9, 0.4, Right, 0.2);
        let b = valid("x", 1, 0.6, Left, 0.2);
        assert_eq!(compare_candidates(&a, &b).unwrap(), Ordering::Less);
        let a = valid("x", 3, 0.5, Left, 0.2);
        let b = valid("x", 3, 0.5, Right, 0.2);
        assert_eq!(compare_candidates(&a, &b).unwrap(), Ordering::Less);
        let a = valid("a", 3, 0.5, Right, 0.2);
        let b = valid("b", 3, 0.5, Right, 0.2);
        assert_eq!(compare_candidates(&a, &b).unwrap(), Ordering::Less);
        let mut bad = b.clone();
        bad.valid = false;
        assert!(compare_candidates(&a, &bad).is_err());
    }

    proptest! {
        #[test]
        fn order_is_total_on_distinct_triples(
            s1 in 0u8..3, s2 in 0u8..3, b1 in 0usize..3, b2 in 0usize..3,
            d1 in any::<bool>(), d2 in any::<bool>(), f1 in 0u8..2, f2 in 0u8..2,
        ) {
            let dir = |d| if d { NanDirection::Left } else { NanDirection::Right };
            let a = valid(&format!("f{f1}"), b1, b1 as f64 * 0.25, dir(d1), s1 as f64 * 0.1);
            let b = valid(&format!("f{f2}"), b2, b2 as f64 * 0.25, dir(d2), s2 as f64 * 0.1);
            let ab = compare_candidates(&a, &b).unwrap();
            prop_assert_eq!(ab, compare_candidates(&b, &a).unwrap().reverse());
            let same = (f1, b1, d1) == (f2, b2, d2) && s1 == s2;
            prop_assert_eq!(ab == Ordering::Equal, same);
        }
    }
}
