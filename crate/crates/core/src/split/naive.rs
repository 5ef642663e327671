//! Deliberately broken split searches that each drop one contract rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::paths::{finish, Prepared};
use super::score::{control_index, expand_with, score_candidate, ScoreRules, Selector};
use super::{approximate_boundaries, Boundaries, NanDirection, SplitConfig, SplitInput, SplitOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaiveVariant {
    /// First strict maximum in data-dependent visiting order.
    NoTotalOrder,
    /// Control is whichever label the first row carries.
    FirstSeenControl,
    /// Unsupported treatments vanish instead of invalidating a candidate.
    SparseOmit,
    /// Missing rows always go to one fixed side.
    ImplicitMissing,
    /// Boundaries re-derived from an approximate quantile pass.
    RecomputedQuantiles,
}

impl NaiveVariant {
    pub const ALL: [NaiveVariant; 5] = [
        NaiveVariant::NoTotalOrder,
        NaiveVariant::FirstSeenControl,
        NaiveVariant::SparseOmit,
        NaiveVariant::ImplicitMissing,
        NaiveVariant::RecomputedQuantiles,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NaiveVariant::NoTotalOrder => "no_total_order",
            NaiveVariant::FirstSeenControl => "first_seen_control",
            NaiveVariant::SparseOmit => "sparse_omit",
            NaiveVariant::ImplicitMissing => "implicit_missing",
            NaiveVariant::RecomputedQuantiles => "recomputed_quantiles",
        }
    }
}

impl fmt::Display for NaiveVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NaiveVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NaiveVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown naive variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveOptions {
    pub implicit_direction: NanDirection,
    pub quantile_epsilon: f64,
}

impl Default for NaiveOptions {
    fn default() -> Self {
        Self {
            implicit_direction: NanDirection::Left,
            quantile_epsilon: 0.01,
        }
    }
}

/// Split search with one contract rule broken. Takes the same inputs as
/// [`super::best_split`]; the execution path in `config` is ignored.
pub fn naive_variant_best_split(
    variant: NaiveVariant,
    input: SplitInput<'_>,
    config: &SplitConfig,
    options: &NaiveOptions,
) -> Result<SplitOutcome> {
    config.check()?;
    let prepared = Prepared::new(input)?;
    let mut config = config.clone();
    if variant == NaiveVariant::FirstSeenControl {
        let mut first = None;
        prepared.for_each_row(|p, i| {
            if first.is_none() {
                first = Some(input.data.partitions()[p].treatment().label(i).to_owned());
            }
        });
        match first {
            Some(label) => config.control_label_override = Some(label),
            None => {
                return Ok(SplitOutcome::NoValidCandidate {
                    reason: "no rows".into(),
                })
            }
        }
    }
    let control = super::select_control(input.vocabulary, config.control_label_override.as_deref())?;
    let mut rules = ScoreRules::contract(&config);
    rules.sparse_omit = variant == NaiveVariant::SparseOmit;
    let directions: &[NanDirection] = match variant {
        NaiveVariant::ImplicitMissing => std::slice::from_ref(&options.implicit_direction),
        _ => &NanDirection::BOTH,
    };

    if variant == NaiveVariant::NoTotalOrder {
        return first_strict_max(&prepared, &config, &control, rules);
    }

    let recomputed: Vec<Boundaries>;
    let boundaries = if variant == NaiveVariant::RecomputedQuantiles {
        recomputed = input
            .boundaries
            .iter()
            .map(|b| approximate_boundaries(input.data, b.feature(), b.n_bins(), options.quantile_epsilon))
            .collect::<Result<_>>()?;
        &recomputed
    } else {
        input.boundaries
    };

    let mut selector = Selector::default();
    for (f, b) in boundaries.iter().enumerate() {
        let table = prepared.table(f, b);
        let c = control_index(&table, &config)?;
        expand_with(&table, c, directions, rules)
            .into_iter()
            .for_each(|cand| selector.offer(cand));
    }
    Ok(finish(selector, &control))
}

/// Candidates visited in the order their bins first appear in the rows,
/// remaining bins ascending; only a strictly larger score replaces the
/// incumbent.
fn first_strict_max(
    prepared: &Prepared<'_>,
    config: &SplitConfig,
    control: &str,
    rules: ScoreRules,
) -> Result<SplitOutcome> {
    let input = prepared.input;
    let mut best: Option<super::CandidateScore> = None;
    let mut selector = Selector::default();
    for (f, b) in input.boundaries.iter().enumerate() {
        let mut order: Vec<usize> = Vec::new();
        let mut seen = vec![false; b.n_bins()];
        prepared.for_each_row(|p, i| {
            let col = &input.data.partitions()[p].features()[prepared.feature_idx[f]];
            let bin = b.bucketize(col.get(i));
            if bin < b.n_candidates() && !seen[bin] {
                seen[bin] = true;
                order.push(bin);
            }
        });
        order.extend((0..b.n_candidates()).filter(|&c| !seen[c]));
        let table = prepared.table(f, b);
        let c = control_index(&table, config)?;
        for bin in order {
            for d in NanDirection::BOTH {
                let cand = score_candidate(&table, bin, d, c, rules);
                if !cand.valid {
                    selector.offer(cand);
                    continue;
                }
                if best.as_ref().map_or(true, |b| cand.score > b.score) {
                    best = Some(cand);
                }
            }
        }
    }
    Ok(match best {
        Some(b) => SplitOutcome::Ok(b.into_best(control)),
        None => finish(selector, control),
    })
}
