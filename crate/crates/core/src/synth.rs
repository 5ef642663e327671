//! Seeded synthetic populations with adversarial feature families.
//!
//! Generation is a fixed procedure over independent [`SeededRng`] streams,
//! so a spec maps to exactly one frame. Per row `i` (row id `i`):
//!
//! 1. treatment index from the skew vector (stream 1);
//! 2. latent `z`: exactly `0.5` with probability 0.15, else uniform `[0, 1)`
//!    (stream 2);
//! 3. outcome `y ~ Bernoulli(sigmoid(-1 + s * delta_t))` where `s = +1` if
//!    `z <= 0.5` and `-1` otherwise, `delta_0 = 0` and
//!    `delta_t = 0.6 * t / (T - 1)` (stream 3).
//!
//! Feature families (values live in `[0, 1]` so that uniform cuts `k / B`
//! apply to all of them):
//!
//! * `x_boundary` = `z` itself. At least 10% of the mass sits exactly on the
//!   `0.5` cut and the planted uplift flips across it.
//! * `x_miss` = `z` plus uniform noise in `[-0.05, 0.05]`, clamped.
//! * `x_tie`: within every (treatment, outcome) cell, taken in row-id order,
//!   the first `2 * floor(n / 4)` rows alternate between group G1 (value in
//!   bin 7 of 32) and G3 (bin 24); the rest go to G2 (bin 15). G1 and G3
//!   therefore have identical count tables, and because the DDP envelope is
//!   symmetric in its branches, splitting G1 | G2+G3 and G1+G2 | G3 score
//!   exactly the same.
//! * `x_sparse`: the last treatment only takes values in bin 3 of 32; every
//!   other treatment is uniform. Every candidate then has a zero-support
//!   (bin, treatment) cell on one side.
//! * `x_control`: uniform noise. Its presence switches the treatment labels
//!   to an ambiguous vocabulary (`base`, `arm_1`, ...) with no `control` and
//!   no `0`, so control selection falls to the lexicographic rule.
//! * `generic(k)`: `k` independent uniform columns `g00`, `g01`, ...
//!
//! Missingness touches `x_miss`, `x_boundary` and the generic columns. Each
//! such column draws one uniform per row from its own stream (so the
//! missing positions do not depend on the encoding) and a cell is missing
//! when that draw falls below
//! `min(1, p_miss * focus_weight * side_weight)`. `focus_weight` is 1 for
//! `uniform`; otherwise 2 inside the focus group and 0.5 outside it.
//! `side_weight` is 1.6 when `z > 0.5` and 0.4 otherwise for `x_miss` and
//! `x_boundary`, and 1 for generic columns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Cell, ColumnFrame, FeatureColumn, LabelColumn};
use crate::rng::SeededRng;
use crate::split::select_control;

pub const SEVERE_SKEW_T4: [f64; 4] = [0.90, 0.08, 0.015, 0.005];
pub const SEVERE_SKEW_T8: [f64; 8] = [0.88, 0.06, 0.025, 0.015, 0.008, 0.006, 0.004, 0.002];

/// Probability that the latent sits exactly on the 0.5 boundary.
const BOUNDARY_MASS: f64 = 0.15;
const PLANTED_CUT: f64 = 0.5;
const BASE_LOGIT: f64 = -1.0;
const MAX_UPLIFT_LOGIT: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skew {
    #[default]
    Balanced,
    Severe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingEncoding {
    #[default]
    Null,
    Nan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingFocus {
    #[default]
    Uniform,
    ControlArm,
    TreatedArms,
    PositiveOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureFamily {
    XTie,
    XSparse,
    XMiss,
    XControl,
    XBoundary,
    Generic(usize),
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureFamily::XTie => f.write_str("x_tie"),
            FeatureFamily::XSparse => f.write_str("x_sparse"),
            FeatureFamily::XMiss => f.write_str("x_miss"),
            FeatureFamily::XControl => f.write_str("x_control"),
            FeatureFamily::XBoundary => f.write_str("x_boundary"),
            FeatureFamily::Generic(k) => write!(f, "generic:{k}"),
        }
    }
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "x_tie" => FeatureFamily::XTie,
            "x_sparse" => FeatureFamily::XSparse,
            "x_miss" => FeatureFamily::XMiss,
            "x_control" => FeatureFamily::XControl,
            "x_boundary" => FeatureFamily::XBoundary,
            other => match other.strip_prefix("generic:").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => FeatureFamily::Generic(k),
                _ => return Err(Error::invalid(format!("unknown feature family {other:?}"))),
            },
        })
    }
}

impl TryFrom<String> for FeatureFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureFamily> for String {
    fn from(f: FeatureFamily) -> Self {
        f.to_string()
    }
}

impl FeatureFamily {
    pub const ADVERSARIAL: [FeatureFamily; 5] = [
        FeatureFamily::XTie,
        FeatureFamily::XSparse,
        FeatureFamily::XMiss,
        FeatureFamily::XControl,
        FeatureFamily::XBoundary,
    ];

    pub fn column_names(&self) -> Vec<String> {
        match self {
            FeatureFamily::Generic(k) => {
                let width = (k.saturating_sub(1)).to_string().len().max(2);
                (0..*k).map(|j| format!("g{j:0width$}")).collect()
            }
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_treatments: usize,
    pub seed: u64,
    pub skew: Skew,
    pub p_miss: f64,
    pub missing_encoding: MissingEncoding,
    pub missing_focus: MissingFocus,
    pub feature_families: Vec<FeatureFamily>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_rows: 10_000,
            n_treatments: 4,
            seed: 7,
            skew: Skew::Balanced,
            p_miss: 0.0,
            missing_encoding: MissingEncoding::Null,
            missing_focus: MissingFocus::Uniform,
            feature_families: FeatureFamily::ADVERSARIAL.to_vec(),
        }
    }
}

impl SynthSpec {
    pub fn treatment_probabilities(&self) -> Result<Vec<f64>> {
        let t = self.n_treatments;
        if t < 2 {
            return Err(Error::invalid(format!("need at least 2 treatments, got {t}")));
        }
        match (self.skew, t) {
            (Skew::Balanced, _) => Ok(vec![1.0 / t as f64; t]),
            (Skew::Severe, 4) => Ok(SEVERE_SKEW_T4.to_vec()),
            (Skew::Severe, 8) => Ok(SEVERE_SKEW_T8.to_vec()),
            (Skew::Severe, _) => Err(Error::UnsupportedConfiguration(format!(
                "severe skew is defined for 4 or 8 treatments, not {t}"
            ))),
        }
    }

    /// Treatment vocabulary in index order.
    pub fn treatment_labels(&self) -> Vec<String> {
        let ambiguous = self.feature_families.contains(&FeatureFamily::XControl);
        (0..self.n_treatments)
            .map(|i| match (ambiguous, i) {
                (false, 0) => "control".to_owned(),
                (false, _) => format!("t{i}"),
                (true, 0) => "base".to_owned(),
                (true, _) => format!("arm_{i}"),
            })
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_families.iter().flat_map(|f| f.column_names()).collect()
    }

    /// Config-file form (TOML).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(0, e.to_string()))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Value drawn uniformly from the interior of bin `bin` of 32 equal bins.
fn in_bin32(rng: &mut SeededRng, bin: usize) -> f64 {
    (bin as f64 + 0.1 + 0.8 * rng.uniform()) / 32.0
}

pub fn generate(spec: &SynthSpec) -> Result<ColumnFrame> {
    let probs = spec.treatment_probabilities()?;
    if !(0.0..=1.0).contains(&spec.p_miss) {
        return Err(Error::invalid(format!(
            "p_miss must lie in [0, 1], got {}",
            spec.p_miss
        )));
    }
    let n = spec.n_rows;
    let t_count = spec.n_treatments;
    let labels = spec.treatment_labels();
    let control = select_control(&labels, None)?;
    let control_idx = labels.iter().position(|l| *l == control).expect("control is a label");

    let mut t_rng = SeededRng::with_stream(spec.seed, 1);
    let treatment: Vec<usize> = (0..n).map(|_| t_rng.categorical(&probs)).collect();

    let mut z_rng = SeededRng::with_stream(spec.seed, 2);
    let latent: Vec<f64> = (0..n)
        .map(|_| {
            if z_rng.bernoulli(BOUNDARY_MASS) {
                PLANTED_CUT
            } else {
                z_rng.uniform()
            }
        })
        .collect();

    // One probability per (treatment, side) so that the link is evaluated a
    // fixed number of times.
    let p_left: Vec<f64> = (0..t_count)
        .map(|t| sigmoid(BASE_LOGIT + uplift_logit(t, t_count)))
        .collect();
    let p_right: Vec<f64> = (0..t_count)
        .map(|t| sigmoid(BASE_LOGIT - uplift_logit(t, t_count)))
        .collect();
    let mut y_rng = SeededRng::with_stream(spec.seed, 3);
    let outcome: Vec<u8> = (0..n)
        .map(|i| {
            let t = treatment[i];
            let p = if latent[i] <= PLANTED_CUT {
                p_left[t]
            } else {
                p_right[t]
            };
            y_rng.bernoulli(p) as u8
        })
        .collect();

    let in_focus: Vec<bool> = (0..n)
        .map(|i| match spec.missing_focus {
            MissingFocus::Uniform => true,
            MissingFocus::ControlArm => treatment[i] == control_idx,
            MissingFocus::TreatedArms => treatment[i] != control_idx,
            MissingFocus::PositiveOutcome => outcome[i] == 1,
        })
        .collect();
    let miss_rate = |i: usize, mnar: bool| {
        let focus = match spec.missing_focus {
            MissingFocus::Uniform => 1.0,
            _ if in_focus[i] => 2.0,
            _ => 0.5,
        };
        let side = match (mnar, latent[i] > PLANTED_CUT) {
            (false, _) => 1.0,
            (true, true) => 1.6,
            (true, false) => 0.4,
        };
        (spec.p_miss * focus * side).min(1.0)
    };

    let mut stream = 16u64;
    let mut next_rng = || {
        stream += 1;
        SeededRng::with_stream(spec.seed, stream)
    };
    let mut with_missing = |name: String, values: Vec<f64>, mnar: bool| {
        let mut m_rng = next_rng();
        let cells = values.into_iter().enumerate().map(|(i, v)| {
            let draw = m_rng.uniform();
            if draw < miss_rate(i, mnar) {
                match spec.missing_encoding {
                    MissingEncoding::Null => Cell::Null,
                    MissingEncoding::Nan => Cell::Nan,
                }
            } else {
                Cell::Value(v)
            }
        });
        FeatureColumn::from_cells(name, cells.collect::<Vec<_>>())
    };

    let mut columns = Vec::new();
    for (fi, family) in spec.feature_families.iter().enumerate() {
        let mut rng = SeededRng::with_stream(spec.seed, 1000 + fi as u64);
        match family {
            FeatureFamily::XBoundary => {
                columns.push(with_missing(family.to_string(), latent.clone(), true));
            }
            FeatureFamily::XMiss => {
                let v = latent
                    .iter()
                    .map(|&z| (z + rng.uniform_in(-0.05, 0.05)).clamp(0.0, 1.0))
                    .collect();
                columns.push(with_missing(family.to_string(), v, true));
            }
            FeatureFamily::XTie => {
                let groups = tie_groups(&treatment, &outcome, t_count);
                let v = groups.iter().map(|&g| in_bin32(&mut rng, [7, 15, 24][g])).collect();
                columns.push(FeatureColumn::from_values(family.to_string(), v));
            }
            FeatureFamily::XSparse => {
                let v = treatment
                    .iter()
                    .map(|&t| {
                        if t == t_count - 1 {
                            in_bin32(&mut rng, 3)
                        } else {
                            rng.uniform()
                        }
                    })
                    .collect();
                columns.push(FeatureColumn::from_values(family.to_string(), v));
            }
            FeatureFamily::XControl => {
                let v = (0..n).map(|_| rng.uniform()).collect();
                columns.push(FeatureColumn::from_values(family.to_string(), v));
            }
            FeatureFamily::Generic(_) => {
                for name in family.column_names() {
                    let v = (0..n).map(|_| rng.uniform()).collect();
                    columns.push(with_missing(name, v, false));
                }
            }
        }
    }

    ColumnFrame::new(
        (0..n as u64).collect(),
        columns,
        LabelColumn::from_labels(treatment.iter().map(|&t| labels[t].as_str())),
        outcome,
    )
}

fn uplift_logit(t: usize, t_count: usize) -> f64 {
    if t == 0 {
        0.0
    } else {
        MAX_UPLIFT_LOGIT * t as f64 / (t_count - 1) as f64
    }
}

/// Group index (0 = G1, 1 = G2, 2 = G3) per row for the `x_tie` family.
fn tie_groups(treatment: &[usize], outcome: &[u8], t_count: usize) -> Vec<usize> {
    let mut cell_size = vec![0usize; 2 * t_count];
    for (t, y) in treatment.iter().zip(outcome) {
        cell_size[2 * t + *y as usize] += 1;
    }
    let mut seen = vec![0usize; 2 * t_count];
    treatment
        .iter()
        .zip(outcome)
        .map(|(t, y)| {
            let c = 2 * t + *y as usize;
            let j = seen[c];
            seen[c] += 1;
            let paired = 2 * (cell_size[c] / 4);
            match (j < paired, j % 2) {
                (true, 0) => 0,
                (true, _) => 2,
                (false, _) => 1,
            }
        })
        .collect()
}

/// Deterministic holdout split. Both outputs keep the source row order.
pub fn split_train_holdout(
    frame: &ColumnFrame,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(ColumnFrame, ColumnFrame)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction must lie strictly between 0 and 1, got {holdout_fraction}"
        )));
    }
    let n = frame.n_rows();
    let n_hold = (n as f64 * holdout_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::with_stream(seed, 99).shuffle(&mut idx);
    let mut hold = idx[..n_hold].to_vec();
    let mut train = idx[n_hold..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    Ok((frame.take(&train), frame.take(&hold)))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn spec(n: usize) -> SynthSpec {
        SynthSpec {
            n_rows: n,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn severe_skew_frequencies_match_vector() {
        let s = SynthSpec {
            n_rows: 500_000,
            skew: Skew::Severe,
            feature_families: vec![FeatureFamily::XBoundary],
            ..SynthSpec::default()
        };
        let f = generate(&s).unwrap();
        let labels = s.treatment_labels();
        for (label, p) in labels.iter().zip(SEVERE_SKEW_T4) {
            let freq = f.treatment().iter().filter(|l| l == label).count() as f64 / 500_000.0;
            assert!((freq - p).abs() <= 0.01, "{label}: {freq} vs {p}");
        }
    }

    #[test]
    fn severe_skew_needs_four_or_eight_arms() {
        let s = SynthSpec {
            n_treatments: 5,
            skew: Skew::Severe,
            ..spec(10)
        };
        assert!(matches!(generate(&s), Err(Error::UnsupportedConfiguration(_))));
        let p8 = SynthSpec { n_treatments: 8, ..s }.treatment_probabilities().unwrap();
        assert!((p8.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_missing_cells_at_zero_rate() {
        let f = generate(&SynthSpec {
            feature_families: vec![
                FeatureFamily::XMiss,
                FeatureFamily::XBoundary,
                FeatureFamily::Generic(3),
            ],
            ..spec(2000)
        })
        .unwrap();
        assert!(f.features().iter().all(|c| c.missing_count() == 0));
    }

    #[test]
    fn same_seed_same_checksum() {
        let s = SynthSpec {
            p_miss: 0.2,
            ..spec(3000)
        };
        assert_eq!(generate(&s).unwrap().checksum(), generate(&s).unwrap().checksum());
        let other = SynthSpec { seed: 8, ..s };
        assert_ne!(
            generate(&other).unwrap().checksum(),
            generate(&spec(3000)).unwrap().checksum()
        );
    }

    #[test]
    fn boundary_mass_sits_on_the_cut() {
        let f = generate(&spec(20_000)).unwrap();
        let col = f.feature("x_boundary").unwrap();
        let at = (0..f.n_rows()).filter(|&i| col.get(i) == Some(0.5)).count();
        assert!(at as f64 >= 0.10 * f.n_rows() as f64, "{at}");
    }

    #[test]
    fn control_focus_concentrates_missingness() {
        let s = SynthSpec {
            p_miss: 0.2,
            missing_focus: MissingFocus::ControlArm,
            feature_families: vec![FeatureFamily::XMiss],
            ..spec(20_000)
        };
        let f = generate(&s).unwrap();
        let col = f.feature("x_miss").unwrap();
        let (mut c_miss, mut c_n, mut o_miss, mut o_n) = (0, 0, 0, 0);
        for i in 0..f.n_rows() {
            let m = col.get(i).is_none() as usize;
            if f.treatment().label(i) == "control" {
                c_miss += m;
                c_n += 1;
            } else {
                o_miss += m;
                o_n += 1;
            }
        }
        assert!(c_miss as f64 / c_n as f64 > o_miss as f64 / o_n as f64);
    }

    #[test]
    fn null_and_nan_encodings_share_positions() {
        let base = SynthSpec {
            p_miss: 0.3,
            ..spec(4000)
        };
        let null = generate(&base).unwrap();
        let nan = generate(&SynthSpec {
            missing_encoding: MissingEncoding::Nan,
            ..base
        })
        .unwrap();
        assert_ne!(null.checksum(), nan.checksum());
        for (a, b) in null.features().iter().zip(nan.features()) {
            assert!((0..4000).all(|i| a.get(i).map(f64::to_bits) == b.get(i).map(f64::to_bits)));
        }
    }

    #[test]
    fn ambiguous_labels_without_control_or_zero() {
        let labels = spec(1).treatment_labels();
        assert!(labels.iter().all(|l| !l.eq_ignore_ascii_case("control") && l != "0"));
        assert_eq!(select_control(&labels, None).unwrap(), "arm_1");
        let plain = SynthSpec {
            feature_families: vec![FeatureFamily::XBoundary],
            ..spec(1)
        };
        assert_eq!(plain.treatment_labels()[0], "control");
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let s = SynthSpec {
            p_miss: 0.3,
            feature_families: vec![FeatureFamily::XTie, FeatureFamily::Generic(4)],
            ..spec(123)
        };
        assert_eq!(SynthSpec::from_toml(&s.to_toml()).unwrap(), s);
        assert!(SynthSpec::from_toml("n_rows = 5\nbogus = 1\n").is_err());
        assert_eq!(SynthSpec::from_toml("n_rows = 5\n").unwrap().n_rows, 5);
    }

    #[test]
    fn family_names_round_trip() {
        for f in [FeatureFamily::XTie, FeatureFamily::Generic(32)] {
            assert_eq!(f.to_string().parse::<FeatureFamily>().unwrap(), f);
        }
        assert_eq!(FeatureFamily::Generic(32).column_names()[31], "g31");
        assert!("generic:0".parse::<FeatureFamily>().is_err());
    }

    #[test]
    fn holdout_split_sizes_and_conservation() {
        let f = generate(&SynthSpec {
            feature_families: vec![FeatureFamily::XBoundary],
            ..spec(64_000)
        })
        .unwrap();
        let (train, hold) = split_train_holdout(&f, 0.2, 7).unwrap();
        assert_eq!((train.n_rows(), hold.n_rows()), (51_200, 12_800));
        let a: HashSet<u64> = train.row_ids().iter().copied().collect();
        let b: HashSet<u64> = hold.row_ids().iter().copied().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 64_000);

        let small = f.take(&(0..10).collect::<Vec<_>>());
        let (t1, h1) = split_train_holdout(&small, 0.5, 3).unwrap();
        let (t2, h2) = split_train_holdout(&small, 0.5, 3).unwrap();
        assert_eq!((t1, h1), (t2, h2));
    }
}
