mod common;

use common::random_frame;
use policykit::frame::{AssignmentRule, ColumnFrame, PartitionedFrame};
use policykit::rng::SeededRng;
use policykit::split::{
    best_split, build_prefix_sums, expand_and_score, select_control, Boundaries, ExecutionPath, NanDirection,
    SplitConfig, SplitInput, SplitOutcome,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Brute {
    feature: String,
    bin: usize,
    threshold: f64,
    dir: NanDirection,
    score: Option<f64>,
}

/// Every (cut, route) scored straight from raw rows.
fn brute_force(frame: &ColumnFrame, b: &Boundaries, vocab: &[String], control: &str, min_leaf: u64) -> Vec<Brute> {
    let col = frame.feature(b.feature()).unwrap();
    let t = vocab.len();
    let ci = vocab.iter().position(|v| v == control).unwrap();
    let mut out = Vec::new();
    for (c, &cut) in b.cuts().iter().enumerate() {
        for dir in [NanDirection::Left, NanDirection::Right] {
            let mut lo = vec![0u64; t];
            let mut la = vec![0u64; t];
            let mut ro = vec![0u64; t];
            let mut ra = vec![0u64; t];
            for i in 0..frame.n_rows() {
                let k = vocab.iter().position(|v| v == frame.treatment().label(i)).unwrap();
                let y = u64::from(frame.outcome()[i]);
                let left = match col.get(i) {
                    None => dir == NanDirection::Left,
                    Some(v) => v <= cut,
                };
                if left {
                    lo[k] += 1;
                    la[k] += y;
                } else {
                    ro[k] += 1;
                    ra[k] += y;
                }
            }
            let supported = (0..t).all(|k| lo[k] > 0 && ro[k] > 0);
            let sized = lo.iter().sum::<u64>() >= min_leaf && ro.iter().sum::<u64>() >= min_leaf;
            let score = (t >= 2 && supported && sized).then(|| {
                let rate = |a: &[u64], o: &[u64], k: usize| a[k] as f64 / o[k] as f64;
                let ul: Vec<f64> = (0..t)
                    .filter(|&k| k != ci)
                    .map(|k| rate(&la, &lo, k) - rate(&la, &lo, ci))
                    .collect();
                let ur: Vec<f64> = (0..t)
                    .filter(|&k| k != ci)
                    .map(|k| rate(&ra, &ro, k) - rate(&ra, &ro, ci))
                    .collect();
                let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
                f64::max(max(&ur) - min(&ul), max(&ul) - min(&ur))
            });
            out.push(Brute {
                feature: b.feature().to_owned(),
                bin: c,
                threshold: cut,
                dir,
                score,
            });
        }
    }
    out
}

fn brute_best(cands: &[Brute]) -> Option<&Brute> {
    let mut valid: Vec<&Brute> = cands.iter().filter(|c| c.score.is_some()).collect();
    valid.sort_by(|a, b| {
        b.score
            .unwrap()
            .partial_cmp(&a.score.unwrap())
            .unwrap()
            .then(a.threshold.partial_cmp(&b.threshold).unwrap())
            .then(a.bin.cmp(&b.bin))
            .then((a.dir == NanDirection::Right).cmp(&(b.dir == NanDirection::Right)))
            .then(a.feature.cmp(&b.feature))
    });
    valid.first().copied()
}

fn features(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("f{j}")).collect()
}

fn random_cuts(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..n)
        .map(|_| {
            if rng.bernoulli(0.5) {
                rng.below(5) as f64 * 0.25
            } else {
                rng.uniform()
            }
        })
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

const LABELS: [&str; 4] = ["control", "t1", "t2", "t3"];

fn vocab(t: usize) -> Vec<String> {
    LABELS[..t].iter().map(|s| s.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn expansion_matches_exhaustive_enumeration(
        seed in 0u64..100_000, n in 1usize..1000, b in 2usize..=8, t in 2usize..=4, min_leaf in 1u64..40,
    ) {
        let names = features(1);
        let frame = random_frame(n, &names, &LABELS[..t], seed);
        let mut rng = SeededRng::new(seed + 1);
        let bounds = Boundaries::new("f0", random_cuts(&mut rng, b - 1)).unwrap();
        let vocab = vocab(t);
        let config = SplitConfig { min_leaf_size: min_leaf, ..SplitConfig::default() };
        let table = build_prefix_sums(&frame, "f0", &bounds, &vocab).unwrap();
        let got = expand_and_score(&table, &config).unwrap();
        let expect = brute_force(&frame, &bounds, &vocab, "control", min_leaf);
        prop_assert_eq!(got.len(), 2 * bounds.n_candidates());
        prop_assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(&expect) {
            prop_assert_eq!((g.candidate_bin, g.nan_direction), (e.bin, e.dir));
            prop_assert_eq!(g.valid, e.score.is_some());
            if let Some(s) = e.score {
                prop_assert_eq!(g.score.to_bits(), s.to_bits());
            }
        }
    }

    #[test]
    fn all_paths_agree_with_brute_force_under_any_layout(
        seed in 0u64..100_000, n in 20usize..600, k in 1usize..4, b in 2usize..=8, t in 2usize..=4,
        parts in 1usize..9, shuffle in any::<u64>(),
    ) {
        let names = features(k);
        let frame = random_frame(n, &names, &LABELS[..t], seed);
        let mut rng = SeededRng::new(seed + 2);
        let bounds: Vec<Boundaries> = names.iter().map(|f| Boundaries::new(f.clone(), random_cuts(&mut rng, b - 1)).unwrap()).collect();
        let vocab = vocab(t);
        let mut expect = Vec::new();
        for bd in &bounds {
            expect.extend(brute_force(&frame, bd, &vocab, "control", 5));
        }
        let expect = brute_best(&expect).map(|e| (e.feature.clone(), e.bin, e.threshold.to_bits(), e.dir, e.score.unwrap().to_bits()));

        let mut order: Vec<usize> = (0..n).collect();
        SeededRng::new(shuffle).shuffle(&mut order);
        let shuffled = frame.take(&order);
        for data in [
            PartitionedFrame::single(frame.clone()),
            PartitionedFrame::partition(&shuffled, parts, AssignmentRule::ByRowIndexBlock).unwrap(),
            PartitionedFrame::partition(&frame, parts, AssignmentRule::ByRowIdHash).unwrap(),
        ] {
            for path in ExecutionPath::ALL {
                let config = SplitConfig { min_leaf_size: 5, execution_path: path, ..SplitConfig::default() };
                let got = best_split(SplitInput::new(&data, &bounds, &vocab), &config).unwrap();
                let got = got.best().map(|g| (g.feature.clone(), g.candidate_bin, g.threshold.to_bits(), g.nan_direction, g.score.to_bits()));
                prop_assert_eq!(&got, &expect, "path {}", path);
            }
        }
    }

    #[test]
    fn prefix_table_ignores_order_and_zero_fills(seed in 0u64..100_000, n in 0usize..300, shuffle in any::<u64>()) {
        let frame = random_frame(n, &features(1), &LABELS[..2], seed);
        let vocab = vocab(4);
        let bounds = Boundaries::new("f0", vec![0.25, 0.5, 0.75]).unwrap();
        let a = build_prefix_sums(&frame, "f0", &bounds, &vocab).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        SeededRng::new(shuffle).shuffle(&mut order);
        let b = build_prefix_sums(&frame.take(&order), "f0", &bounds, &vocab).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.total_opps.len(), 4);
        prop_assert_eq!(a.opps.len(), 4 * 4);
        prop_assert_eq!(a.total_opps[2] + a.total_opps[3], 0);
        for c in 0..a.n_candidates() {
            for k in 0..4 {
                prop_assert!(a.left_accepts[c * 4 + k] <= a.left_opps[c * 4 + k]);
                prop_assert_eq!(a.right_opps(c, k) + a.left_opps[c * 4 + k], a.total_opps[k]);
            }
        }
        let rows: u64 = a.total_opps.iter().chain(&a.missing_opps).sum();
        prop_assert_eq!(rows, n as u64);
    }
}

#[test]
fn control_rules_on_spec_examples() {
    let l = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(select_control(&l(&["Control", "offerA"]), None).unwrap(), "Control");
    assert_eq!(select_control(&l(&["0", "1", "2"]), None).unwrap(), "0");
    assert_eq!(select_control(&l(&["z_arm", "a_arm"]), None).unwrap(), "a_arm");
}

#[test]
fn too_large_leaf_floor_gives_none_on_every_path() {
    let names = features(2);
    let frame = random_frame(50, &names, &LABELS[..3], 9);
    let bounds: Vec<Boundaries> = names
        .iter()
        .map(|f| Boundaries::uniform(f.clone(), 4, 0.0, 1.0).unwrap())
        .collect();
    let vocab = vocab(3);
    let data = PartitionedFrame::single(frame);
    for path in ExecutionPath::ALL {
        let config = SplitConfig {
            min_leaf_size: 1000,
            execution_path: path,
            ..SplitConfig::default()
        };
        let got = best_split(SplitInput::new(&data, &bounds, &vocab), &config).unwrap();
        assert!(matches!(got, SplitOutcome::NoValidCandidate { .. }), "{path}: {got:?}");
    }
}

#[test]
fn reference_path_skips_above_threshold() {
    let names = features(10);
    let frame = random_frame(400, &names, &LABELS, 21);
    let bounds: Vec<Boundaries> = names
        .iter()
        .map(|f| Boundaries::uniform(f.clone(), 32, 0.0, 1.0).unwrap())
        .collect();
    let vocab = vocab(4);
    let data = PartitionedFrame::partition(&frame, 4, AssignmentRule::ByRowIndexBlock).unwrap();
    let input = SplitInput::new(&data, &bounds, &vocab);
    assert_eq!(input.candidate_rows(), 1240);
    let config = SplitConfig {
        safety_skip_threshold: 1000,
        ..SplitConfig::default()
    };
    let reference = best_split(input, &config).unwrap();
    assert_eq!(reference, SplitOutcome::SkippedTooLarge { candidate_rows: 1240 });
    let relational = best_split(input, &config.with_path(ExecutionPath::RelationalWindowed)).unwrap();
    let local = best_split(input, &config.with_path(ExecutionPath::PartitionedExecutorLocal)).unwrap();
    assert!(relational.best().is_some());
    assert_eq!(relational, local);
    let relaxed = SplitConfig {
        safety_skip_threshold: 1240,
        ..SplitConfig::default()
    };
    assert_eq!(best_split(input, &relaxed).unwrap(), local);
}

#[test]
fn outcome_json_field_names() {
    let names = features(1);
    let frame = random_frame(300, &names, &LABELS[..2], 4);
    let bounds = vec![Boundaries::new("f0", vec![0.5]).unwrap()];
    let vocab = vocab(2);
    let data = PartitionedFrame::single(frame);
    let got = best_split(SplitInput::new(&data, &bounds, &vocab), &SplitConfig::default()).unwrap();
    let json: serde_json::Value = serde_json::to_value(&got).unwrap();
    assert_eq!(json["status"], "ok");
    for key in [
        "feature",
        "candidate_bin",
        "threshold",
        "nan_direction",
        "score",
        "control_label",
        "left",
        "right",
    ] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["left"]["opps"].as_array().unwrap().len(), 2);
}
