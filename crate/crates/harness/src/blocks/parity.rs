use std::collections::HashMap;

use policykit::frame::{AssignmentRule, PartitionedFrame};
use policykit::inference::{compare_scores, BackendKind, Engine, InferenceBackend, ScoreRun};
use policykit::rng::SeededRng;
use policykit::split::{best_split, Boundaries, ExecutionPath, SplitConfig, SplitInput, SplitOutcome};
use policykit::synth::{generate, FeatureFamily};

use super::{scoring_fixture, synth, uniform_bounds};
use crate::bundle::{CaseRecord, CaseStatus, ResultBundle, SummaryTable};
use crate::spec::{C1Knobs, C2Knobs};

pub(super) fn c1(k: &C1Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let (frame, forest) = scoring_fixture(
        k.n_rows,
        k.n_features,
        k.n_treatments,
        k.n_trees,
        k.depth,
        k.p_miss,
        seed,
    )?;
    let full = PartitionedFrame::partition(&frame, k.partitions, AssignmentRule::ByRowIdHash)?;
    let head_rows = k.n_rows.min(k.anti_pattern_rows);
    let head = PartitionedFrame::partition(
        &frame.take(&(0..head_rows).collect::<Vec<_>>()),
        k.partitions,
        AssignmentRule::ByRowIdHash,
    )?;
    let engine = Engine::default();
    let mut on_full: HashMap<BackendKind, ScoreRun> = HashMap::new();
    let mut on_head: HashMap<BackendKind, ScoreRun> = HashMap::new();
    for kind in BackendKind::ALL {
        let backend = InferenceBackend::new(kind).with_batch_size(k.batch_size);
        if kind != BackendKind::AntiPattern {
            on_full.insert(kind, engine.score(&full, &forest, backend)?);
        }
        on_head.insert(kind, engine.score(&head, &forest, backend)?);
    }

    for kind in BackendKind::ALL {
        let (run, data) = match on_full.get(&kind) {
            Some(run) => (run, &full),
            None => (&on_head[&kind], &head),
        };
        let expected = if kind == BackendKind::AntiPattern {
            data.n_rows()
        } else {
            data.partitions()
                .iter()
                .filter(|p| kind == BackendKind::BroadcastRowwise || p.n_rows() > 0)
                .count()
        };
        bundle.push(
            CaseRecord::new(format!("C1/init/{kind}"))
                .input("backend", kind)
                .input("rows", data.n_rows())
                .input("partitions", data.partition_count())
                .run(|c| {
                    c.output("init_count", run.init_count);
                    Ok(CaseStatus::check(run.init_count == expected, || {
                        format!("{} initializations, expected {expected}", run.init_count)
                    }))
                }),
        );
    }

    let mut table = SummaryTable::new(
        "Backend parity",
        &[
            "reference",
            "candidate",
            "rows",
            "mismatch rows",
            "max abs delta",
            "checksum equal",
        ],
    );
    for (i, &a) in BackendKind::ALL.iter().enumerate() {
        for &b in &BackendKind::ALL[i + 1..] {
            let anti = a == BackendKind::AntiPattern || b == BackendKind::AntiPattern;
            let scores = if anti { &on_head } else { &on_full };
            let case = CaseRecord::new(format!("C1/{a}~{b}"))
                .input("reference", a)
                .input("candidate", b)
                .input("tolerance", k.tolerance)
                .run(|c| {
                    let r = compare_scores(
                        a.as_str(),
                        &scores[&a].scores,
                        b.as_str(),
                        &scores[&b].scores,
                        k.tolerance,
                    )?;
                    table.row(vec![
                        a.to_string(),
                        b.to_string(),
                        r.rows.to_string(),
                        r.mismatch_rows.to_string(),
                        format!("{:?}", r.max_abs_delta),
                        r.checksum_equal.to_string(),
                    ]);
                    c.output("parity", &r);
                    Ok(CaseStatus::check(
                        r.passed() && r.max_abs_delta == 0.0 && r.checksum_equal,
                        || format!("{} mismatched rows, max |delta| {:e}", r.mismatch_rows, r.max_abs_delta),
                    ))
                });
            bundle.push(case);
        }
    }
    bundle.tables.push(table);
    Ok(())
}

/// Runs every execution path and checks the outcomes agree.
fn compare_paths(
    c: &mut CaseRecord,
    data: &PartitionedFrame,
    bounds: &[Boundaries],
    vocab: &[String],
    config: &SplitConfig,
    tolerance: f64,
) -> policykit::Result<(CaseStatus, SplitOutcome)> {
    let outcomes = ExecutionPath::ALL
        .iter()
        .map(|&p| best_split(SplitInput::new(data, bounds, vocab), &config.with_path(p)))
        .collect::<policykit::Result<Vec<_>>>()?;
    for (p, o) in ExecutionPath::ALL.iter().zip(&outcomes) {
        c.output(&format!("{p}.decision"), o.decision_string());
    }
    let reference = &outcomes[0];
    let mut problems = Vec::new();
    for (p, o) in ExecutionPath::ALL.iter().zip(&outcomes).skip(1) {
        if o.decision_string() != reference.decision_string() {
            problems.push(format!("{p} decided {}", o.decision_string()));
        }
        if let (Some(a), Some(b)) = (reference.best(), o.best()) {
            let delta = (a.score - b.score).abs();
            if delta > tolerance {
                problems.push(format!("{p} score delta {delta:e}"));
            }
        }
    }
    if let Some(b) = reference.best() {
        c.output("tuple", b.tuple_string());
    }
    c.output("status", reference.status());
    let status = CaseStatus::check(problems.is_empty(), || problems.join("; "));
    Ok((status, outcomes.into_iter().next().expect("three paths")))
}

fn random_cuts(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..n)
        .map(|_| {
            if rng.bernoulli(0.5) {
                rng.below(9) as f64 / 8.0
            } else {
                rng.uniform()
            }
        })
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

pub(super) fn c2(k: &C2Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let config = SplitConfig {
        min_leaf_size: k.min_leaf_size,
        ..SplitConfig::default()
    };
    let mut table = SummaryTable::new("Adversarial fixtures", &["fixture", "status", "best split"]);
    let mut fixtures: Vec<(String, Vec<FeatureFamily>)> = FeatureFamily::ADVERSARIAL
        .iter()
        .map(|&f| (f.to_string(), vec![f, FeatureFamily::Generic(8)]))
        .collect();
    let mut all = FeatureFamily::ADVERSARIAL.to_vec();
    all.push(FeatureFamily::Generic(8));
    fixtures.push(("all".to_owned(), all));

    for (name, families) in fixtures {
        let spec = synth(k.n_rows, k.n_treatments, k.p_miss, families, seed);
        let case = CaseRecord::new(format!("C2/adversarial/{name}"))
            .input("families", &spec.feature_families)
            .input("n_rows", k.n_rows)
            .input("partitions", k.partitions)
            .run(|c| {
                let frame = generate(&spec)?;
                let bounds = uniform_bounds(&frame.feature_names(), k.n_bins)?;
                let data = PartitionedFrame::partition(&frame, k.partitions, AssignmentRule::ByRowIndexBlock)?;
                let (status, outcome) =
                    compare_paths(c, &data, &bounds, &spec.treatment_labels(), &config, k.score_tolerance)?;
                table.row(vec![
                    name.clone(),
                    outcome.status().to_owned(),
                    outcome.decision_string(),
                ]);
                Ok(status)
            });
        bundle.push(case);
    }
    bundle.tables.push(table);

    let mut rng = SeededRng::with_stream(seed, 0xC2);
    for i in 0..k.random_instances {
        let n = 20 + rng.below(981) as usize;
        let n_features = 1 + rng.below(3) as usize;
        let n_bins = 2 + rng.below(7) as usize;
        let t = 2 + rng.below(3) as usize;
        let p_miss = [0.0, 0.1, 0.3][rng.below(3) as usize];
        let parts = 1 + rng.below(8) as usize;
        let min_leaf = 1 + rng.below(20);
        let instance_seed = rng.next_u64();
        let spec = synth(n, t, p_miss, vec![FeatureFamily::Generic(n_features)], instance_seed);
        let cuts: Vec<Vec<f64>> = (0..n_features).map(|_| random_cuts(&mut rng, n_bins - 1)).collect();
        let config = SplitConfig {
            min_leaf_size: min_leaf,
            ..SplitConfig::default()
        };
        let case = CaseRecord::new(format!("C2/random/{i:03}"))
            .input("n_rows", n)
            .input("n_features", n_features)
            .input("n_bins", n_bins)
            .input("n_treatments", t)
            .input("p_miss", p_miss)
            .input("partitions", parts)
            .input("min_leaf_size", min_leaf)
            .input("seed", instance_seed)
            .run(|c| {
                let frame = generate(&spec)?;
                let bounds = frame
                    .feature_names()
                    .into_iter()
                    .zip(cuts)
                    .map(|(f, cuts)| Boundaries::new(f, cuts))
                    .collect::<policykit::Result<Vec<_>>>()?;
                let data = PartitionedFrame::partition(&frame, parts, AssignmentRule::ByRowIdHash)?;
                Ok(compare_paths(c, &data, &bounds, &spec.treatment_labels(), &config, k.score_tolerance)?.0)
            });
        bundle.push(case);
    }
    Ok(())
}
