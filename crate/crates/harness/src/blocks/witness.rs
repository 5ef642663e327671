use policykit::frame::{AssignmentRule, PartitionedFrame, PerturbationKind, SortKey};
use policykit::split::ExecutionPath;
use policykit::synth::{generate, split_train_holdout, FeatureFamily};
use policykit::trainer::{witness_compare, Manifest, TrainingConfig, WitnessReport};

use super::{fixed, perturb, short, synth, uniform_bounds, witness};
use crate::bundle::{CaseRecord, CaseStatus, ResultBundle, SummaryTable};
use crate::spec::{E1Knobs, S1Knobs};

fn record_report(c: &mut CaseRecord, r: &WitnessReport) -> CaseStatus {
    c.output("report", r);
    CaseStatus::check(
        r.preserved() && r.max_vector_delta == 0.0 && r.policy_value_delta == 0.0 && r.auuc_delta == 0.0,
        || {
            format!(
                "signature equal {}, {} vector and {} leaf mismatches",
                r.signature_equal, r.policy_vector_mismatches, r.leaf_mismatches
            )
        },
    )
}

pub(super) fn e1(k: &E1Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let families = vec![
        FeatureFamily::XBoundary,
        FeatureFamily::XMiss,
        FeatureFamily::XTie,
        FeatureFamily::Generic(3),
    ];
    let mut table = SummaryTable::new(
        "Witness preservation",
        &["T", "p_miss", "depth", "preserved", "total", "reference signature"],
    );
    for &t in &k.treatments {
        for &p in &k.p_miss {
            let spec = synth(k.n_rows, t, p, families.clone(), seed);
            let (train_frame, holdout) = split_train_holdout(&generate(&spec)?, k.holdout_fraction, seed)?;
            let bounds = uniform_bounds(&train_frame.feature_names(), k.n_bins)?;
            let vocab = spec.treatment_labels();
            let layouts = k
                .partitions
                .iter()
                .map(|&n| PartitionedFrame::partition(&train_frame, n, AssignmentRule::ByRowIdHash))
                .collect::<policykit::Result<Vec<_>>>()?;
            let single = PartitionedFrame::single(train_frame.clone());
            for &depth in &k.depths {
                let training = TrainingConfig {
                    max_depth: depth,
                    min_leaf_size: k.min_leaf_size,
                };
                let manifest = Manifest::new(&train_frame, bounds.clone(), vocab.clone(), None, seed, training)?.lock();
                let reference = witness(&single, &manifest, ExecutionPath::default(), &holdout)?;
                let (mut preserved, mut total) = (0usize, 0usize);
                for (&n, data) in k.partitions.iter().zip(&layouts) {
                    for path in ExecutionPath::ALL {
                        let case = CaseRecord::new(format!("E1/T={t}/p_miss={p}/depth={depth}/P={n}/{path}"))
                            .input("n_treatments", t)
                            .input("p_miss", p)
                            .input("depth", depth)
                            .input("partitions", n)
                            .input("execution_path", path)
                            .run(|c| {
                                let r = witness_compare(&reference, &witness(data, &manifest, path, &holdout)?)?;
                                c.output("signature_digest", &reference.signature.digest);
                                Ok(record_report(c, &r))
                            });
                        total += 1;
                        preserved += usize::from(!case.status.is_failure());
                        bundle.push(case);
                    }
                }
                table.row(vec![
                    t.to_string(),
                    p.to_string(),
                    depth.to_string(),
                    preserved.to_string(),
                    total.to_string(),
                    short(&reference.signature.digest),
                ]);
            }
        }
    }
    bundle.tables.push(table);
    Ok(())
}

fn s1_variants(seed: u64) -> Vec<(&'static str, PerturbationKind)> {
    vec![
        ("repartition_5", PerturbationKind::Repartition(5)),
        ("repartition_16", PerturbationKind::Repartition(16)),
        ("coalesce_2", PerturbationKind::Coalesce(2)),
        ("shuffle", PerturbationKind::ShuffleRows(seed)),
        (
            "sort_on",
            PerturbationKind::SortWithinPartition {
                key: SortKey::Feature("x_boundary".to_owned()),
                ascending: true,
            },
        ),
        (
            "sort_off",
            PerturbationKind::SortWithinPartition {
                key: SortKey::RowId,
                ascending: false,
            },
        ),
    ]
}

pub(super) fn s1(k: &S1Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let spec = synth(
        k.n_rows,
        k.n_treatments,
        k.p_miss,
        vec![
            FeatureFamily::XBoundary,
            FeatureFamily::XMiss,
            FeatureFamily::Generic(3),
        ],
        seed,
    );
    let (train_frame, holdout) = split_train_holdout(&generate(&spec)?, k.holdout_fraction, seed)?;
    let bounds = uniform_bounds(&train_frame.feature_names(), k.n_bins)?;
    let training = TrainingConfig {
        max_depth: k.depth,
        min_leaf_size: k.min_leaf_size,
    };
    let base = PartitionedFrame::partition(&train_frame, k.partitions, AssignmentRule::ByRowIndexBlock)?;
    let locked = Manifest::new(
        &train_frame,
        bounds.clone(),
        spec.treatment_labels(),
        None,
        seed,
        training,
    )?
    .lock();
    let reference = witness(&base, &locked, ExecutionPath::default(), &holdout)?;
    let unlocked_base = witness(
        &base,
        &Manifest::infer_from_data(&base, bounds.clone(), seed, training)?,
        ExecutionPath::default(),
        &holdout,
    )?;

    let mut table = SummaryTable::new(
        "Layout robustness",
        &["perturbation", "after lock", "before lock", "before-lock agreement"],
    );
    let mut before_lock_drifts = Vec::new();
    for (name, kind) in s1_variants(seed) {
        let data = perturb(&base, kind.clone())?;
        let mut after = true;
        let case = CaseRecord::new(format!("S1/{name}"))
            .input("perturbation", &kind)
            .run(|c| {
                let mut problems = Vec::new();
                for path in ExecutionPath::ALL {
                    let r = witness_compare(&reference, &witness(&data, &locked, path, &holdout)?)?;
                    c.output(&format!("{path}.preserved"), r.preserved());
                    if record_report(c, &r).is_failure() {
                        problems.push(format!("{path} drifted"));
                    }
                }
                after = problems.is_empty();
                Ok(CaseStatus::check(after, || problems.join("; ")))
            });
        bundle.push(case);

        let naive = witness(
            &data,
            &Manifest::infer_from_data(&data, bounds.clone(), seed, training)?,
            ExecutionPath::default(),
            &holdout,
        )?;
        let r = witness_compare(&unlocked_base, &naive)?;
        if !r.preserved() {
            before_lock_drifts.push(name);
        }
        table.row(vec![
            name.to_owned(),
            if after { "preserved" } else { "drift" }.to_owned(),
            if r.preserved() { "preserved" } else { "drift" }.to_owned(),
            fixed(r.top_assignment_agreement),
        ]);
    }
    bundle.tables.push(table);
    let n_variants = s1_variants(seed).len();
    bundle.push(
        CaseRecord::new("S1/before_lock")
            .input("variants", n_variants)
            .run(|c| {
                c.output("drifted", &before_lock_drifts);
                Ok(CaseStatus::check(!before_lock_drifts.is_empty(), || {
                    format!("no drift in {n_variants} perturbations without a lock")
                }))
            }),
    );
    Ok(())
}
