use policykit::forest::{random_forest, RandomForestSpec};
use policykit::frame::{AssignmentRule, ColumnFrame, PartitionedFrame};
use policykit::inference::{compare_scores, BackendKind, Engine, InferenceBackend};
use policykit::split::{best_split, ExecutionPath, SplitConfig, SplitInput};
use policykit::synth::{generate, split_train_holdout, FeatureFamily, MissingEncoding, SynthSpec};
use policykit::trainer::{witness_compare, Manifest, TrainingConfig, Witness};

use super::{synth, uniform_bounds, witness};
use crate::bundle::{CaseRecord, CaseStatus, ResultBundle, SummaryTable};
use crate::spec::F3Knobs;

const SCORED: [BackendKind; 3] = [
    BackendKind::BroadcastRowwise,
    BackendKind::VectorizedColumnar,
    BackendKind::VectorizedRowmajor,
];

#[derive(Default, Clone, Copy)]
struct Counts {
    exact: usize,
    total: usize,
}

impl Counts {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.exact += usize::from(ok);
    }
}

struct Prepared {
    train: PartitionedFrame,
    train_frame: ColumnFrame,
    holdout: ColumnFrame,
    scored: PartitionedFrame,
}

fn prepare(spec: &SynthSpec, k: &F3Knobs, seed: u64) -> policykit::Result<Prepared> {
    let frame = generate(spec)?;
    let scored = PartitionedFrame::partition(&frame, k.partitions, AssignmentRule::ByRowIdHash)?;
    let (train_frame, holdout) = split_train_holdout(&frame, k.holdout_fraction, seed)?;
    Ok(Prepared {
        train: PartitionedFrame::partition(&train_frame, k.partitions, AssignmentRule::ByRowIndexBlock)?,
        train_frame,
        holdout,
        scored,
    })
}

pub(super) fn f3(k: &F3Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let families = vec![
        FeatureFamily::XBoundary,
        FeatureFamily::XMiss,
        FeatureFamily::Generic(3),
    ];
    let engine = Engine::default();
    let training = TrainingConfig {
        max_depth: k.depth,
        min_leaf_size: k.min_leaf_size,
    };
    let config = SplitConfig {
        min_leaf_size: k.min_leaf_size,
        ..SplitConfig::default()
    };
    let (mut inference, mut splits, mut witnesses) = (Counts::default(), Counts::default(), Counts::default());

    for &p in &k.p_miss {
        for &focus in &k.focuses {
            let base = SynthSpec {
                missing_focus: focus,
                missing_encoding: MissingEncoding::Null,
                ..synth(k.n_rows, k.n_treatments, p, families.clone(), seed)
            };
            let vocab = base.treatment_labels();
            let reference = prepare(&base, k, seed)?;
            let names = reference.train_frame.feature_names();
            let bounds = uniform_bounds(&names, k.n_bins)?;
            let forest = random_forest(&RandomForestSpec {
                n_trees: k.n_trees,
                depth: k.tree_depth,
                n_features: names.len(),
                n_treatments: k.n_treatments,
                seed,
                feature_names: Some(names.clone()),
                ..RandomForestSpec::default()
            });
            let ref_scores = engine
                .score(
                    &reference.scored,
                    &forest,
                    InferenceBackend::new(BackendKind::BroadcastRowwise),
                )?
                .scores;
            let ref_split = best_split(SplitInput::new(&reference.train, &bounds, &vocab), &config)?;
            let ref_witness: Option<Witness> = if p > 0.0 {
                let m = Manifest::new(
                    &reference.train_frame,
                    bounds.clone(),
                    vocab.clone(),
                    None,
                    seed,
                    training,
                )?
                .lock();
                Some(witness(
                    &reference.train,
                    &m,
                    ExecutionPath::default(),
                    &reference.holdout,
                )?)
            } else {
                None
            };

            for &encoding in &k.encodings {
                let spec = SynthSpec {
                    missing_encoding: encoding,
                    ..base.clone()
                };
                let case = CaseRecord::new(format!("F3/p_miss={p}/{}/{}", enc_name(encoding), focus_name(focus)))
                    .input("p_miss", p)
                    .input("encoding", encoding)
                    .input("focus", focus)
                    .run(|c| {
                        let cell = prepare(&spec, k, seed)?;
                        let mut problems = Vec::new();
                        for kind in SCORED {
                            let got = engine.score(&cell.scored, &forest, InferenceBackend::new(kind))?.scores;
                            let r = compare_scores("null_broadcast_rowwise", &ref_scores, kind.as_str(), &got, 0.0)?;
                            let ok = r.mismatch_rows == 0 && r.max_abs_delta == 0.0;
                            inference.add(ok);
                            if !ok {
                                problems.push(format!("{kind}: {} rows differ", r.mismatch_rows));
                            }
                        }
                        for path in ExecutionPath::ALL {
                            let got =
                                best_split(SplitInput::new(&cell.train, &bounds, &vocab), &config.with_path(path))?;
                            let ok = got.decision_string() == ref_split.decision_string();
                            splits.add(ok);
                            c.output(&format!("{path}.decision"), got.decision_string());
                            if !ok {
                                problems.push(format!("{path}: {}", got.decision_string()));
                            }
                        }
                        if let Some(reference_w) = &ref_witness {
                            let m =
                                Manifest::new(&cell.train_frame, bounds.clone(), vocab.clone(), None, seed, training)?
                                    .lock();
                            for path in ExecutionPath::ALL {
                                let r = witness_compare(reference_w, &witness(&cell.train, &m, path, &cell.holdout)?)?;
                                let ok = r.preserved();
                                witnesses.add(ok);
                                if !ok {
                                    problems.push(format!("{path}: witness drift"));
                                }
                            }
                            c.output("signature_digest", &reference_w.signature.digest);
                        }
                        c.output("problems", &problems);
                        Ok(CaseStatus::check(problems.is_empty(), || problems.join("; ")))
                    });
                bundle.push(case);
            }
        }
    }

    let mut table = SummaryTable::new("Missingness exactness", &["check", "exact", "total"]);
    for (name, n) in [
        ("inference vectors", inference),
        ("best split tuples", splits),
        ("witness signatures", witnesses),
    ] {
        table.row(vec![name.to_owned(), n.exact.to_string(), n.total.to_string()]);
    }
    bundle.tables.push(table);
    Ok(())
}

fn enc_name(e: MissingEncoding) -> &'static str {
    match e {
        MissingEncoding::Null => "null",
        MissingEncoding::Nan => "nan",
    }
}

fn focus_name(f: policykit::synth::MissingFocus) -> &'static str {
    use policykit::synth::MissingFocus::*;
    match f {
        Uniform => "uniform",
        ControlArm => "control",
        TreatedArms => "treated",
        PositiveOutcome => "positive",
    }
}
