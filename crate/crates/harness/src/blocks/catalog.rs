use std::collections::BTreeSet;

use policykit::frame::{AssignmentRule, PartitionedFrame, PerturbationKind};
use policykit::split::{
    approximate_boundaries, best_split, build_prefix_sums, expand_and_score, naive_variant_best_split, CandidateScore,
    ExecutionPath, NaiveOptions, NaiveVariant, SplitConfig, SplitInput, SplitOutcome,
};
use policykit::synth::{generate, split_train_holdout, FeatureFamily};
use policykit::trainer::{witness_compare, Manifest, TrainingConfig};
use policykit::Error;

use super::{fixed, perturb, short, synth, uniform_bounds, witness};
use crate::bundle::{CaseRecord, CaseStatus, ResultBundle, SummaryTable};
use crate::spec::{F1Knobs, F2Knobs};

fn contract_rule(v: NaiveVariant) -> &'static str {
    match v {
        NaiveVariant::NoTotalOrder => "total candidate order: score, threshold, bin, NaN route, feature",
        NaiveVariant::FirstSeenControl => "control priority: \"control\", then \"0\", then smallest label",
        NaiveVariant::SparseOmit => "zero-filled prefix tables; positive support on both sides",
        NaiveVariant::ImplicitMissing => "both NaN routes scored for every cut",
        NaiveVariant::RecomputedQuantiles => "boundaries fixed by the locked manifest",
    }
}

#[derive(Default)]
struct Tally {
    evaluations: usize,
    drift_cases: usize,
    identity_drifts: usize,
    nonzero_delta_drifts: usize,
    accepted_invalid: usize,
    affected: BTreeSet<String>,
    largest_delta: Option<f64>,
}

impl Tally {
    fn record(&mut self, feature: &str, contract: &SplitOutcome, naive: &SplitOutcome, accepted_invalid: bool) {
        self.evaluations += 1;
        let drift = naive.decision_string() != contract.decision_string();
        if drift {
            self.drift_cases += 1;
            if let (Some(a), Some(b)) = (contract.best(), naive.best()) {
                let delta = (a.score - b.score).abs();
                self.largest_delta = Some(self.largest_delta.map_or(delta, |d| d.max(delta)));
                self.identity_drifts += usize::from(!a.same_identity(b));
                self.nonzero_delta_drifts += usize::from(delta != 0.0);
            }
        }
        self.accepted_invalid += usize::from(accepted_invalid);
        if drift || accepted_invalid {
            self.affected.insert(feature.to_owned());
        }
    }
}

fn accepted_invalid(variant: NaiveVariant, naive: &SplitOutcome, contract_scored: &[CandidateScore]) -> bool {
    if variant == NaiveVariant::RecomputedQuantiles {
        return false;
    }
    naive.best().is_some_and(|b| {
        contract_scored
            .iter()
            .any(|c| c.candidate_bin == b.candidate_bin && c.nan_direction == b.nan_direction && !c.valid)
    })
}

pub(super) fn f1(k: &F1Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let mut families = FeatureFamily::ADVERSARIAL.to_vec();
    families.push(FeatureFamily::Generic(2));
    let spec = synth(k.n_rows, k.n_treatments, k.p_miss, families, seed);
    let frame = generate(&spec)?;
    let vocab = spec.treatment_labels();
    let names = frame.feature_names();
    let bounds = uniform_bounds(&names, k.n_bins)?;
    let config = SplitConfig {
        min_leaf_size: k.min_leaf_size,
        ..SplitConfig::default()
    };
    let options = NaiveOptions {
        quantile_epsilon: k.quantile_epsilon,
        ..NaiveOptions::default()
    };
    let scored = names
        .iter()
        .zip(&bounds)
        .map(|(f, b)| expand_and_score(&build_prefix_sums(&frame, f, b, &vocab)?, &config))
        .collect::<policykit::Result<Vec<_>>>()?;
    let base = PartitionedFrame::partition(&frame, k.partitions, AssignmentRule::ByRowIndexBlock)?;
    drop(frame);

    let mut tallies: Vec<Tally> = NaiveVariant::ALL.iter().map(|_| Tally::default()).collect();
    let mut reference: Vec<SplitOutcome> = Vec::new();
    let mut contract_layout_drifts = 0usize;
    for s in 0..k.shuffles {
        let data = if s == 0 {
            base.clone()
        } else {
            perturb(&base, PerturbationKind::ShuffleRows(seed.wrapping_add(s as u64)))?
        };
        for (i, f) in names.iter().enumerate() {
            let input = SplitInput::new(&data, &bounds[i..=i], &vocab);
            let contract = best_split(input, &config)?;
            match reference.get(i) {
                Some(r) => contract_layout_drifts += usize::from(*r != contract),
                None => reference.push(contract.clone()),
            }
            for (v, tally) in NaiveVariant::ALL.iter().zip(&mut tallies) {
                let naive = naive_variant_best_split(*v, input, &config, &options)?;
                tally.record(f, &contract, &naive, accepted_invalid(*v, &naive, &scored[i]));
            }
        }
    }

    bundle.push(
        CaseRecord::new("F1/contract")
            .input("layouts", k.shuffles)
            .input("features", &names)
            .run(|c| {
                c.output("contract_layout_drifts", contract_layout_drifts);
                c.output(
                    "decisions",
                    reference.iter().map(SplitOutcome::decision_string).collect::<Vec<_>>(),
                );
                Ok(CaseStatus::check(contract_layout_drifts == 0, || {
                    format!("contract decision moved in {contract_layout_drifts} layouts")
                }))
            }),
    );

    let mut table = SummaryTable::new(
        "Failure catalog",
        &[
            "failure mode",
            "drift cases",
            "affected features",
            "largest |Δscore|",
            "contract rule",
        ],
    );
    for (v, t) in NaiveVariant::ALL.into_iter().zip(tallies) {
        let case = CaseRecord::new(format!("F1/{v}"))
            .input("variant", v.as_str())
            .run(|c| {
                c.output("evaluations", t.evaluations);
                c.output("drift_cases", t.drift_cases);
                c.output("identity_drifts", t.identity_drifts);
                c.output("nonzero_delta_drifts", t.nonzero_delta_drifts);
                c.output("accepted_invalid", t.accepted_invalid);
                c.output("affected_features", &t.affected);
                c.output("largest_abs_delta_score", t.largest_delta);
                c.output("contract_rule", contract_rule(v));
                let observed = t.drift_cases + t.accepted_invalid >= 1;
                let status = match v {
                    NaiveVariant::NoTotalOrder => CaseStatus::check(observed && t.nonzero_delta_drifts == 0, || {
                        format!(
                            "{} drifts, {} with nonzero score delta",
                            t.drift_cases, t.nonzero_delta_drifts
                        )
                    }),
                    NaiveVariant::SparseOmit => CaseStatus::check(t.accepted_invalid >= 1, || {
                        "no contract-invalid candidate was accepted".to_owned()
                    }),
                    _ => CaseStatus::check(observed, || "no drift observed".to_owned()),
                };
                Ok(status)
            });
        table.row(vec![
            v.to_string(),
            t.drift_cases.to_string(),
            t.affected.iter().cloned().collect::<Vec<_>>().join(", "),
            t.largest_delta.map_or_else(|| "n/a".to_owned(), fixed),
            contract_rule(v).to_owned(),
        ]);
        bundle.push(case);
    }
    bundle.tables.push(table);
    Ok(())
}

pub(super) fn f2(k: &F2Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let spec = synth(
        k.n_rows,
        k.n_treatments,
        k.p_miss,
        vec![FeatureFamily::XBoundary, FeatureFamily::Generic(3)],
        seed,
    );
    let (train, holdout) = split_train_holdout(&generate(&spec)?, k.holdout_fraction, seed)?;
    let vocab = spec.treatment_labels();
    let names = train.feature_names();
    let bounds = uniform_bounds(&names, k.n_bins)?;
    let xb = names
        .iter()
        .position(|f| f == "x_boundary")
        .expect("x_boundary generated");
    let cut = bounds[xb]
        .cuts()
        .iter()
        .position(|&c| c == k.boundary)
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a cut of the uniform grid", k.boundary)))?;
    let mut shifted = bounds.clone();
    shifted[xb] = bounds[xb].with_cut(cut, k.shifted_boundary)?;
    let training = TrainingConfig {
        max_depth: k.depth,
        min_leaf_size: k.min_leaf_size,
    };
    let data = PartitionedFrame::single(train.clone());

    let mut table = SummaryTable::new(
        "Boundary witness",
        &[
            "boundary",
            "signature",
            "top-assignment agreement",
            "policy value",
            "AUUC",
            "Qini",
        ],
    );
    bundle.push(
        CaseRecord::new("F2/boundary_witness")
            .input("boundary", k.boundary)
            .input("shifted_boundary", k.shifted_boundary)
            .input("depth", k.depth)
            .run(|c| {
                let m_fixed = Manifest::new(&train, bounds.clone(), vocab.clone(), None, seed, training)?.lock();
                let m_shift = Manifest::new(&train, shifted.clone(), vocab.clone(), None, seed, training)?.lock();
                let wa = witness(&data, &m_fixed, ExecutionPath::default(), &holdout)?;
                let wb = witness(&data, &m_shift, ExecutionPath::default(), &holdout)?;
                let r = witness_compare(&wa, &wb)?;
                for (b, w, agreement) in [
                    (k.boundary, &wa, "reference".to_owned()),
                    (k.shifted_boundary, &wb, fixed(r.top_assignment_agreement)),
                ] {
                    table.row(vec![
                        format!("{b:?}"),
                        short(&w.signature.digest),
                        agreement,
                        fixed(w.metrics.policy_value.value),
                        fixed(w.metrics.uplift.auuc),
                        fixed(w.metrics.uplift.qini),
                    ]);
                }
                c.output("fixed_digest", &wa.signature.digest);
                c.output("shifted_digest", &wb.signature.digest);
                c.output("report", &r);
                Ok(CaseStatus::check(!r.signature_equal, || {
                    "boundary shift left the signature unchanged".to_owned()
                }))
            }),
    );
    bundle.tables.push(table);

    let config = SplitConfig {
        min_leaf_size: k.min_leaf_size,
        ..SplitConfig::default()
    };
    let xb_bounds = &bounds[xb..=xb];
    bundle.push(
        CaseRecord::new("F2/fixed_boundary_split")
            .input("feature", "x_boundary")
            .run(|c| {
                let outcome = best_split(SplitInput::new(&data, xb_bounds, &vocab), &config)?;
                c.output("decision", outcome.decision_string());
                Ok(CaseStatus::check(outcome.best().is_some(), || {
                    outcome.decision_string()
                }))
            }),
    );
    bundle.push(
        CaseRecord::new("F2/recomputed_quantiles")
            .input("feature", "x_boundary")
            .input("quantile_epsilon", k.quantile_epsilon)
            .run(|c| {
                let approx = approximate_boundaries(&data, "x_boundary", k.n_bins, k.quantile_epsilon)?;
                let fixed_cuts = bounds[xb].cuts();
                let shared = approx.cuts().iter().filter(|x| fixed_cuts.contains(x)).count();
                let options = NaiveOptions {
                    quantile_epsilon: k.quantile_epsilon,
                    ..NaiveOptions::default()
                };
                let naive = naive_variant_best_split(
                    NaiveVariant::RecomputedQuantiles,
                    SplitInput::new(&data, xb_bounds, &vocab),
                    &config,
                    &options,
                )?;
                c.output("fixed_cuts", fixed_cuts.len());
                c.output("recomputed_cuts", approx.cuts().len());
                c.output("shared_cuts", shared);
                c.output("recomputed_decision", naive.decision_string());
                Ok(CaseStatus::check(approx.cuts() != fixed_cuts, || {
                    "recomputed quantiles reproduced the fixed cuts".to_owned()
                }))
            }),
    );
    Ok(())
}
