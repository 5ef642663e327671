//! One driver per block. Drivers push cases into the bundle; anything that
//! goes wrong while building a block's shared fixture is recorded as a
//! failed `setup` case.

mod catalog;
mod missing;
mod parity;
mod perf;
mod scale;
mod witness;

use policykit::forest::{random_forest, ForestArrays, RandomForestSpec};
use policykit::frame::{ColumnFrame, PartitionedFrame, PerturbationKind, PerturbationSpec};
use policykit::split::{Boundaries, ExecutionPath};
use policykit::synth::{generate, FeatureFamily, SynthSpec};
use policykit::trainer::{train, Manifest, Witness};

use crate::bundle::{CaseRecord, CaseStatus, ResultBundle};
use crate::error::Result;
use crate::spec::{BlockKnobs, ExperimentSpec};

/// Runs every case of the block described by `spec`.
pub fn run_block(spec: &ExperimentSpec) -> Result<ResultBundle> {
    spec.validate()?;
    let mut bundle = ResultBundle::new(spec.block, spec.seed, spec.knobs.to_json());
    let seed = spec.seed;
    let b = &mut bundle;
    let outcome = match &spec.knobs {
        BlockKnobs::P1(k) => perf::p1(k, seed, b),
        BlockKnobs::P2(k) => scale::p2(k, seed, b),
        BlockKnobs::C1(k) => parity::c1(k, seed, b),
        BlockKnobs::C2(k) => parity::c2(k, seed, b),
        BlockKnobs::E1(k) => witness::e1(k, seed, b),
        BlockKnobs::F1(k) => catalog::f1(k, seed, b),
        BlockKnobs::F2(k) => catalog::f2(k, seed, b),
        BlockKnobs::F3(k) => missing::f3(k, seed, b),
        BlockKnobs::S1(k) => witness::s1(k, seed, b),
        BlockKnobs::S2(k) => perf::s2(k, seed, b),
    };
    if let Err(e) = outcome {
        bundle.push(CaseRecord::new(format!("{}/setup", spec.block)).run(|_| {
            Ok(CaseStatus::Fail {
                reason: format!("error: {e}"),
            })
        }));
    }
    Ok(bundle)
}

fn synth(n_rows: usize, n_treatments: usize, p_miss: f64, families: Vec<FeatureFamily>, seed: u64) -> SynthSpec {
    SynthSpec {
        n_rows,
        n_treatments,
        p_miss,
        seed,
        feature_families: families,
        ..SynthSpec::default()
    }
}

fn uniform_bounds(names: &[String], n_bins: usize) -> policykit::Result<Vec<Boundaries>> {
    names
        .iter()
        .map(|f| Boundaries::uniform(f.clone(), n_bins, 0.0, 1.0))
        .collect()
}

/// Generic continuous features plus a random forest over them.
fn scoring_fixture(
    n_rows: usize,
    n_features: usize,
    n_treatments: usize,
    n_trees: usize,
    depth: usize,
    p_miss: f64,
    seed: u64,
) -> policykit::Result<(ColumnFrame, ForestArrays)> {
    let spec = synth(
        n_rows,
        n_treatments,
        p_miss,
        vec![FeatureFamily::Generic(n_features)],
        seed,
    );
    let frame = generate(&spec)?;
    let forest = random_forest(&RandomForestSpec {
        n_trees,
        depth,
        n_features,
        n_treatments,
        seed,
        feature_names: Some(frame.feature_names()),
        treatment_labels: Some(spec.treatment_labels()),
        ..RandomForestSpec::default()
    });
    Ok((frame, forest))
}

fn perturb(data: &PartitionedFrame, kind: PerturbationKind) -> policykit::Result<PartitionedFrame> {
    data.apply_perturbation(&PerturbationSpec {
        kind,
        applied_before_lock: false,
    })
}

fn witness(
    data: &PartitionedFrame,
    manifest: &Manifest,
    path: ExecutionPath,
    holdout: &ColumnFrame,
) -> policykit::Result<Witness> {
    Witness::evaluate(&train(data, manifest, path)?, holdout)
}

fn short(digest: &str) -> String {
    digest.chars().take(12).collect()
}

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}
