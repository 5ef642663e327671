use policykit::frame::{AssignmentRule, PartitionedFrame};
use policykit::split::{best_split, candidate_row_count, ExecutionPath, SplitConfig, SplitInput, SplitOutcome};
use policykit::synth::{generate, FeatureFamily};

use super::{synth, uniform_bounds};
use crate::bundle::{CaseRecord, CaseStatus, ResultBundle, SummaryTable};
use crate::spec::P2Knobs;

/// Collect-less path first so the driver can be checked against it.
const ORDER: [ExecutionPath; 3] = [
    ExecutionPath::PartitionedExecutorLocal,
    ExecutionPath::RelationalWindowed,
    ExecutionPath::ReferenceDriverCollect,
];

pub(super) fn p2(k: &P2Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let mut table = SummaryTable::new(
        "Measured split scale",
        &["F", "B", "T", "candidate rows", "path", "status"],
    );
    for &f in &k.feature_counts {
        let spec = synth(k.n_rows, k.n_treatments, 0.0, vec![FeatureFamily::Generic(f)], seed);
        let data = PartitionedFrame::partition(&generate(&spec)?, k.partitions, AssignmentRule::ByRowIndexBlock)?;
        let bounds = uniform_bounds(&data.feature_names(), k.n_bins)?;
        let vocab = spec.treatment_labels();
        let rows = candidate_row_count(f as u64, k.n_bins as u64, k.n_treatments as u64)?;
        let mut baseline: Option<SplitOutcome> = None;
        for path in ORDER {
            let config = SplitConfig {
                min_leaf_size: k.min_leaf_size,
                safety_skip_threshold: k.safety_skip_threshold,
                execution_path: path,
                ..SplitConfig::default()
            };
            let case = CaseRecord::new(format!("P2/F={f}/{path}"))
                .input("n_rows", k.n_rows)
                .input("n_features", f)
                .input("n_bins", k.n_bins)
                .input("n_treatments", k.n_treatments)
                .input("execution_path", path)
                .input("safety_skip_threshold", k.safety_skip_threshold)
                .run(|c| {
                    let outcome = best_split(SplitInput::new(&data, &bounds, &vocab), &config)?;
                    c.output("candidate_rows", rows);
                    c.output("path_status", outcome.status());
                    c.output("decision", outcome.decision_string());
                    table.row(vec![
                        f.to_string(),
                        k.n_bins.to_string(),
                        k.n_treatments.to_string(),
                        rows.to_string(),
                        path.to_string(),
                        outcome.status().to_owned(),
                    ]);
                    if let SplitOutcome::SkippedTooLarge { candidate_rows } = outcome {
                        return Ok(CaseStatus::SkippedTooLarge {
                            candidate_rows,
                            threshold: k.safety_skip_threshold,
                        });
                    }
                    let status = match &baseline {
                        Some(b) => CaseStatus::check(b.decision_string() == outcome.decision_string(), || {
                            format!("{} vs collect-less {}", outcome.decision_string(), b.decision_string())
                        }),
                        None => CaseStatus::Pass,
                    };
                    baseline.get_or_insert(outcome);
                    Ok(status)
                });
            bundle.push(case);
        }
    }
    bundle.tables.push(table);
    Ok(())
}
