use std::time::Instant;

use policykit::forest::{random_forest, ForestArrays, RandomForestSpec};
use policykit::frame::{AssignmentRule, ColumnFrame, PartitionedFrame};
use policykit::inference::{compare_scores, BackendKind, Engine, InferenceBackend, Throughput};

use super::scoring_fixture;
use crate::bundle::{CaseRecord, CaseStatus, ResultBundle, SummaryTable};
use crate::spec::{P1Knobs, S2Knobs};

const PROBE_SECONDS: f64 = 0.05;

fn prefix(frame: &ColumnFrame, rows: usize) -> ColumnFrame {
    frame.take(&(0..rows.min(frame.n_rows())).collect::<Vec<_>>())
}

fn probe(
    engine: &Engine,
    frame: &ColumnFrame,
    forest: &ForestArrays,
    backend: InferenceBackend,
    rows: usize,
) -> policykit::Result<f64> {
    let data = PartitionedFrame::single(prefix(frame, rows));
    let start = Instant::now();
    engine.score(&data, forest, backend)?;
    Ok(start.elapsed().as_secs_f64())
}

/// Seconds for one full pass over `rows` rows. Probes on doubling prefixes
/// until one takes long enough to time, then extrapolates the last two as
/// fixed cost plus a per-row slope.
fn estimate_seconds(
    engine: &Engine,
    frame: &ColumnFrame,
    forest: &ForestArrays,
    backend: InferenceBackend,
    rows: usize,
) -> policykit::Result<f64> {
    let mut n = 32.min(rows).max(1);
    let mut small = probe(engine, frame, forest, backend, n)?;
    while 2 * n <= rows {
        let large = probe(engine, frame, forest, backend, 2 * n)?;
        let slope = ((large - small) / n as f64).max(0.0);
        if large >= PROBE_SECONDS || 4 * n > rows {
            let fixed = (small - slope * n as f64).max(0.0);
            return Ok(fixed + slope * rows as f64);
        }
        n *= 2;
        small = large;
    }
    Ok(small * rows as f64 / n as f64)
}

pub(super) fn p1(k: &P1Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let engine = Engine::default();
    let mut table = SummaryTable::new(
        "Throughput ladder",
        &["rows", "backend", "rows measured", "rows/s", "median wall s"],
    )
    .timed();
    for &n in &k.n_rows {
        let (frame, forest) = scoring_fixture(n, k.n_features, k.n_treatments, k.n_trees, k.depth, 0.0, seed)?;
        let case = CaseRecord::new(format!("P1/n={n}"))
            .input("n_rows", n)
            .input("n_features", k.n_features)
            .input("n_treatments", k.n_treatments)
            .input("n_trees", k.n_trees)
            .input("depth", k.depth)
            .input("partitions", k.partitions)
            .input("batch_size", k.batch_size)
            .input("repeats", k.repeats)
            .run(|c| {
                let full = PartitionedFrame::partition(&frame, k.partitions, AssignmentRule::ByRowIndexBlock)?;
                let mut runs = Vec::new();
                for kind in BackendKind::ALL {
                    let rows = if kind == BackendKind::AntiPattern {
                        n.min(k.anti_pattern_rows)
                    } else {
                        n
                    };
                    let backend = InferenceBackend::new(kind).with_batch_size(k.batch_size);
                    let estimate = estimate_seconds(&engine, &frame, &forest, backend, rows)? * (k.repeats + 1) as f64;
                    if estimate > k.case_timeout_seconds {
                        return Ok(CaseStatus::SkippedTooSlow {
                            estimated_seconds: estimate,
                            cap_seconds: k.case_timeout_seconds,
                        });
                    }
                    let head = if rows == n {
                        None
                    } else {
                        Some(PartitionedFrame::partition(
                            &prefix(&frame, rows),
                            k.partitions,
                            AssignmentRule::ByRowIndexBlock,
                        )?)
                    };
                    engine.score(head.as_ref().unwrap_or(&full), &forest, backend)?;
                    runs.push((kind, backend, head, Vec::with_capacity(k.repeats)));
                }
                // Backends take turns so drift in machine speed hits all of them.
                for _ in 0..k.repeats {
                    for (_, backend, head, samples) in &mut runs {
                        let start = Instant::now();
                        engine.score(head.as_ref().unwrap_or(&full), &forest, *backend)?;
                        samples.push(start.elapsed().as_secs_f64());
                    }
                }
                let mut rates = Vec::new();
                for (kind, _, head, samples) in runs {
                    let t = Throughput::from_samples(head.map_or(n, |h| h.n_rows()), samples);
                    c.output(&format!("{kind}.rows_measured"), t.rows);
                    c.timing(&format!("{kind}.rows_per_second"), t.rows_per_second);
                    c.timing(&format!("{kind}.wall_seconds"), t.wall_seconds);
                    table.row(vec![
                        n.to_string(),
                        kind.to_string(),
                        t.rows.to_string(),
                        format!("{:.0}", t.rows_per_second),
                        format!("{:.4}", t.wall_seconds),
                    ]);
                    rates.push(t.rows_per_second);
                }
                let [anti, rowwise, columnar, _] = rates[..] else {
                    unreachable!("four backends measured")
                };
                let vectorized = columnar / rowwise;
                let broadcast = rowwise / anti;
                c.timing("speedup.vectorized_columnar_over_broadcast_rowwise", vectorized);
                c.timing("speedup.broadcast_rowwise_over_anti_pattern", broadcast);
                Ok(CaseStatus::check(
                    vectorized >= k.min_vectorized_speedup && broadcast >= k.min_broadcast_speedup,
                    || {
                        format!(
                            "speedups {vectorized:.2}x and {broadcast:.2}x below {}x / {}x",
                            k.min_vectorized_speedup, k.min_broadcast_speedup
                        )
                    },
                ))
            });
        bundle.push(case);
    }
    bundle.tables.push(table);
    Ok(())
}

const VECTORIZED: [BackendKind; 2] = [BackendKind::VectorizedColumnar, BackendKind::VectorizedRowmajor];

pub(super) fn s2(k: &S2Knobs, seed: u64, bundle: &mut ResultBundle) -> policykit::Result<()> {
    let engine = Engine::default();
    // (batch size, columnar wins, rowmajor wins, best columnar, best rowmajor)
    let mut per_batch: Vec<(usize, usize, usize, f64, f64)> =
        k.batch_sizes.iter().map(|&b| (b, 0, 0, 0.0, 0.0)).collect();
    for &t in &k.treatments {
        let (frame, _) = scoring_fixture(k.n_rows, k.n_features, t, 1, 1, 0.0, seed)?;
        let data = PartitionedFrame::partition(&frame, k.partitions, AssignmentRule::ByRowIndexBlock)?;
        for &depth in &k.depths {
            for &trees in &k.tree_counts {
                let forest = random_forest(&RandomForestSpec {
                    n_trees: trees,
                    depth,
                    n_features: k.n_features,
                    n_treatments: t,
                    seed,
                    feature_names: Some(frame.feature_names()),
                    ..RandomForestSpec::default()
                });
                for (bi, &batch) in k.batch_sizes.iter().enumerate() {
                    let mut rates = [0.0; 2];
                    let case = CaseRecord::new(format!("S2/batch={batch}/depth={depth}/trees={trees}/T={t}"))
                        .input("batch_size", batch)
                        .input("depth", depth)
                        .input("n_trees", trees)
                        .input("n_treatments", t)
                        .input("n_rows", k.n_rows)
                        .run(|c| {
                            let backends = VECTORIZED.map(|kind| InferenceBackend::new(kind).with_batch_size(batch));
                            for (i, &backend) in backends.iter().enumerate() {
                                let estimate = estimate_seconds(&engine, &frame, &forest, backend, k.n_rows)?
                                    * (k.repeats + 2) as f64;
                                if estimate > k.case_timeout_seconds {
                                    return Ok(CaseStatus::SkippedTooSlow {
                                        estimated_seconds: estimate,
                                        cap_seconds: k.case_timeout_seconds,
                                    });
                                }
                                let tp = engine.measure_throughput(&data, &forest, backend, k.repeats)?;
                                c.timing(&format!("{}.rows_per_second", backend.kind), tp.rows_per_second);
                                rates[i] = tp.rows_per_second;
                            }
                            let a = engine.score(&data, &forest, backends[0])?.scores;
                            let b = engine.score(&data, &forest, backends[1])?.scores;
                            let parity = compare_scores(VECTORIZED[0].as_str(), &a, VECTORIZED[1].as_str(), &b, 0.0)?;
                            c.output("mismatch_rows", parity.mismatch_rows);
                            c.output("max_abs_delta", parity.max_abs_delta);
                            Ok(CaseStatus::check(
                                parity.mismatch_rows == 0 && parity.max_abs_delta == 0.0,
                                || format!("{} rows differ between vectorized layouts", parity.mismatch_rows),
                            ))
                        });
                    if !case.status.is_skipped() {
                        let row = &mut per_batch[bi];
                        if rates[0] >= rates[1] {
                            row.1 += 1;
                        } else {
                            row.2 += 1;
                        }
                        row.3 = row.3.max(rates[0]);
                        row.4 = row.4.max(rates[1]);
                    }
                    bundle.push(case);
                }
            }
        }
    }
    let mut table = SummaryTable::new(
        "Backend crossover by batch size",
        &[
            "batch size",
            "columnar wins",
            "rowmajor wins",
            "best columnar rows/s",
            "best rowmajor rows/s",
        ],
    )
    .timed();
    for (batch, cw, rw, bc, br) in per_batch {
        table.row(vec![
            batch.to_string(),
            cw.to_string(),
            rw.to_string(),
            format!("{bc:.0}"),
            format!("{br:.0}"),
        ]);
    }
    bundle.tables.push(table);
    Ok(())
}
