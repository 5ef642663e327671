mod common;

use common::random_frame;
use policykit::forest::{random_forest, RandomForestSpec};
use policykit::frame::{AssignmentRule, PartitionedFrame};
use policykit::inference::{
    check_parity, compare_scores, score, BackendKind, Engine, InferenceBackend, DEFAULT_TOLERANCE,
};
use proptest::prelude::*;

fn forest(seed: u64) -> policykit::forest::ForestArrays {
    random_forest(&RandomForestSpec {
        n_trees: 6,
        depth: 4,
        n_features: 5,
        n_treatments: 3,
        seed,
        early_leaf_prob: 0.2,
        categorical_prob: 0.3,
        ..RandomForestSpec::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backends_partitions_and_batches_agree_exactly(
        seed in 0u64..10_000, n in 0usize..300, p in 1usize..9, batch in 1usize..70, hash in any::<bool>(),
    ) {
        let forest = forest(seed);
        let frame = random_frame(n, &forest.feature_names, &["a"], seed + 1);
        let reference = score(&PartitionedFrame::single(frame.clone()), &forest, InferenceBackend::new(BackendKind::VectorizedColumnar)).unwrap();
        let rule = if hash { AssignmentRule::ByRowIdHash } else { AssignmentRule::ByRowIndexBlock };
        let pf = PartitionedFrame::partition(&frame, p, rule).unwrap();
        for kind in BackendKind::ALL {
            let got = score(&pf, &forest, InferenceBackend::new(kind).with_batch_size(batch)).unwrap();
            let r = compare_scores("reference", &reference, kind.as_str(), &got, 0.0).unwrap();
            prop_assert_eq!(r.mismatch_rows, 0);
            prop_assert_eq!(r.max_abs_delta, 0.0);
            prop_assert!(r.checksum_equal);
            prop_assert_eq!(got.sorted_by_row_id(), reference.sorted_by_row_id());
        }
    }

    #[test]
    fn lazy_init_counts_partitions_not_rows(seed in 0u64..1000, n in 40usize..200, p in 1usize..8, batch in 1usize..30) {
        let forest = forest(seed);
        let frame = random_frame(n, &forest.feature_names, &["a"], seed);
        let pf = PartitionedFrame::partition(&frame, p, AssignmentRule::ByRowIndexBlock).unwrap();
        let engine = Engine::default();
        for kind in BackendKind::ALL {
            let run = engine.score(&pf, &forest, InferenceBackend::new(kind).with_batch_size(batch)).unwrap();
            let expect = if kind == BackendKind::AntiPattern { n } else { p };
            prop_assert_eq!(run.init_count, expect);
        }
    }
}

#[test]
fn self_parity_and_planted_fault() {
    let forest = forest(3);
    let frame = random_frame(500, &forest.feature_names, &["a"], 8);
    let pf = PartitionedFrame::partition(&frame, 4, AssignmentRule::ByRowIndexBlock).unwrap();
    let b = InferenceBackend::new(BackendKind::BroadcastRowwise);
    let v = InferenceBackend::new(BackendKind::VectorizedColumnar);
    let same = check_parity(&pf, &forest, b, b, DEFAULT_TOLERANCE).unwrap();
    assert_eq!((same.mismatch_rows, same.max_abs_delta), (0, 0.0));
    let cross = check_parity(&pf, &forest, b, v, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(
        (cross.mismatch_rows, cross.max_abs_delta, cross.checksum_equal),
        (0, 0.0, true)
    );

    let mut faulty = forest.clone();
    let leaf = (0..faulty.trees[0].n_nodes())
        .find(|&i| faulty.trees[0].node_type[i].is_leaf())
        .unwrap();
    faulty.trees[0].leaf_payload[leaf * 3] += 1e-6;
    let a = score(&pf, &forest, b).unwrap();
    let c = score(&pf, &faulty, v).unwrap();
    let r = compare_scores("broadcast_rowwise", &a, "faulty", &c, DEFAULT_TOLERANCE).unwrap();
    assert!(r.mismatch_rows >= 1);
    assert!(!r.checksum_equal);
}

#[test]
fn worker_count_does_not_change_results() {
    let forest = forest(5);
    let frame = random_frame(300, &forest.feature_names, &["a"], 2);
    let pf = PartitionedFrame::partition(&frame, 7, AssignmentRule::ByRowIdHash).unwrap();
    let backend = InferenceBackend::new(BackendKind::VectorizedRowmajor).with_batch_size(16);
    let one = Engine::new(Some(1)).unwrap().score(&pf, &forest, backend).unwrap();
    let three = Engine::new(Some(3)).unwrap().score(&pf, &forest, backend).unwrap();
    assert_eq!(one, three);
    assert!(Engine::new(Some(0)).is_err());
}
