//! Witness policy trees: locked manifests, deterministic breadth-first
//! training, canonical signatures and holdout metrics.

mod manifest;
mod metrics;
mod signature;
mod tree;

pub use manifest::{Manifest, TrainingConfig};
pub use metrics::{
    auuc_qini, policy_value, uplift_proxy, witness_compare, HoldoutMetrics, PolicyValue, UpliftMetrics, Witness,
    WitnessReport,
};
pub use signature::{signature, TreeSignature, SIGNATURE_FORMAT_VERSION};
pub use tree::{assign, top_treatment, train, Assignments, LeafNode, PolicyNode, PolicyTree, SplitNode};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{ColumnFrame, FeatureColumn, LabelColumn, PartitionedFrame};
    use crate::split::{Boundaries, ExecutionPath};
    use crate::synth::{generate, FeatureFamily, SynthSpec};

    fn planted(n: usize) -> ColumnFrame {
        generate(&SynthSpec {
            n_rows: n,
            n_treatments: 3,
            feature_families: vec![FeatureFamily::XBoundary, FeatureFamily::Generic(2)],
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn locked(frame: &ColumnFrame, depth: usize) -> Manifest {
        let boundaries = frame
            .feature_names()
            .iter()
            .map(|f| Boundaries::uniform(f.clone(), 32, 0.0, 1.0).unwrap())
            .collect();
        let vocab = vec!["control".to_string(), "t1".into(), "t2".into()];
        let training = TrainingConfig {
            max_depth: depth,
            min_leaf_size: 20,
        };
        Manifest::new(frame, boundaries, vocab, None, 7, training)
            .unwrap()
            .lock()
    }

    #[test]
    fn depth_zero_is_global_rates() {
        let frame = planted(600);
        let tree = train(
            &PartitionedFrame::single(frame.clone()),
            &locked(&frame, 0),
            ExecutionPath::default(),
        )
        .unwrap();
        let PolicyNode::Leaf(leaf) = &tree.root else {
            panic!("expected a leaf")
        };
        assert_eq!(leaf.path, "");
        for (k, label) in ["control", "t1", "t2"].iter().enumerate() {
            let rows: Vec<usize> = (0..frame.n_rows())
                .filter(|&i| frame.treatment().label(i) == *label)
                .collect();
            let acc: u64 = rows.iter().map(|&i| u64::from(frame.outcome()[i])).sum();
            assert_eq!(leaf.policy[k], acc as f64 / rows.len() as f64);
        }
        let a = assign(&tree, &frame).unwrap();
        assert!(a.leaf_path.iter().all(|p| p.is_empty()));
        assert!((0..a.len()).all(|i| a.policy_row(i) == leaf.policy.as_slice()));
    }

    #[test]
    fn unlocked_or_foreign_frames_are_rejected() {
        let frame = planted(300);
        let m = locked(&frame, 1);
        let other = planted(301);
        assert!(matches!(
            train(&PartitionedFrame::single(other), &m, ExecutionPath::default()),
            Err(crate::Error::ContractViolation(_))
        ));
        let boundaries = vec![Boundaries::uniform("x_boundary", 32, 0.0, 1.0).unwrap()];
        let unlocked = Manifest::new(
            &frame,
            boundaries,
            vec!["control".into(), "t1".into(), "t2".into()],
            None,
            7,
            TrainingConfig::default(),
        )
        .unwrap();
        assert!(matches!(
            train(&PartitionedFrame::single(frame), &unlocked, ExecutionPath::default()),
            Err(crate::Error::ContractViolation(_))
        ));
    }

    #[test]
    fn signature_is_byte_deterministic() {
        let frame = planted(2000);
        let m = locked(&frame, 2);
        let pf = PartitionedFrame::single(frame);
        let a = train(&pf, &m, ExecutionPath::default()).unwrap();
        let b = train(&pf, &m, ExecutionPath::default()).unwrap();
        assert_eq!(signature(&a), signature(&b));
        let mut nudged = a.clone();
        fn first_leaf(n: &mut PolicyNode) -> &mut LeafNode {
            match n {
                PolicyNode::Leaf(l) => l,
                PolicyNode::Split(s) => first_leaf(&mut s.left),
            }
        }
        first_leaf(&mut nudged.root).policy[0] += 1e-12;
        assert_ne!(signature(&a).digest, signature(&nudged).digest);
        let sig = signature(&a);
        assert_eq!(TreeSignature::from_text(&sig.text).unwrap(), sig);
        assert!(TreeSignature::from_text("policykit-tree-signature 9\n").is_err());
    }

    #[test]
    fn top_treatment_prefers_lowest_index() {
        assert_eq!(top_treatment(&[0.25, 0.25, 0.25]), 0);
        assert_eq!(top_treatment(&[0.1, 0.3, 0.3]), 1);
    }

    fn tiny(labels: &[&str], outcome: Vec<u8>) -> ColumnFrame {
        let n = labels.len();
        ColumnFrame::new(
            (0..n as u64).collect(),
            vec![FeatureColumn::from_values("x", vec![0.0; n])],
            LabelColumn::from_labels(labels.iter().copied()),
            outcome,
        )
        .unwrap()
    }

    fn always(top: usize, n: usize) -> Assignments {
        Assignments {
            row_ids: (0..n as u64).collect(),
            width: 2,
            policy: vec![0.0; 2 * n],
            top_treatment: vec![top; n],
            leaf_path: vec![String::new(); n],
        }
    }

    #[test]
    fn policy_value_examples() {
        let treatments = vec!["A".to_string(), "B".to_string()];
        let frame = tiny(&["A", "B", "A", "B"], vec![1, 0, 1, 1]);
        assert_eq!(policy_value(&always(0, 4), &treatments, &frame).unwrap().value, 1.0);
        let frame = tiny(&["A", "A", "A", "A", "B"], vec![1, 0, 1, 0, 1]);
        assert_eq!(policy_value(&always(0, 5), &treatments, &frame).unwrap().value, 0.5);
        let frame = tiny(&["B", "B"], vec![1, 1]);
        let v = policy_value(&always(0, 2), &treatments, &frame).unwrap();
        assert_eq!((v.value, v.empty_match), (0.0, true));
    }

    #[test]
    fn auuc_degenerate_cases() {
        let ids: Vec<u64> = (0..6).collect();
        let control = [true, false, true, false, true, false];
        let m = auuc_qini(&ids, &[0.3, 0.1, 0.2, 0.5, 0.4, 0.0], &control, &[0; 6]).unwrap();
        assert_eq!((m.auuc, m.qini), (0.0, 0.0));
        let m = auuc_qini(&ids, &[0.7; 6], &control, &[1, 1, 0, 1, 0, 0]).unwrap();
        assert!(m.qini.abs() <= 1e-12);
        assert!(auuc_qini(&ids, &[0.0; 6], &[false; 6], &[0; 6]).is_err());
    }

    #[test]
    fn auuc_eight_row_hand_case() {
        // k:     1  2  3  4  5    6  7    8
        // g(k):  0  2  3  2  5/6  2  7/6  2
        let ids: Vec<u64> = (1..=8).collect();
        let proxy = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];
        let control = [false, true, false, true, false, true, false, true];
        let outcome = [1, 0, 1, 1, 0, 0, 0, 0];
        let m = auuc_qini(&ids, &proxy, &control, &outcome).unwrap();
        assert!((m.auuc - 0.1875).abs() < 1e-12, "{m:?}");
        assert!((m.qini - 0.0625).abs() < 1e-12, "{m:?}");
    }

    #[test]
    fn witness_against_itself() {
        let frame = planted(1500);
        let m = locked(&frame, 2);
        let tree = train(&PartitionedFrame::single(frame.clone()), &m, ExecutionPath::default()).unwrap();
        let w = Witness::evaluate(&tree, &frame).unwrap();
        let r = witness_compare(&w, &w).unwrap();
        assert!(r.preserved());
        assert_eq!(r.top_assignment_agreement, 1.0);
        assert_eq!(r.max_vector_delta, 0.0);
    }
}
