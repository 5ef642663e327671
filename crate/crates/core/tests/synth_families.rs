use policykit::frame::PartitionedFrame;
use policykit::split::{best_split, build_prefix_sums, Boundaries, ExecutionPath, SplitConfig, SplitInput};
use policykit::synth::{generate, FeatureFamily, MissingEncoding, MissingFocus, SynthSpec};

fn spec(encoding: MissingEncoding) -> SynthSpec {
    SynthSpec {
        n_rows: 5000,
        n_treatments: 4,
        p_miss: 0.15,
        missing_encoding: encoding,
        missing_focus: MissingFocus::ControlArm,
        feature_families: vec![
            FeatureFamily::XMiss,
            FeatureFamily::XBoundary,
            FeatureFamily::Generic(3),
        ],
        ..SynthSpec::default()
    }
}

#[test]
fn null_and_nan_bucket_identically_but_hash_differently() {
    let a = generate(&spec(MissingEncoding::Null)).unwrap();
    let b = generate(&spec(MissingEncoding::Nan)).unwrap();
    assert_ne!(a.checksum(), b.checksum());
    let vocab = spec(MissingEncoding::Null).treatment_labels();
    let mut bounds = Vec::new();
    for name in a.feature_names() {
        let bd = Boundaries::uniform(name.clone(), 32, 0.0, 1.0).unwrap();
        let (ca, cb) = (a.feature(&name).unwrap(), b.feature(&name).unwrap());
        for i in 0..a.n_rows() {
            assert_eq!(bd.bucketize(ca.get(i)), bd.bucketize(cb.get(i)));
        }
        assert_eq!(
            build_prefix_sums(&a, &name, &bd, &vocab).unwrap(),
            build_prefix_sums(&b, &name, &bd, &vocab).unwrap()
        );
        bounds.push(bd);
    }
    let (pa, pb) = (PartitionedFrame::single(a), PartitionedFrame::single(b));
    for path in ExecutionPath::ALL {
        let config = SplitConfig {
            execution_path: path,
            ..SplitConfig::default()
        };
        assert_eq!(
            best_split(SplitInput::new(&pa, &bounds, &vocab), &config).unwrap(),
            best_split(SplitInput::new(&pb, &bounds, &vocab), &config).unwrap()
        );
    }
}

#[test]
fn boundary_family_puts_a_tenth_on_the_cut() {
    let frame = generate(&SynthSpec {
        n_rows: 20_000,
        feature_families: vec![FeatureFamily::XBoundary],
        ..SynthSpec::default()
    })
    .unwrap();
    let col = frame.feature("x_boundary").unwrap();
    let on_cut = (0..col.len()).filter(|&i| col.get(i) == Some(0.5)).count();
    assert!(on_cut as f64 >= 0.10 * col.len() as f64, "{on_cut}");
}
