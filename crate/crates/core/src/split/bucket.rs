use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interior cut points for one feature. `B = cuts.len() + 1` regular bins
/// plus the missing bin at index `B`.
///
/// Bin `i` holds values in `(cuts[i - 1], cuts[i]]`: a value equal to a cut
/// lands in the lower bin, matching the `<=` left-routing rule of the
/// forest traversal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    feature: String,
    cuts: Vec<f64>,
}

impl Boundaries {
    pub fn new(feature: impl Into<String>, cuts: Vec<f64>) -> Result<Self> {
        let feature = feature.into();
        if cuts.is_empty() {
            return Err(Error::invalid(format!("{feature}: boundaries need at least one cut")));
        }
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("{feature}: cuts must be finite")));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!("{feature}: cuts must be strictly increasing")));
        }
        Ok(Self { feature, cuts })
    }

    /// `n_bins` equal-width bins over `[lo, hi]`; cut `k` is
    /// `lo + (hi - lo) * (k / n_bins)`.
    pub fn uniform(feature: impl Into<String>, n_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if n_bins < 2 || !(lo < hi) {
            return Err(Error::invalid("uniform boundaries need n_bins >= 2 and lo < hi"));
        }
        let cuts = (1..n_bins)
            .map(|k| lo + (hi - lo) * (k as f64 / n_bins as f64))
            .collect();
        Self::new(feature, cuts)
    }

    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn missing_bin(&self) -> usize {
        self.n_bins()
    }

    pub fn n_candidates(&self) -> usize {
        self.cuts.len()
    }

    /// Bin index in `[0, B]`; missing values map to `B`.
    #[inline]
    pub fn bucketize(&self, value: Option<f64>) -> usize {
        match value {
            None => self.n_bins(),
            Some(v) if v.is_nan() => self.n_bins(),
            Some(v) => self.cuts.partition_point(|&c| c < v),
        }
    }

    /// Copy with cut `index` replaced; fails if the result is not strictly
    /// increasing.
    pub fn with_cut(&self, index: usize, value: f64) -> Result<Self> {
        let mut cuts = self.cuts.clone();
        *cuts
            .get_mut(index)
            .ok_or_else(|| Error::invalid(format!("cut index {index} out of range")))? = value;
        Self::new(self.feature.clone(), cuts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn missing_goes_to_extra_bin() {
        let b = Boundaries::new("x", vec![0.5]).unwrap();
        assert_eq!(b.bucketize(None), 2);
        assert_eq!(b.bucketize(Some(f64::NAN)), 2);
    }

    #[test]
    fn value_on_cut_lands_in_lower_bin() {
        let b = Boundaries::new("x", vec![0.5]).unwrap();
        assert_eq!(b.bucketize(Some(0.5)), 0);
        assert_eq!(b.bucketize(Some(0.5000000001)), 1);
    }

    #[test]
    fn interval_rule_by_hand() {
        let b = Boundaries::new("x", vec![0.0, 0.5]).unwrap();
        let bins: Vec<usize> = [-1.0, 0.2, 0.7].iter().map(|&v| b.bucketize(Some(v))).collect();
        assert_eq!(bins, vec![0, 1, 2]);
        assert_eq!(b.bucketize(Some(f64::INFINITY)), 2);
        assert_eq!(b.bucketize(Some(f64::NEG_INFINITY)), 0);
    }

    #[test]
    fn rejects_bad_cuts() {
        assert!(Boundaries::new("x", vec![]).is_err());
        assert!(Boundaries::new("x", vec![0.5, 0.5]).is_err());
        assert!(Boundaries::new("x", vec![f64::NAN]).is_err());
        let u = Boundaries::uniform("x", 32, 0.0, 1.0).unwrap();
        assert_eq!(u.cuts()[15], 0.5);
        assert!(u.with_cut(15, 0.4999999999).is_ok());
        assert!(u.with_cut(15, 0.4).is_err());
    }

    proptest! {
        // Bucketizing agrees with the interval definition and with the
        // forest's `value <= threshold` test at every cut.
        #[test]
        fn bucketize_matches_interval_definition(
            mut cuts in proptest::collection::vec(-100.0f64..100.0, 1..10),
            v in -120.0f64..120.0,
        ) {
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let b = Boundaries::new("x", cuts.clone()).unwrap();
            let bin = b.bucketize(Some(v));
            let lo = if bin == 0 { f64::NEG_INFINITY } else { cuts[bin - 1] };
            let hi = if bin == cuts.len() { f64::INFINITY } else { cuts[bin] };
            prop_assert!(lo < v && v <= hi);
            for (c, &cut) in cuts.iter().enumerate() {
                prop_assert_eq!(bin <= c, v <= cut);
            }
        }
    }
}
