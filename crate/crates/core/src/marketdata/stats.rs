use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column set of the descriptive-statistics tables.
///
/// `skewness` and `excess_kurtosis` are moment ratios (`m3/m2^1.5`,
/// `m4/m2^2 - 3`) and are `None` for a constant series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub mean: f64,
    pub st_dev: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub median: f64,
    pub minimum: f64,
    pub maximum: f64,
}

pub fn descriptive_stats(x: &[f64]) -> Result<StatsSummary> {
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "descriptive statistics need at least 2 values, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let st_dev = (m2 / (n - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };

    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };

    Ok(StatsSummary {
        mean,
        st_dev,
        skewness,
        excess_kurtosis,
        median,
        minimum: sorted[0],
        maximum: sorted[sorted.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn one_two_three() {
        let s = descriptive_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median, 2.0);
        assert_eq!(s.minimum, 1.0);
        assert_eq!(s.maximum, 3.0);
        assert_eq!(s.st_dev, 1.0);
        assert_eq!(s.skewness, Some(0.0));
    }

    #[test]
    fn constant_series_has_no_shape_moments() {
        let s = descriptive_stats(&[0.5; 4]).unwrap();
        assert_eq!(s.st_dev, 0.0);
        assert_eq!(s.skewness, None);
        assert_eq!(s.excess_kurtosis, None);
    }

    #[test]
    fn too_short() {
        assert!(descriptive_stats(&[1.0]).is_err());
    }

    #[test]
    fn normal_excess_kurtosis_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        let s = descriptive_stats(&x).unwrap();
        assert!(s.excess_kurtosis.unwrap().abs() < 0.05, "{:?}", s);
    }

    #[test]
    fn uniform_excess_kurtosis_is_minus_six_fifths() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let s = descriptive_stats(&x).unwrap();
        assert!((s.excess_kurtosis.unwrap() + 1.2).abs() < 0.05, "{:?}", s);
    }

    proptest! {
        #[test]
        fn order_free_fields_ignore_shuffling(
            x in prop::collection::vec(-100.0f64..100.0, 2..60),
            seed in any::<u64>(),
        ) {
            let mut y = x.clone();
            y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = descriptive_stats(&x).unwrap();
            let b = descriptive_stats(&y).unwrap();
            let close = |p: f64, q: f64| (p - q).abs() <= 1e-9 * (1.0 + p.abs());
            prop_assert!(close(a.mean, b.mean));
            prop_assert!(close(a.st_dev, b.st_dev));
            prop_assert_eq!(a.median, b.median);
            prop_assert_eq!(a.minimum, b.minimum);
            prop_assert_eq!(a.maximum, b.maximum);
            prop_assert!(a.minimum <= a.median && a.median <= a.maximum);
            if let (Some(p), Some(q)) = (a.excess_kurtosis, b.excess_kurtosis) {
                prop_assert!(close(p, q));
            }
        }
    }
}
