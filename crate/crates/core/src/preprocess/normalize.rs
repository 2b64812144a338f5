use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Z-score normalization with statistics from valid samples only.
/// Masked samples are passed through unchanged.
pub fn zscore(samples: &[f64], mask: &[bool]) -> Result<(Vec<f64>, NormStats)> {
    assert_eq!(samples.len(), mask.len());
    let valid: Vec<f64> = samples
        .iter()
        .zip(mask)
        .filter_map(|(x, ok)| ok.then_some(*x))
        .collect();
    if valid.len() < 2 {
        return Err(Error::numeric("z-score needs at least 2 valid samples"));
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    let var = valid.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || std <= 1e-12 * mean.abs() {
        return Err(Error::numeric("zero variance"));
    }
    let out = samples
        .iter()
        .zip(mask)
        .map(|(x, ok)| if *ok { (x - mean) / std } else { *x })
        .collect();
    Ok((out, NormStats { mean, std }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_two_three() {
        let (y, st) = zscore(&[1.0, 2.0, 3.0], &[true; 3]).unwrap();
        assert_eq!(st.mean, 2.0);
        assert!((st.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(y.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn constant_is_zero_variance() {
        let err = zscore(&[4.0; 10], &[true; 10]).unwrap_err();
        assert!(err.to_string().contains("zero variance"));
    }

    #[test]
    fn masked_pass_through() {
        let (y, _) = zscore(&[1.0, f64::NAN, 3.0, 5.0], &[true, false, true, true]).unwrap();
        assert!(y[1].is_nan());
    }

    proptest! {
        #[test]
        fn normalized_moments(x in prop::collection::vec(-1e3f64..1e3, 2..500)) {
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            let mask = vec![true; x.len()];
            let (y, _) = zscore(&x, &mask).unwrap();
            let n = y.len() as f64;
            let m = y.iter().sum::<f64>() / n;
            let s = (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
