use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two-stage median baseline estimator windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub stage1_window_ms: f64,
    pub stage2_window_ms: f64,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            stage1_window_ms: 200.0,
            stage2_window_ms: 600.0,
        }
    }
}

/// Converts a window length to an odd number of samples (rounding, then
/// bumping even counts up by one).
pub fn window_samples(ms: f64, fs: f64) -> usize {
    let n = (ms * fs / 1000.0).round().max(1.0) as usize;
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Whole-sample symmetric reflection of an out-of-range index.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Running median over an odd window centred on each sample, edges reflected.
pub fn median_filter(x: &[f64], window: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "median window must be odd");
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let half = (window / 2) as isize;
    let at = |i: isize| x[reflect(i, n)];

    let mut sorted: Vec<f64> = (-half..=half).map(at).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut out = Vec::with_capacity(n);
    out.push(sorted[window / 2]);
    for c in 1..n as isize {
        let leaving = at(c - 1 - half);
        let entering = at(c + half);
        let pos = sorted.partition_point(|v| v.total_cmp(&leaving).is_lt());
        sorted.remove(pos);
        let pos = sorted.partition_point(|v| v.total_cmp(&entering).is_lt());
        sorted.insert(pos, entering);
        out.push(sorted[window / 2]);
    }
    out
}

/// Subtracts a baseline estimated by two cascaded median filters.
pub fn remove_baseline(samples: &[f64], spec: &BaselineSpec, fs: f64) -> Result<Vec<f64>> {
    let w1 = window_samples(spec.stage1_window_ms, fs);
    let w2 = window_samples(spec.stage2_window_ms, fs);
    if w1 >= w2 {
        return Err(Error::config(format!(
            "baseline stage-1 window ({w1} samples) must be shorter than stage 2 ({w2})"
        )));
    }
    if samples.len() <= w2 {
        return Err(Error::data(format!(
            "signal of {} samples is shorter than the {w2}-sample baseline window",
            samples.len()
        )));
    }
    let baseline = median_filter(&median_filter(samples, w1), w2);
    Ok(samples.iter().zip(&baseline).map(|(x, b)| x - b).collect())
}
