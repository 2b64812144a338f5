//! Low-pass denoising, baseline wander removal, z-score normalization and
//! anomaly excision, applied in that order.

mod baseline;
mod excise;
mod filter;
mod normalize;

pub use baseline::{median_filter, remove_baseline, window_samples, BaselineSpec};
pub use excise::{cycle_spans, excise_anomalies, AnomalyConfig, ExcisionReport};
pub use filter::{apply_filter, design_lowpass, Biquad, FilterKind, FilterMode, FilterSpec, SosCascade};
pub(crate) use filter::design_highpass;
pub use normalize::{zscore, NormStats};

use serde::{Deserialize, Serialize};

use crate::ingest::EcgRecording;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub filter_order: usize,
    pub cutoff_hz: f64,
    pub mode: FilterMode,
    pub baseline: BaselineSpec,
    pub anomaly: AnomalyConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filter_order: 3,
            cutoff_hz: 18.0,
            mode: FilterMode::ZeroPhase,
            baseline: BaselineSpec::default(),
            anomaly: AnomalyConfig::default(),
        }
    }
}

/// Processing provenance of a cleaned recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub subject_id: String,
    pub sampling_rate_hz: f64,
    pub filter: FilterSpec,
    pub mode: FilterMode,
    pub baseline: BaselineSpec,
    pub normalization: NormStats,
}

/// A denoised, detrended, z-scored recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRecording {
    pub recording: EcgRecording,
    pub filter: FilterSpec,
    pub mode: FilterMode,
    pub baseline: BaselineSpec,
    pub normalization: NormStats,
}

impl CleanRecording {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            subject_id: self.recording.subject_id.clone(),
            sampling_rate_hz: self.recording.sampling_rate_hz,
            filter: self.filter,
            mode: self.mode,
            baseline: self.baseline,
            normalization: self.normalization,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.recording.samples
    }

    pub fn fs(&self) -> f64 {
        self.recording.sampling_rate_hz
    }
}

/// Replaces masked samples by linear interpolation between valid neighbours
/// (nearest valid value at the edges), so the IIR stage never sees NaN.
fn fill_masked(samples: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let valid: Vec<usize> = (0..samples.len()).filter(|&i| mask[i]).collect();
    let (&first, &last) = match (valid.first(), valid.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::data("recording has no valid samples")),
    };
    let mut out = samples.to_vec();
    out[..first].iter_mut().for_each(|v| *v = samples[first]);
    out[last + 1..].iter_mut().for_each(|v| *v = samples[last]);
    for pair in valid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            out[i] = samples[a] + t * (samples[b] - samples[a]);
        }
    }
    Ok(out)
}

/// Low-pass → baseline removal → z-score.
///
/// The signal is offset by its first valid sample before filtering so the
/// zero-state start of the IIR pass does not produce a step transient.
pub fn preprocess(raw: &EcgRecording, cfg: &PreprocessConfig) -> Result<CleanRecording> {
    let fs = raw.sampling_rate_hz;
    let filter = FilterSpec::lowpass(cfg.filter_order, cfg.cutoff_hz, fs);
    let cascade = design_lowpass(&filter)?;

    let mut x = fill_masked(&raw.samples, &raw.validity_mask)?;
    let offset = x[raw.validity_mask.iter().position(|v| *v).unwrap_or(0)];
    x.iter_mut().for_each(|v| *v -= offset);

    let filtered = apply_filter(&x, &cascade, cfg.mode)?;
    let detrended = remove_baseline(&filtered, &cfg.baseline, fs)?;
    let (mut normalized, stats) = zscore(&detrended, &raw.validity_mask)?;
    // Interpolated stand-ins for masked samples share the valid-sample scale.
    for (i, ok) in raw.validity_mask.iter().enumerate() {
        if !ok {
            normalized[i] = (detrended[i] - stats.mean) / stats.std;
        }
    }

    Ok(CleanRecording {
        recording: EcgRecording::new(
            raw.subject_id.clone(),
            fs,
            normalized,
            raw.validity_mask.clone(),
        )?,
        filter,
        mode: cfg.mode,
        baseline: cfg.baseline,
        normalization: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_interpolates_and_holds_edges() {
        let x = [f64::NAN, 1.0, f64::NAN, 3.0, f64::NAN];
        let m = [false, true, false, true, false];
        assert_eq!(fill_masked(&x, &m).unwrap(), vec![1.0, 1.0, 2.0, 3.0, 3.0]);
        assert!(fill_masked(&[f64::NAN], &[false]).is_err());
    }
}
