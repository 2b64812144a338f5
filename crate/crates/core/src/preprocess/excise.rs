//! Cycle-aligned anomaly excision.
//!
//! A cardiac cycle spans from its P onset to the next cycle's P onset (QRS
//! onset or R peak stand in when P is absent). Any cycle containing a NaN,
//! a flat run of identical raw values, or an out-of-range amplitude is
//! masked over its whole span.

use serde::{Deserialize, Serialize};

use super::CleanRecording;
use crate::delineate::FiducialSet;
use crate::ingest::EcgRecording;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyConfig {
    /// Minimum length of a run of identical raw values that counts as a dropout.
    pub flat_run_ms: f64,
    /// Amplitude threshold in standard deviations of the clean signal.
    pub amplitude_sigma: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            flat_run_ms: 50.0,
            amplitude_sigma: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcisionReport {
    /// `[start, end)` sample span of each cycle, aligned with the fiducial list.
    pub cycle_spans: Vec<(usize, usize)>,
    pub masked_cycles: Vec<usize>,
    /// Samples before the first cycle were anomalous and masked.
    pub lead_in_masked: bool,
    /// Every cycle is masked.
    pub unusable: bool,
}

impl ExcisionReport {
    pub fn is_masked(&self, cycle: usize) -> bool {
        self.masked_cycles.binary_search(&cycle).is_ok()
    }
}

/// Sample span of each cycle. The last cycle runs to the end of the recording.
pub fn cycle_spans(fiducials: &[FiducialSet], len: usize) -> Vec<(usize, usize)> {
    let starts: Vec<usize> = fiducials.iter().map(FiducialSet::cycle_start).collect();
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, starts.get(i + 1).copied().unwrap_or(len)))
        .collect()
}

/// Flags samples that are part of any anomaly.
fn anomalous_samples(clean: &CleanRecording, raw: &EcgRecording, cfg: &AnomalyConfig) -> Vec<bool> {
    let n = raw.len();
    let fs = raw.sampling_rate_hz;
    let mut bad: Vec<bool> = raw
        .validity_mask
        .iter()
        .zip(&raw.samples)
        .map(|(ok, v)| !ok || v.is_nan())
        .collect();

    let min_run = ((cfg.flat_run_ms * fs / 1000.0).round() as usize).max(2);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && !bad[end] && !bad[start] && raw.samples[end] == raw.samples[start] {
            end += 1;
        }
        if end - start >= min_run {
            bad[start..end].iter_mut().for_each(|b| *b = true);
        }
        start = end;
    }

    let sig = &clean.recording;
    let valid: Vec<f64> = sig
        .samples
        .iter()
        .zip(&sig.validity_mask)
        .filter_map(|(x, ok)| ok.then_some(*x))
        .collect();
    if valid.len() >= 2 {
        let m = crate::util::mean(&valid);
        let s = crate::util::pop_std(&valid);
        for (i, x) in sig.samples.iter().enumerate() {
            if sig.validity_mask[i] && (x - m).abs() > cfg.amplitude_sigma * s {
                bad[i] = true;
            }
        }
    }
    bad
}

/// Extends the mask of `clean` over every anomalous cycle. Never unmasks.
pub fn excise_anomalies(
    clean: &CleanRecording,
    raw: &EcgRecording,
    fiducials: &[FiducialSet],
    cfg: &AnomalyConfig,
) -> (CleanRecording, ExcisionReport) {
    let n = clean.recording.len();
    let bad = anomalous_samples(clean, raw, cfg);
    let spans = cycle_spans(fiducials, n);

    let mut out = clean.clone();
    let mask = &mut out.recording.validity_mask;
    let mut masked_cycles = Vec::new();
    for (i, &(s, e)) in spans.iter().enumerate() {
        if bad[s..e].iter().any(|b| *b) {
            masked_cycles.push(i);
            mask[s..e].iter_mut().for_each(|m| *m = false);
        }
    }
    let lead_end = spans.first().map_or(n, |s| s.0);
    let lead_in_masked = bad[..lead_end].iter().any(|b| *b);
    if lead_in_masked {
        mask[..lead_end].iter_mut().for_each(|m| *m = false);
    }
    let unusable = masked_cycles.len() == spans.len();
    (
        out,
        ExcisionReport {
            cycle_spans: spans,
            masked_cycles,
            lead_in_masked,
            unusable,
        },
    )
}
