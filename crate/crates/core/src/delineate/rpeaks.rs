//! Derivative-energy QRS detector.
//!
//! Band-limit, differentiate, square and integrate over a moving window;
//! accept local maxima of the integrated energy above a fraction of the
//! running median of recent peak energies, honour a refractory period, and
//! snap each detection to the largest excursion of the clean signal nearby.

use std::collections::VecDeque;

use super::{ms_to_samples, DelineateConfig};
use crate::preprocess::{apply_filter, design_highpass, design_lowpass, FilterMode, FilterSpec};
use crate::{Error, Result};

/// Integrated derivative energy of `x`.
pub(crate) fn qrs_energy(x: &[f64], fs: f64, cfg: &DelineateConfig) -> Result<Vec<f64>> {
    let hp = design_highpass(2, cfg.band_low_hz, fs)?;
    let lp = design_lowpass(&FilterSpec::lowpass(2, cfg.band_high_hz, fs))?;
    let band = apply_filter(&apply_filter(x, &hp, FilterMode::ZeroPhase)?, &lp, FilterMode::ZeroPhase)?;

    let n = band.len();
    let at = |i: isize| band[i.clamp(0, n as isize - 1) as usize];
    let squared: Vec<f64> = (0..n as isize)
        .map(|i| {
            let d = (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) * fs / 8.0;
            d * d
        })
        .collect();

    let w = ms_to_samples(cfg.integration_ms, fs).max(1) | 1;
    let half = w / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in &squared {
        prefix.push(prefix.last().unwrap() + v);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / w as f64
        })
        .collect())
}

fn running_median(buf: &VecDeque<f64>) -> f64 {
    let v: Vec<f64> = buf.iter().copied().collect();
    crate::util::median(&v)
}

/// Detects R peaks on a preprocessed signal.
pub fn detect_r_peaks(clean: &[f64], fs: f64, cfg: &DelineateConfig) -> Result<Vec<usize>> {
    let fewer = || Error::data("fewer than 2 peaks detected; recording unusable");
    if clean.len() < 8 {
        return Err(fewer());
    }
    let energy = qrs_energy(clean, fs, cfg)?;
    let n = energy.len();
    let refractory = ms_to_samples(cfg.refractory_ms, fs);

    // Seed the threshold history with the maxima of the first few 2 s blocks.
    let block = ms_to_samples(2000.0, fs).max(1);
    let mut history: VecDeque<f64> = energy
        .chunks(block)
        .take(cfg.threshold_history.max(1))
        .map(|c| c.iter().copied().fold(0.0, f64::max))
        .filter(|v| *v > 0.0)
        .collect();
    if history.is_empty() {
        return Err(fewer());
    }

    let mut accepted: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        let e = energy[i];
        if !(e > energy[i - 1] && e >= energy[i + 1] && e > 0.0) {
            continue;
        }
        if e < cfg.threshold_factor * running_median(&history) {
            continue;
        }
        match accepted.last().copied() {
            Some(last) if i - last < refractory => {
                if e > energy[last] {
                    *accepted.last_mut().unwrap() = i;
                    *history.back_mut().unwrap() = e;
                }
            }
            _ => {
                accepted.push(i);
                history.push_back(e);
                while history.len() > cfg.threshold_history.max(1) {
                    history.pop_front();
                }
            }
        }
    }

    let snap = ms_to_samples(cfg.snap_ms, fs);
    let mut peaks: Vec<usize> = Vec::with_capacity(accepted.len());
    for &c in &accepted {
        let lo = c.saturating_sub(snap);
        let hi = (c + snap).min(n - 1);
        let best = (lo..=hi)
            .max_by(|&a, &b| clean[a].abs().total_cmp(&clean[b].abs()).then(b.cmp(&a)))
            .unwrap();
        match peaks.last().copied() {
            Some(prev) if best <= prev || best - prev < refractory => {
                if clean[best].abs() > clean[prev].abs() && best > prev {
                    *peaks.last_mut().unwrap() = best;
                }
            }
            _ => peaks.push(best),
        }
    }

    if peaks.len() < 2 {
        return Err(fewer());
    }
    Ok(peaks)
}
