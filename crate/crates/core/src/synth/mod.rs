//! Synthetic single-lead ECG built from five Gaussian waves per beat.
//!
//! Ground-truth fiducials come straight from the wave parameters: each
//! wave's onset and offset sit at ±2.5σ of its Gaussian, QRS onset/offset are
//! the outermost of the Q/R/S bounds, and the R peak is the R centre.

mod cohort;

pub use cohort::{make_cohort, write_cohort, AgeRule, CohortConfig, LatentSubject, SmokerRule, SyntheticCohort};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::delineate::FiducialSet;
use crate::ingest::EcgRecording;
use crate::{Error, Result};

/// Half-width of the onset/offset convention, in standard deviations.
pub const BOUNDARY_SIGMAS: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveComponent {
    /// Centre relative to the R peak.
    pub center_ms: f64,
    pub width_ms: f64,
    pub amplitude: f64,
}

impl WaveComponent {
    const fn new(center_ms: f64, width_ms: f64, amplitude: f64) -> Self {
        Self {
            center_ms,
            width_ms,
            amplitude,
        }
    }

    fn present(&self) -> bool {
        self.amplitude != 0.0
    }

    fn onset_ms(&self) -> f64 {
        self.center_ms - BOUNDARY_SIGMAS * self.width_ms
    }

    fn offset_ms(&self) -> f64 {
        self.center_ms + BOUNDARY_SIGMAS * self.width_ms
    }

    fn value(&self, dt_ms: f64) -> f64 {
        let z = (dt_ms - self.center_ms) / self.width_ms;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSet {
    pub p: WaveComponent,
    pub q: WaveComponent,
    pub r: WaveComponent,
    pub s: WaveComponent,
    pub t: WaveComponent,
}

impl Default for WaveSet {
    fn default() -> Self {
        Self {
            p: WaveComponent::new(-180.0, 20.0, 0.15),
            q: WaveComponent::new(-30.0, 8.0, -0.12),
            r: WaveComponent::new(0.0, 10.0, 1.0),
            s: WaveComponent::new(30.0, 8.0, -0.25),
            t: WaveComponent::new(260.0, 36.0, 0.35),
        }
    }
}

impl WaveSet {
    fn all(&self) -> [&WaveComponent; 5] {
        [&self.p, &self.q, &self.r, &self.s, &self.t]
    }

    fn qrs(&self) -> impl Iterator<Item = &WaveComponent> {
        [&self.q, &self.r, &self.s].into_iter().filter(|w| w.present())
    }

    /// Span from the first onset to the last offset of the present waves.
    pub fn active_span_ms(&self) -> f64 {
        let present = self.all().into_iter().filter(|w| w.present());
        let lo = present.clone().map(WaveComponent::onset_ms).fold(f64::INFINITY, f64::min);
        let hi = present.map(WaveComponent::offset_ms).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// QT interval implied by the wave parameters.
    pub fn qt_ms(&self) -> f64 {
        let on = self.qrs().map(WaveComponent::onset_ms).fold(f64::INFINITY, f64::min);
        self.t.offset_ms() - on
    }

    fn validate(&self) -> Result<()> {
        let w = self.all();
        if w.iter().any(|c| !(c.width_ms > 0.0)) {
            return Err(Error::config("wave widths must be positive"));
        }
        if !w.windows(2).all(|p| p[0].center_ms < p[1].center_ms) {
            return Err(Error::config("wave centres must be ordered P < Q < R < S < T"));
        }
        if !self.r.present() {
            return Err(Error::config("R amplitude must be non-zero"));
        }
        Ok(())
    }

    /// Waveform value at `dt_ms` from an R peak.
    pub fn value(&self, dt_ms: f64) -> f64 {
        self.all().iter().map(|w| w.value(dt_ms)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    pub amplitude: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub subject_id: String,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub mean_hr_bpm: f64,
    /// Standard deviation of the Gaussian RR jitter.
    pub rr_jitter_ms: f64,
    pub waves: WaveSet,
    pub noise_snr_db: Option<f64>,
    pub baseline_drift: Option<Drift>,
    pub dc_offset: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subject_id: "synth".into(),
            fs_hz: 100.0,
            duration_s: 60.0,
            mean_hr_bpm: 60.0,
            rr_jitter_ms: 0.0,
            waves: WaveSet::default(),
            noise_snr_db: None,
            baseline_drift: None,
            dc_offset: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if !(self.fs_hz > 0.0) || !(self.duration_s > 0.0) || !(self.mean_hr_bpm > 0.0) {
            return Err(Error::config("fs, duration and heart rate must be positive"));
        }
        if self.rr_jitter_ms < 0.0 {
            return Err(Error::config("RR jitter must be non-negative"));
        }
        // Narrowest wave must span a few samples.
        let narrowest = self.waves.all().iter().map(|w| w.width_ms).fold(f64::INFINITY, f64::min);
        if narrowest * self.fs_hz / 1000.0 < 0.5 {
            return Err(Error::config(format!(
                "sampling rate {} Hz too low for a {narrowest} ms wave",
                self.fs_hz
            )));
        }
        self.waves.validate()
    }
}

/// Ground truth for one beat, in samples. Fiducials falling outside the
/// recording, or belonging to an absent wave, are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthCycle {
    pub r_time_ms: f64,
    pub fiducials: FiducialSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAnnotation {
    pub cycles: Vec<SynthCycle>,
    /// Intervals between consecutive R peaks, including any beat outside the recording.
    pub rr_schedule_ms: Vec<f64>,
    /// R peak times of every rendered beat.
    pub beat_times_ms: Vec<f64>,
    pub waves: WaveSet,
    pub fs_hz: f64,
}

impl SynthAnnotation {
    pub fn fiducials(&self) -> Vec<FiducialSet> {
        self.cycles.iter().map(|c| c.fiducials).collect()
    }

    /// Re-renders the noiseless, drift-free waveform from the beat schedule.
    pub fn reconstruct(&self, n_samples: usize) -> Vec<f64> {
        render(&self.waves, &self.beat_times_ms, self.fs_hz, n_samples)
    }
}

fn render(waves: &WaveSet, beats_ms: &[f64], fs: f64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let reach_ms = waves
        .all()
        .iter()
        .map(|w| w.center_ms.abs() + 6.0 * w.width_ms)
        .fold(0.0, f64::max);
    for &r in beats_ms {
        let lo = (((r - reach_ms) * fs / 1000.0).floor().max(0.0)) as usize;
        let hi = ((((r + reach_ms) * fs / 1000.0).ceil()) as usize).min(n.saturating_sub(1));
        for (i, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let t_ms = i as f64 * 1000.0 / fs;
            *v += waves.value(t_ms - r);
        }
    }
    x
}

fn to_sample(ms: f64, fs: f64, n: usize) -> Option<usize> {
    let s = (ms * fs / 1000.0).round();
    (s >= 0.0 && (s as usize) < n).then_some(s as usize)
}

fn annotate(waves: &WaveSet, r_ms: f64, fs: f64, n: usize) -> Option<SynthCycle> {
    let at = |ms: f64| to_sample(r_ms + ms, fs, n);
    let r_peak = at(waves.r.center_ms)?;
    let wave = |w: &WaveComponent| {
        if w.present() {
            (at(w.onset_ms()), at(w.center_ms), at(w.offset_ms()))
        } else {
            (None, None, None)
        }
    };
    let (p_onset, p_peak, p_offset) = wave(&waves.p);
    let (t_onset, t_peak, t_offset) = wave(&waves.t);
    let qrs_on = waves.qrs().map(WaveComponent::onset_ms).fold(f64::INFINITY, f64::min);
    let qrs_off = waves.qrs().map(WaveComponent::offset_ms).fold(f64::NEG_INFINITY, f64::max);
    Some(SynthCycle {
        r_time_ms: r_ms,
        fiducials: FiducialSet {
            p_onset,
            p_peak,
            p_offset,
            qrs_onset: at(qrs_on),
            r_peak,
            qrs_offset: at(qrs_off),
            t_onset,
            t_peak,
            t_offset,
        },
    })
}

/// Renders a recording and its analytic annotation.
pub fn generate(config: &SynthConfig) -> Result<(EcgRecording, SynthAnnotation)> {
    config.validate()?;
    let fs = config.fs_hz;
    let n = (config.duration_s * fs).round() as usize;
    let duration_ms = config.duration_s * 1000.0;
    let mean_rr = 60_000.0 / config.mean_hr_bpm;
    let span = config.waves.active_span_ms();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, config.rr_jitter_ms.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::config(e.to_string()))?;

    // First beat half an interval in; render beats whose waves touch the recording.
    let lead_ms = -config.waves.p.onset_ms().min(0.0);
    let mut beats = Vec::new();
    let mut rr_schedule = Vec::new();
    let mut r = mean_rr / 2.0;
    loop {
        beats.push(r);
        if r - lead_ms > duration_ms {
            break;
        }
        let rr = if config.rr_jitter_ms > 0.0 {
            mean_rr + jitter.sample(&mut rng)
        } else {
            mean_rr
        };
        if rr < span {
            return Err(Error::config(format!(
                "RR of {rr:.1} ms is shorter than the {span:.1} ms active span of a beat"
            )));
        }
        rr_schedule.push(rr);
        r += rr;
    }

    let mut samples = render(&config.waves, &beats, fs, n);
    let clean_power = samples.iter().map(|v| v * v).sum::<f64>() / n as f64;

    if let Some(snr) = config.noise_snr_db {
        let sd = (clean_power / 10f64.powf(snr / 10.0)).sqrt();
        let noise = Normal::new(0.0, sd).map_err(|e| Error::config(e.to_string()))?;
        samples.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    if let Some(d) = config.baseline_drift {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        for (i, v) in samples.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *v += d.amplitude * (std::f64::consts::TAU * d.frequency_hz * t + phase).sin();
        }
    }
    if config.dc_offset != 0.0 {
        samples.iter_mut().for_each(|v| *v += config.dc_offset);
    }

    let cycles = beats
        .iter()
        .filter_map(|&r| annotate(&config.waves, r, fs, n))
        .collect();
    let recording = EcgRecording::from_samples(config.subject_id.clone(), fs, samples)?;
    Ok((
        recording,
        SynthAnnotation {
            cycles,
            rr_schedule_ms: rr_schedule,
            beat_times_ms: beats,
            waves: config.waves,
            fs_hz: fs,
        },
    ))
}

/// Writes `cycle,fiducial,sample` rows for every present fiducial.
pub fn write_annotation_csv(path: &std::path::Path, ann: &SynthAnnotation) -> Result<()> {
    crate::delineate::write_fiducials_csv(path, &ann.fiducials())
}
