//! Synthetic cohorts whose age target is a known function of ECG features.
//!
//! Each subject draws a latent heart rate and QT shift. Smokers get a higher
//! rate and reduced RR variability. Age is planted as a linear function of
//! the realised QT and HR plus Gaussian noise scaled to the signal spread,
//! then rounded to whole years.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, write_annotation_csv, Drift, SynthAnnotation, SynthConfig, WaveSet};
use crate::ingest::{
    write_metadata, write_recording, DatasetManifest, EcgRecording, ManifestEntry, Sex,
    SubjectMetadata, MANIFEST_FILE,
};
use crate::util::{mean, mix_seed, pop_std, write_json};
use crate::{Error, Result};

/// `age = intercept + qt_coef·(QT − 400) + hr_coef·(HR − hr_center)` plus noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgeRule {
    pub intercept_years: f64,
    /// Years per millisecond of QT.
    pub qt_coef: f64,
    /// Years per beat per minute.
    pub hr_coef: f64,
    pub hr_center_bpm: f64,
    /// Noise standard deviation as a fraction of the planted signal's std.
    pub noise_fraction: f64,
}

impl Default for AgeRule {
    fn default() -> Self {
        Self {
            intercept_years: 45.0,
            qt_coef: 0.25,
            hr_coef: -0.5,
            hr_center_bpm: 68.0,
            noise_fraction: 0.1,
        }
    }
}

impl AgeRule {
    pub fn planted(&self, qt_ms: f64, hr_bpm: f64) -> f64 {
        self.intercept_years + self.qt_coef * (qt_ms - 400.0) + self.hr_coef * (hr_bpm - self.hr_center_bpm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmokerRule {
    pub fraction: f64,
    pub hr_increase_bpm: f64,
    /// Multiplier on the RR jitter of smokers.
    pub jitter_factor: f64,
}

impl Default for SmokerRule {
    fn default() -> Self {
        Self {
            fraction: 20.0 / 42.0,
            hr_increase_bpm: 8.0,
            jitter_factor: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub n_subjects: usize,
    pub duration_s: f64,
    pub fs_hz: f64,
    pub seed: u64,
    /// Baseline heart rate is drawn uniformly from this range.
    pub hr_range_bpm: (f64, f64),
    /// T-wave shift, and hence QT change, drawn uniformly from this range.
    pub qt_shift_range_ms: (f64, f64),
    pub rr_jitter_ms: f64,
    pub noise_snr_db: Option<f64>,
    pub baseline_drift: Option<Drift>,
    pub age_rule: AgeRule,
    pub smoker_rule: SmokerRule,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_subjects: 42,
            duration_s: 180.0,
            fs_hz: 100.0,
            seed: 42,
            hr_range_bpm: (56.0, 72.0),
            qt_shift_range_ms: (-40.0, 40.0),
            rr_jitter_ms: 25.0,
            noise_snr_db: Some(30.0),
            baseline_drift: Some(Drift {
                amplitude: 0.05,
                frequency_hz: 0.25,
            }),
            age_rule: AgeRule::default(),
            smoker_rule: SmokerRule::default(),
        }
    }
}

/// Ground truth behind one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSubject {
    pub subject_id: String,
    pub smoker: bool,
    pub hr_bpm: f64,
    pub qt_ms: f64,
    pub rr_jitter_ms: f64,
    /// Age before rounding.
    pub age_exact: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub config: CohortConfig,
    pub latent: Vec<LatentSubject>,
    pub recordings: Vec<EcgRecording>,
    pub annotations: Vec<SynthAnnotation>,
    pub metadata: Vec<SubjectMetadata>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("positive sd").sample(rng)
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn demographics(id: &str, latent: &LatentSubject, age: u32, rng: &mut ChaCha8Rng) -> SubjectMetadata {
    let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
    let height = round1(normal(rng, if sex == Sex::Male { 177.0 } else { 164.0 }, 7.0).clamp(145.0, 205.0));
    let weight = round1(normal(rng, if sex == Sex::Male { 79.0 } else { 64.0 }, 10.0).clamp(42.0, 140.0));
    let bmi = round1(weight / (height / 100.0).powi(2));
    let systolic = normal(rng, 118.0, 10.0).clamp(95.0, 160.0).round();
    let diastolic = normal(rng, 76.0, 7.0).clamp(55.0, systolic - 15.0).round();
    SubjectMetadata {
        subject_id: id.to_string(),
        age_years: age,
        sex,
        smoker: latent.smoker,
        height_cm: Some(height),
        weight_kg: Some(weight),
        bmi_kg_m2: Some(bmi),
        sleep_hours: Some(round1(normal(rng, 7.0, 0.8).clamp(4.0, 10.0))),
        systolic_mmhg: Some(systolic),
        diastolic_mmhg: Some(diastolic),
        resting_hr_bpm: Some(round1(latent.hr_bpm + normal(rng, 0.0, 2.0))),
        family_history: Some(rng.random_bool(0.3)),
    }
}

/// Draws latent parameters, renders every recording and assembles metadata.
pub fn make_cohort(config: &CohortConfig) -> Result<SyntheticCohort> {
    let n = config.n_subjects;
    if n < 2 {
        return Err(Error::config(format!("a cohort needs at least 2 subjects, got {n}")));
    }
    let width = n.to_string().len().max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_smokers = ((config.smoker_rule.fraction * n as f64).round() as usize).min(n);
    let mut smoker = vec![false; n];
    smoker[..n_smokers].iter_mut().for_each(|s| *s = true);
    smoker.shuffle(&mut rng);

    let mut latent: Vec<LatentSubject> = (0..n)
        .map(|i| {
            let base_hr = uniform(&mut rng, config.hr_range_bpm);
            let qt_shift = uniform(&mut rng, config.qt_shift_range_ms);
            let rule = &config.smoker_rule;
            let (hr, jitter) = if smoker[i] {
                (base_hr + rule.hr_increase_bpm, config.rr_jitter_ms * rule.jitter_factor)
            } else {
                (base_hr, config.rr_jitter_ms)
            };
            LatentSubject {
                subject_id: format!("S{:0width$}", i + 1),
                smoker: smoker[i],
                hr_bpm: hr,
                qt_ms: WaveSet::default().qt_ms() + qt_shift,
                rr_jitter_ms: jitter,
                age_exact: 0.0,
                seed: mix_seed(config.seed, i as u64 + 1),
            }
        })
        .collect();

    let signal: Vec<f64> = latent.iter().map(|l| config.age_rule.planted(l.qt_ms, l.hr_bpm)).collect();
    let noise_sd = config.age_rule.noise_fraction * pop_std(&signal);
    for (l, s) in latent.iter_mut().zip(&signal) {
        let e = if noise_sd > 0.0 { normal(&mut rng, 0.0, noise_sd) } else { 0.0 };
        l.age_exact = s + e;
    }
    if latent.iter().any(|l| l.age_exact < 0.5) {
        return Err(Error::config(format!(
            "age rule produces non-positive ages (mean planted age {:.1})",
            mean(&signal)
        )));
    }

    let rendered: Vec<(EcgRecording, SynthAnnotation)> = latent
        .par_iter()
        .map(|l| {
            let mut waves = WaveSet::default();
            waves.t.center_ms += l.qt_ms - waves.qt_ms();
            generate(&SynthConfig {
                subject_id: l.subject_id.clone(),
                fs_hz: config.fs_hz,
                duration_s: config.duration_s,
                mean_hr_bpm: l.hr_bpm,
                rr_jitter_ms: l.rr_jitter_ms,
                waves,
                noise_snr_db: config.noise_snr_db,
                baseline_drift: config.baseline_drift,
                dc_offset: 0.0,
                seed: l.seed,
            })
        })
        .collect::<Result<_>>()?;

    let metadata = latent
        .iter()
        .map(|l| {
            let mut r = ChaCha8Rng::seed_from_u64(mix_seed(l.seed, 0xDE40));
            demographics(&l.subject_id, l, l.age_exact.round() as u32, &mut r)
        })
        .collect();

    let (recordings, annotations) = rendered.into_iter().unzip();
    Ok(SyntheticCohort {
        config: config.clone(),
        latent,
        recordings,
        annotations,
        metadata,
    })
}

/// Writes a loadable dataset: `recordings/`, `annotations/`, `metadata.json`,
/// `manifest.json`, plus the latent truth in `latent.json`.
pub fn write_cohort(cohort: &SyntheticCohort, dir: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::with_capacity(cohort.recordings.len());
    for (rec, ann) in cohort.recordings.iter().zip(&cohort.annotations) {
        let rel = Path::new("recordings").join(format!("{}.csv", rec.subject_id));
        write_recording(&dir.join(&rel), rec)?;
        write_annotation_csv(&dir.join("annotations").join(format!("{}.csv", rec.subject_id)), ann)?;
        entries.push(ManifestEntry {
            recording: rel,
            subject_id: rec.subject_id.clone(),
        });
    }
    write_metadata(&dir.join("metadata.json"), &cohort.metadata)?;
    write_json(&dir.join("latent.json"), &cohort.latent)?;
    let manifest = DatasetManifest {
        dataset_name: "synthetic-cohort".into(),
        version: format!("seed-{}", cohort.config.seed),
        sampling_rate_hz: cohort.config.fs_hz,
        metadata: "metadata.json".into(),
        entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
