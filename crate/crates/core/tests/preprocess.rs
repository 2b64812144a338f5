use ecgage::preprocess::{
    apply_filter, design_lowpass, median_filter, remove_baseline, window_samples, zscore,
    BaselineSpec, FilterMode, FilterSpec,
};
use ecgage::synth::{generate, SynthConfig};
use proptest::prelude::*;

const FS: f64 = 100.0;

fn ecg(seed: u64, hr: f64) -> Vec<f64> {
    let cfg = SynthConfig {
        duration_s: 30.0,
        mean_hr_bpm: hr,
        rr_jitter_ms: 30.0,
        seed,
        ..Default::default()
    };
    generate(&cfg).unwrap().0.samples
}

fn xcorr_peak_lag(a: &[f64], b: &[f64], max_lag: isize) -> isize {
    let n = a.len() as isize;
    (-max_lag..=max_lag)
        .map(|lag| {
            let s: f64 = (0..n)
                .filter(|&i| (0..n).contains(&(i + lag)))
                .map(|i| a[i as usize] * b[(i + lag) as usize])
                .sum();
            (lag, s)
        })
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
        .0
}

#[test]
fn zero_phase_filter_has_no_lag_but_forward_does() {
    let sos = design_lowpass(&FilterSpec::lowpass(3, 18.0, FS)).unwrap();
    for seed in 0..4 {
        let x = ecg(seed, 70.0);
        let zp = apply_filter(&x, &sos, FilterMode::ZeroPhase).unwrap();
        assert_eq!(xcorr_peak_lag(&x, &zp, 10), 0);
    }
    // A narrow cutoff makes the causal group delay visible at 100 Hz.
    let slow = design_lowpass(&FilterSpec::lowpass(3, 4.0, FS)).unwrap();
    let x = ecg(0, 70.0);
    let fwd = apply_filter(&x, &slow, FilterMode::Forward).unwrap();
    let zp = apply_filter(&x, &slow, FilterMode::ZeroPhase).unwrap();
    assert!(xcorr_peak_lag(&x, &fwd, 20) > 0);
    assert_eq!(xcorr_peak_lag(&x, &zp, 20), 0);
}

fn second_pass_change(seed: u64, hr: f64) -> (f64, f64) {
    let spec = BaselineSpec::default();
    let x = ecg(seed, hr);
    let once = remove_baseline(&x, &spec, FS).unwrap();
    let twice = remove_baseline(&once, &spec, FS).unwrap();
    let edge = window_samples(spec.stage2_window_ms, FS);
    let worst = (edge..once.len() - edge)
        .map(|i| (twice[i] - once[i]).abs())
        .fold(0.0, f64::max);
    (worst, pop_std(&once))
}

// Median filters are not idempotent in general: the Gaussian tails of P and
// T leave a small nonzero baseline estimate on the first output.
#[test]
#[ignore = "two-stage median is not idempotent on Gaussian-tailed waves"]
fn baseline_removal_is_idempotent_on_its_output() {
    for (seed, hr) in [(0, 60.0), (1, 75.0), (2, 90.0)] {
        let (worst, std) = second_pass_change(seed, hr);
        assert!(worst < 1e-6 * std, "seed {seed}: change {worst:e} vs std {std}");
    }
}

#[test]
fn baseline_second_pass_change_is_small() {
    for (seed, hr) in [(0, 60.0), (1, 75.0), (2, 90.0)] {
        let (worst, std) = second_pass_change(seed, hr);
        assert!(worst < 0.05 * std, "seed {seed}: change {worst:e} vs std {std}");
    }
}

fn pop_std(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn slow_drift_is_removed() {
    let clean = ecg(5, 65.0);
    // Drift amplitude equal to the R-wave amplitude.
    let amp = 1.0;
    let drift: Vec<f64> = (0..clean.len())
        .map(|i| amp * (std::f64::consts::TAU * 0.4 * i as f64 / FS + 0.7).sin())
        .collect();
    let x: Vec<f64> = clean.iter().zip(&drift).map(|(a, b)| a + b).collect();
    let spec = BaselineSpec::default();
    let out_drifted = remove_baseline(&x, &spec, FS).unwrap();
    let out_clean = remove_baseline(&clean, &spec, FS).unwrap();
    let edge = window_samples(spec.stage2_window_ms, FS);
    let resid: Vec<f64> = (edge..x.len() - edge).map(|i| out_drifted[i] - out_clean[i]).collect();
    let rms = (resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64).sqrt();
    assert!(rms < 0.1 * amp, "residual rms {rms}");
}

#[test]
fn ramp_is_flattened_in_the_interior() {
    let x: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
    let out = remove_baseline(&x, &BaselineSpec::default(), FS).unwrap();
    let range = 10.0;
    assert!(out[61..939].iter().all(|v| v.abs() < 0.05 * range));
}

fn brute_median(x: &[f64], w: usize) -> Vec<f64> {
    let h = (w / 2) as isize;
    let n = x.len() as isize;
    let reflect = |mut i: isize| {
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i as usize;
            }
        }
    };
    (0..n)
        .map(|c| {
            let mut win: Vec<f64> = (c - h..=c + h).map(|j| x[reflect(j)]).collect();
            win.sort_by(f64::total_cmp);
            win[win.len() / 2]
        })
        .collect()
}

proptest! {
    #[test]
    fn median_filter_matches_brute_force(
        x in prop::collection::vec(-5.0f64..5.0, 8..120),
        half in 0usize..4,
    ) {
        let w = 2 * half + 1;
        prop_assume!(w < x.len());
        prop_assert_eq!(median_filter(&x, w), brute_median(&x, w));
    }

    #[test]
    fn zscore_moments(
        x in prop::collection::vec(-1e3f64..1e3, 3..200),
        drop in prop::collection::vec(any::<bool>(), 3..200),
    ) {
        let mask: Vec<bool> = x.iter().enumerate().map(|(i, _)| !drop.get(i).copied().unwrap_or(false)).collect();
        let valid: Vec<f64> = x.iter().zip(&mask).filter_map(|(v, m)| m.then_some(*v)).collect();
        prop_assume!(valid.len() >= 2);
        let m = valid.iter().sum::<f64>() / valid.len() as f64;
        prop_assume!(valid.iter().any(|v| (v - m).abs() > 1e-6));
        let (z, _) = zscore(&x, &mask).unwrap();
        let zv: Vec<f64> = z.iter().zip(&mask).filter_map(|(v, m)| m.then_some(*v)).collect();
        let zm = zv.iter().sum::<f64>() / zv.len() as f64;
        let zs = (zv.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / zv.len() as f64).sqrt();
        prop_assert!(zm.abs() < 1e-9);
        prop_assert!((zs - 1.0).abs() < 1e-9);
    }
}
