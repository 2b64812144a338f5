//! Butterworth IIR design by bilinear transform with frequency prewarping,
//! realized as a cascade of second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    ButterworthLowpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoff_hz: f64,
    pub sampling_rate_hz: f64,
}

impl FilterSpec {
    pub fn lowpass(order: usize, cutoff_hz: f64, sampling_rate_hz: f64) -> Self {
        Self {
            kind: FilterKind::ButterworthLowpass,
            order,
            cutoff_hz,
            sampling_rate_hz,
        }
    }

    fn validate(&self) -> Result<()> {
        validate_band(self.order, self.cutoff_hz, self.sampling_rate_hz)
    }
}

fn validate_band(order: usize, cutoff_hz: f64, fs: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::config("filter order must be positive"));
    }
    if !(fs > 0.0) {
        return Err(Error::config("sampling rate must be positive"));
    }
    if !(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0 {
        return Err(Error::config(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

/// One second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
///
/// First-order sections use `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z_inv + self.a[1] * z2;
        num / den
    }

    fn scale_numerator(&mut self, k: f64) {
        for b in &mut self.b {
            *b *= k;
        }
    }

    /// Transposed direct form II, zero initial state.
    fn run(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        let (mut s1, mut s2) = (0.0, 0.0);
        for &xn in x {
            let yn = self.b[0] * xn + s1;
            s1 = self.b[1] * xn - self.a[0] * yn + s2;
            s2 = self.b[2] * xn - self.a[1] * yn;
            y.push(yn);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCascade {
    pub sections: Vec<Biquad>,
}

impl SosCascade {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sampling_rate_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sampling_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain(&self, freq_hz: f64, sampling_rate_hz: f64) -> f64 {
        self.response(freq_hz, sampling_rate_hz).norm()
    }
}

/// Prewarped analog cutoff for the bilinear transform with `s = (1 - z⁻¹)/(1 + z⁻¹)`.
fn prewarp(cutoff_hz: f64, fs: f64) -> f64 {
    (PI * cutoff_hz / fs).tan()
}

/// Damping factors of the conjugate pole pairs of an order-`n` Butterworth prototype.
fn pair_damping(n: usize) -> impl Iterator<Item = f64> {
    (0..n / 2).map(move |k| (PI * (2 * k + 1) as f64 / (2 * n) as f64).sin())
}

pub fn design_lowpass(spec: &FilterSpec) -> Result<SosCascade> {
    spec.validate()?;
    let k = prewarp(spec.cutoff_hz, spec.sampling_rate_hz);
    let k2 = k * k;
    let mut sections = Vec::with_capacity(spec.order.div_ceil(2));

    if spec.order % 2 == 1 {
        let b0 = k / (1.0 + k);
        sections.push(Biquad {
            b: [b0, b0, 0.0],
            a: [(k - 1.0) / (k + 1.0), 0.0],
        });
    }
    for zeta in pair_damping(spec.order) {
        let norm = 1.0 / (1.0 + 2.0 * zeta * k + k2);
        let b0 = k2 * norm;
        sections.push(Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - 2.0 * zeta * k + k2) * norm],
        });
    }
    // Pin each section's DC gain to exactly one.
    for s in &mut sections {
        let dc = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
        s.scale_numerator(1.0 / dc);
    }
    Ok(SosCascade { sections })
}

/// Butterworth high-pass, unit gain at Nyquist.
pub(crate) fn design_highpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<SosCascade> {
    validate_band(order, cutoff_hz, fs)?;
    let k = prewarp(cutoff_hz, fs);
    let k2 = k * k;
    let mut sections = Vec::with_capacity(order.div_ceil(2));

    if order % 2 == 1 {
        let b0 = 1.0 / (1.0 + k);
        sections.push(Biquad {
            b: [b0, -b0, 0.0],
            a: [(k - 1.0) / (k + 1.0), 0.0],
        });
    }
    for zeta in pair_damping(order) {
        let norm = 1.0 / (1.0 + 2.0 * zeta * k + k2);
        sections.push(Biquad {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - 2.0 * zeta * k + k2) * norm],
        });
    }
    for s in &mut sections {
        let nyq = (s.b[0] - s.b[1] + s.b[2]) / (1.0 - s.a[0] + s.a[1]);
        s.scale_numerator(1.0 / nyq);
    }
    Ok(SosCascade { sections })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Forward,
    #[default]
    ZeroPhase,
}

fn run_cascade(cascade: &SosCascade, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let mut next = Vec::with_capacity(x.len());
    for s in &cascade.sections {
        s.run(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Filters `samples` with zero initial state.
///
/// `ZeroPhase` runs the cascade forward, reverses, runs it again and
/// reverses back, squaring the magnitude response and cancelling phase.
pub fn apply_filter(samples: &[f64], cascade: &SosCascade, mode: FilterMode) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::data("cannot filter an empty signal"));
    }
    let forward = run_cascade(cascade, samples);
    Ok(match mode {
        FilterMode::Forward => forward,
        FilterMode::ZeroPhase => {
            let mut rev: Vec<f64> = forward.into_iter().rev().collect();
            rev = run_cascade(cascade, &rev);
            rev.reverse();
            rev
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_filter() -> SosCascade {
        design_lowpass(&FilterSpec::lowpass(3, 18.0, 100.0)).unwrap()
    }

    #[test]
    fn third_order_has_two_sections() {
        let c = paper_filter();
        assert_eq!(c.sections.len(), 2);
        assert_eq!(c.sections[0].b[2], 0.0);
    }

    #[test]
    fn gain_points() {
        let c = paper_filter();
        assert!((c.gain(0.0, 100.0) - 1.0).abs() < 1e-12);
        assert!((c.gain(18.0, 100.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        let g40 = c.gain(40.0, 100.0);
        // Analog prototype value; bilinear warping only lowers it.
        let analog = 1.0 / (1.0 + (40.0f64 / 18.0).powi(6)).sqrt();
        assert!(g40 < analog && g40 < 0.1, "{g40}");
    }

    #[test]
    fn response_matches_time_domain_on_a_sinusoid() {
        // Steady-state amplitude of a filtered 10 Hz tone equals |H(10 Hz)|.
        let c = paper_filter();
        let x: Vec<f64> = (0..4000)
            .map(|n| (2.0 * PI * 10.0 * n as f64 / 100.0).sin())
            .collect();
        let y = apply_filter(&x, &c, FilterMode::Forward).unwrap();
        // Projection onto sin/cos over whole periods; sample maxima miss the
        // crest when the tone has only 10 samples per period.
        let tail = &y[2000..];
        let w = |n: usize| 2.0 * PI * 10.0 * (n + 2000) as f64 / 100.0;
        let a: f64 = tail.iter().enumerate().map(|(n, v)| v * w(n).sin()).sum::<f64>() * 2.0 / tail.len() as f64;
        let b: f64 = tail.iter().enumerate().map(|(n, v)| v * w(n).cos()).sum::<f64>() * 2.0 / tail.len() as f64;
        let amp = a.hypot(b);
        assert!((amp - c.gain(10.0, 100.0)).abs() < 1e-3);
    }

    #[test]
    fn monotone_magnitude() {
        let c = paper_filter();
        let mut prev = f64::INFINITY;
        for i in 0..=500 {
            let g = c.gain(i as f64 * 0.1, 100.0);
            assert!(g <= prev + 1e-12);
            prev = g;
        }
    }

    #[test]
    fn cutoff_at_nyquist_rejected() {
        assert!(design_lowpass(&FilterSpec::lowpass(3, 50.0, 100.0)).is_err());
        assert!(design_lowpass(&FilterSpec::lowpass(3, 60.0, 100.0)).is_err());
        assert!(design_lowpass(&FilterSpec::lowpass(0, 10.0, 100.0)).is_err());
    }

    #[test]
    fn even_order_and_highpass() {
        let c = design_lowpass(&FilterSpec::lowpass(4, 10.0, 100.0)).unwrap();
        assert!((c.gain(10.0, 100.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        let h = design_highpass(3, 5.0, 100.0).unwrap();
        assert!(h.gain(0.0, 100.0) < 1e-12);
        assert!((h.gain(50.0, 100.0) - 1.0).abs() < 1e-12);
        assert!((h.gain(5.0, 100.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn constant_converges_and_zero_stays_zero() {
        let c = paper_filter();
        let y = apply_filter(&[3.5; 300], &c, FilterMode::Forward).unwrap();
        assert!((y[299] - 3.5).abs() < 1e-9);
        let z = apply_filter(&[0.0; 50], &c, FilterMode::ZeroPhase).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        assert!(apply_filter(&[], &c, FilterMode::Forward).is_err());
    }

    #[test]
    fn zero_phase_impulse_is_symmetric() {
        let c = paper_filter();
        let mut x = vec![0.0; 401];
        x[200] = 1.0;
        let y = apply_filter(&x, &c, FilterMode::ZeroPhase).unwrap();
        let peak = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        assert_eq!(peak, 200);
        for k in 1..60 {
            assert!((y[200 + k] - y[200 - k]).abs() < 1e-9, "lag {k}");
        }
    }

    proptest! {
        #[test]
        fn linearity(
            x in prop::collection::vec(-10.0f64..10.0, 64),
            y in prop::collection::vec(-10.0f64..10.0, 64),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            zero_phase in any::<bool>(),
        ) {
            let c = paper_filter();
            let mode = if zero_phase { FilterMode::ZeroPhase } else { FilterMode::Forward };
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = apply_filter(&mix, &c, mode).unwrap();
            let fx = apply_filter(&x, &c, mode).unwrap();
            let fy = apply_filter(&y, &c, mode).unwrap();
            let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..64 {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * scale);
            }
        }
    }
}
