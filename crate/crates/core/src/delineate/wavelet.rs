//! Undecimated (à trous) dyadic wavelet transform with the quadratic-spline
//! derivative wavelet.
//!
//! Low-pass `h = [1, 3, 3, 1] / 8`, high-pass `g = [2, -2]`, both upsampled
//! by `2^(k-1)` at level `k`. Each detail band behaves like the derivative
//! of a progressively smoothed signal, so its extrema sit on the steepest
//! slopes and its zero crossings on wave peaks.

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

/// Detail bands `W_1..W_levels`, delay-compensated so that `W_k[n]` measures
/// the slope between samples `n` and `n + 1`.
pub fn atrous_details(x: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    // Accumulated advance of the approximation, in samples.
    let mut shift = 0.0f64;
    for k in 0..levels {
        let step = 1isize << k;
        let at = |a: &[f64], i: isize| a[reflect(i, n)];

        let raw: Vec<f64> = (0..n as isize)
            .map(|i| 2.0 * (at(&approx, i + step) - at(&approx, i)))
            .collect();
        let d_shift = shift + 0.5 * step as f64;
        let lag = d_shift.floor() as isize;
        let detail = (0..n as isize).map(|i| raw[reflect(i - lag, n)]).collect();
        details.push(detail);

        approx = (0..n as isize)
            .map(|i| {
                (at(&approx, i + 2 * step)
                    + 3.0 * at(&approx, i + step)
                    + 3.0 * at(&approx, i)
                    + at(&approx, i - step))
                    / 8.0
            })
            .collect();
        shift += 0.5 * step as f64;
    }
    details
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_has_constant_detail() {
        let x: Vec<f64> = (0..64).map(|i| 0.5 * i as f64).collect();
        let d = atrous_details(&x, 4);
        for (k, band) in d.iter().enumerate() {
            let expect = 2.0 * 0.5 * (1 << k) as f64;
            for v in &band[20..40] {
                assert!((v - expect).abs() < 1e-12, "level {}", k + 1);
            }
        }
    }

    #[test]
    fn symmetric_bump_crosses_zero_at_peak() {
        let x: Vec<f64> = (0..101)
            .map(|i| (-((i as f64 - 50.0) / 4.0).powi(2) / 2.0).exp())
            .collect();
        for (k, band) in atrous_details(&x, 4).iter().enumerate() {
            // Slope between 49 and 50 is positive, between 50 and 51 negative.
            assert!(band[49] > 0.0 && band[50] < 0.0, "level {}", k + 1);
            // Remaining half-sample offset leaves the two sides mirrored.
            for j in 1..10 {
                assert!((band[50 - j] + band[49 + j]).abs() < 1e-9);
            }
        }
    }
}
