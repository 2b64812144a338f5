//! Least squares and ridge regression on standardized predictors.
//!
//! Predictors are centred and scaled with training statistics, so the
//! intercept decouples and equals the target mean. Weights come from a thin
//! SVD of the standardized matrix; singular values below
//! `max(s)·max(n, p)·ε` are treated as zero, which yields the minimum-norm
//! solution when the system is rank deficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::util::{mean, pop_std};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population std, or 1 for a constant column.
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let (mean, scale) = (0..p)
            .map(|j| {
                let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
                let s = pop_std(&col);
                (mean(&col), if s > 0.0 { s } else { 1.0 })
            })
            .unzip();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Converts standardized-space coefficients to `(intercept, weights)`
    /// acting on raw predictors.
    pub fn to_raw(&self, intercept: f64, weights: &[f64]) -> (f64, Vec<f64>) {
        let w: Vec<f64> = weights.iter().zip(&self.scale).map(|(w, s)| w / s).collect();
        let b = intercept - w.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (b, w)
    }

    /// Inverse of [`Standardization::to_raw`].
    pub fn from_raw(&self, intercept: f64, weights: &[f64]) -> (f64, Vec<f64>) {
        let b = intercept + weights.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (b, weights.iter().zip(&self.scale).map(|(w, s)| w * s).collect())
    }
}

pub(crate) fn standardized(x: &[Vec<f64>], st: &Standardization) -> DMatrix<f64> {
    let p = st.mean.len();
    DMatrix::from_fn(x.len(), p, |i, j| (x[i][j] - st.mean[j]) / st.scale[j])
}

/// `w = V·diag(s/(s²+λ))·Uᵀ·y` with small singular values dropped.
fn svd_solve(z: DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Result<Vec<f64>> {
    let (n, p) = z.shape();
    if p == 0 {
        return Ok(Vec::new());
    }
    let svd = z.svd(true, true);
    let (u, vt) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::numeric("SVD did not converge")),
    };
    let s = &svd.singular_values;
    let smax = s.iter().fold(0.0f64, |m, v| m.max(*v));
    let tol = smax * n.max(p) as f64 * f64::EPSILON;
    let uty = u.transpose() * yc;
    let mut coef = DVector::zeros(s.len());
    for i in 0..s.len() {
        if s[i] > tol {
            coef[i] = s[i] / (s[i] * s[i] + lambda) * uty[i];
        }
    }
    let w = vt.transpose() * coef;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("least-squares solution is not finite"));
    }
    Ok(w.iter().copied().collect())
}

fn fit_penalized(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<ModelParams> {
    let st = Standardization::fit(x);
    let z = standardized(x, &st);
    let ybar = mean(y);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    let weights = svd_solve(z, &yc, lambda)?;
    Ok(ModelParams::Linear {
        intercept: ybar,
        weights,
        standardization: st,
    })
}

/// Ordinary least squares with intercept. Underdetermined systems get the
/// minimum-norm solution and a warning.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], warnings: &mut Vec<String>) -> Result<ModelParams> {
    let p = x.first().map_or(0, Vec::len);
    if x.len() < p + 1 {
        warnings.push(format!(
            "{} rows for {p} predictors plus intercept; returning the minimum-norm solution",
            x.len()
        ));
    }
    fit_penalized(x, y, 0.0)
}

/// Minimizes `‖y − Zw − b‖² + λ‖w‖²` on standardized predictors `Z`; the
/// intercept is not penalized.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<ModelParams> {
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    fit_penalized(x, y, lambda)
}

/// Runs `iterations` CGLS steps on `[1 Z; 0 √λI]·[b; w] = [y; 0]` from the
/// given start. Returns the refined `(intercept, weights)`.
pub(crate) fn cgls_refine(
    z: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    start: (f64, Vec<f64>),
    iterations: usize,
) -> (f64, Vec<f64>) {
    let (n, p) = z.shape();
    let rows = if lambda > 0.0 { n + p } else { n };
    let a = DMatrix::from_fn(rows, p + 1, |i, j| match (i < n, j) {
        (true, 0) => 1.0,
        (true, j) => z[(i, j - 1)],
        (false, 0) => 0.0,
        (false, j) => {
            if i - n == j - 1 {
                lambda.sqrt()
            } else {
                0.0
            }
        }
    });
    let b = DVector::from_fn(rows, |i, _| if i < n { y[i] } else { 0.0 });
    let mut x = DVector::from_iterator(p + 1, std::iter::once(start.0).chain(start.1));
    let mut r = &b - &a * &x;
    let mut s = a.transpose() * &r;
    let mut dir = s.clone();
    let mut gamma = s.norm_squared();
    let floor = gamma * 1e-30;
    for _ in 0..iterations {
        if gamma <= floor || gamma == 0.0 {
            break;
        }
        let q = &a * &dir;
        let qq = q.norm_squared();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.axpy(alpha, &dir, 1.0);
        r.axpy(-alpha, &q, 1.0);
        s = a.transpose() * &r;
        let g = s.norm_squared();
        dir = &s + &dir * (g / gamma);
        gamma = g;
    }
    (x[0], x.iter().skip(1).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_data;
    use super::*;

    fn weights(p: &ModelParams) -> (f64, Vec<f64>, Standardization) {
        match p {
            ModelParams::Linear {
                intercept,
                weights,
                standardization,
            } => (*intercept, weights.clone(), standardization.clone()),
            _ => unreachable!(),
        }
    }

    /// Gaussian elimination with partial pivoting.
    fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for c in (0..n).rev() {
            let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
            x[c] = (b[c] - s) / a[c][c];
        }
        x
    }

    /// `(XᵀX + λI)⁻¹Xᵀy` on independently standardized, centred data.
    fn normal_equations(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
        let n = x.len() as f64;
        let p = x[0].len();
        let mu: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..p)
            .map(|j| (x.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let z: Vec<Vec<f64>> = x.iter().map(|r| (0..p).map(|j| (r[j] - mu[j]) / sd[j]).collect()).collect();
        let ym = y.iter().sum::<f64>() / n;
        let mut ata = vec![vec![0.0; p]; p];
        let mut aty = vec![0.0; p];
        for (r, t) in z.iter().zip(y) {
            for i in 0..p {
                aty[i] += r[i] * (t - ym);
                for j in 0..p {
                    ata[i][j] += r[i] * r[j];
                }
            }
        }
        for (i, row) in ata.iter_mut().enumerate() {
            row[i] += lambda;
        }
        solve_dense(ata, aty)
    }

    fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * (1.0 + y.abs()))
    }

    #[test]
    fn ols_matches_normal_equations() {
        for seed in 0..5 {
            let (_, x, y) = random_data(60, 5, seed);
            let (b, w, _) = weights(&fit_linear(&x, &y, &mut vec![]).unwrap());
            assert!(close(&w, &normal_equations(&x, &y, 0.0), 1e-6));
            assert!((b - mean(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_matches_closed_form() {
        for seed in 0..5 {
            let (_, x, y) = random_data(25, 4, seed + 10);
            let (_, w, _) = weights(&fit_ridge(&x, &y, 1.0).unwrap());
            assert!(close(&w, &normal_equations(&x, &y, 1.0), 1e-8));
        }
    }

    #[test]
    fn exact_linear_data_is_recovered() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let p = fit_linear(&x, &y, &mut vec![]).unwrap();
        let (b, w, st) = weights(&p);
        let (b_raw, w_raw) = st.to_raw(b, &w);
        assert!((b_raw - 3.0).abs() < 1e-9 && (w_raw[0] - 2.0).abs() < 1e-9 && (w_raw[1] + 0.5).abs() < 1e-9);
        let mse: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, t)| (b + w.iter().zip(st.apply(r)).map(|(a, v)| a * v).sum::<f64>() - t).powi(2))
            .sum::<f64>()
            / 40.0;
        assert!(mse < 1e-9);
    }

    #[test]
    fn constant_column_gives_mean_intercept() {
        let x = vec![vec![4.0]; 10];
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let (b, w, _) = weights(&fit_linear(&x, &y, &mut vec![]).unwrap());
        assert_eq!(b, 4.5);
        assert_eq!(w, vec![0.0]);
    }

    #[test]
    fn underdetermined_warns_and_returns_min_norm() {
        let (_, x, y) = random_data(4, 6, 3);
        let mut warn = Vec::new();
        let (b, w, st) = weights(&fit_linear(&x, &y, &mut warn).unwrap());
        assert_eq!(warn.len(), 1);
        for (r, t) in x.iter().zip(&y) {
            let pred = b + w.iter().zip(st.apply(r)).map(|(a, v)| a * v).sum::<f64>();
            assert!((pred - t).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_limits_and_monotone_norm() {
        let (_, x, y) = random_data(50, 4, 7);
        let (_, w0, _) = weights(&fit_ridge(&x, &y, 0.0).unwrap());
        let (_, wl, _) = weights(&fit_linear(&x, &y, &mut vec![]).unwrap());
        assert!(close(&w0, &wl, 1e-8));
        let (b, wbig, _) = weights(&fit_ridge(&x, &y, 1e12).unwrap());
        assert!(wbig.iter().all(|v| v.abs() < 1e-8));
        assert_eq!(b, mean(&y));
        let norm = |l: f64| weights(&fit_ridge(&x, &y, l).unwrap()).1.iter().map(|v| v * v).sum::<f64>();
        let lambdas = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e4];
        for pair in lambdas.windows(2) {
            assert!(norm(pair[0]) >= norm(pair[1]));
        }
    }

    #[test]
    fn cgls_converges_to_ridge_solution() {
        let (_, x, y) = random_data(40, 3, 9);
        let p = fit_ridge(&x, &y, 2.0).unwrap();
        let (b, w, st) = weights(&p);
        let z = standardized(&x, &st);
        let (b2, w2) = cgls_refine(&z, &y, 2.0, (0.0, vec![0.0; 3]), 50);
        assert!((b - b2).abs() < 1e-9);
        assert!(close(&w2, &w, 1e-9));
        let (b3, w3) = cgls_refine(&z, &y, 2.0, (b, w.clone()), 5);
        assert!((b3 - b).abs() < 1e-9 && close(&w3, &w, 1e-9));
    }

    #[test]
    fn raw_conversion_round_trips() {
        let (_, x, _) = random_data(20, 3, 1);
        let st = Standardization::fit(&x);
        let (b, w) = st.to_raw(1.5, &[0.3, -2.0, 4.0]);
        let (b2, w2) = st.from_raw(b, &w);
        assert!((b2 - 1.5).abs() < 1e-12);
        assert!(close(&w2, &[0.3, -2.0, 4.0], 1e-12));
    }
}
