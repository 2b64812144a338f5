//! Independent oracles shared by the integration test targets.
#![allow(dead_code)]

use ecgage::models::{Node, Tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_dataset(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    (x, y)
}

fn sse(y: &[f64], idx: &[usize]) -> f64 {
    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

/// Exhaustive CART: every feature, every midpoint between distinct values,
/// child errors recomputed from scratch. Nodes in preorder.
pub fn oracle_tree(x: &[Vec<f64>], y: &[f64], max_depth: usize, min_leaf: usize) -> Tree {
    fn grow(x: &[Vec<f64>], y: &[f64], idx: Vec<usize>, depth: usize, max_depth: usize, min_leaf: usize, out: &mut Vec<Node>) -> usize {
        let at = out.len();
        let value = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        out.push(Node::Leaf { value, n: idx.len() });
        if depth >= max_depth || idx.len() < 2 * min_leaf || idx.iter().all(|&i| y[i] == y[idx[0]]) {
            return at;
        }
        let parent = sse(y, &idx);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= t);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let gain = parent - sse(y, &l) - sse(y, &r);
                // Ties within float noise keep the earlier (feature, threshold).
                if best.is_none() || gain > best.unwrap().0 + 1e-12 * parent {
                    best = Some((gain, f, t));
                }
            }
        }
        let Some((gain, f, t)) = best else { return at };
        if gain <= 1e-12 * parent {
            return at;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= t);
        let left = grow(x, y, l, depth + 1, max_depth, min_leaf, out);
        let right = grow(x, y, r, depth + 1, max_depth, min_leaf, out);
        out[at] = Node::Split { feature: f, threshold: t, left, right };
        at
    }
    let mut nodes = Vec::new();
    grow(x, y, (0..x.len()).collect(), 0, max_depth, min_leaf, &mut nodes);
    Tree { nodes }
}

/// Same shape, same splits, leaf means within `tol`.
pub fn trees_match(a: &Tree, b: &Tree, tol: f64) -> bool {
    a.nodes.len() == b.nodes.len()
        && a.nodes.iter().zip(&b.nodes).all(|(p, q)| match (p, q) {
            (Node::Leaf { value: v, n }, Node::Leaf { value: w, n: m }) => n == m && (v - w).abs() <= tol,
            (
                Node::Split { feature: f, threshold: t, left: l, right: r },
                Node::Split { feature: g, threshold: u, left: l2, right: r2 },
            ) => f == g && t == u && l == l2 && r == r2,
            _ => false,
        })
}

/// Centred closed-form ridge `(XcᵀXc + λI)⁻¹ Xcᵀ yc` by Gauss-Jordan
/// elimination; returns (intercept, weights) on raw features.
pub fn closed_form_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let p = x[0].len();
    let mx: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let my = y.iter().sum::<f64>() / n;
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, &t) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += (r[i] - mx[i]) * (r[j] - mx[j]);
            }
            a[i][p] += (r[i] - mx[i]) * (t - my);
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda;
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..p {
            if r != c {
                let k = a[r][c];
                let pivot_row = a[c].clone();
                a[r].iter_mut().zip(&pivot_row).for_each(|(v, q)| *v -= k * q);
            }
        }
    }
    let w: Vec<f64> = a.iter().map(|r| r[p]).collect();
    let b = my - w.iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>();
    (b, w)
}
