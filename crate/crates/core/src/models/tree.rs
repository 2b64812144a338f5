//! CART regression trees.
//!
//! A node splits on the (feature, threshold) pair with the largest reduction
//! in summed squared error. Thresholds are midpoints between consecutive
//! distinct sorted values; rows with `x ≤ threshold` go left. Candidates are
//! scanned by ascending feature and threshold and only a gain larger by
//! more than `1e-12` of the node's squared error replaces the incumbent, so
//! ties go to the lowest feature, then the lowest threshold. A node becomes
//! a leaf predicting its target mean when no split gains more than `1e-12`
//! of the node's squared error.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::{Error, Result};

/// Relative gain below which a split is not worth making.
pub(crate) const MIN_RELATIVE_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features considered per node; at least the feature count means all.
    pub max_features: usize,
}

impl TreeParams {
    pub fn from_spec(spec: &ModelSpec, n_features: usize) -> Self {
        Self {
            max_depth: spec.tree_max_depth,
            min_leaf: spec.tree_min_leaf.max(1),
            max_features: match spec.kind {
                super::ModelKind::Forest => spec.forest_max_features,
                _ => n_features,
            },
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    n_features: usize,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let k = self.params.max_features;
        match self.rng.as_deref_mut() {
            Some(rng) if k < self.n_features => {
                let mut f = sample(rng, self.n_features, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], node_mean: f64, sse: f64) -> Option<Best> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Best> = None;
        // Equal partitions reached through different features accumulate in
        // different orders; rounding must not break the tie rule.
        let tie_tol = MIN_RELATIVE_GAIN * sse;
        let mut order = idx.to_vec();
        for f in self.candidate_features() {
            let x = self.x;
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let (mut s, mut q) = (0.0, 0.0);
            let (total_s, total_q) = order.iter().fold((0.0, 0.0), |(s, q), &i| {
                let d = self.y[i] - node_mean;
                (s + d, q + d * d)
            });
            for k in 0..n - 1 {
                let d = self.y[order[k]] - node_mean;
                s += d;
                q += d * d;
                let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
                let nl = k + 1;
                let nr = n - nl;
                if lo == hi || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let sse_l = q - s * s / nl as f64;
                let sr = total_s - s;
                let sse_r = (total_q - q) - sr * sr / nr as f64;
                let gain = sse - sse_l - sse_r;
                if best.as_ref().is_none_or(|b| gain > b.gain + tie_tol) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best.filter(|b| b.gain > MIN_RELATIVE_GAIN * sse)
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean, n });
        let first = self.y[idx[0]];
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n < 2 * self.params.min_leaf || idx.iter().all(|&i| self.y[i] == first) {
            return at;
        }
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let Some(best) = self.best_split(&idx, mean, sse) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }
}

/// Grows a tree on the rows listed in `idx` (repeats allowed).
pub(crate) fn grow_tree(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    params: &TreeParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let mut b = Builder {
        x,
        y,
        params: *params,
        n_features: x.first().map_or(0, Vec::len),
        rng,
        nodes: Vec::new(),
    };
    b.grow(idx, 0);
    Tree { nodes: b.nodes }
}

/// Deterministic CART fit over all rows.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> Result<Tree> {
    super::check_shape(x, y, x.first().map_or(0, Vec::len))?;
    if x.len() < 2 * params.min_leaf {
        return Err(Error::data(format!(
            "{} rows cannot be split with min_leaf {}",
            x.len(),
            params.min_leaf
        )));
    }
    Ok(grow_tree(x, y, (0..x.len()).collect(), params, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn params(max_depth: Option<usize>, min_leaf: usize) -> TreeParams {
        TreeParams {
            max_depth,
            min_leaf,
            max_features: usize::MAX,
        }
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t = fit_tree(&x, &[3.5; 10], &params(None, 1)).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 3.5, n: 10 }]);
    }

    #[test]
    fn step_function_splits_between_straddling_points() {
        let xs = [0.1, 0.2, 0.45, 0.7, 0.8, 0.9];
        let x: Vec<Vec<f64>> = xs.iter().map(|v| vec![*v]).collect();
        let y: Vec<f64> = xs.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect();
        let t = fit_tree(&x, &y, &params(Some(1), 1)).unwrap();
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert!((threshold - 0.575).abs() < 1e-12),
            n => panic!("{n:?}"),
        }
        assert!(x.iter().zip(&y).all(|(r, t0)| t.predict(r) == *t0));
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        // Two identical columns give identical gains.
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let t = fit_tree(&x, &y, &params(Some(1), 1)).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_and_min_leaf_are_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 10.0).sin() + r[1]).collect();
        let t = fit_tree(&x, &y, &params(Some(4), 7)).unwrap();
        assert!(t.depth() <= 4);
        assert!(t.nodes.iter().all(|n| match n {
            Node::Leaf { n, .. } => *n >= 7,
            _ => true,
        }));
        assert!(fit_tree(&x[..5], &y[..5], &params(None, 3)).is_err());
    }
}
