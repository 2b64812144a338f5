//! Bagged CART ensembles.
//!
//! Tree `t` draws all of its randomness (bootstrap rows, per-node feature
//! subsets) from ChaCha8 stream `t` of the model seed, so every tree is
//! independent of evaluation order and thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{grow_tree, Tree, TreeParams};
use super::ModelSpec;
use crate::{Error, Result};

/// Random stream of tree `tree_index` under `seed`.
pub fn forest_tree_rng(seed: u64, tree_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index);
    rng
}

pub fn fit_forest(x: &[Vec<f64>], y: &[f64], spec: &ModelSpec) -> Result<Vec<Tree>> {
    let p = x.first().map_or(0, Vec::len);
    super::check_shape(x, y, p)?;
    let params = TreeParams::from_spec(spec, p);
    if params.max_features == 0 {
        return Err(Error::config("forest_max_features must be positive"));
    }
    let n = x.len();
    Ok((0..spec.forest_n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = forest_tree_rng(spec.seed, t);
            let idx: Vec<usize> = if spec.forest_bootstrap {
                let mut v: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                v.sort_unstable();
                v
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, idx, &params, Some(&mut rng))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_data;
    use super::super::{fit, fit_tree, ModelKind, ModelParams};
    use super::*;

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let (_, x, y) = random_data(70, 4, 11);
        let spec = ModelSpec {
            kind: ModelKind::Forest,
            forest_n_trees: 1,
            forest_bootstrap: false,
            forest_max_features: 4,
            tree_min_leaf: 1,
            tree_max_depth: Some(6),
            seed: 99,
            ..ModelSpec::default()
        };
        let forest = fit_forest(&x, &y, &spec).unwrap();
        let tree = fit_tree(
            &x,
            &y,
            &TreeParams {
                max_depth: Some(6),
                min_leaf: 1,
                max_features: 4,
            },
        )
        .unwrap();
        assert_eq!(forest, vec![tree]);
    }

    #[test]
    fn seed_determines_forest_regardless_of_threads() {
        let (cols, x, y) = random_data(120, 5, 12);
        let spec = ModelSpec {
            forest_n_trees: 24,
            forest_max_features: 2,
            seed: 8,
            ..ModelSpec::default()
        };
        let a = fit(&spec, &cols, &x, &y).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| fit(&spec, &cols, &x, &y).unwrap());
        assert_eq!(
            crate::util::to_json_bytes(&a).unwrap(),
            crate::util::to_json_bytes(&b).unwrap()
        );
        let c = fit(&ModelSpec { seed: 9, ..spec }, &cols, &x, &y).unwrap();
        assert_ne!(a.params, c.params);
        assert!(matches!(a.params, ModelParams::Forest { .. }));
    }

    #[test]
    fn tree_streams_differ() {
        let a: u64 = forest_tree_rng(1, 0).random();
        let b: u64 = forest_tree_rng(1, 1).random();
        assert_ne!(a, b);
    }
}
