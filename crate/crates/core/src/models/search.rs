//! Exhaustive hyperparameter search on a fixed train/validation split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, ModelKind, ModelSpec};
use crate::eval::mse;
use crate::{Error, Result};

/// Cartesian product of hyperparameter lists. An empty list means the
/// default value of [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub ridge_lambda: Vec<f64>,
    #[serde(default)]
    pub tree_max_depth: Vec<Option<usize>>,
    #[serde(default)]
    pub tree_min_leaf: Vec<usize>,
    #[serde(default)]
    pub forest_n_trees: Vec<usize>,
    #[serde(default)]
    pub forest_max_features: Vec<usize>,
    #[serde(default)]
    pub forest_bootstrap: Vec<bool>,
}

fn or_default<T: Clone>(v: &[T], d: T) -> Vec<T> {
    if v.is_empty() {
        vec![d]
    } else {
        v.to_vec()
    }
}

impl GridSpec {
    /// Grid points in row-major order over (lambda, depth, min_leaf,
    /// n_trees, max_features, bootstrap), all sharing `seed`.
    pub fn expand(&self, seed: u64) -> Vec<ModelSpec> {
        let d = ModelSpec::of_kind(self.kind);
        let mut out = Vec::new();
        for &ridge_lambda in &or_default(&self.ridge_lambda, d.ridge_lambda) {
            for &tree_max_depth in &or_default(&self.tree_max_depth, d.tree_max_depth) {
                for &tree_min_leaf in &or_default(&self.tree_min_leaf, d.tree_min_leaf) {
                    for &forest_n_trees in &or_default(&self.forest_n_trees, d.forest_n_trees) {
                        for &forest_max_features in &or_default(&self.forest_max_features, d.forest_max_features) {
                            for &forest_bootstrap in &or_default(&self.forest_bootstrap, d.forest_bootstrap) {
                                out.push(ModelSpec {
                                    kind: self.kind,
                                    ridge_lambda,
                                    tree_max_depth,
                                    tree_min_leaf,
                                    forest_n_trees,
                                    forest_max_features,
                                    forest_bootstrap,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// A small grid around the defaults of each model kind.
    pub fn default_for(kind: ModelKind) -> Self {
        let mut g = GridSpec {
            kind,
            ridge_lambda: vec![],
            tree_max_depth: vec![],
            tree_min_leaf: vec![],
            forest_n_trees: vec![],
            forest_max_features: vec![],
            forest_bootstrap: vec![],
        };
        match kind {
            ModelKind::Linear => {}
            ModelKind::Ridge => g.ridge_lambda = vec![0.0, 0.01, 0.1, 1.0, 10.0, 100.0],
            ModelKind::Tree => {
                g.tree_max_depth = vec![Some(4), Some(8), Some(12), None];
                g.tree_min_leaf = vec![1, 2, 5];
            }
            ModelKind::Forest => {
                g.forest_n_trees = vec![100, 200];
                g.forest_max_features = vec![5, 7, 10];
            }
        }
        g
    }
}

/// Contents of a grid file: explicit points, one product, or several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridFile {
    Points(Vec<ModelSpec>),
    Product(GridSpec),
    Products(Vec<GridSpec>),
}

impl GridFile {
    /// Grid points; explicit points keep their own seeds.
    pub fn expand(&self, seed: u64) -> Vec<ModelSpec> {
        match self {
            GridFile::Points(p) => p.clone(),
            GridFile::Product(g) => g.expand(seed),
            GridFile::Products(gs) => gs.iter().flat_map(|g| g.expand(seed)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub index: usize,
    pub spec: ModelSpec,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best: ModelSpec,
    /// One entry per grid point, in grid order.
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Fits every grid point on `train` and scores validation MSE. The lowest
/// MSE wins; ties go to the earlier point.
pub fn grid_search(
    grid: &[ModelSpec],
    columns: &[String],
    train: (&[Vec<f64>], &[f64]),
    val: (&[Vec<f64>], &[f64]),
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::config("empty hyperparameter grid"));
    }
    if val.0.is_empty() {
        return Err(Error::data("empty validation set"));
    }
    let leaderboard: Vec<LeaderboardEntry> = grid
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let m = fit(spec, columns, train.0, train.1)?;
            let pred = m.predict(val.0)?;
            Ok(LeaderboardEntry {
                index,
                spec: *spec,
                val_mse: mse(val.1, &pred)?,
            })
        })
        .collect::<Result<_>>()?;
    let best_index = leaderboard
        .iter()
        .fold(0, |b, e| if e.val_mse < leaderboard[b].val_mse { e.index } else { b });
    Ok(GridResult {
        best_index,
        best: grid[best_index],
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_data;
    use super::*;

    #[test]
    fn expansion_order_and_size() {
        let g = GridSpec {
            ridge_lambda: vec![0.0, 1.0],
            ..GridSpec::default_for(ModelKind::Ridge)
        };
        let pts = g.expand(5);
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].ridge_lambda, 1.0);
        assert!(pts.iter().all(|p| p.seed == 5));
        assert_eq!(GridSpec::default_for(ModelKind::Forest).expand(0).len(), 6);
        let f: GridFile = serde_json::from_str(r#"{"kind":"tree","tree_max_depth":[2,null]}"#).unwrap();
        assert_eq!(f.expand(0).len(), 2);
        let f: GridFile = serde_json::from_str(r#"[{"kind":"linear"},{"kind":"ridge","ridge_lambda":3}]"#).unwrap();
        assert_eq!(f.expand(0)[1].ridge_lambda, 3.0);
    }

    #[test]
    fn single_point_and_empty_grid() {
        let (cols, x, y) = random_data(60, 3, 1);
        let spec = ModelSpec::of_kind(ModelKind::Linear);
        let r = grid_search(&[spec], &cols, (&x[..40], &y[..40]), (&x[40..], &y[40..])).unwrap();
        assert_eq!((r.best_index, r.leaderboard.len()), (0, 1));
        assert!(grid_search(&[], &cols, (&x, &y), (&x, &y)).is_err());
    }

    #[test]
    fn regularization_loses_on_linear_data() {
        let (cols, x, y) = random_data(200, 4, 2);
        let grid: Vec<ModelSpec> = [1e6, 0.0]
            .iter()
            .map(|&l| ModelSpec {
                ridge_lambda: l,
                ..ModelSpec::of_kind(ModelKind::Ridge)
            })
            .collect();
        let r = grid_search(&grid, &cols, (&x[..150], &y[..150]), (&x[150..], &y[150..])).unwrap();
        assert_eq!(r.best.ridge_lambda, 0.0);
        assert_eq!(r.leaderboard.len(), 2);
    }

    #[test]
    fn ties_keep_the_earlier_point() {
        let (cols, x, y) = random_data(50, 2, 3);
        let s = ModelSpec::of_kind(ModelKind::Linear);
        let r = grid_search(&[s, s, s], &cols, (&x[..30], &y[..30]), (&x[30..], &y[30..])).unwrap();
        assert_eq!(r.best_index, 0);
    }
}
