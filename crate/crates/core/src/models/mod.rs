//! Feature-based age regressors: ordinary least squares, ridge, CART
//! regression trees and random forests, plus grid search and fine-tuning.
//!
//! Linear models standardize predictors with training statistics; trees
//! consume raw values. A [`TrainedModel`] is plain JSON and round-trips
//! exactly.

mod finetune;
mod forest;
mod linear;
mod search;
mod tree;

pub use finetune::{finetune_model, pretrain_finetune, FinetuneOutcome, FinetunePolicy, SchemaReport};
pub use forest::{fit_forest, forest_tree_rng};
pub use linear::{fit_linear, fit_ridge, Standardization};
pub use search::{grid_search, GridFile, GridResult, GridSpec, LeaderboardEntry};
pub use tree::{fit_tree, Node, Tree, TreeParams};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::{read_json, sha256_hex, write_json};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Ridge,
    Tree,
    Forest,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "ridge" => Ok(Self::Ridge),
            "tree" => Ok(Self::Tree),
            "forest" => Ok(Self::Forest),
            _ => Err(Error::config(format!("unknown model kind `{s}` (linear, ridge, tree, forest)"))),
        }
    }
}

/// Hyperparameters. Fields not used by `kind` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub ridge_lambda: f64,
    /// `None` grows until leaves are pure or too small to split.
    pub tree_max_depth: Option<usize>,
    pub tree_min_leaf: usize,
    pub forest_n_trees: usize,
    pub forest_max_features: usize,
    pub forest_bootstrap: bool,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Forest,
            ridge_lambda: 0.0,
            tree_max_depth: None,
            tree_min_leaf: 2,
            forest_n_trees: 200,
            forest_max_features: 7,
            forest_bootstrap: true,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn of_kind(kind: ModelKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::config(format!("ridge_lambda must be >= 0, got {}", self.ridge_lambda)));
        }
        if self.tree_min_leaf == 0 {
            return Err(Error::config("tree_min_leaf must be positive"));
        }
        if self.tree_max_depth == Some(0) {
            return Err(Error::config("tree_max_depth must be positive"));
        }
        if self.kind == ModelKind::Forest && (self.forest_n_trees == 0 || self.forest_max_features == 0) {
            return Err(Error::config("forest_n_trees and forest_max_features must be positive"));
        }
        Ok(())
    }
}

/// Trees whose mean prediction enters the ensemble with `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGroup {
    pub weight: f64,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    /// Weights act on standardized predictors.
    Linear {
        intercept: f64,
        weights: Vec<f64>,
        standardization: Standardization,
    },
    Tree { tree: Tree },
    /// Prediction is `Σ weight·mean(trees)` over groups; a plain forest has one group of weight 1.
    Forest { groups: Vec<TreeGroup> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub dataset_hash: String,
    pub n_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain_dataset_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune_policy: Option<FinetunePolicy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub feature_columns: Vec<String>,
    pub params: ModelParams,
    pub provenance: TrainingProvenance,
}

/// SHA-256 over the column names and the exact bit patterns of every value.
pub fn dataset_hash(columns: &[String], x: &[Vec<f64>], y: &[f64]) -> String {
    let mut bytes = Vec::new();
    for c in columns {
        bytes.extend_from_slice(c.as_bytes());
        bytes.push(0);
    }
    for (row, t) in x.iter().zip(y) {
        for v in row.iter().chain(std::iter::once(t)) {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

pub(crate) fn check_shape(x: &[Vec<f64>], y: &[f64], n_cols: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::data(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::data("no training rows"));
    }
    if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(Error::data(format!("row {i} has {} values, expected {n_cols}", r.len())));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite value in training data"));
    }
    Ok(())
}

/// Fits the model described by `spec`.
pub fn fit(spec: &ModelSpec, columns: &[String], x: &[Vec<f64>], y: &[f64]) -> Result<TrainedModel> {
    spec.validate()?;
    check_shape(x, y, columns.len())?;
    let mut warnings = Vec::new();
    let params = match spec.kind {
        ModelKind::Linear => fit_linear(x, y, &mut warnings)?,
        ModelKind::Ridge => fit_ridge(x, y, spec.ridge_lambda)?,
        ModelKind::Tree => ModelParams::Tree {
            tree: fit_tree(x, y, &TreeParams::from_spec(spec, columns.len()))?,
        },
        ModelKind::Forest => ModelParams::Forest {
            groups: vec![TreeGroup {
                weight: 1.0,
                trees: fit_forest(x, y, spec)?,
            }],
        },
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: *spec,
        feature_columns: columns.to_vec(),
        params,
        provenance: TrainingProvenance {
            dataset_hash: dataset_hash(columns, x, y),
            n_rows: x.len(),
            pretrain_dataset_hash: None,
            finetune_policy: None,
            warnings,
        },
    })
}

impl TrainedModel {
    fn predict_one(&self, row: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear {
                intercept,
                weights,
                standardization,
            } => {
                let z = standardization.apply(row);
                intercept + weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>()
            }
            ModelParams::Tree { tree } => tree.predict(row),
            ModelParams::Forest { groups } => groups
                .iter()
                .map(|g| g.weight * g.trees.iter().map(|t| t.predict(row)).sum::<f64>() / g.trees.len() as f64)
                .sum(),
        }
    }

    /// Predicts rows whose values follow `feature_columns`.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.feature_columns.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::data(format!("row {i} has {} values, model expects {n}", r.len())));
        }
        Ok(rows.iter().map(|r| self.predict_one(r)).collect())
    }

    /// Predicts rows after checking their column names against the model.
    pub fn predict_columns(&self, columns: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns != self.feature_columns.as_slice() {
            return Err(Error::data(format!(
                "column mismatch: model expects [{}], got [{}]",
                self.feature_columns.join(","),
                columns.join(",")
            )));
        }
        self.predict(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let m: TrainedModel = read_json(path)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!(
                "{}: model format {} is not supported (expected {MODEL_FORMAT_VERSION})",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }
}
