//! Fine-tuning a pretrained model on a second dataset.
//!
//! Tree models are augmented: the pretrained trees are kept, `k` new trees
//! are grown on the fine-tune set, and the prediction mixes the two tree
//! means with weight `w` on the new ones. Linear models are warm-started:
//! the pretrained coefficients seed a fixed number of CGLS iterations on the
//! fine-tune set.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::linear::{cgls_refine, standardized, Standardization};
use super::{dataset_hash, fit, fit_forest, ModelKind, ModelParams, ModelSpec, TrainedModel, TreeGroup};
use crate::features::FeatureTable;
use crate::util::mix_seed;
use crate::{Error, Result};

/// Salt mixed into the model seed for trees grown during fine-tuning.
pub const FINETUNE_SEED_SALT: u64 = 0xF17E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum FinetunePolicy {
    /// `k = None` grows half as many trees as the pretrained model holds.
    ForestAugment { k: Option<usize>, w: f64 },
    WarmStart { iterations: usize },
}

impl FinetunePolicy {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Tree | ModelKind::Forest => Self::ForestAugment { k: None, w: 0.5 },
            ModelKind::Linear | ModelKind::Ridge => Self::WarmStart { iterations: 20 },
        }
    }
}

impl FromStr for FinetunePolicy {
    type Err = Error;

    /// `forest-augment[:k=K,w=W]` or `warm-start[:iters=N]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::config(format!("policy argument `{part}` is not key=value")))?;
            kv.push((k.trim(), v.trim()));
        }
        let bad = |k: &str, v: &str| Error::config(format!("bad value `{v}` for policy argument `{k}`"));
        match name {
            "forest-augment" => {
                let (mut k, mut w) = (None, 0.5);
                for (key, v) in kv {
                    match key {
                        "k" => k = Some(v.parse().map_err(|_| bad(key, v))?),
                        "w" => w = v.parse().map_err(|_| bad(key, v))?,
                        _ => return Err(Error::config(format!("unknown forest-augment argument `{key}`"))),
                    }
                }
                Ok(Self::ForestAugment { k, w })
            }
            "warm-start" => {
                let mut iterations = 20;
                for (key, v) in kv {
                    match key {
                        "iters" => iterations = v.parse().map_err(|_| bad(key, v))?,
                        _ => return Err(Error::config(format!("unknown warm-start argument `{key}`"))),
                    }
                }
                Ok(Self::WarmStart { iterations })
            }
            _ => Err(Error::config(format!(
                "unknown policy `{name}` (forest-augment or warm-start)"
            ))),
        }
    }
}

/// Which columns survived the schema intersection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaReport {
    pub kept: Vec<String>,
    pub dropped_from_pretrain: Vec<String>,
    pub dropped_from_finetune: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub model: TrainedModel,
    pub schema: SchemaReport,
}

/// Pretrains `spec` on the columns both tables share, then fine-tunes.
pub fn pretrain_finetune(
    spec: &ModelSpec,
    pretrain: &FeatureTable,
    finetune: &FeatureTable,
    policy: &FinetunePolicy,
) -> Result<FinetuneOutcome> {
    let kept: Vec<String> = pretrain
        .columns
        .iter()
        .filter(|c| finetune.columns.contains(c))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::data("pretrain and fine-tune tables share no feature column"));
    }
    let dropped = |t: &FeatureTable| t.columns.iter().filter(|c| !kept.contains(c)).cloned().collect();
    let schema = SchemaReport {
        kept: kept.clone(),
        dropped_from_pretrain: dropped(pretrain),
        dropped_from_finetune: dropped(finetune),
    };
    let pt = pretrain.select(&kept)?;
    let pretrained = fit(spec, &kept, &pt.matrix(), &pt.targets())?;
    let mut out = finetune_model(&pretrained, finetune, policy)?;
    out.schema = schema;
    Ok(out)
}

/// Fine-tunes an existing model. The fine-tune table must contain every
/// model column; extra columns are dropped and reported.
pub fn finetune_model(
    pretrained: &TrainedModel,
    finetune: &FeatureTable,
    policy: &FinetunePolicy,
) -> Result<FinetuneOutcome> {
    let cols = &pretrained.feature_columns;
    let missing: Vec<&String> = cols.iter().filter(|c| !finetune.columns.contains(c)).collect();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
        return Err(Error::data(format!("fine-tune table lacks model columns: {}", names.join(", "))));
    }
    let schema = SchemaReport {
        kept: cols.clone(),
        dropped_from_pretrain: Vec::new(),
        dropped_from_finetune: finetune.columns.iter().filter(|c| !cols.contains(c)).cloned().collect(),
    };
    let ft = finetune.select(cols)?;
    let (x, y) = (ft.matrix(), ft.targets());
    super::check_shape(&x, &y, cols.len())?;

    let spec = pretrained.spec;
    let (new_spec, params) = match (policy, &pretrained.params) {
        (FinetunePolicy::ForestAugment { k, w }, ModelParams::Forest { .. } | ModelParams::Tree { .. }) => {
            if !(0.0..=1.0).contains(w) {
                return Err(Error::config(format!("mixing weight w must lie in [0, 1], got {w}")));
            }
            let old: Vec<TreeGroup> = match &pretrained.params {
                ModelParams::Forest { groups } => groups.clone(),
                ModelParams::Tree { tree } => vec![TreeGroup {
                    weight: 1.0,
                    trees: vec![tree.clone()],
                }],
                ModelParams::Linear { .. } => unreachable!(),
            };
            let n_old: usize = old.iter().map(|g| g.trees.len()).sum();
            let k = k.unwrap_or((spec.forest_n_trees.min(n_old.max(1)) / 2).max(1));
            let grow = ModelSpec {
                kind: ModelKind::Forest,
                forest_n_trees: k,
                seed: mix_seed(spec.seed, FINETUNE_SEED_SALT),
                ..spec
            };
            let mut groups: Vec<TreeGroup> = old
                .into_iter()
                .map(|g| TreeGroup {
                    weight: g.weight * (1.0 - w),
                    trees: g.trees,
                })
                .collect();
            groups.push(TreeGroup {
                weight: *w,
                trees: fit_forest(&x, &y, &grow)?,
            });
            (
                ModelSpec {
                    kind: ModelKind::Forest,
                    ..spec
                },
                ModelParams::Forest { groups },
            )
        }
        (
            FinetunePolicy::WarmStart { iterations },
            ModelParams::Linear {
                intercept,
                weights,
                standardization,
            },
        ) => {
            let (b_raw, w_raw) = standardization.to_raw(*intercept, weights);
            let st = Standardization::fit(&x);
            let start = st.from_raw(b_raw, &w_raw);
            let lambda = if spec.kind == ModelKind::Ridge { spec.ridge_lambda } else { 0.0 };
            let z = standardized(&x, &st);
            let (intercept, weights) = cgls_refine(&z, &y, lambda, start, *iterations);
            (
                spec,
                ModelParams::Linear {
                    intercept,
                    weights,
                    standardization: st,
                },
            )
        }
        (p, _) => {
            return Err(Error::config(format!(
                "policy {p:?} does not apply to a {:?} model",
                spec.kind
            )))
        }
    };
    let mut provenance = pretrained.provenance.clone();
    provenance.pretrain_dataset_hash = Some(pretrained.provenance.dataset_hash.clone());
    provenance.dataset_hash = dataset_hash(cols, &x, &y);
    provenance.n_rows = x.len();
    provenance.finetune_policy = Some(*policy);
    Ok(FinetuneOutcome {
        model: TrainedModel {
            spec: new_spec,
            params,
            provenance,
            ..pretrained.clone()
        },
        schema,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureRow;

    fn table(cols: &[&str], n: usize, seed: u64) -> FeatureTable {
        let (_, x, y) = super::super::tests::random_data(n, cols.len(), seed);
        FeatureTable {
            columns: cols.iter().map(|s| s.to_string()).collect(),
            rows: x
                .into_iter()
                .zip(y)
                .enumerate()
                .map(|(i, (predictors, age_years))| FeatureRow {
                    subject_id: format!("s{i}"),
                    segment_id: None,
                    predictors,
                    age_years,
                    smoker: false,
                })
                .collect(),
            dropped_empty: 0,
            dropped_missing: 0,
        }
    }

    fn forest_spec() -> ModelSpec {
        ModelSpec {
            forest_n_trees: 20,
            forest_max_features: 2,
            seed: 4,
            ..ModelSpec::default()
        }
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "forest-augment:k=100,w=0.25".parse::<FinetunePolicy>().unwrap(),
            FinetunePolicy::ForestAugment { k: Some(100), w: 0.25 }
        );
        assert_eq!(
            "warm-start:iters=7".parse::<FinetunePolicy>().unwrap(),
            FinetunePolicy::WarmStart { iterations: 7 }
        );
        assert!("forest-augment:z=1".parse::<FinetunePolicy>().is_err());
        assert!("boost".parse::<FinetunePolicy>().is_err());
    }

    #[test]
    fn degenerate_weights() {
        let pre = table(&["a", "b", "c"], 80, 1);
        let ft = table(&["a", "b", "c"], 60, 2);
        let pretrained = fit(&forest_spec(), &pre.columns, &pre.matrix(), &pre.targets()).unwrap();

        let w0 = finetune_model(&pretrained, &ft, &FinetunePolicy::ForestAugment { k: None, w: 0.0 }).unwrap();
        assert_eq!(w0.model.predict(&ft.matrix()).unwrap(), pretrained.predict(&ft.matrix()).unwrap());

        let w1 = finetune_model(&pretrained, &ft, &FinetunePolicy::ForestAugment { k: None, w: 1.0 }).unwrap();
        let direct = fit(
            &ModelSpec {
                forest_n_trees: 10,
                seed: mix_seed(4, FINETUNE_SEED_SALT),
                ..forest_spec()
            },
            &ft.columns,
            &ft.matrix(),
            &ft.targets(),
        )
        .unwrap();
        assert_eq!(w1.model.predict(&ft.matrix()).unwrap(), direct.predict(&ft.matrix()).unwrap());
        let prov = &w1.model.provenance;
        assert_eq!(prov.pretrain_dataset_hash.as_deref(), Some(pretrained.provenance.dataset_hash.as_str()));
        assert_ne!(prov.dataset_hash, pretrained.provenance.dataset_hash);
    }

    #[test]
    fn schema_intersection() {
        let pre = table(&["a", "b", "x"], 60, 1);
        let ft = table(&["b", "a", "y"], 40, 2);
        let out = pretrain_finetune(&forest_spec(), &pre, &ft, &FinetunePolicy::default_for(ModelKind::Forest)).unwrap();
        assert_eq!(out.schema.kept, vec!["a", "b"]);
        assert_eq!(out.schema.dropped_from_pretrain, vec!["x"]);
        assert_eq!(out.schema.dropped_from_finetune, vec!["y"]);
        assert_eq!(out.model.feature_columns, vec!["a", "b"]);
        let disjoint = table(&["q"], 40, 3);
        assert!(pretrain_finetune(&forest_spec(), &pre, &disjoint, &FinetunePolicy::default_for(ModelKind::Forest)).is_err());
    }

    #[test]
    fn warm_start_moves_toward_finetune_solution() {
        let pre = table(&["a", "b"], 80, 5);
        let mut ft = table(&["a", "b"], 80, 6);
        for r in &mut ft.rows {
            r.age_years += 3.0 * r.predictors[0];
        }
        let spec = ModelSpec::of_kind(ModelKind::Linear);
        let pretrained = fit(&spec, &pre.columns, &pre.matrix(), &pre.targets()).unwrap();
        let direct = fit(&spec, &ft.columns, &ft.matrix(), &ft.targets()).unwrap();
        let tuned = finetune_model(&pretrained, &ft, &FinetunePolicy::WarmStart { iterations: 50 }).unwrap();
        let a = tuned.model.predict(&ft.matrix()).unwrap();
        let b = direct.predict(&ft.matrix()).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-8));
        let zero = finetune_model(&pretrained, &ft, &FinetunePolicy::WarmStart { iterations: 0 }).unwrap();
        let a0 = zero.model.predict(&ft.matrix()).unwrap();
        let p0 = pretrained.predict(&ft.matrix()).unwrap();
        assert!(a0.iter().zip(&p0).all(|(p, q)| (p - q).abs() < 1e-9));
        assert!(finetune_model(&pretrained, &ft, &FinetunePolicy::ForestAugment { k: None, w: 0.5 }).is_err());
    }
}
