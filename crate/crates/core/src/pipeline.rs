//! End-to-end orchestration: per-subject analysis, feature tables, the three
//! evaluation scenarios and report rendering.
//!
//! A run directory holds everything needed to reproduce it: the resolved
//! configuration, hashes of the inputs and of every output file. Nothing in
//! a run directory depends on wall-clock time or thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delineate::{delineate_cycles, detect_r_peaks, DelineateConfig, FiducialSet};
use crate::eval::{
    complement, group_stats, holdout, kfold, mse, optional_r2, pearson_matrix, CorrelationMethod,
    CorrelationTarget, EvalReport, FoldMetrics, Grouping, SplitKind, SplitPlan,
};
use crate::features::{
    aggregate, assemble_rows, interval_features, Demographic, EcgFeatures, FeatureConfig, FeatureTable,
    ScopeAggregate, DEFAULT_DEMOGRAPHICS,
};
use crate::ingest::{Dataset, EcgRecording};
use crate::models::{
    finetune_model, fit, grid_search, FinetunePolicy, GridSpec, LeaderboardEntry, ModelKind, ModelSpec,
    TrainedModel,
};
use crate::preprocess::{excise_anomalies, preprocess, CleanRecording, ExcisionReport, PreprocessConfig};
use crate::segment::{make_segments, SegmentConfig};
use crate::util::{read_json, sha256_hex, to_json_bytes, write_bytes};
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Every tunable of a run in one document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub version: u32,
    /// Seed of every model.
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub delineate: DelineateConfig,
    pub features: FeatureConfig,
    pub demographics: Vec<Demographic>,
    pub segment: SegmentConfig,
    /// Model kinds trained in the segmented and unsegmented scenarios.
    pub models: Vec<ModelKind>,
    /// Grid overrides; kinds without one use [`GridSpec::default_for`].
    pub grids: Vec<GridSpec>,
    pub split_segmented: SplitPlan,
    pub split_unsegmented: SplitPlan,
    /// `None` picks the default policy of the pretrained model kind.
    pub finetune_policy: Option<FinetunePolicy>,
    pub correlation_method: CorrelationMethod,
    pub histogram_bin_years: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 42,
            preprocess: PreprocessConfig::default(),
            delineate: DelineateConfig::default(),
            features: FeatureConfig::default(),
            demographics: DEFAULT_DEMOGRAPHICS.to_vec(),
            segment: SegmentConfig::default(),
            models: vec![ModelKind::Linear, ModelKind::Ridge, ModelKind::Tree, ModelKind::Forest],
            grids: Vec::new(),
            split_segmented: SplitPlan {
                seed: 42,
                ..SplitPlan::default()
            },
            split_unsegmented: SplitPlan {
                kind: SplitKind::Kfold,
                k: 5,
                seed: 42,
                grouping: Grouping::ByRow,
            },
            finetune_policy: None,
            correlation_method: CorrelationMethod::Pearson,
            histogram_bin_years: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets the model seed and both split seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.split_segmented.seed = seed;
        self.split_unsegmented.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.models.is_empty() {
            return Err(Error::config("`models` is empty"));
        }
        if self.split_segmented.kind != SplitKind::Holdout {
            return Err(Error::config("`split_segmented` must be a holdout plan"));
        }
        if self.split_unsegmented.kind != SplitKind::Kfold {
            return Err(Error::config("`split_unsegmented` must be a kfold plan"));
        }
        if !(self.histogram_bin_years > 0.0) {
            return Err(Error::config("`histogram_bin_years` must be positive"));
        }
        Ok(())
    }

    pub fn grid_for(&self, kind: ModelKind) -> Vec<ModelSpec> {
        self.grids
            .iter()
            .find(|g| g.kind == kind)
            .cloned()
            .unwrap_or_else(|| GridSpec::default_for(kind))
            .expand(self.seed)
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        to_json_bytes(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Segmented,
    Unsegmented,
    Finetune,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segmented" | "S" => Ok(Self::Segmented),
            "unsegmented" | "US" => Ok(Self::Unsegmented),
            "finetune" | "US+TL" => Ok(Self::Finetune),
            _ => Err(Error::config(format!(
                "unknown scenario `{s}` (segmented, unsegmented or finetune)"
            ))),
        }
    }
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Segmented => "segmented",
            Self::Unsegmented => "unsegmented",
            Self::Finetune => "finetune",
        }
    }

    pub fn scope(self) -> FeatureScope {
        match self {
            Self::Segmented => FeatureScope::Segments,
            Self::Unsegmented | Self::Finetune => FeatureScope::Whole,
        }
    }
}

/// Whether feature rows describe whole recordings or windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScope {
    Whole,
    Segments,
}

/// Everything derived from one recording before scoping.
#[derive(Debug, Clone)]
pub struct SubjectAnalysis {
    /// Cleaned recording with anomalous cycles masked.
    pub clean: CleanRecording,
    pub fiducials: Vec<FiducialSet>,
    pub excision: ExcisionReport,
    /// Aligned with `fiducials`; `None` for masked cycles.
    pub cycle_features: Vec<Option<EcgFeatures>>,
}

/// Preprocessing, detection, delineation, excision and per-cycle features.
///
/// Cycle features are computed within each run of consecutive unmasked
/// cycles, so no interval reaches into a masked cycle.
pub fn analyze_recording(raw: &EcgRecording, cfg: &PipelineConfig) -> Result<SubjectAnalysis> {
    let ctx = |stage: &str| format!("subject `{}`: {stage}", raw.subject_id);
    let clean = preprocess(raw, &cfg.preprocess).map_err(|e| e.context(ctx("preprocess")))?;
    let fs = clean.fs();
    let peaks = detect_r_peaks(clean.samples(), fs, &cfg.delineate).map_err(|e| e.context(ctx("delineate")))?;
    let fiducials = delineate_cycles(clean.samples(), fs, &peaks, &cfg.delineate);
    let (clean, excision) = excise_anomalies(&clean, raw, &fiducials, &cfg.preprocess.anomaly);
    let mut cycle_features = vec![None; fiducials.len()];
    let mut start = 0;
    while start < fiducials.len() {
        if excision.is_masked(start) {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < fiducials.len() && !excision.is_masked(end) {
            end += 1;
        }
        for (k, f) in interval_features(&fiducials[start..end], fs).into_iter().enumerate() {
            cycle_features[start + k] = Some(f);
        }
        start = end;
    }
    Ok(SubjectAnalysis {
        clean,
        fiducials,
        excision,
        cycle_features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject_id: String,
    pub n_cycles: usize,
    pub masked_cycles: usize,
    pub unusable: bool,
    pub n_segments: usize,
    pub excluded_segments: usize,
}

/// Aggregates of one analysed subject. A cycle belongs to a segment iff its
/// R peak lies inside; excluded segments yield no aggregate.
pub fn scope_aggregates(
    a: &SubjectAnalysis,
    scope: FeatureScope,
    cfg: &PipelineConfig,
) -> Result<(Vec<ScopeAggregate>, SubjectSummary)> {
    let id = a.clean.recording.subject_id.clone();
    let mut summary = SubjectSummary {
        subject_id: id.clone(),
        n_cycles: a.fiducials.len(),
        masked_cycles: a.excision.masked_cycles.len(),
        unusable: a.excision.unusable,
        n_segments: 0,
        excluded_segments: 0,
    };
    let collect = |keep: &dyn Fn(&FiducialSet) -> bool| -> Vec<EcgFeatures> {
        a.fiducials
            .iter()
            .zip(&a.cycle_features)
            .filter(|(f, c)| c.is_some() && keep(f))
            .filter_map(|(_, c)| *c)
            .collect()
    };
    let aggs = match scope {
        FeatureScope::Whole => vec![ScopeAggregate {
            subject_id: id,
            segment_id: None,
            features: aggregate(&collect(&|_| true), &cfg.features),
        }],
        FeatureScope::Segments => {
            let segs = make_segments(&id, &a.clean.recording.validity_mask, a.clean.fs(), &cfg.segment)
                .map_err(|e| e.context(format!("subject `{id}`: segment")))?;
            summary.n_segments = segs.len();
            summary.excluded_segments = segs.iter().filter(|s| s.excluded).count();
            segs.iter()
                .filter(|s| !s.excluded)
                .map(|s| ScopeAggregate {
                    subject_id: id.clone(),
                    segment_id: Some(s.segment_id),
                    features: aggregate(&collect(&|f| s.contains(f.r_peak)), &cfg.features),
                })
                .collect()
        }
    };
    Ok((aggs, summary))
}

/// Feature table of a dataset, subjects processed in parallel and joined
/// in manifest order.
pub fn build_features(
    dataset: &Dataset,
    scope: FeatureScope,
    cfg: &PipelineConfig,
) -> Result<(FeatureTable, Vec<SubjectSummary>)> {
    let per_subject: Vec<(Vec<ScopeAggregate>, SubjectSummary)> = dataset
        .subjects
        .par_iter()
        .map(|(rec, _)| scope_aggregates(&analyze_recording(rec, cfg)?, scope, cfg))
        .collect::<Result<_>>()?;
    let (aggs, summaries): (Vec<_>, Vec<_>) = per_subject.into_iter().unzip();
    let aggs: Vec<ScopeAggregate> = aggs.into_iter().flatten().collect();
    let metadata: Vec<_> = dataset.subjects.iter().map(|(_, m)| m.clone()).collect();
    let table = assemble_rows(&aggs, &metadata, &cfg.demographics).map_err(|e| e.context("features"))?;
    Ok((table, summaries))
}

/// SHA-256 over subject ids, exact sample bits, masks and metadata.
pub fn dataset_input_hash(dataset: &Dataset) -> Result<String> {
    let mut bytes = Vec::new();
    for (rec, meta) in &dataset.subjects {
        bytes.extend_from_slice(rec.subject_id.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&rec.sampling_rate_hz.to_bits().to_le_bytes());
        for (v, m) in rec.samples.iter().zip(&rec.validity_mask) {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            bytes.push(u8::from(*m));
        }
        bytes.extend_from_slice(&serde_json::to_vec(meta)?);
    }
    Ok(sha256_hex(&bytes))
}

/// Rows `idx` of `table`, in that order.
pub fn subset(table: &FeatureTable, idx: &[usize]) -> FeatureTable {
    FeatureTable {
        columns: table.columns.clone(),
        rows: idx.iter().map(|&i| table.rows[i].clone()).collect(),
        dropped_empty: table.dropped_empty,
        dropped_missing: table.dropped_missing,
    }
}

fn ids(table: &FeatureTable) -> Vec<&str> {
    table.rows.iter().map(|r| r.subject_id.as_str()).collect()
}

fn split_xy(table: &FeatureTable, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    idx.iter()
        .map(|&i| (table.rows[i].predictors.clone(), table.rows[i].age_years))
        .unzip()
}

/// Result of one model in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub label: String,
    pub spec: ModelSpec,
    pub n_eval: usize,
    pub mse: f64,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: Scenario,
    /// `holdout_test` or `kfold_out_of_fold`.
    pub evaluation: String,
    pub n_rows: usize,
    pub n_subjects: usize,
    pub dropped_empty: usize,
    pub dropped_missing: usize,
    pub results: Vec<ModelResult>,
}

/// Artifacts of one trained model, before they are written.
pub struct ModelOutcome {
    pub label: String,
    pub model: TrainedModel,
    pub report: EvalReport,
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Grid search on train/val, then the winner is scored on the test rows.
pub fn train_holdout(
    table: &FeatureTable,
    label: &str,
    grid: &[ModelSpec],
    cfg: &PipelineConfig,
) -> Result<ModelOutcome> {
    let split = holdout(&ids(table), &cfg.split_segmented)?;
    let (xtr, ytr) = split_xy(table, &split.train);
    let (xva, yva) = split_xy(table, &split.val);
    let (xte, _) = split_xy(table, &split.test);
    let result = grid_search(grid, &table.columns, (&xtr, &ytr), (&xva, &yva))?;
    let model = fit(&result.best, &table.columns, &xtr, &ytr)?;
    let pred = model.predict(&xte)?;
    Ok(ModelOutcome {
        label: label.to_string(),
        model,
        report: EvalReport::new(table, &split.test, &pred, cfg.histogram_bin_years)?,
        leaderboard: result.leaderboard,
    })
}

pub fn kind_label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Linear => "linear",
        ModelKind::Ridge => "ridge",
        ModelKind::Tree => "tree",
        ModelKind::Forest => "forest",
    }
}

/// Out-of-fold predictions of `train_fn` over `folds`, in row order.
fn cross_predict(
    table: &FeatureTable,
    folds: &[Vec<usize>],
    train_fn: &(dyn Fn(&FeatureTable) -> Result<TrainedModel> + Sync),
) -> Result<(Vec<f64>, Vec<FoldMetrics>)> {
    let n = table.rows.len();
    let per_fold: Vec<(Vec<f64>, FoldMetrics)> = folds
        .par_iter()
        .enumerate()
        .map(|(k, val)| {
            let model = train_fn(&subset(table, &complement(n, val)))?;
            let vt = subset(table, val).select(&model.feature_columns)?;
            let pred = model.predict(&vt.matrix())?;
            let y = vt.targets();
            Ok((
                pred.clone(),
                FoldMetrics {
                    fold: k,
                    n: val.len(),
                    mse: mse(&y, &pred)?,
                    r2: optional_r2(&y, &pred)?,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut oof = vec![0.0; n];
    let mut metrics = Vec::with_capacity(folds.len());
    for (val, (pred, m)) in folds.iter().zip(per_fold) {
        val.iter().zip(pred).for_each(|(&i, p)| oof[i] = p);
        metrics.push(m);
    }
    Ok((oof, metrics))
}

/// Each grid point is scored by pooled out-of-fold MSE; the winner's
/// out-of-fold predictions form the report and its final model is fit on
/// every row.
pub fn train_kfold(
    table: &FeatureTable,
    label: &str,
    grid: &[ModelSpec],
    cfg: &PipelineConfig,
) -> Result<ModelOutcome> {
    let folds = kfold(&ids(table), &cfg.split_unsegmented)?;
    let y = table.targets();
    if grid.is_empty() {
        return Err(Error::config("empty hyperparameter grid"));
    }
    let scored: Vec<(Vec<f64>, Vec<FoldMetrics>, f64)> = grid
        .par_iter()
        .map(|spec| {
            let (oof, folds_m) = cross_predict(table, &folds, &|t: &FeatureTable| {
                fit(spec, &t.columns, &t.matrix(), &t.targets())
            })?;
            let m = mse(&y, &oof)?;
            Ok((oof, folds_m, m))
        })
        .collect::<Result<_>>()?;
    let best = (0..grid.len()).fold(0, |b, i| if scored[i].2 < scored[b].2 { i } else { b });
    let leaderboard = grid
        .iter()
        .zip(&scored)
        .enumerate()
        .map(|(index, (spec, s))| LeaderboardEntry {
            index,
            spec: *spec,
            val_mse: s.2,
        })
        .collect();
    let all: Vec<usize> = (0..table.rows.len()).collect();
    let mut report = EvalReport::new(table, &all, &scored[best].0, cfg.histogram_bin_years)?;
    report.folds = scored[best].1.clone();
    Ok(ModelOutcome {
        label: label.to_string(),
        model: fit(&grid[best], &table.columns, &table.matrix(), &y)?,
        report,
        leaderboard,
    })
}

/// Fine-tunes `pretrained` inside each fold and scores out-of-fold rows.
/// Also scores the pretrained model alone on every row.
pub fn train_finetune(
    table: &FeatureTable,
    pretrained: &TrainedModel,
    cfg: &PipelineConfig,
) -> Result<Vec<ModelOutcome>> {
    let policy = cfg
        .finetune_policy
        .unwrap_or_else(|| FinetunePolicy::default_for(pretrained.spec.kind));
    let view = table.select(&pretrained.feature_columns).map_err(|e| e.context("finetune schema"))?;
    let all: Vec<usize> = (0..table.rows.len()).collect();
    let base_pred = pretrained.predict(&view.matrix())?;
    let base = ModelOutcome {
        label: "pretrained".to_string(),
        model: pretrained.clone(),
        report: EvalReport::new(table, &all, &base_pred, cfg.histogram_bin_years)?,
        leaderboard: Vec::new(),
    };
    let folds = kfold(&ids(table), &cfg.split_unsegmented)?;
    let (oof, fold_metrics) = cross_predict(table, &folds, &|t: &FeatureTable| {
        Ok(finetune_model(pretrained, t, &policy)?.model)
    })?;
    let mut report = EvalReport::new(table, &all, &oof, cfg.histogram_bin_years)?;
    report.folds = fold_metrics;
    let tuned = ModelOutcome {
        label: "finetuned".to_string(),
        model: finetune_model(pretrained, table, &policy)?.model,
        report,
        leaderboard: Vec::new(),
    };
    Ok(vec![base, tuned])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub config_sha256: String,
    pub input_sha256: String,
    pub features_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_sha256: Option<String>,
    /// SHA-256 of every other file in the run directory.
    pub files: BTreeMap<String, String>,
}

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Files every run directory must contain.
pub const REQUIRED_ARTIFACTS: [&str; 8] = [
    CONFIG_FILE,
    RUN_MANIFEST_FILE,
    METRICS_FILE,
    FEATURES_FILE,
    "correlation_age.json",
    "correlation_smoker.json",
    "group_stats.json",
    "subjects.json",
];

struct RunWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunWriter {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_bytes(&self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.put(name, &to_json_bytes(value)?)
    }
}

/// Runs one scenario on `dataset` and writes the run directory `out`.
/// The finetune scenario needs a pretrained model.
pub fn run_pipeline(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    scenario: Scenario,
    pretrained: Option<&Path>,
    out: &Path,
) -> Result<Metrics> {
    cfg.validate()?;
    let pretrained_model = match (scenario, pretrained) {
        (Scenario::Finetune, None) => {
            return Err(Error::config("the finetune scenario needs a pretrained model"))
        }
        (Scenario::Finetune, Some(p)) => Some((TrainedModel::load(p)?, sha256_hex(&read_file(p)?))),
        _ => None,
    };
    let (table, summaries) = build_features(dataset, scenario.scope(), cfg)?;
    if table.rows.is_empty() {
        return Err(Error::data("no complete feature rows"));
    }

    let outcomes: Vec<ModelOutcome> = match (&pretrained_model, scenario) {
        (Some((m, _)), _) => train_finetune(&table, m, cfg)?,
        (None, Scenario::Segmented) => cfg
            .models
            .iter()
            .map(|&k| {
                train_holdout(&table, kind_label(k), &cfg.grid_for(k), cfg)
                    .map_err(|e| e.context(format!("train {}", kind_label(k))))
            })
            .collect::<Result<_>>()?,
        (None, _) => cfg
            .models
            .iter()
            .map(|&k| {
                train_kfold(&table, kind_label(k), &cfg.grid_for(k), cfg)
                    .map_err(|e| e.context(format!("train {}", kind_label(k))))
            })
            .collect::<Result<_>>()?,
    };

    let mut w = RunWriter {
        dir: out.to_path_buf(),
        files: BTreeMap::new(),
    };
    let config_bytes = cfg.to_json_bytes()?;
    w.put(CONFIG_FILE, &config_bytes)?;
    let features_bytes = table.to_csv_bytes()?;
    w.put(FEATURES_FILE, &features_bytes)?;
    w.json("subjects.json", &summaries)?;

    for target in [CorrelationTarget::Age, CorrelationTarget::Smoker] {
        let name = match target {
            CorrelationTarget::Age => "correlation_age",
            CorrelationTarget::Smoker => "correlation_smoker",
        };
        let rep = pearson_matrix(&table, target, cfg.correlation_method).map_err(|e| e.context("correlation"))?;
        w.json(&format!("{name}.json"), &rep)?;
        w.put(&format!("{name}.csv"), rep.to_csv()?.as_bytes())?;
    }
    let gs = group_stats(&table).map_err(|e| e.context("group statistics"))?;
    w.json("group_stats.json", &gs)?;
    w.put("group_stats.csv", gs.to_csv()?.as_bytes())?;

    let mut results = Vec::new();
    for o in &outcomes {
        w.json(&format!("eval_{}.json", o.label), &o.report)?;
        w.put(&format!("errors_{}.csv", o.label), o.report.rows_csv()?.as_bytes())?;
        w.put(&format!("histogram_{}.csv", o.label), o.report.histogram.to_csv()?.as_bytes())?;
        w.json(&format!("model_{}.json", o.label), &o.model)?;
        if !o.leaderboard.is_empty() {
            w.json(&format!("leaderboard_{}.json", o.label), &o.leaderboard)?;
        }
        results.push(ModelResult {
            label: o.label.clone(),
            spec: o.model.spec,
            n_eval: o.report.n,
            mse: o.report.mse,
            r2: o.report.r2,
        });
    }
    let mut subjects: Vec<&str> = ids(&table);
    subjects.sort_unstable();
    subjects.dedup();
    let metrics = Metrics {
        scenario,
        evaluation: match scenario {
            Scenario::Segmented => "holdout_test",
            _ => "kfold_out_of_fold",
        }
        .to_string(),
        n_rows: table.rows.len(),
        n_subjects: subjects.len(),
        dropped_empty: table.dropped_empty,
        dropped_missing: table.dropped_missing,
        results,
    };
    w.json(METRICS_FILE, &metrics)?;

    let manifest = RunManifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario,
        seed: cfg.seed,
        config_sha256: sha256_hex(&config_bytes),
        input_sha256: dataset_input_hash(dataset)?,
        features_sha256: sha256_hex(&features_bytes),
        pretrained_sha256: pretrained_model.map(|(_, h)| h),
        files: w.files.clone(),
    };
    write_bytes(&out.join(RUN_MANIFEST_FILE), &to_json_bytes(&manifest)?)?;
    Ok(metrics)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Checks that every run directory holds the required artifacts, listing
/// all that are missing.
pub fn check_run_dirs(dirs: &[PathBuf]) -> Result<()> {
    if dirs.is_empty() {
        return Err(Error::data("no run directory given"));
    }
    let missing: Vec<String> = dirs
        .iter()
        .flat_map(|d| {
            REQUIRED_ARTIFACTS
                .iter()
                .filter(|f| !d.join(f).is_file())
                .map(move |f| d.join(f).display().to_string())
        })
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::data(format!("missing report artifacts:\n  {}", missing.join("\n  "))))
    }
}

/// Rendered summary tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub markdown: String,
    pub csv: String,
}

fn fmt_cell(r: &ModelResult) -> String {
    match r.r2 {
        Some(r2) => format!("MSE={:.2}; R²={:.2}", r.mse, r2),
        None => format!("MSE={:.2}; R²=n/a", r.mse),
    }
}

/// Models as rows and scenarios as columns, then the strongest
/// correlations and group differences of each run. A pure function of the
/// run directories' contents.
pub fn report_render(dirs: &[PathBuf]) -> Result<RenderedReport> {
    check_run_dirs(dirs)?;
    let runs: Vec<Metrics> = dirs
        .iter()
        .map(|d| read_json::<Metrics>(&d.join(METRICS_FILE)))
        .collect::<Result<_>>()?;
    let mut labels: Vec<&str> = Vec::new();
    for m in &runs {
        for r in &m.results {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
    }
    let mut md = String::from("# Results\n\n| Model |");
    for m in &runs {
        write!(md, " {} |", m.scenario.name()).unwrap();
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(runs.len()));
    md.push('\n');
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["model", "scenario", "evaluation", "n_eval", "mse", "r2"])?;
    for label in &labels {
        write!(md, "| {label} |").unwrap();
        for m in &runs {
            match m.results.iter().find(|r| r.label == *label) {
                Some(r) => {
                    write!(md, " {} |", fmt_cell(r)).unwrap();
                    csv.write_record([
                        label.to_string(),
                        m.scenario.name().to_string(),
                        m.evaluation.clone(),
                        r.n_eval.to_string(),
                        r.mse.to_string(),
                        r.r2.map_or_else(String::new, |v| v.to_string()),
                    ])?;
                }
                None => md.push_str(" - |"),
            }
        }
        md.push('\n');
    }
    for (d, m) in dirs.iter().zip(&runs) {
        write!(
            md,
            "\n## {} ({} rows, {} subjects, {})\n",
            m.scenario.name(),
            m.n_rows,
            m.n_subjects,
            m.evaluation
        )
        .unwrap();
        for (file, title) in [("correlation_age.json", "age"), ("correlation_smoker.json", "smoking")] {
            let rep: crate::eval::CorrelationReport = read_json(&d.join(file))?;
            let mut entries: Vec<_> = rep.entries.iter().filter_map(|e| e.r.map(|r| (&e.feature, r))).collect();
            entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
            write!(md, "\nStrongest correlations with {title}:\n\n| Feature | r |\n|---|---|\n").unwrap();
            for (f, r) in entries.iter().take(5) {
                writeln!(md, "| {f} | {r:.3} |").unwrap();
            }
        }
        let gs: crate::eval::GroupStatsReport = read_json(&d.join("group_stats.json"))?;
        write!(
            md,
            "\nSmoker ({}) vs non-smoker ({}) differences:\n\n| Feature | smoker mean ± std | non-smoker mean ± std | d |\n|---|---|---|---|\n",
            gs.n_smoker, gs.n_non_smoker
        )
        .unwrap();
        for e in gs.entries.iter().take(11) {
            writeln!(
                md,
                "| {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {} |",
                e.feature,
                e.smoker_mean,
                e.smoker_std,
                e.non_smoker_mean,
                e.non_smoker_std,
                e.d.map_or_else(|| "n/a".to_string(), |d| format!("{d:.2}"))
            )
            .unwrap();
        }
    }
    let csv = String::from_utf8(csv.into_inner().map_err(|e| Error::data(e.to_string()))?)
        .map_err(|e| Error::data(e.to_string()))?;
    Ok(RenderedReport { markdown: md, csv })
}

/// Writes `summary.md` and `summary.csv` into `out`.
pub fn write_report(dirs: &[PathBuf], out: &Path) -> Result<RenderedReport> {
    let r = report_render(dirs)?;
    write_bytes(&out.join("summary.md"), r.markdown.as_bytes())?;
    write_bytes(&out.join("summary.csv"), r.csv.as_bytes())?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = PipelineConfig::default();
        let text = String::from_utf8(cfg.to_json_bytes().unwrap()).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sede": 7}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"segment": {"window": 5}}"#).is_err());
    }

    #[test]
    fn validation() {
        let cfg = PipelineConfig {
            version: 9,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            split_segmented: SplitPlan {
                kind: SplitKind::Kfold,
                ..SplitPlan::default()
            },
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scenario_names() {
        for s in [Scenario::Segmented, Scenario::Unsegmented, Scenario::Finetune] {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("US+TL".parse::<Scenario>().unwrap(), Scenario::Finetune);
        assert!("x".parse::<Scenario>().is_err());
    }

    #[test]
    fn empty_directory_lists_every_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let err = report_render(&[dir.path().to_path_buf()]).unwrap_err().to_string();
        for f in REQUIRED_ARTIFACTS {
            assert!(err.contains(f), "{err}");
        }
    }
}
