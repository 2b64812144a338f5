//! Data splits, regression metrics, error histograms, feature correlation
//! and smoker/non-smoker group statistics.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{Demographic, FeatureTable};
use crate::util::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    #[serde(rename = "holdout_60_20_20")]
    Holdout,
    #[serde(rename = "kfold")]
    Kfold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    ByRow,
    /// All rows of one subject land in the same part.
    BySubject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub k: usize,
    pub seed: u64,
    pub grouping: Grouping,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            kind: SplitKind::Holdout,
            k: 5,
            seed: 0,
            grouping: Grouping::ByRow,
        }
    }
}

/// Row indices of a three-way split, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holdout {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Part sizes `round(0.6n)`, `round(0.2n)` and the remainder.
pub fn holdout_sizes(n: usize) -> (usize, usize, usize) {
    let a = (0.6 * n as f64).round() as usize;
    let b = (0.2 * n as f64).round() as usize;
    (a, b, n - a - b)
}

/// Fold sizes differing by at most one, larger folds first.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Split units (rows or subjects) as lists of row indices, shuffled.
fn shuffled_units(subject_ids: &[&str], plan: &SplitPlan) -> Vec<Vec<usize>> {
    let mut units: Vec<Vec<usize>> = match plan.grouping {
        Grouping::ByRow => (0..subject_ids.len()).map(|i| vec![i]).collect(),
        Grouping::BySubject => {
            let mut pos: HashMap<&str, usize> = HashMap::new();
            let mut units: Vec<Vec<usize>> = Vec::new();
            for (i, s) in subject_ids.iter().enumerate() {
                let u = *pos.entry(s).or_insert_with(|| {
                    units.push(Vec::new());
                    units.len() - 1
                });
                units[u].push(i);
            }
            units
        }
    };
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    units
}

fn unit_label(g: Grouping) -> &'static str {
    match g {
        Grouping::ByRow => "rows",
        Grouping::BySubject => "subjects",
    }
}

fn gather(units: &[Vec<usize>]) -> Vec<usize> {
    let mut v: Vec<usize> = units.iter().flatten().copied().collect();
    v.sort_unstable();
    v
}

/// Seeded 60/20/20 split. Sizes count units, so by-subject splits
/// balance subjects rather than rows.
pub fn holdout(subject_ids: &[&str], plan: &SplitPlan) -> Result<Holdout> {
    let units = shuffled_units(subject_ids, plan);
    if units.len() < 5 {
        return Err(Error::data(format!(
            "holdout split needs at least 5 {}, got {}",
            unit_label(plan.grouping),
            units.len()
        )));
    }
    let (a, b, _) = holdout_sizes(units.len());
    Ok(Holdout {
        train: gather(&units[..a]),
        val: gather(&units[a..a + b]),
        test: gather(&units[a + b..]),
    })
}

/// Seeded k-fold partition; returns the validation rows of each fold.
pub fn kfold(subject_ids: &[&str], plan: &SplitPlan) -> Result<Vec<Vec<usize>>> {
    if plan.k < 2 {
        return Err(Error::config(format!("k-fold needs k >= 2, got {}", plan.k)));
    }
    let units = shuffled_units(subject_ids, plan);
    if units.len() < plan.k {
        return Err(Error::data(format!(
            "{}-fold split needs at least {} {}, got {}",
            plan.k,
            plan.k,
            unit_label(plan.grouping),
            units.len()
        )));
    }
    let mut start = 0;
    Ok(fold_sizes(units.len(), plan.k)
        .into_iter()
        .map(|s| {
            let f = gather(&units[start..start + s]);
            start += s;
            f
        })
        .collect())
}

/// Complement of `part` in `0..n`, ascending.
pub fn complement(n: usize, part: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; n];
    part.iter().for_each(|&i| inside[i] = true);
    (0..n).filter(|&i| !inside[i]).collect()
}

fn check_pair(y: &[f64], p: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != p.len() {
        return Err(Error::data(format!(
            "metric needs equal nonzero lengths, got {} and {}",
            y.len(),
            p.len()
        )));
    }
    Ok(())
}

/// Mean squared error in years².
pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    Ok(y_true.iter().zip(y_pred).map(|(y, p)| (p - y) * (p - y)).sum::<f64>() / y_true.len() as f64)
}

/// Coefficient of determination, with SStot about the mean of `y_true`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let m = mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|y| (y - m) * (y - m)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::numeric("R² is undefined for a constant target"));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Histogram of signed errors. Bin `j` covers `[(j − ½)w, (j + ½)w)`, so
/// a zero error sits in the middle of the bin centred on 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn error_histogram(errors: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::config(format!("histogram bin width must be positive, got {bin_width}")));
    }
    if errors.is_empty() || errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::data("histogram needs a nonempty list of finite errors"));
    }
    let bin = |e: f64| (e / bin_width + 0.5).floor() as i64;
    let lo = errors.iter().map(|&e| bin(e)).min().unwrap();
    let hi = errors.iter().map(|&e| bin(e)).max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    errors.iter().for_each(|&e| counts[(bin(e) - lo) as usize] += 1);
    Ok(Histogram {
        bin_width,
        edges: (lo..=hi + 1).map(|j| (j as f64 - 0.5) * bin_width).collect(),
        counts,
    })
}

impl Histogram {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.edges[i].to_string(), self.edges[i + 1].to_string(), c.to_string()])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub subject_id: String,
    pub segment_id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n: usize,
    pub mse: f64,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mse: f64,
    /// `None` when the evaluated targets are constant.
    pub r2: Option<f64>,
    pub rows: Vec<RowError>,
    pub folds: Vec<FoldMetrics>,
    pub histogram: Histogram,
}

impl EvalReport {
    /// Metrics of predictions on the rows `idx` of `table`.
    pub fn new(table: &FeatureTable, idx: &[usize], y_pred: &[f64], bin_width: f64) -> Result<Self> {
        let y: Vec<f64> = idx.iter().map(|&i| table.rows[i].age_years).collect();
        let errors: Vec<f64> = y_pred.iter().zip(&y).map(|(p, t)| p - t).collect();
        Ok(Self {
            n: y.len(),
            mse: mse(&y, y_pred)?,
            r2: optional_r2(&y, y_pred)?,
            rows: idx
                .iter()
                .zip(y_pred)
                .map(|(&i, &p)| RowError {
                    subject_id: table.rows[i].subject_id.clone(),
                    segment_id: table.rows[i].segment_label(),
                    y_true: table.rows[i].age_years,
                    y_pred: p,
                })
                .collect(),
            folds: Vec::new(),
            histogram: error_histogram(&errors, bin_width)?,
        })
    }

    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subject_id", "segment_id", "y_true", "y_pred", "error"])?;
        for r in &self.rows {
            w.write_record([
                r.subject_id.clone(),
                r.segment_id.clone(),
                r.y_true.to_string(),
                r.y_pred.to_string(),
                (r.y_pred - r.y_true).to_string(),
            ])?;
        }
        csv_string(w)
    }
}

/// R², mapping only the constant-target failure to `None`.
pub fn optional_r2(y: &[f64], p: &[f64]) -> Result<Option<f64>> {
    match r2(y, p) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numeric() => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    /// Pearson on average ranks.
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationTarget {
    Age,
    /// Smoker status as 1/0.
    Smoker,
}

impl CorrelationTarget {
    pub fn values(self, table: &FeatureTable) -> Vec<f64> {
        match self {
            Self::Age => table.targets(),
            Self::Smoker => table.rows.iter().map(|r| f64::from(u8::from(r.smoker))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub feature: String,
    /// `None` when the feature is constant.
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub target: CorrelationTarget,
    pub method: CorrelationMethod,
    pub n: usize,
    /// Table column order, then the derived heart rate.
    pub entries: Vec<CorrelationEntry>,
}

/// Pearson r, or `None` if either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        order[i..=j].iter().for_each(|&o| ranks[o] = r);
        i = j + 1;
    }
    ranks
}

pub fn correlation(x: &[f64], y: &[f64], method: CorrelationMethod) -> Option<f64> {
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => pearson(&average_ranks(x), &average_ranks(y)),
    }
}

/// Column name of the heart rate derived from `rr_ms`.
pub const HEART_RATE_COLUMN: &str = "heart_rate_bpm";

/// Correlation of every predictor except the target's own column, plus the
/// heart rate derived from `rr_ms` when present, with the target.
pub fn pearson_matrix(
    table: &FeatureTable,
    target: CorrelationTarget,
    method: CorrelationMethod,
) -> Result<CorrelationReport> {
    if table.rows.len() < 3 {
        return Err(Error::data(format!("correlation needs at least 3 rows, got {}", table.rows.len())));
    }
    let y = target.values(table);
    let own = match target {
        CorrelationTarget::Age => None,
        CorrelationTarget::Smoker => Some(Demographic::Smoker.column()),
    };
    let mut entries: Vec<CorrelationEntry> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| Some(c.as_str()) != own)
        .map(|(j, c)| {
            let x: Vec<f64> = table.rows.iter().map(|r| r.predictors[j]).collect();
            CorrelationEntry {
                feature: c.clone(),
                r: correlation(&x, &y, method),
            }
        })
        .collect();
    if let Some(j) = table.column_index("rr_ms") {
        let hr: Vec<f64> = table.rows.iter().map(|r| 60_000.0 / r.predictors[j]).collect();
        entries.push(CorrelationEntry {
            feature: HEART_RATE_COLUMN.to_string(),
            r: correlation(&hr, &y, method),
        });
    }
    Ok(CorrelationReport {
        target,
        method,
        n: table.rows.len(),
        entries,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl CorrelationReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "r"])?;
        for e in &self.entries {
            w.write_record([e.feature.clone(), fmt_opt(e.r)])?;
        }
        csv_string(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStatsEntry {
    pub feature: String,
    pub smoker_mean: f64,
    pub smoker_std: f64,
    pub non_smoker_mean: f64,
    pub non_smoker_std: f64,
    /// Standardized mean difference; `None` when the pooled std is zero.
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStatsReport {
    pub n_smoker: usize,
    pub n_non_smoker: usize,
    /// Sorted by decreasing `|d|`; undefined `d` last; ties keep column order.
    pub entries: Vec<GroupStatsEntry>,
}

/// Sample mean and standard deviation (n − 1; zero for a single value).
fn mean_std(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    if x.len() < 2 {
        return (m, 0.0);
    }
    (m, (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt())
}

/// Smoker vs non-smoker statistics for every predictor except the smoker
/// flag itself, with `d = (mean_s − mean_ns)/pooled_std`.
pub fn group_stats(table: &FeatureTable) -> Result<GroupStatsReport> {
    let (s_rows, ns_rows): (Vec<_>, Vec<_>) = table.rows.iter().partition(|r| r.smoker);
    if s_rows.is_empty() || ns_rows.is_empty() {
        return Err(Error::data("group statistics need both smokers and non-smokers"));
    }
    let (n1, n2) = (s_rows.len() as f64, ns_rows.len() as f64);
    let mut entries: Vec<GroupStatsEntry> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_str() != Demographic::Smoker.column())
        .map(|(j, c)| {
            let col = |rows: &[&crate::features::FeatureRow]| rows.iter().map(|r| r.predictors[j]).collect::<Vec<_>>();
            let (m1, s1) = mean_std(&col(&s_rows));
            let (m2, s2) = mean_std(&col(&ns_rows));
            let dof = n1 + n2 - 2.0;
            let pooled = if dof > 0.0 {
                (((n1 - 1.0) * s1 * s1 + (n2 - 1.0) * s2 * s2) / dof).sqrt()
            } else {
                0.0
            };
            GroupStatsEntry {
                feature: c.clone(),
                smoker_mean: m1,
                smoker_std: s1,
                non_smoker_mean: m2,
                non_smoker_std: s2,
                d: (pooled > 0.0).then(|| (m1 - m2) / pooled),
            }
        })
        .collect();
    entries.sort_by(|a, b| match (a.d, b.d) {
        (Some(x), Some(y)) => y.abs().total_cmp(&x.abs()),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(GroupStatsReport {
        n_smoker: s_rows.len(),
        n_non_smoker: ns_rows.len(),
        entries,
    })
}

impl GroupStatsReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "smoker_mean", "smoker_std", "non_smoker_mean", "non_smoker_std", "d"])?;
        for e in &self.entries {
            w.write_record([
                e.feature.clone(),
                e.smoker_mean.to_string(),
                e.smoker_std.to_string(),
                e.non_smoker_mean.to_string(),
                e.non_smoker_std.to_string(),
                fmt_opt(e.d),
            ])?;
        }
        csv_string(w)
    }
}
