//! Per-cycle interval features, HRV, scope aggregation and model rows.
//!
//! All durations are in milliseconds. A feature whose operand fiducial is
//! missing is `None` for that cycle; rows with any missing predictor are
//! dropped before training and counted.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delineate::FiducialSet;
use crate::ingest::{Sex, SubjectMetadata};
use crate::util::write_bytes;
use crate::{Error, Result};

/// ECG feature columns, in output order.
pub const ECG_FEATURES: [&str; 13] = [
    "rr_ms",
    "qt_ms",
    "p_dur_ms",
    "pp_ms",
    "pt_ms",
    "pr_interval_ms",
    "t_dur_ms",
    "st_seg_ms",
    "qrs_ms",
    "pr_seg_ms",
    "qtc_ms",
    "rmssd_ms",
    "sdnn_ms",
];

/// Trailing non-predictor columns of a feature CSV.
pub const TARGET_COLUMNS: [&str; 4] = ["age_years", "smoker_label", "subject_id", "segment_id"];

/// Value written to `segment_id` for whole-recording rows.
pub const FULL_SCOPE_ID: &str = "full";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EcgFeatures {
    pub rr_ms: Option<f64>,
    pub qt_ms: Option<f64>,
    pub p_dur_ms: Option<f64>,
    pub pp_ms: Option<f64>,
    /// Isoelectric gap from T offset to the next P onset (the "TP interval").
    pub pt_ms: Option<f64>,
    pub pr_interval_ms: Option<f64>,
    pub t_dur_ms: Option<f64>,
    pub st_seg_ms: Option<f64>,
    pub qrs_ms: Option<f64>,
    pub pr_seg_ms: Option<f64>,
    pub qtc_ms: Option<f64>,
    pub rmssd_ms: Option<f64>,
    pub sdnn_ms: Option<f64>,
}

impl EcgFeatures {
    /// Values in [`ECG_FEATURES`] order.
    pub fn values(&self) -> [Option<f64>; 13] {
        [
            self.rr_ms,
            self.qt_ms,
            self.p_dur_ms,
            self.pp_ms,
            self.pt_ms,
            self.pr_interval_ms,
            self.t_dur_ms,
            self.st_seg_ms,
            self.qrs_ms,
            self.pr_seg_ms,
            self.qtc_ms,
            self.rmssd_ms,
            self.sdnn_ms,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        ECG_FEATURES.iter().position(|n| *n == name).and_then(|i| self.values()[i])
    }

    /// Heart rate implied by the RR interval.
    pub fn heart_rate_bpm(&self) -> Option<f64> {
        self.rr_ms.filter(|rr| *rr > 0.0).map(|rr| 60_000.0 / rr)
    }
}

/// Bazett correction with RR in seconds inside the root and QT kept in ms.
pub fn qtc(qt_ms: f64, rr_ms: f64) -> Result<f64> {
    if !(rr_ms > 0.0) {
        return Err(Error::numeric(format!("QTc needs a positive RR, got {rr_ms}")));
    }
    Ok(qt_ms / (rr_ms / 1000.0).sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    #[default]
    Population,
    Sample,
}

/// Root mean square of successive differences; needs at least 3 intervals.
pub fn rmssd(rr_ms: &[f64]) -> Result<f64> {
    if rr_ms.len() < 3 {
        return Err(Error::numeric(format!("RMSSD needs at least 3 RR intervals, got {}", rr_ms.len())));
    }
    let ss: f64 = rr_ms.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((ss / (rr_ms.len() - 1) as f64).sqrt())
}

/// Standard deviation of the RR series; needs at least 2 intervals.
pub fn sdnn(rr_ms: &[f64], convention: StdConvention) -> Result<f64> {
    let n = rr_ms.len();
    if n < 2 {
        return Err(Error::numeric(format!("SDNN needs at least 2 RR intervals, got {n}")));
    }
    let m = rr_ms.iter().sum::<f64>() / n as f64;
    let ss: f64 = rr_ms.iter().map(|v| (v - m).powi(2)).sum();
    let dof = match convention {
        StdConvention::Population => n,
        StdConvention::Sample => n - 1,
    };
    Ok((ss / dof as f64).sqrt())
}

/// `(rmssd, sdnn)` of one RR series.
pub fn hrv(rr_ms: &[f64], convention: StdConvention) -> Result<(f64, f64)> {
    Ok((rmssd(rr_ms)?, sdnn(rr_ms, convention)?))
}

/// Interval features of every cycle. Features spanning into the next cycle
/// (RR, PP, PT) are absent for the last one. HRV fields are left empty; they
/// are defined per scope, not per cycle.
pub fn interval_features(fiducials: &[FiducialSet], fs: f64) -> Vec<EcgFeatures> {
    let k = 1000.0 / fs;
    let span = |a: Option<usize>, b: Option<usize>| match (a, b) {
        (Some(a), Some(b)) if b > a => Some((b - a) as f64 * k),
        _ => None,
    };
    fiducials
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let next = fiducials.get(i + 1);
            let rr_ms = next.and_then(|n| span(Some(f.r_peak), Some(n.r_peak)));
            let qt_ms = span(f.qrs_onset, f.t_offset);
            let pr_interval_ms = span(f.p_onset, f.qrs_onset);
            let pr_seg_ms = span(f.p_offset, f.qrs_onset);
            // The telescoping form keeps PR − PR segment − P duration exactly 0.
            let p_dur_ms = match (pr_interval_ms, pr_seg_ms) {
                (Some(a), Some(b)) => Some(a - b),
                _ => span(f.p_onset, f.p_offset),
            };
            EcgFeatures {
                rr_ms,
                qt_ms,
                p_dur_ms,
                pp_ms: next.and_then(|n| span(f.p_peak, n.p_peak)),
                pt_ms: next.and_then(|n| span(f.t_offset, n.p_onset)),
                pr_interval_ms,
                t_dur_ms: span(f.t_onset, f.t_offset),
                st_seg_ms: span(f.qrs_offset, f.t_onset),
                qrs_ms: span(f.qrs_onset, f.qrs_offset),
                pr_seg_ms,
                qtc_ms: match (qt_ms, rr_ms) {
                    (Some(q), Some(r)) => qtc(q, r).ok(),
                    _ => None,
                },
                rmssd_ms: None,
                sdnn_ms: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub sdnn_convention: StdConvention,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Averages the cycles of one scope.
///
/// Each interval feature is the mean over the cycles where it is present.
/// The PR interval, PR segment and P duration are averaged over the cycles
/// where all three are present, with P duration taken as the difference of
/// the other two means so the identity survives aggregation. QTc is
/// recomputed from the aggregated QT and RR. RMSSD and SDNN come from the
/// scope's RR series. Returns `None` for a scope without cycles.
pub fn aggregate(cycles: &[EcgFeatures], cfg: &FeatureConfig) -> Option<EcgFeatures> {
    if cycles.is_empty() {
        return None;
    }
    let m = |f: fn(&EcgFeatures) -> Option<f64>| mean_of(cycles.iter().map(f));
    let p_complete: Vec<&EcgFeatures> = cycles
        .iter()
        .filter(|c| c.pr_interval_ms.is_some() && c.pr_seg_ms.is_some() && c.p_dur_ms.is_some())
        .collect();
    let (pr_interval_ms, pr_seg_ms, p_dur_ms) = if p_complete.is_empty() {
        (m(|c| c.pr_interval_ms), m(|c| c.pr_seg_ms), m(|c| c.p_dur_ms))
    } else {
        let pi = mean_of(p_complete.iter().map(|c| c.pr_interval_ms));
        let ps = mean_of(p_complete.iter().map(|c| c.pr_seg_ms));
        (pi, ps, pi.zip(ps).map(|(a, b)| a - b))
    };
    let rr: Vec<f64> = cycles.iter().filter_map(|c| c.rr_ms).collect();
    let rr_ms = mean_of(rr.iter().map(|v| Some(*v)));
    let qt_ms = m(|c| c.qt_ms);
    Some(EcgFeatures {
        rr_ms,
        qt_ms,
        p_dur_ms,
        pp_ms: m(|c| c.pp_ms),
        pt_ms: m(|c| c.pt_ms),
        pr_interval_ms,
        t_dur_ms: m(|c| c.t_dur_ms),
        st_seg_ms: m(|c| c.st_seg_ms),
        qrs_ms: m(|c| c.qrs_ms),
        pr_seg_ms,
        qtc_ms: qt_ms.zip(rr_ms).and_then(|(q, r)| qtc(q, r).ok()),
        rmssd_ms: rmssd(&rr).ok(),
        sdnn_ms: sdnn(&rr, cfg.sdnn_convention).ok(),
    })
}

/// Non-ECG predictors drawn from subject metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demographic {
    Sex,
    Smoker,
    BmiKgM2,
    SleepHours,
    SystolicMmhg,
    DiastolicMmhg,
    RestingHrBpm,
    FamilyHistory,
    HeightCm,
    WeightKg,
}

/// The eight default demographic predictors. Height and weight are left out
/// because BMI already combines them.
pub const DEFAULT_DEMOGRAPHICS: [Demographic; 8] = [
    Demographic::Sex,
    Demographic::Smoker,
    Demographic::BmiKgM2,
    Demographic::SleepHours,
    Demographic::SystolicMmhg,
    Demographic::DiastolicMmhg,
    Demographic::RestingHrBpm,
    Demographic::FamilyHistory,
];

impl Demographic {
    pub fn column(self) -> &'static str {
        match self {
            Self::Sex => "sex",
            Self::Smoker => "smoker",
            Self::BmiKgM2 => "bmi_kg_m2",
            Self::SleepHours => "sleep_hours",
            Self::SystolicMmhg => "systolic_mmhg",
            Self::DiastolicMmhg => "diastolic_mmhg",
            Self::RestingHrBpm => "resting_hr_bpm",
            Self::FamilyHistory => "family_history",
            Self::HeightCm => "height_cm",
            Self::WeightKg => "weight_kg",
        }
    }

    /// Numeric encoding: male = 1, female = 0; booleans as 1/0.
    pub fn value(self, m: &SubjectMetadata) -> Option<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Self::Sex => Some(flag(m.sex == Sex::Male)),
            Self::Smoker => Some(flag(m.smoker)),
            Self::BmiKgM2 => m.bmi_kg_m2,
            Self::SleepHours => m.sleep_hours,
            Self::SystolicMmhg => m.systolic_mmhg,
            Self::DiastolicMmhg => m.diastolic_mmhg,
            Self::RestingHrBpm => m.resting_hr_bpm,
            Self::FamilyHistory => m.family_history.map(flag),
            Self::HeightCm => m.height_cm,
            Self::WeightKg => m.weight_kg,
        }
    }
}

/// Aggregated ECG features of one scope of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeAggregate {
    pub subject_id: String,
    /// `None` for the whole recording.
    pub segment_id: Option<usize>,
    /// `None` when the scope held no usable cycle.
    pub features: Option<EcgFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub subject_id: String,
    pub segment_id: Option<usize>,
    pub predictors: Vec<f64>,
    pub age_years: f64,
    pub smoker: bool,
}

impl FeatureRow {
    pub fn segment_label(&self) -> String {
        self.segment_id.map_or_else(|| FULL_SCOPE_ID.to_string(), |s| s.to_string())
    }
}

/// Complete model rows plus the bookkeeping of what was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
    /// Scopes without any usable cycle.
    pub dropped_empty: usize,
    /// Scopes with at least one missing predictor.
    pub dropped_missing: usize,
}

/// Predictor column names for a demographic selection.
pub fn predictor_columns(demographics: &[Demographic]) -> Vec<String> {
    ECG_FEATURES
        .iter()
        .copied()
        .chain(demographics.iter().map(|d| d.column()))
        .map(String::from)
        .collect()
}

/// Joins scope aggregates with metadata. Rows with a missing predictor are
/// dropped and counted.
pub fn assemble_rows(
    aggregates: &[ScopeAggregate],
    metadata: &[SubjectMetadata],
    demographics: &[Demographic],
) -> Result<FeatureTable> {
    let by_id: HashMap<&str, &SubjectMetadata> =
        metadata.iter().map(|m| (m.subject_id.as_str(), m)).collect();
    let mut table = FeatureTable {
        columns: predictor_columns(demographics),
        rows: Vec::new(),
        dropped_empty: 0,
        dropped_missing: 0,
    };
    for agg in aggregates {
        let meta = by_id
            .get(agg.subject_id.as_str())
            .ok_or_else(|| Error::data(format!("no metadata for subject `{}`", agg.subject_id)))?;
        let Some(f) = &agg.features else {
            table.dropped_empty += 1;
            continue;
        };
        let values: Option<Vec<f64>> = f
            .values()
            .into_iter()
            .chain(demographics.iter().map(|d| d.value(meta)))
            .map(|v| v.filter(|x| x.is_finite()))
            .collect();
        match values {
            Some(predictors) => table.rows.push(FeatureRow {
                subject_id: agg.subject_id.clone(),
                segment_id: agg.segment_id,
                predictors,
                age_years: f64::from(meta.age_years),
                smoker: meta.smoker,
            }),
            None => table.dropped_missing += 1,
        }
    }
    Ok(table)
}

impl FeatureTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.age_years).collect()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.predictors.clone()).collect()
    }

    /// Keeps only `columns`, in that order.
    pub fn select(&self, columns: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.column_index(c).ok_or_else(|| Error::data(format!("unknown column `{c}`"))))
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            columns: columns.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow {
                    predictors: idx.iter().map(|&i| r.predictors[i]).collect(),
                    ..r.clone()
                })
                .collect(),
            dropped_empty: self.dropped_empty,
            dropped_missing: self.dropped_missing,
        })
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(String::as_str).chain(TARGET_COLUMNS))?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.predictors.iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", r.age_years));
            rec.push(if r.smoker { "1" } else { "0" }.into());
            rec.push(r.subject_id.clone());
            rec.push(r.segment_label());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::data(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_csv_bytes()?)
    }

    /// Reads a table written by [`FeatureTable::write_csv`]. Predictor
    /// columns are everything before the four trailing target columns.
    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    fn parse_csv(text: &str, path: &Path) -> Result<FeatureTable> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let n_pred = header.len().saturating_sub(TARGET_COLUMNS.len());
        if header.len() < TARGET_COLUMNS.len() || header[n_pred..] != TARGET_COLUMNS {
            return Err(perr(1, format!("header must end with {}", TARGET_COLUMNS.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(line, format!("column `{}`: bad value `{}`", header[j], &rec[j])))
            };
            let predictors = (0..n_pred).map(num).collect::<Result<Vec<_>>>()?;
            let smoker = match rec[n_pred + 1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(perr(line, format!("smoker_label must be 0 or 1, got `{other}`"))),
            };
            let seg = rec[n_pred + 3].trim();
            let segment_id = if seg == FULL_SCOPE_ID {
                None
            } else {
                Some(seg.parse().map_err(|_| perr(line, format!("bad segment_id `{seg}`")))?)
            };
            rows.push(FeatureRow {
                subject_id: rec[n_pred + 2].to_string(),
                segment_id,
                predictors,
                age_years: num(n_pred)?,
                smoker,
            });
        }
        Ok(FeatureTable {
            columns: header[..n_pred].to_vec(),
            rows,
            dropped_empty: 0,
            dropped_missing: 0,
        })
    }
}
