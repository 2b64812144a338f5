use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const METADATA_SCHEMA_VERSION: u32 = 1;

/// Maximum allowed gap between a stated BMI and weight / height².
pub const BMI_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetadata {
    pub subject_id: String,
    /// Chronological age, used as the vascular-age target.
    pub age_years: u32,
    pub sex: Sex,
    pub smoker: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bmi_kg_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sleep_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systolic_mmhg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diastolic_mmhg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resting_hr_bpm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_history: Option<bool>,
}

impl SubjectMetadata {
    /// Fraction of the optional fields that are filled in.
    pub fn completeness(&self) -> f64 {
        let present = [
            self.height_cm.is_some(),
            self.weight_kg.is_some(),
            self.bmi_kg_m2.is_some(),
            self.sleep_hours.is_some(),
            self.systolic_mmhg.is_some(),
            self.diastolic_mmhg.is_some(),
            self.resting_hr_bpm.is_some(),
            self.family_history.is_some(),
        ];
        present.iter().filter(|p| **p).count() as f64 / present.len() as f64
    }

    /// Checks the record invariants, returning one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("height_cm", self.height_cm),
            ("weight_kg", self.weight_kg),
            ("bmi_kg_m2", self.bmi_kg_m2),
            ("systolic_mmhg", self.systolic_mmhg),
            ("diastolic_mmhg", self.diastolic_mmhg),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(format!("`{name}` must be positive, got {v}"));
                }
            }
        }
        if let Some(s) = self.sleep_hours {
            if !(s >= 0.0 && s.is_finite()) {
                out.push(format!("`sleep_hours` must be non-negative, got {s}"));
            }
        }
        if let (Some(h), Some(w), Some(bmi)) = (self.height_cm, self.weight_kg, self.bmi_kg_m2) {
            let m = h / 100.0;
            let implied = w / (m * m);
            if (bmi - implied).abs() > BMI_TOLERANCE {
                out.push(format!(
                    "`bmi_kg_m2` {bmi} inconsistent with weight/height² = {implied:.2}"
                ));
            }
        }
        if let (Some(s), Some(d)) = (self.systolic_mmhg, self.diastolic_mmhg) {
            if s <= d {
                out.push(format!("`systolic_mmhg` {s} must exceed `diastolic_mmhg` {d}"));
            }
        }
        if let Some(hr) = self.resting_hr_bpm {
            if !(hr > 0.0 && hr < 250.0) {
                out.push(format!("`resting_hr_bpm` {hr} outside (0, 250)"));
            }
        }
        out
    }
}

/// All fields optional so missing mandatory fields can be reported by name.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    age_years: Option<u32>,
    sex: Option<Sex>,
    smoker: Option<bool>,
    height_cm: Option<f64>,
    weight_kg: Option<f64>,
    bmi_kg_m2: Option<f64>,
    sleep_hours: Option<f64>,
    systolic_mmhg: Option<f64>,
    diastolic_mmhg: Option<f64>,
    resting_hr_bpm: Option<f64>,
    family_history: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    schema_version: u32,
    subjects: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct OutDocument<'a> {
    schema_version: u32,
    subjects: BTreeMap<&'a str, &'a SubjectMetadata>,
}

pub fn load_metadata(path: &Path) -> Result<Vec<SubjectMetadata>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metadata(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.to_path_buf(),
            line: j.line(),
            msg: j.to_string(),
        },
        other => other,
    })
}

/// Parses a metadata document, collecting every per-record violation
/// into a single error.
pub fn parse_metadata(text: &str) -> Result<Vec<SubjectMetadata>> {
    let doc: RawDocument = serde_json::from_str(text)?;
    if doc.schema_version != METADATA_SCHEMA_VERSION {
        return Err(Error::data(format!(
            "unsupported metadata schema_version {} (expected {METADATA_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }

    let mut records = Vec::with_capacity(doc.subjects.len());
    let mut problems = Vec::new();
    for (id, value) in doc.subjects {
        let raw: RawRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("subject {id}: {e}"));
                continue;
            }
        };
        let mut missing = Vec::new();
        if raw.age_years.is_none() {
            missing.push("age_years");
        }
        if raw.sex.is_none() {
            missing.push("sex");
        }
        if raw.smoker.is_none() {
            missing.push("smoker");
        }
        if !missing.is_empty() {
            for field in missing {
                problems.push(format!("subject {id}: missing mandatory field `{field}`"));
            }
            continue;
        }
        let rec = SubjectMetadata {
            subject_id: id.clone(),
            age_years: raw.age_years.unwrap(),
            sex: raw.sex.unwrap(),
            smoker: raw.smoker.unwrap(),
            height_cm: raw.height_cm,
            weight_kg: raw.weight_kg,
            bmi_kg_m2: raw.bmi_kg_m2,
            sleep_hours: raw.sleep_hours,
            systolic_mmhg: raw.systolic_mmhg,
            diastolic_mmhg: raw.diastolic_mmhg,
            resting_hr_bpm: raw.resting_hr_bpm,
            family_history: raw.family_history,
        };
        let issues = rec.violations();
        if issues.is_empty() {
            records.push(rec);
        } else {
            problems.extend(issues.into_iter().map(|m| format!("subject {id}: {m}")));
        }
    }

    if problems.is_empty() {
        Ok(records)
    } else {
        Err(Error::data(format!(
            "invalid metadata:\n  {}",
            problems.join("\n  ")
        )))
    }
}

pub fn write_metadata(path: &Path, records: &[SubjectMetadata]) -> Result<()> {
    let doc = OutDocument {
        schema_version: METADATA_SCHEMA_VERSION,
        subjects: records
            .iter()
            .map(|r| (r.subject_id.as_str(), r))
            .collect(),
    };
    // subject_id is the map key; drop the duplicate inside each record.
    let mut value = serde_json::to_value(&doc)?;
    if let Some(subjects) = value.get_mut("subjects").and_then(|s| s.as_object_mut()) {
        for rec in subjects.values_mut() {
            if let Some(obj) = rec.as_object_mut() {
                obj.remove("subject_id");
            }
        }
    }
    crate::util::write_json(path, &value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub total: usize,
    pub smokers: usize,
    pub non_smokers: usize,
}

pub fn summarize(records: &[SubjectMetadata]) -> CohortSummary {
    let smokers = records.iter().filter(|r| r.smoker).count();
    CohortSummary {
        total: records.len(),
        smokers,
        non_smokers: records.len() - smokers,
    }
}
