use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metadata::{load_metadata, SubjectMetadata};
use super::recording::{load_recording, EcgRecording};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Recording path relative to the dataset root.
    pub recording: PathBuf,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub version: String,
    pub sampling_rate_hz: f64,
    /// Metadata document path relative to the dataset root.
    pub metadata: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    crate::util::read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectValidation {
    pub subject_id: String,
    pub recording: PathBuf,
    pub duration_s: f64,
    pub masked_fraction: f64,
    pub metadata_completeness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dataset_name: String,
    pub subjects: Vec<SubjectValidation>,
    pub total_duration_s: f64,
    /// One item per problem found; an empty list means the dataset is usable.
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks every manifest entry against the files under `root`.
///
/// Problems with individual entries are collected in the report; only an
/// empty manifest is a hard error.
pub fn validate_dataset(manifest: &DatasetManifest, root: &Path) -> Result<ValidationReport> {
    if manifest.entries.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    let mut errors = Vec::new();

    let metadata: BTreeMap<String, SubjectMetadata> = match load_metadata(&root.join(&manifest.metadata)) {
        Ok(recs) => recs.into_iter().map(|r| (r.subject_id.clone(), r)).collect(),
        Err(e) => {
            errors.push(format!("metadata: {e}"));
            BTreeMap::new()
        }
    };

    let mut seen = BTreeSet::new();
    let mut subjects = Vec::new();
    for entry in &manifest.entries {
        if !seen.insert(entry.subject_id.as_str()) {
            errors.push(format!("duplicate subject_id `{}`", entry.subject_id));
            continue;
        }
        let meta = metadata.get(&entry.subject_id);
        if meta.is_none() && !metadata.is_empty() {
            errors.push(format!(
                "subject `{}` has no metadata record",
                entry.subject_id
            ));
        }
        match load_recording(&root.join(&entry.recording), manifest.sampling_rate_hz) {
            Ok(rec) => subjects.push(SubjectValidation {
                subject_id: entry.subject_id.clone(),
                recording: entry.recording.clone(),
                duration_s: rec.duration_s(),
                masked_fraction: rec.masked_fraction(),
                metadata_completeness: meta.map_or(0.0, |m| m.completeness()),
            }),
            Err(e) => errors.push(format!("subject `{}`: {e}", entry.subject_id)),
        }
    }

    let total_duration_s = subjects.iter().map(|s| s.duration_s).sum();
    Ok(ValidationReport {
        dataset_name: manifest.dataset_name.clone(),
        subjects,
        total_duration_s,
        errors,
    })
}

/// A fully resolved dataset: each recording paired with its metadata record.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub subjects: Vec<(EcgRecording, SubjectMetadata)>,
}

/// Loads `manifest.json` (or the given manifest) under `root`, failing on
/// the first unresolved entry.
pub fn load_dataset(root: &Path, manifest_path: Option<&Path>) -> Result<Dataset> {
    let mpath = manifest_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| root.join(MANIFEST_FILE));
    let manifest = load_manifest(&mpath)?;
    let report = validate_dataset(&manifest, root)?;
    if !report.is_ok() {
        return Err(Error::data(format!(
            "dataset `{}` failed validation:\n  {}",
            manifest.dataset_name,
            report.errors.join("\n  ")
        )));
    }
    let mut metadata: BTreeMap<String, SubjectMetadata> = load_metadata(&root.join(&manifest.metadata))?
        .into_iter()
        .map(|r| (r.subject_id.clone(), r))
        .collect();
    let mut subjects = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let mut rec = load_recording(&root.join(&entry.recording), manifest.sampling_rate_hz)?;
        rec.subject_id = entry.subject_id.clone();
        let meta = metadata
            .remove(&entry.subject_id)
            .ok_or_else(|| Error::data(format!("subject `{}` has no metadata", entry.subject_id)))?;
        subjects.push((rec, meta));
    }
    Ok(Dataset {
        name: manifest.dataset_name,
        subjects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{write_metadata, write_recording, Sex};

    fn meta(id: &str) -> SubjectMetadata {
        SubjectMetadata {
            subject_id: id.into(),
            age_years: 22,
            sex: Sex::Male,
            smoker: false,
            height_cm: None,
            weight_kg: None,
            bmi_kg_m2: Some(22.0),
            sleep_hours: Some(7.0),
            systolic_mmhg: Some(120.0),
            diastolic_mmhg: Some(80.0),
            resting_hr_bpm: Some(65.0),
            family_history: Some(false),
        }
    }

    fn build(root: &Path, n: usize, seconds: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        let mut metas = Vec::new();
        for i in 0..n {
            let id = format!("S{i:02}");
            let rec = EcgRecording::from_samples(&id, 100.0, vec![0.5; seconds * 100]).unwrap();
            let rel = PathBuf::from(format!("rec/{id}.csv"));
            write_recording(&root.join(&rel), &rec).unwrap();
            entries.push(ManifestEntry {
                recording: rel,
                subject_id: id.clone(),
            });
            metas.push(meta(&id));
        }
        write_metadata(&root.join("metadata.json"), &metas).unwrap();
        DatasetManifest {
            dataset_name: "t".into(),
            version: "1".into(),
            sampling_rate_hz: 100.0,
            metadata: "metadata.json".into(),
            entries,
        }
    }

    #[test]
    fn forty_two_three_minute_recordings() {
        let dir = tempfile::tempdir().unwrap();
        let m = build(dir.path(), 42, 180);
        let report = validate_dataset(&m, dir.path()).unwrap();
        assert!(report.is_ok(), "{:?}", report.errors);
        assert_eq!(report.subjects.len(), 42);
        assert_eq!(report.total_duration_s, 7560.0);
    }

    #[test]
    fn missing_file_is_one_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = build(dir.path(), 3, 6);
        m.entries[1].recording = "rec/nope.csv".into();
        let report = validate_dataset(&m, dir.path()).unwrap();
        assert_eq!(report.errors.len(), 1, "{:?}", report.errors);
        assert_eq!(report.subjects.len(), 2);
    }

    #[test]
    fn dangling_metadata_reference() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = build(dir.path(), 2, 6);
        m.entries[0].subject_id = "ghost".into();
        let report = validate_dataset(&m, dir.path()).unwrap();
        assert_eq!(report.errors.len(), 1);
        assert!(report.errors[0].contains("ghost"));
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let m = DatasetManifest {
            dataset_name: "e".into(),
            version: "1".into(),
            sampling_rate_hz: 100.0,
            metadata: "metadata.json".into(),
            entries: vec![],
        };
        let err = validate_dataset(&m, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
    }

    #[test]
    fn duplicates_rejected_and_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = build(dir.path(), 2, 6);
        crate::util::write_json(&dir.path().join(MANIFEST_FILE), &m).unwrap();
        let ds = load_dataset(dir.path(), None).unwrap();
        assert_eq!(ds.subjects.len(), 2);
        assert_eq!(ds.subjects[1].0.subject_id, ds.subjects[1].1.subject_id);

        m.entries.push(m.entries[0].clone());
        let report = validate_dataset(&m, dir.path()).unwrap();
        assert!(report.errors.iter().any(|e| e.contains("duplicate")));
    }
}
