//! Recording, metadata and manifest I/O.
//!
//! Recordings are plain text, one sample per line, with an optional leading
//! `index,` column. The token `NaN` (any case) marks an unusable sample.
//! Metadata is one JSON document for the whole cohort keyed by subject id,
//! and a manifest ties recording files to metadata records.

mod manifest;
mod metadata;
mod recording;

pub use manifest::{
    load_dataset, load_manifest, validate_dataset, Dataset, DatasetManifest, ManifestEntry,
    SubjectValidation, ValidationReport, MANIFEST_FILE,
};
pub use metadata::{
    load_metadata, parse_metadata, summarize, write_metadata, CohortSummary, Sex, SubjectMetadata,
    BMI_TOLERANCE, METADATA_SCHEMA_VERSION,
};
pub use recording::{load_recording, parse_recording, write_recording, EcgRecording};
