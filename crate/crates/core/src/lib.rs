//! Single-lead ECG pipeline for vascular-age regression.
//!
//! Stages, in processing order:
//!
//! * [`ingest`]: recording, metadata and manifest files
//! * [`preprocess`]: Butterworth low-pass, two-stage median baseline removal,
//!   z-score normalization and cycle-aligned anomaly excision
//! * [`delineate`]: R-peak detection and P/QRS/T fiducial location
//! * [`features`]: the 13 interval/HRV features and 21-column model rows
//! * [`segment`]: overlapping fixed-length windows
//! * [`models`]: linear, ridge, CART tree and random forest regressors
//! * [`eval`]: splits, metrics, histograms, correlation and group statistics
//! * [`synth`]: Gaussian-wave synthetic ECG with analytic fiducials
//! * [`pipeline`]: end-to-end orchestration and report rendering

pub mod delineate;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod segment;
pub mod synth;
mod util;

pub use error::{Error, Result};
