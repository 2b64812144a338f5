//! Overlapping fixed-length windows over a recording.
//!
//! Windows are laid out in whole samples: `start_k = k·stride`, kept while
//! `start_k + window ≤ n`. A window is excluded when it touches a masked
//! sample, which after cycle-aligned excision means it overlaps a masked
//! cycle.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub window_s: f64,
    pub stride_s: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            stride_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub subject_id: String,
    pub segment_id: usize,
    pub start_s: f64,
    pub end_s: f64,
    /// `[start_sample, end_sample)`.
    pub start_sample: usize,
    pub end_sample: usize,
    pub excluded: bool,
}

impl Segment {
    /// A cycle belongs to the segment iff its R peak lies inside.
    pub fn contains(&self, sample: usize) -> bool {
        (self.start_sample..self.end_sample).contains(&sample)
    }
}

fn to_samples(seconds: f64, fs: f64, what: &str) -> Result<usize> {
    let s = seconds * fs;
    if !(s.is_finite() && s >= 1.0 - 1e-9) {
        return Err(Error::config(format!("{what} of {seconds} s is shorter than one sample")));
    }
    let r = s.round();
    if (s - r).abs() > 1e-6 {
        return Err(Error::config(format!(
            "{what} of {seconds} s is not a whole number of samples at {fs} Hz"
        )));
    }
    Ok(r as usize)
}

/// Number of windows: `⌊(n − w)/s⌋ + 1` for `n ≥ w`, else 0.
pub fn segment_count(n: usize, window: usize, stride: usize) -> usize {
    if n < window || window == 0 || stride == 0 {
        0
    } else {
        (n - window) / stride + 1
    }
}

/// Windows over a recording of `mask.len()` samples.
pub fn make_segments(
    subject_id: &str,
    mask: &[bool],
    fs: f64,
    cfg: &SegmentConfig,
) -> Result<Vec<Segment>> {
    let w = to_samples(cfg.window_s, fs, "window")?;
    let s = to_samples(cfg.stride_s, fs, "stride")?;
    let n = mask.len();
    if n < w {
        return Err(Error::data(format!(
            "recording `{subject_id}` of {:.3} s is shorter than the {} s window",
            n as f64 / fs,
            cfg.window_s
        )));
    }
    // Prefix count of masked samples for O(1) exclusion checks.
    let mut masked = Vec::with_capacity(n + 1);
    masked.push(0usize);
    for ok in mask {
        masked.push(masked.last().unwrap() + usize::from(!*ok));
    }
    Ok((0..segment_count(n, w, s))
        .map(|k| {
            let a = k * s;
            let b = a + w;
            Segment {
                subject_id: subject_id.to_string(),
                segment_id: k,
                start_s: a as f64 / fs,
                end_s: b as f64 / fs,
                start_sample: a,
                end_sample: b,
                excluded: masked[b] > masked[a],
            }
        })
        .collect())
}
