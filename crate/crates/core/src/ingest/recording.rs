use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A raw single-lead trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecording {
    pub subject_id: String,
    pub sampling_rate_hz: f64,
    pub samples: Vec<f64>,
    /// `true` marks a usable sample.
    pub validity_mask: Vec<bool>,
}

impl EcgRecording {
    pub fn new(
        subject_id: impl Into<String>,
        sampling_rate_hz: f64,
        samples: Vec<f64>,
        validity_mask: Vec<bool>,
    ) -> Result<Self> {
        if !(sampling_rate_hz > 0.0) || !sampling_rate_hz.is_finite() {
            return Err(Error::data(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if samples.len() != validity_mask.len() {
            return Err(Error::data(format!(
                "mask length {} differs from sample count {}",
                validity_mask.len(),
                samples.len()
            )));
        }
        if samples.is_empty() {
            return Err(Error::data("recording has no samples"));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            sampling_rate_hz,
            samples,
            validity_mask,
        })
    }

    /// Builds a recording where NaN samples are masked and everything else is valid.
    pub fn from_samples(
        subject_id: impl Into<String>,
        sampling_rate_hz: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        let mask = samples.iter().map(|v| !v.is_nan()).collect();
        Self::new(subject_id, sampling_rate_hz, samples, mask)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    pub fn masked_fraction(&self) -> f64 {
        let masked = self.validity_mask.iter().filter(|v| !**v).count();
        masked as f64 / self.len() as f64
    }
}

/// Loads a recording; the subject id is taken from the file stem.
pub fn load_recording(path: &Path, sampling_rate_hz: f64) -> Result<EcgRecording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_recording(&text, path, &subject_id, sampling_rate_hz)
}

/// Parses recording text. `origin` is only used in error messages.
pub fn parse_recording(
    text: &str,
    origin: &Path,
    subject_id: &str,
    sampling_rate_hz: f64,
) -> Result<EcgRecording> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut samples = Vec::new();
    let mut mask = Vec::new();
    let mut indexed: Option<bool> = None;
    let mut last_index: Option<u64> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            return Err(parse_err(lineno, "empty row".into()));
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let value_field = match fields.as_slice() {
            [v] => {
                if indexed == Some(true) {
                    return Err(parse_err(lineno, "missing index column".into()));
                }
                indexed = Some(false);
                *v
            }
            [idx, v] => {
                if indexed == Some(false) {
                    return Err(parse_err(lineno, "unexpected index column".into()));
                }
                indexed = Some(true);
                let idx: u64 = idx
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad sample index `{idx}`")))?;
                if let Some(prev) = last_index {
                    if idx <= prev {
                        return Err(parse_err(
                            lineno,
                            format!("non-monotone sample index {idx} after {prev}"),
                        ));
                    }
                }
                last_index = Some(idx);
                *v
            }
            _ => {
                return Err(parse_err(
                    lineno,
                    format!("expected 1 or 2 fields, got {}", fields.len()),
                ))
            }
        };

        if value_field.eq_ignore_ascii_case("nan") {
            samples.push(f64::NAN);
            mask.push(false);
        } else {
            let v: f64 = value_field
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad sample value `{value_field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value `{value_field}`")));
            }
            samples.push(v);
            mask.push(true);
        }
    }

    if samples.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: "empty file".into(),
        });
    }
    EcgRecording::new(subject_id, sampling_rate_hz, samples, mask)
}

/// Writes one value per line; masked samples are written as `NaN`.
pub fn write_recording(path: &Path, recording: &EcgRecording) -> Result<()> {
    let mut out = String::with_capacity(recording.len() * 12);
    for (v, ok) in recording.samples.iter().zip(&recording.validity_mask) {
        if *ok && v.is_finite() {
            writeln!(out, "{v:?}").expect("write to String");
        } else {
            out.push_str("NaN\n");
        }
    }
    crate::util::write_bytes(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<EcgRecording> {
        parse_recording(text, Path::new("mem.csv"), "mem", 100.0)
    }

    #[test]
    fn three_values_all_valid() {
        let r = parse("0.1\n0.2\n0.3").unwrap();
        assert_eq!(r.samples, vec![0.1, 0.2, 0.3]);
        assert_eq!(r.validity_mask, vec![true; 3]);
    }

    #[test]
    fn nan_token_is_masked() {
        let r = parse("0.1\nNaN\n0.3\n").unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.validity_mask, vec![true, false, true]);
        let r = parse("0.1\nnan\n").unwrap();
        assert_eq!(r.validity_mask, vec![true, false]);
    }

    #[test]
    fn three_minutes_at_100hz() {
        let text: String = (0..18_000).map(|i| format!("{}\n", i % 7)).collect();
        let r = parse(&text).unwrap();
        assert_eq!(r.len(), 18_000);
        assert_eq!(r.duration_s(), 180.0);
    }

    #[test]
    fn indexed_rows() {
        let r = parse("0,1.5\n1,2.5\n2,NaN\n").unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.validity_mask, vec![true, true, false]);
    }

    #[test]
    fn malformed_row_reports_line() {
        match parse("0.1\n0.2\nabc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse("0.1\n\n0.3") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_monotone_index_rejected() {
        match parse("0,1\n2,1\n1,1\n") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("non-monotone"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn write_load_round_trip(values in prop::collection::vec(
            prop_oneof![9 => -1e6f64..1e6, 1 => Just(f64::NAN)], 1..200))
        {
            let rec = EcgRecording::from_samples("rt", 100.0, values).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            write_recording(&path, &rec).unwrap();
            let back = load_recording(&path, 100.0).unwrap();
            prop_assert_eq!(&back.validity_mask, &rec.validity_mask);
            prop_assert_eq!(back.len(), rec.len());
            for (a, b) in back.samples.iter().zip(&rec.samples) {
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
