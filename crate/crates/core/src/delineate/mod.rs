//! R-peak detection and P/QRS/T fiducial delineation.

mod cycles;
mod rpeaks;
mod wavelet;

pub use cycles::delineate_cycles;
pub use rpeaks::detect_r_peaks;
pub use wavelet::atrous_details;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fiducial sample indices of one cardiac cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiducialSet {
    pub p_onset: Option<usize>,
    pub p_peak: Option<usize>,
    pub p_offset: Option<usize>,
    pub qrs_onset: Option<usize>,
    pub r_peak: usize,
    pub qrs_offset: Option<usize>,
    pub t_onset: Option<usize>,
    pub t_peak: Option<usize>,
    pub t_offset: Option<usize>,
}

pub const FIDUCIAL_NAMES: [&str; 9] = [
    "p_onset",
    "p_peak",
    "p_offset",
    "qrs_onset",
    "r_peak",
    "qrs_offset",
    "t_onset",
    "t_peak",
    "t_offset",
];

impl FiducialSet {
    pub fn at_r(r_peak: usize) -> Self {
        Self {
            p_onset: None,
            p_peak: None,
            p_offset: None,
            qrs_onset: None,
            r_peak,
            qrs_offset: None,
            t_onset: None,
            t_peak: None,
            t_offset: None,
        }
    }

    /// Fiducials in temporal order, paired with their names.
    pub fn named(&self) -> [(&'static str, Option<usize>); 9] {
        let v = [
            self.p_onset,
            self.p_peak,
            self.p_offset,
            self.qrs_onset,
            Some(self.r_peak),
            self.qrs_offset,
            self.t_onset,
            self.t_peak,
            self.t_offset,
        ];
        std::array::from_fn(|i| (FIDUCIAL_NAMES[i], v[i]))
    }

    fn set(&mut self, name: &str, value: usize) -> bool {
        let slot = match name {
            "p_onset" => &mut self.p_onset,
            "p_peak" => &mut self.p_peak,
            "p_offset" => &mut self.p_offset,
            "qrs_onset" => &mut self.qrs_onset,
            "r_peak" => {
                self.r_peak = value;
                return true;
            }
            "qrs_offset" => &mut self.qrs_offset,
            "t_onset" => &mut self.t_onset,
            "t_peak" => &mut self.t_peak,
            "t_offset" => &mut self.t_offset,
            _ => return false,
        };
        *slot = Some(value);
        true
    }

    /// Present fiducials are strictly increasing in the listed order.
    pub fn is_ordered(&self) -> bool {
        let present: Vec<usize> = self.named().iter().filter_map(|(_, v)| *v).collect();
        present.windows(2).all(|w| w[0] < w[1])
    }

    /// First sample of the cycle: P onset, else QRS onset, else the R peak.
    pub fn cycle_start(&self) -> usize {
        self.p_onset.or(self.qrs_onset).unwrap_or(self.r_peak)
    }

    /// Returns a copy shifted by `delta` samples.
    pub fn shifted(&self, delta: isize) -> Self {
        let s = |v: usize| (v as isize + delta) as usize;
        Self {
            p_onset: self.p_onset.map(s),
            p_peak: self.p_peak.map(s),
            p_offset: self.p_offset.map(s),
            qrs_onset: self.qrs_onset.map(s),
            r_peak: s(self.r_peak),
            qrs_offset: self.qrs_offset.map(s),
            t_onset: self.t_onset.map(s),
            t_peak: self.t_peak.map(s),
            t_offset: self.t_offset.map(s),
        }
    }
}

/// Tunables of the detector and delineator. Durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelineateConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub integration_ms: f64,
    /// Fraction of the running median of recent peak energies.
    pub threshold_factor: f64,
    pub threshold_history: usize,
    pub refractory_ms: f64,
    pub snap_ms: f64,
    /// Dyadic wavelet level (1-4) used for QRS boundaries.
    pub qrs_level: usize,
    pub qrs_search_ms: f64,
    pub qrs_slope_fraction: f64,
    pub t_start_after_qrs_ms: f64,
    pub t_end_rr_fraction: f64,
    pub p_search_before_r_ms: f64,
    pub p_gap_before_qrs_ms: f64,
    /// Wave boundary: signal back within this fraction of the wave amplitude.
    pub boundary_fraction: f64,
    /// Minimum wave amplitude in units of the signal standard deviation.
    pub min_wave_amplitude: f64,
    /// Local baseline window immediately preceding QRS onset.
    pub baseline_ms: f64,
}

impl Default for DelineateConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 5.0,
            band_high_hz: 15.0,
            integration_ms: 150.0,
            threshold_factor: 0.4,
            threshold_history: 8,
            refractory_ms: 250.0,
            snap_ms: 50.0,
            qrs_level: 1,
            qrs_search_ms: 120.0,
            qrs_slope_fraction: 0.1,
            t_start_after_qrs_ms: 80.0,
            t_end_rr_fraction: 0.6,
            p_search_before_r_ms: 300.0,
            p_gap_before_qrs_ms: 20.0,
            boundary_fraction: 0.05,
            min_wave_amplitude: 0.05,
            baseline_ms: 50.0,
        }
    }
}

pub(crate) fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round().max(0.0) as usize
}

/// Writes `cycle_index,fiducial_name,sample_index` rows for every present fiducial.
pub fn write_fiducials_csv(path: &Path, fiducials: &[FiducialSet]) -> Result<()> {
    let mut out = String::from("cycle_index,fiducial_name,sample_index\n");
    for (i, f) in fiducials.iter().enumerate() {
        for (name, v) in f.named() {
            if let Some(v) = v {
                out.push_str(&format!("{i},{name},{v}\n"));
            }
        }
    }
    crate::util::write_bytes(path, out.as_bytes())
}

pub fn read_fiducials_csv(path: &Path) -> Result<Vec<FiducialSet>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out: Vec<FiducialSet> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: msg.to_string(),
        };
        let cycle: usize = row.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad cycle index"))?;
        let name = row.get(1).ok_or_else(|| bad("missing fiducial name"))?;
        let sample: usize = row.get(2).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad sample index"))?;
        if cycle > out.len() {
            return Err(bad("cycle indices must be contiguous"));
        }
        if cycle == out.len() {
            out.push(FiducialSet::at_r(usize::MAX));
        }
        if !out[cycle].set(name, sample) {
            return Err(bad("unknown fiducial name"));
        }
    }
    if out.iter().any(|f| f.r_peak == usize::MAX) {
        return Err(Error::data(format!("{}: cycle without r_peak", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fiducial_csv_round_trip() {
        let mut a = FiducialSet::at_r(100);
        a.qrs_onset = Some(95);
        a.t_offset = Some(140);
        let b = FiducialSet::at_r(171);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_fiducials_csv(&path, &[a, b]).unwrap();
        assert_eq!(read_fiducials_csv(&path).unwrap(), vec![a, b]);
    }

    #[test]
    fn ordering_and_cycle_start() {
        let mut f = FiducialSet::at_r(50);
        f.qrs_onset = Some(45);
        assert!(f.is_ordered());
        assert_eq!(f.cycle_start(), 45);
        f.p_onset = Some(30);
        assert_eq!(f.cycle_start(), 30);
        f.t_peak = Some(40);
        assert!(!f.is_ordered());
    }
}
