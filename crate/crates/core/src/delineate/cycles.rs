use super::wavelet::atrous_details;
use super::{ms_to_samples, DelineateConfig, FiducialSet};
use crate::util::{median, pop_std};

/// Dominant wave found in a search window, relative to a local baseline.
struct Wave {
    onset: Option<usize>,
    peak: usize,
    offset: Option<usize>,
}

/// Locates the largest-deviation interior extremum in `[lo, hi]` and walks
/// outwards until the signal returns within `boundary_fraction` of its
/// amplitude. The onset walk stops at `onset_floor`, the offset walk at
/// `offset_ceiling`.
fn find_wave(
    x: &[f64],
    lo: usize,
    hi: usize,
    base: &dyn Fn(usize) -> f64,
    min_amp: f64,
    onset_floor: usize,
    offset_ceiling: usize,
    cfg: &DelineateConfig,
) -> Option<Wave> {
    if hi <= lo + 1 || hi >= x.len() {
        return None;
    }
    let peak = (lo..=hi).max_by(|&a, &b| {
        (x[a] - base(a))
            .abs()
            .total_cmp(&(x[b] - base(b)).abs())
            .then(b.cmp(&a))
    })?;
    if peak == lo || peak == hi {
        return None;
    }
    let dev = x[peak] - base(peak);
    let amp = dev.abs();
    if amp < min_amp {
        return None;
    }
    let sign = dev.signum();
    let level = cfg.boundary_fraction * amp;
    let inside = |j: usize| (x[j] - base(j)) * sign > level;

    let onset = (onset_floor..peak).rev().find(|&j| !inside(j));
    let offset = (peak + 1..=offset_ceiling.min(x.len() - 1)).find(|&j| !inside(j));
    Some(Wave {
        onset,
        peak,
        offset,
    })
}

/// Centred 3-point mean; end samples are kept.
fn smooth3(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for j in 1..x.len().saturating_sub(1) {
        y[j] = (x[j - 1] + x[j] + x[j + 1]) / 3.0;
    }
    y
}

/// QRS boundaries and PR-segment baseline level of one beat.
struct QrsFrame {
    r: usize,
    rr: usize,
    onset: Option<usize>,
    offset: Option<usize>,
    /// Baseline anchor (QRS onset or its default) and level there.
    anchor: usize,
    level: f64,
}

/// Delineates every cycle with a complete P-to-T search span.
///
/// QRS boundaries come from the chosen wavelet detail band: the earliest
/// (latest) sample within the search window whose slope magnitude reaches
/// `qrs_slope_fraction` of the window maximum. P and T peaks are the
/// largest deviations from a local baseline inside their windows, with
/// boundaries where the signal falls back to `boundary_fraction` of the
/// wave amplitude. The local baseline is the PR-segment median of each
/// beat, interpolated linearly between neighbouring beats.
pub fn delineate_cycles(
    clean: &[f64],
    fs: f64,
    r_peaks: &[usize],
    cfg: &DelineateConfig,
) -> Vec<FiducialSet> {
    let n = clean.len();
    if r_peaks.len() < 2 || n == 0 {
        return Vec::new();
    }
    let level = cfg.qrs_level.clamp(1, 4);
    let details = atrous_details(clean, level);
    let slope = &details[level - 1];
    let ms = |v: f64| ms_to_samples(v, fs);
    let min_amp = cfg.min_wave_amplitude * pop_std(clean);
    let smooth = smooth3(clean);

    let qrs_search = ms(cfg.qrs_search_ms).max(1);
    let p_search = ms(cfg.p_search_before_r_ms);
    let half_qrs = ms(60.0).max(1);

    let frames: Vec<QrsFrame> = r_peaks
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < n)
        .map(|(k, &r)| {
            let rr = match r_peaks.get(k + 1) {
                Some(&next) => next - r,
                None => r - r_peaks[k - 1],
            };
            let q_lo = r.saturating_sub(qrs_search);
            let q_hi = (r + qrs_search).min(n - 1);
            let max_slope = slope[q_lo..=q_hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let thr = cfg.qrs_slope_fraction * max_slope;
            let (onset, offset) = if max_slope > 0.0 {
                let first = (q_lo..r).find(|&j| slope[j].abs() >= thr);
                let last = (r..=q_hi).rev().find(|&j| slope[j].abs() >= thr);
                (
                    first.filter(|&j| j > q_lo),
                    last.filter(|&j| j < q_hi).map(|j| j + 1).filter(|&j| j > r),
                )
            } else {
                (None, None)
            };
            let anchor = onset.unwrap_or(r.saturating_sub(half_qrs));
            let b_lo = anchor.saturating_sub(ms(cfg.baseline_ms).max(1));
            let level = if anchor > b_lo {
                median(&clean[b_lo..anchor])
            } else {
                clean[anchor]
            };
            QrsFrame {
                r,
                rr,
                onset,
                offset,
                anchor,
                level,
            }
        })
        .collect();

    let line = |a: &QrsFrame, b: Option<&QrsFrame>| {
        let (x0, y0) = (a.anchor as f64, a.level);
        let (x1, y1) = b.map_or((x0 + 1.0, y0), |b| (b.anchor as f64, b.level));
        move |j: usize| y0 + (y1 - y0) * (j as f64 - x0) / (x1 - x0)
    };

    let mut out: Vec<FiducialSet> = Vec::new();
    let mut prev_t_offset: Option<usize> = None;
    for (k, f) in frames.iter().enumerate() {
        let r = f.r;
        if r < p_search {
            continue;
        }
        let qrs_end = f.offset.unwrap_or(r + half_qrs);
        let t_lo = qrs_end + ms(cfg.t_start_after_qrs_ms);
        let t_hi = qrs_end + (cfg.t_end_rr_fraction * f.rr as f64).round() as usize;
        if t_hi >= n {
            continue;
        }
        let next = frames.get(k + 1);
        let next_boundary = next.map_or(n - 1, |nf| nf.r.saturating_sub(qrs_search));
        let t_base = line(f, next);
        let t = find_wave(
            &smooth,
            t_lo,
            t_hi,
            &t_base,
            min_amp,
            f.offset.unwrap_or(r) + 1,
            next_boundary,
            cfg,
        );

        let p_lo = r - p_search;
        let p_hi = f.anchor.saturating_sub(ms(cfg.p_gap_before_qrs_ms));
        let p_floor = prev_t_offset
            .map(|v| v + 1)
            .unwrap_or(0)
            .max(p_lo.saturating_sub(ms(100.0)));
        let p_base = match k.checked_sub(1).map(|j| &frames[j]) {
            Some(prev) => line(prev, Some(f)),
            None => line(f, None),
        };
        let p = find_wave(&smooth, p_lo, p_hi, &p_base, min_amp, p_floor, f.anchor, cfg);

        let mut fid = FiducialSet {
            p_onset: p.as_ref().and_then(|w| w.onset),
            p_peak: p.as_ref().map(|w| w.peak),
            p_offset: p.as_ref().and_then(|w| w.offset),
            qrs_onset: f.onset,
            r_peak: r,
            qrs_offset: f.offset,
            t_onset: t.as_ref().and_then(|w| w.onset),
            t_peak: t.as_ref().map(|w| w.peak),
            t_offset: t.as_ref().and_then(|w| w.offset),
        };
        sanitize(&mut fid);
        prev_t_offset = fid.t_offset.or(prev_t_offset);
        out.push(fid);
    }
    out
}

fn strictly_increasing(v: &[Option<usize>]) -> bool {
    let present: Vec<usize> = v.iter().filter_map(|x| *x).collect();
    present.windows(2).all(|w| w[0] < w[1])
}

/// Drops wave groups that would break the temporal ordering of a cycle.
fn sanitize(f: &mut FiducialSet) {
    let qrs_ok = strictly_increasing(&[f.qrs_onset, Some(f.r_peak), f.qrs_offset]);
    if !qrs_ok {
        f.qrs_onset = None;
        f.qrs_offset = None;
    }
    let first_qrs = f.qrs_onset.unwrap_or(f.r_peak);
    let last_qrs = f.qrs_offset.unwrap_or(f.r_peak);
    let p_ok = strictly_increasing(&[f.p_onset, f.p_peak, f.p_offset, Some(first_qrs)]);
    if !p_ok {
        f.p_onset = None;
        f.p_peak = None;
        f.p_offset = None;
    }
    let t_ok = strictly_increasing(&[Some(last_qrs), f.t_onset, f.t_peak, f.t_offset]);
    if !t_ok {
        f.t_onset = None;
        f.t_peak = None;
        f.t_offset = None;
    }
    debug_assert!(f.is_ordered());
}
