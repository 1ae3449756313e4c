//! Bump readout: population-vector decoding of spike rasters, angle-trace
//! unwrapping, linear velocity fits (plain and inverse-variance weighted),
//! and drift/tracking error statistics.

use crate::angle::{unwrap_angles, wrap_2pi, wrap_diff};
use crate::engine::SpikeRaster;
use crate::error::{Result, RingError};
use crate::ring::RingGeometry;
use serde::{Deserialize, Serialize};

/// Default sliding-window length for the population vector average.
pub const DEFAULT_PVA_WINDOW: f64 = 0.05;
/// Default sampling interval for decoded traces.
pub const DEFAULT_PVA_DT: f64 = 0.01;
/// Resultant lengths below this fraction of the total count are degenerate.
const DEGENERATE_RESULTANT: f64 = 1e-9;

/// One decoded sample; `valid` is false when the window held no spikes or
/// the vector resultant was degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub time: f64,
    pub angle: f64,
    pub valid: bool,
}

/// Time-ordered decoded angle trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodedTrace {
    pub samples: Vec<TraceSample>,
}

impl DecodedTrace {
    pub fn valid_samples(&self) -> impl Iterator<Item = &TraceSample> {
        self.samples.iter().filter(|s| s.valid)
    }

    pub fn num_valid(&self) -> usize {
        self.valid_samples().count()
    }
}

/// Slope/intercept with goodness-of-fit and the slope's standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
}

fn pva_from_counts(counts: &[u32], angles: &[f64]) -> (f64, bool) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut total = 0u64;
    for (c, a) in counts.iter().zip(angles.iter()) {
        if *c > 0 {
            let cf = *c as f64;
            sx += cf * a.cos();
            sy += cf * a.sin();
            total += *c as u64;
        }
    }
    if total == 0 {
        return (0.0, false);
    }
    let resultant = (sx * sx + sy * sy).sqrt();
    if resultant < DEGENERATE_RESULTANT * total as f64 {
        return (0.0, false);
    }
    (wrap_2pi(sy.atan2(sx)), true)
}

/// Population vector average of spikes in `[t − window, t)`.
pub fn decode_pva(
    raster: &SpikeRaster,
    geom: &RingGeometry,
    t: f64,
    window: f64,
) -> Result<(f64, bool)> {
    if !(window > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "decode window must be positive, got {window}"
        )));
    }
    let counts = raster.counts_between(t - window, t, geom.n());
    Ok(pva_from_counts(&counts, geom.angles()))
}

/// Angle of the neuron with the most spikes in `[t − window, t)` (ties go
/// to the lower index) — the discrete peak-position alternative to the PVA.
pub fn decode_argmax(
    raster: &SpikeRaster,
    geom: &RingGeometry,
    t: f64,
    window: f64,
) -> Result<(f64, bool)> {
    if !(window > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "decode window must be positive, got {window}"
        )));
    }
    let counts = raster.counts_between(t - window, t, geom.n());
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Ok((0.0, false));
    }
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok((geom.angle(best), true))
}

/// Sliding-window PVA trace with arbitrary index grouping: each spike from
/// neuron `i` is attributed to `group_of[i]` (identity when `None`), whose
/// preferred angle is `angles[g]`. Samples lie on the absolute grid
/// `k·dt_out` covering the raster span. This is the shared core behind the
/// per-neuron and per-population decoders.
pub fn decode_trace_grouped(
    raster: &SpikeRaster,
    angles: &[f64],
    group_of: Option<&[usize]>,
    dt_out: f64,
    window: f64,
) -> Result<DecodedTrace> {
    if !(dt_out > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "dt_out must be positive, got {dt_out}"
        )));
    }
    if !(window > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "decode window must be positive, got {window}"
        )));
    }
    let (t_first, t_last) = match (raster.first_time(), raster.last_time()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Ok(DecodedTrace::default()),
    };
    let group = |neuron: u32| -> Result<usize> {
        let g = match group_of {
            None => neuron as usize,
            Some(map) => *map.get(neuron as usize).ok_or_else(|| {
                RingError::Decode(format!("spike from neuron {neuron} outside the group map"))
            })?,
        };
        if g >= angles.len() {
            return Err(RingError::Decode(format!(
                "group {g} has no preferred angle (only {} groups)",
                angles.len()
            )));
        }
        Ok(g)
    };

    let k_first = (t_first / dt_out).floor() as i64 + 1;
    let k_last = (t_last / dt_out).ceil() as i64;
    let mut counts = vec![0u32; angles.len()];
    let mut lo = 0usize;
    let mut hi = 0usize;
    let events = &raster.events;
    let mut samples = Vec::new();
    for k in k_first..=k_last {
        let t = k as f64 * dt_out;
        while hi < events.len() && events[hi].time < t {
            counts[group(events[hi].neuron)?] += 1;
            hi += 1;
        }
        while lo < hi && events[lo].time < t - window {
            counts[group(events[lo].neuron)?] -= 1;
            lo += 1;
        }
        let (angle, valid) = pva_from_counts(&counts, angles);
        samples.push(TraceSample { time: t, angle, valid });
    }
    Ok(DecodedTrace { samples })
}

/// Sliding-window PVA trace sampled every `dt_out` over the raster span.
pub fn decode_trace(
    raster: &SpikeRaster,
    geom: &RingGeometry,
    dt_out: f64,
    window: f64,
) -> Result<DecodedTrace> {
    decode_trace_grouped(raster, geom.angles(), None, dt_out, window)
}

/// Unwrap the valid samples of a trace into a continuous `(time, angle)`
/// sequence (consecutive steps < π in magnitude). Invalid samples are
/// skipped; an all-invalid trace is rejected.
pub fn unwrap(trace: &DecodedTrace) -> Result<Vec<(f64, f64)>> {
    let valid: Vec<&TraceSample> = trace.samples.iter().filter(|s| s.valid).collect();
    if valid.is_empty() {
        return Err(RingError::Decode(
            "cannot unwrap a trace with no valid samples".into(),
        ));
    }
    let angles: Vec<f64> = valid.iter().map(|s| s.angle).collect();
    let unwrapped = unwrap_angles(&angles);
    Ok(valid
        .iter()
        .zip(unwrapped)
        .map(|(s, a)| (s.time, a))
        .collect())
}

/// Ordinary least-squares line over the samples with `t0 ≤ time ≤ t1`.
pub fn fit_bump_velocity(unwrapped: &[(f64, f64)], t0: f64, t1: f64) -> Result<LinearFit> {
    let pts: Vec<(f64, f64)> = unwrapped
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t0 && t <= t1)
        .collect();
    if pts.len() < 3 {
        return Err(RingError::Fit(format!(
            "need at least 3 samples in [{t0}, {t1}], found {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &pts {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(RingError::Fit("all sample times identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let slope_stderr = if pts.len() > 2 {
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    })
}

/// Weighted least squares with per-point weight `1/sem²`; the slope's
/// standard error comes from the weight matrix (measurement-error model).
pub fn weighted_linear_fit(points: &[(f64, f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(RingError::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(_, _, sem)) = points.iter().find(|&&(_, _, s)| !(s > 0.0)) {
        return Err(RingError::Fit(format!(
            "standard errors must be positive, got {sem}"
        )));
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    for &(x, y, sem) in points {
        let w = 1.0 / (sem * sem);
        sw += w;
        swx += w * x;
        swy += w * y;
    }
    let mean_x = swx / sw;
    let mean_y = swy / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y, sem) in points {
        let w = 1.0 / (sem * sem);
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if sxx <= 0.0 {
        return Err(RingError::Fit("all x values identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let slope_stderr = (1.0 / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    })
}

/// Mean absolute error from `target` (degrees) per contiguous window of
/// length `window` over `[t_start, t_end)`; `None` marks windows without a
/// single valid sample.
pub fn drift_windows(
    trace: &DecodedTrace,
    target: f64,
    window: f64,
    t_start: f64,
    t_end: f64,
) -> Result<Vec<(f64, Option<f64>)>> {
    if !(window > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "window must be positive, got {window}"
        )));
    }
    if !(t_end > t_start) {
        return Err(RingError::InvalidConfig(format!(
            "need t_end > t_start, got [{t_start}, {t_end})"
        )));
    }
    let n_windows = ((t_end - t_start) / window).round().max(1.0) as usize;
    let mut out = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let w0 = t_start + w as f64 * window;
        let w1 = w0 + window;
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in trace.samples.iter().filter(|s| s.valid) {
            if s.time >= w0 && s.time < w1 {
                sum += wrap_diff(s.angle, target).abs().to_degrees();
                count += 1;
            }
        }
        out.push((w0, (count > 0).then(|| sum / count as f64)));
    }
    Ok(out)
}

/// Summary tracking error of a decoded trace against a continuous ground
/// truth: per-sample absolute circular error in degrees, with 1-second
/// window means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub mean_deg: f64,
    pub std_deg: f64,
    pub windows: Vec<(f64, Option<f64>)>,
}

/// Compare a decoded trace with a time-interpolated ground truth. The truth
/// must cover every valid sample time; angles are compared on the circle.
pub fn tracking_error(trace: &DecodedTrace, truth: &[(f64, f64)]) -> Result<TrackingError> {
    if truth.len() < 2 {
        return Err(RingError::InvalidConfig(
            "ground truth needs at least two samples".into(),
        ));
    }
    let t_min = truth.first().unwrap().0;
    let t_max = truth.last().unwrap().0;
    let interp = |t: f64| -> Result<f64> {
        if t < t_min - 1e-9 || t > t_max + 1e-9 {
            return Err(RingError::InvalidConfig(format!(
                "truth covers [{t_min}, {t_max}] but the trace has a sample at {t}"
            )));
        }
        let idx = truth.partition_point(|&(tt, _)| tt <= t);
        if idx == 0 {
            return Ok(truth[0].1);
        }
        if idx >= truth.len() {
            return Ok(truth[truth.len() - 1].1);
        }
        let (ta, ya) = truth[idx - 1];
        let (tb, yb) = truth[idx];
        let f = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
        Ok(ya + f * (yb - ya))
    };

    let mut errs: Vec<(f64, f64)> = Vec::new();
    for s in trace.samples.iter().filter(|s| s.valid) {
        let e = wrap_diff(s.angle, interp(s.time)?).abs().to_degrees();
        errs.push((s.time, e));
    }
    if errs.is_empty() {
        return Err(RingError::Decode(
            "no valid samples overlap the ground truth".into(),
        ));
    }
    let m = errs.len() as f64;
    let mean = errs.iter().map(|e| e.1).sum::<f64>() / m;
    let var = if errs.len() > 1 {
        errs.iter().map(|e| (e.1 - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let last_t = errs.last().unwrap().0;
    let n_windows = last_t.div_euclid(1.0) as usize + 1;
    let mut windows = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let w0 = w as f64;
        let w1 = w0 + 1.0;
        let vals: Vec<f64> = errs
            .iter()
            .filter(|&&(t, _)| t >= w0 && t < w1)
            .map(|&(_, e)| e)
            .collect();
        let mean_w = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        windows.push((w0, mean_w));
    }
    Ok(TrackingError {
        mean_deg: mean,
        std_deg: var.sqrt(),
        windows,
    })
}
