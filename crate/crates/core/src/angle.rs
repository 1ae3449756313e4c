//! Angle arithmetic on the circle: wrapping, minimal signed differences,
//! and unwrapping of sampled angle sequences.

use std::f64::consts::{PI, TAU};

/// Wrap an arbitrary angle into `[0, 2π)`.
pub fn wrap_2pi(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can return exactly TAU when theta is a tiny negative number.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Minimal signed angular difference `a − b`, in `(−π, π]`.
///
/// The result is congruent to `a − b` modulo 2π and has the smallest
/// possible magnitude (π maps to +π, not −π).
pub fn wrap_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

/// Unwrap a sequence of wrapped angles into a continuous trace.
///
/// The first element is kept as-is; every subsequent step is replaced by the
/// minimal signed difference from its predecessor, so the output never jumps
/// by more than π between consecutive samples.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut prev_wrapped = 0.0;
    let mut prev_out = 0.0;
    for (k, &a) in angles.iter().enumerate() {
        if k == 0 {
            out.push(a);
        } else {
            out.push(prev_out + wrap_diff(a, prev_wrapped));
        }
        prev_wrapped = a;
        prev_out = *out.last().unwrap();
    }
    out
}

/// Convert radians to degrees.
pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}
