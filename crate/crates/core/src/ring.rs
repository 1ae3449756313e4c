//! Ring geometry and connectivity: the symmetric stabilizing weights, the
//! antisymmetric velocity kernel, and the boundary attenuation/bias used for
//! mechanically limited joints.
//!
//! All matrices are stored flat in row-major order with the *presynaptic*
//! index as the row: entry `(i, j)` at `i * n + j` is the weight from neuron
//! `i` onto neuron `j`. Kernels indexed by ring offset `(j − i) mod n` are
//! kept alongside the dense matrices; they are built once and mirrored so
//! that symmetry (and antisymmetry) hold bit-exactly.

use crate::angle::{wrap_2pi, wrap_diff};
use crate::error::{Result, RingError};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Uniformly spaced preferred angles on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct RingGeometry {
    n: usize,
    preferred_angles: Vec<f64>,
}

impl RingGeometry {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn angles(&self) -> &[f64] {
        &self.preferred_angles
    }

    pub fn angle(&self, i: usize) -> f64 {
        self.preferred_angles[i]
    }

    /// Angular spacing between adjacent neurons.
    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    /// Index of the neuron whose preferred angle is nearest to `theta`
    /// (ties broken toward the lower index).
    pub fn nearest_index(&self, theta: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &a) in self.preferred_angles.iter().enumerate() {
            let d = wrap_diff(theta, a).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Build a ring of `n` neurons with angles `2πi/n`.
pub fn build_geometry(n: usize) -> Result<RingGeometry> {
    if n < 4 {
        return Err(RingError::InvalidConfig(format!(
            "ring needs at least 4 neurons, got {n}"
        )));
    }
    let preferred_angles = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    Ok(RingGeometry {
        n,
        preferred_angles,
    })
}

/// Coupling gains: global inhibition, cosine-shaped excitation, and the
/// velocity-modulation gain applied to the sine kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub g_inh: f64,
    pub g_cos: f64,
    pub g_sin: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        GainSet {
            g_inh: -16.46,
            g_cos: 15.86,
            g_sin: 0.13,
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<()> {
        if [self.g_inh, self.g_cos, self.g_sin]
            .iter()
            .any(|g| !g.is_finite())
        {
            return Err(RingError::InvalidConfig(format!(
                "gains must be finite, got ({}, {}, {})",
                self.g_inh, self.g_cos, self.g_sin
            )));
        }
        if !(self.g_inh <= 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "g_inh must be nonpositive, got {}",
                self.g_inh
            )));
        }
        if !(self.g_cos >= 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "g_cos must be nonnegative, got {}",
                self.g_cos
            )));
        }
        if !(self.g_sin >= 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "g_sin must be nonnegative, got {}",
                self.g_sin
            )));
        }
        Ok(())
    }
}

/// Mechanical joint limits plus the shape of the out-of-bound handling:
/// attenuation ramp width and the peak extra inhibition applied to neurons
/// outside `[theta_0, theta_l]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConfig {
    theta_0: f64,
    theta_l: f64,
    theta_m_star: f64,
    ramp_width: f64,
    bias_peak: f64,
}

/// Default attenuation ramp width.
pub const DEFAULT_RAMP_WIDTH: f64 = std::f64::consts::PI / 12.0;

impl BoundaryConfig {
    /// Validate limits and derive the center of the unstable out-of-bound
    /// region. `bias_peak` is the magnitude of the extra inhibition at that
    /// center (≥ 0; the sign applied to the weights is always inhibitory).
    pub fn new(theta_0: f64, theta_l: f64, ramp_width: f64, bias_peak: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&theta_0) {
            return Err(RingError::InvalidConfig(format!(
                "theta_0 must lie in [0, 2π), got {theta_0}"
            )));
        }
        if !(theta_l > theta_0 && theta_l < TAU) {
            return Err(RingError::InvalidConfig(format!(
                "theta_l must lie in (theta_0, 2π), got {theta_l}"
            )));
        }
        let forbidden = TAU - (theta_l - theta_0);
        if !(ramp_width > 0.0 && ramp_width <= forbidden / 2.0) {
            return Err(RingError::InvalidConfig(format!(
                "ramp_width must lie in (0, {:.6}], got {ramp_width}",
                forbidden / 2.0
            )));
        }
        if !(bias_peak >= 0.0 && bias_peak.is_finite()) {
            return Err(RingError::InvalidConfig(format!(
                "bias_peak must be a finite nonnegative number, got {bias_peak}"
            )));
        }
        let theta_m_star = wrap_2pi((theta_0 + theta_l) / 2.0 + std::f64::consts::PI);
        Ok(BoundaryConfig {
            theta_0,
            theta_l,
            theta_m_star,
            ramp_width,
            bias_peak,
        })
    }

    /// Limits with the default ramp width and a peak bias of `|g_inh|/2`.
    pub fn with_defaults(theta_0: f64, theta_l: f64, gains: &GainSet) -> Result<Self> {
        Self::new(theta_0, theta_l, DEFAULT_RAMP_WIDTH, gains.g_inh.abs() / 2.0)
    }

    pub fn theta_0(&self) -> f64 {
        self.theta_0
    }

    pub fn theta_l(&self) -> f64 {
        self.theta_l
    }

    /// Center of the out-of-bound arc (antipode of the range midpoint).
    pub fn theta_m_star(&self) -> f64 {
        self.theta_m_star
    }

    pub fn ramp_width(&self) -> f64 {
        self.ramp_width
    }

    pub fn bias_peak(&self) -> f64 {
        self.bias_peak
    }

    pub fn range_mid(&self) -> f64 {
        (self.theta_0 + self.theta_l) / 2.0
    }

    /// Whether `theta` (wrapped) lies within the mechanically reachable arc.
    pub fn in_bounds(&self, theta: f64) -> bool {
        let w = wrap_2pi(theta);
        w >= self.theta_0 && w <= self.theta_l
    }
}

/// Symmetric coupling kernel by ring offset: `g_inh + g_cos·cos(2πd/n)`.
///
/// Values are computed once per distinct angular distance and mirrored, so
/// `kernel[d] == kernel[n − d]` holds bitwise.
pub fn symmetric_kernel(geom: &RingGeometry, gains: &GainSet) -> Vec<f64> {
    let n = geom.n();
    let mut k = vec![0.0; n];
    for d in 0..=n / 2 {
        let val = gains.g_inh + gains.g_cos * (TAU * d as f64 / n as f64).cos();
        k[d] = val;
        if d != 0 && d != n - d {
            k[n - d] = val;
        }
    }
    k
}

/// Sine kernel by ring offset: `sin(2πd/n)` with exact antisymmetry
/// (`kernel[n − d] == −kernel[d]` bitwise, zero at 0 and at the antipode).
pub fn sine_kernel(geom: &RingGeometry) -> Vec<f64> {
    let n = geom.n();
    let mut k = vec![0.0; n];
    for d in 1..(n + 1) / 2 {
        let val = (TAU * d as f64 / n as f64).sin();
        k[d] = val;
        k[n - d] = -val;
    }
    // sin(π) is not exactly zero in floating point; pin it.
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    k
}

fn dense_from_kernel(kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = kernel[(n + j - i) % n];
        }
    }
    m
}

/// Full symmetric weight matrix, entry `(i, j) = g_inh + g_cos·cos(θ_j − θ_i)`.
pub fn symmetric_weights(geom: &RingGeometry, gains: &GainSet) -> Vec<f64> {
    dense_from_kernel(&symmetric_kernel(geom, gains))
}

/// Full antisymmetric kernel matrix, entry `(i, j) = sin(θ_j − θ_i)`.
pub fn asymmetric_kernel(geom: &RingGeometry) -> Vec<f64> {
    dense_from_kernel(&sine_kernel(geom))
}

/// Piecewise-linear velocity-drive attenuation sampled at the preferred
/// angles. `atten_plus` gates positive-velocity drive: 1 inside the range,
/// ramping to 0 at the upper limit and 0 throughout the out-of-bound arc;
/// `atten_minus` mirrors this at the lower limit. With no boundary both
/// vectors are all ones.
pub fn build_attenuation(geom: &RingGeometry, bc: Option<&BoundaryConfig>) -> (Vec<f64>, Vec<f64>) {
    let n = geom.n();
    let bc = match bc {
        None => return (vec![1.0; n], vec![1.0; n]),
        Some(bc) => bc,
    };
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for (j, &theta) in geom.angles().iter().enumerate() {
        if bc.in_bounds(theta) {
            plus[j] = ((bc.theta_l - theta) / bc.ramp_width).min(1.0);
            minus[j] = ((theta - bc.theta_0) / bc.ramp_width).min(1.0);
        }
    }
    (plus, minus)
}

/// Per-neuron outgoing inhibitory surcharge for activity in the forbidden
/// arc: each entry is the extra (negative) weight that neuron contributes to
/// every target per unit of its own synaptic trace. Strongest (−bias_peak)
/// at the arc center θ_m*, tapering linearly to zero at both limits, and
/// zero for all in-range neurons (and everywhere in the unbounded model).
/// Because the surcharge is delivered uniformly to all targets, it damps
/// stray out-of-bound activity without steering a bump parked at a limit.
pub fn boundary_bias(geom: &RingGeometry, bc: Option<&BoundaryConfig>) -> Vec<f64> {
    let n = geom.n();
    let bc = match bc {
        None => return vec![0.0; n],
        Some(bc) => bc,
    };
    let half = (TAU - (bc.theta_l - bc.theta_0)) / 2.0;
    let mut bias = vec![0.0; n];
    for (j, &theta) in geom.angles().iter().enumerate() {
        if !bc.in_bounds(theta) {
            let d = wrap_diff(theta, bc.theta_m_star).abs();
            bias[j] = -bc.bias_peak * (1.0 - d / half).max(0.0);
        }
    }
    bias
}

/// All connectivity for one model: dense matrices, the offset kernels they
/// were built from, boundary attenuation/bias, and the boundary config (if
/// any) that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    n: usize,
    w_sym: Vec<f64>,
    asym_kernel: Vec<f64>,
    sym_kernel_by_offset: Vec<f64>,
    sine_kernel_by_offset: Vec<f64>,
    atten_plus: Vec<f64>,
    atten_minus: Vec<f64>,
    bias: Vec<f64>,
    boundary: Option<BoundaryConfig>,
}

impl WeightSet {
    pub fn build(geom: &RingGeometry, gains: &GainSet, boundary: Option<BoundaryConfig>) -> Result<Self> {
        gains.validate()?;
        let sym_kernel_by_offset = symmetric_kernel(geom, gains);
        let sine_kernel_by_offset = sine_kernel(geom);
        let (atten_plus, atten_minus) = build_attenuation(geom, boundary.as_ref());
        let bias = boundary_bias(geom, boundary.as_ref());
        Ok(WeightSet {
            n: geom.n(),
            w_sym: dense_from_kernel(&sym_kernel_by_offset),
            asym_kernel: dense_from_kernel(&sine_kernel_by_offset),
            sym_kernel_by_offset,
            sine_kernel_by_offset,
            atten_plus,
            atten_minus,
            bias,
            boundary,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w_sym(&self) -> &[f64] {
        &self.w_sym
    }

    pub fn asym_kernel(&self) -> &[f64] {
        &self.asym_kernel
    }

    pub fn sym_kernel_by_offset(&self) -> &[f64] {
        &self.sym_kernel_by_offset
    }

    pub fn sine_kernel_by_offset(&self) -> &[f64] {
        &self.sine_kernel_by_offset
    }

    pub fn atten_plus(&self) -> &[f64] {
        &self.atten_plus
    }

    pub fn atten_minus(&self) -> &[f64] {
        &self.atten_minus
    }

    /// Per-neuron outgoing inhibitory surcharge for out-of-bound activity
    /// (≤ 0 entries; see [`boundary_bias`]).
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn boundary(&self) -> Option<&BoundaryConfig> {
        self.boundary.as_ref()
    }

    pub fn is_bounded(&self) -> bool {
        self.boundary.is_some()
    }
}

/// Velocity-scaled asymmetric weight matrix: for `v > 0`, entry
/// `(i, j) = v·g_sin·atten_plus[j]·sin(θ_j − θ_i)`; for `v < 0` the minus
/// attenuation is used; `v = 0` yields the zero matrix.
pub fn effective_asym_weights(ws: &WeightSet, gains: &GainSet, v: f64) -> Vec<f64> {
    let n = ws.n;
    let mut m = vec![0.0; n * n];
    if v == 0.0 {
        return m;
    }
    let atten = if v > 0.0 { &ws.atten_plus } else { &ws.atten_minus };
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = v * gains.g_sin * atten[j] * ws.asym_kernel[i * n + j];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    #[test]
    fn geometry_four_neurons() {
        let g = build_geometry(4).unwrap();
        let expect = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (a, e) in g.angles().iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn geometry_120_spacing() {
        let g = build_geometry(120).unwrap();
        assert_eq!(g.n(), 120);
        for w in g.angles().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], PI / 60.0, epsilon = 1e-12);
        }
        // Uniform spacing to 1e-12 and strictly increasing from 0.
        assert_eq!(g.angle(0), 0.0);
    }

    #[test]
    fn geometry_rejects_small_rings() {
        assert!(build_geometry(3).is_err());
        assert!(build_geometry(0).is_err());
    }

    #[test]
    fn symmetric_weights_match_published_endpoints() {
        let g = build_geometry(120).unwrap();
        let gains = GainSet::default();
        let w = symmetric_weights(&g, &gains);
        // Zero separation and antipodal separation with the default gains.
        assert_relative_eq!(w[0], -0.60, epsilon = 1e-12);
        assert_relative_eq!(w[60], -32.32, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_weights_constant_when_g_cos_zero() {
        let g = build_geometry(8).unwrap();
        let gains = GainSet {
            g_inh: -2.0,
            g_cos: 0.0,
            g_sin: 0.1,
        };
        let w = symmetric_weights(&g, &gains);
        assert!(w.iter().all(|&x| x == -2.0));
    }

    #[test]
    fn symmetric_weights_exactly_symmetric() {
        let g = build_geometry(10).unwrap();
        let w = symmetric_weights(&g, &GainSet::default());
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(w[i * 10 + j], w[j * 10 + i]);
            }
        }
    }

    #[test]
    fn asymmetric_kernel_antisymmetric_zero_diagonal() {
        let g = build_geometry(12).unwrap();
        let k = asymmetric_kernel(&g);
        for i in 0..12 {
            assert_eq!(k[i * 12 + i], 0.0);
            for j in 0..12 {
                assert_eq!(k[i * 12 + j], -k[j * 12 + i]);
            }
        }
        // Quarter turn gives exactly the peak of the sine.
        assert_relative_eq!(k[3], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn attenuation_interior_and_limits() {
        let g = build_geometry(120).unwrap();
        let bc = BoundaryConfig::new(0.0, 3.0 * PI / 2.0, PI / 12.0, 8.23).unwrap();
        let (plus, minus) = build_attenuation(&g, Some(&bc));
        let mid = g.nearest_index(bc.range_mid());
        assert_eq!(plus[mid], 1.0);
        assert_eq!(minus[mid], 1.0);
        // Upper limit angle 3π/2 is neuron 90 exactly: positive drive fully cut.
        assert_eq!(plus[90], 0.0);
        // Lower limit: negative drive fully cut, positive drive available.
        assert_eq!(minus[0], 0.0);
        assert_eq!(plus[0], 1.0);
        // Out-of-bound arc carries no velocity drive at all.
        for j in 91..120 {
            assert_eq!(plus[j], 0.0);
            assert_eq!(minus[j], 0.0);
        }
        for &a in plus.iter().chain(minus.iter()) {
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn attenuation_unbounded_all_ones() {
        let g = build_geometry(16).unwrap();
        let (plus, minus) = build_attenuation(&g, None);
        assert!(plus.iter().all(|&a| a == 1.0));
        assert!(minus.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn attenuation_has_interior_plateau() {
        let g = build_geometry(240).unwrap();
        let bc = BoundaryConfig::new(0.0, PI, PI / 12.0, 1.0).unwrap();
        let (plus, minus) = build_attenuation(&g, Some(&bc));
        let plateau = (0..240)
            .filter(|&j| plus[j] == 1.0 && minus[j] == 1.0)
            .count();
        assert!(plateau > 0);
    }

    #[test]
    fn boundary_bias_peak_and_taper() {
        let g = build_geometry(120).unwrap();
        let bc = BoundaryConfig::new(0.0, PI, PI / 12.0, 4.0).unwrap();
        let bias = boundary_bias(&g, Some(&bc));
        // θ_m* = wrap(π/2 + π) = 3π/2, neuron 90.
        assert_relative_eq!(bc.theta_m_star(), 3.0 * PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(bias[90], -4.0, epsilon = 1e-12);
        // In-bound neurons carry no bias.
        for j in 0..=60 {
            assert_eq!(bias[j], 0.0);
        }
        // Taper: magnitude decreases toward the limits.
        assert!(bias[75].abs() < bias[90].abs());
        assert!(bias[105].abs() < bias[90].abs());
    }

    #[test]
    fn boundary_config_rejects_bad_limits() {
        assert!(BoundaryConfig::new(1.0, 0.5, 0.1, 1.0).is_err());
        assert!(BoundaryConfig::new(0.0, TAU, 0.1, 1.0).is_err());
        assert!(BoundaryConfig::new(0.0, PI, 0.0, 1.0).is_err());
        // Ramp wider than half the out-of-bound arc.
        assert!(BoundaryConfig::new(0.0, 3.0 * PI / 2.0, PI / 3.0, 1.0).is_err());
        assert!(BoundaryConfig::new(0.0, 3.0 * PI / 2.0, PI / 4.0, 1.0).is_ok());
    }

    #[test]
    fn effective_weights_zero_velocity() {
        let g = build_geometry(10).unwrap();
        let ws = WeightSet::build(&g, &GainSet::default(), None).unwrap();
        let m = effective_asym_weights(&ws, &GainSet::default(), 0.0);
        assert!(m.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn effective_weights_sign_flip_unbounded() {
        let g = build_geometry(10).unwrap();
        let gains = GainSet::default();
        let ws = WeightSet::build(&g, &gains, None).unwrap();
        let p = effective_asym_weights(&ws, &gains, 0.7);
        let m = effective_asym_weights(&ws, &gains, -0.7);
        for (a, b) in p.iter().zip(m.iter()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn effective_weights_quarter_turn_interior() {
        let g = build_geometry(4).unwrap();
        let gains = GainSet::default();
        let ws = WeightSet::build(&g, &gains, None).unwrap();
        let m = effective_asym_weights(&ws, &gains, 1.0);
        // One neuron ahead on a 4-ring is a quarter turn: weight = g_sin.
        assert_relative_eq!(m[1], 0.13, epsilon = 1e-12);
    }

    #[test]
    fn circulant_property_unbounded() {
        let g = build_geometry(9).unwrap();
        let w = symmetric_weights(&g, &GainSet::default());
        for i in 0..9 {
            for j in 0..9 {
                let d = (9 + j - i) % 9;
                assert_eq!(w[i * 9 + j], w[d]);
            }
        }
    }
}
