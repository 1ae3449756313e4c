//! Two-stage parameter tuning for the ring network.
//!
//! Stage one is a coarse grid search over the currents (and optionally the
//! recurrent gains) scored by a stationarity loss: hold the commanded
//! velocity at zero, and ask that the decoded bump stay where it was
//! initialized while the most active neurons fire near a target rate.
//! Stage two refines the velocity gain `g_sin` alone, descending the
//! squared mismatch between fitted bump velocity and commanded velocity
//! over a set of probe velocities with a central finite-difference
//! gradient. The simulator is deterministic given a seed, so the
//! finite-difference loss is well-posed; probes share fixed seeds across
//! gain candidates (common random numbers) to keep the comparison fair.
//!
//! A robustness sweep re-runs the stationary calibration at off-nominal
//! ring sizes or target rates — retuning only the currents, never the
//! gains — and reports tracking error on a fixed wide-motion trajectory.

use crate::decoder::{decode_trace, fit_bump_velocity, tracking_error, unwrap};
use crate::engine::{run, SimConfig, VelocityProfile};
use crate::error::{Result, RingError};
use crate::ring::{build_geometry, GainSet, WeightSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Loss value assigned when a simulation fails outright (non-finite
/// membrane state or any other engine error). Large but finite so ranking
/// and descent still work.
pub const BLOWUP_SENTINEL_LOSS: f64 = 1e9;
/// Penalty added when the bump dies (no decodable activity in the final
/// third of the stationary run).
pub const DEAD_BUMP_PENALTY: f64 = 1e6;

/// Relative weights of the loss terms.
///
/// `stability` multiplies the mean decoded drift normalized by the
/// stationary tolerance, `rate` multiplies the squared relative deviation
/// of the peak firing rate from its target, and `velocity` multiplies the
/// squared velocity-match residuals during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub stability: f64,
    pub rate: f64,
    pub velocity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            stability: 1.0,
            rate: 1.0,
            velocity: 1.0,
        }
    }
}

/// What calibration is asked to achieve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationObjective {
    /// Peak firing rate the most active neurons should settle near (Hz).
    pub target_peak_rate: f64,
    /// Acceptable mean decoded drift of a stationary bump (degrees) over
    /// the 0.9 s evaluation run; the stability loss term is normalized by
    /// this value.
    pub stationary_tolerance_deg: f64,
    /// Probe velocities (rad/s) for the velocity-match stage.
    pub velocity_set: Vec<f64>,
    pub loss_weights: LossWeights,
}

impl Default for CalibrationObjective {
    fn default() -> Self {
        CalibrationObjective {
            target_peak_rate: 100.0,
            stationary_tolerance_deg: 5.0,
            velocity_set: vec![0.2, -0.2, 0.5, -0.5, 1.0, -1.0],
            loss_weights: LossWeights::default(),
        }
    }
}

impl CalibrationObjective {
    /// Check the probe set (nonzero, both signs present) and the weights
    /// (nonnegative, not all zero).
    pub fn validate(&self) -> Result<()> {
        if !(self.target_peak_rate.is_finite() && self.target_peak_rate > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "target peak rate must be positive and finite, got {}",
                self.target_peak_rate
            )));
        }
        if !(self.stationary_tolerance_deg.is_finite() && self.stationary_tolerance_deg > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "stationary tolerance must be positive and finite, got {}",
                self.stationary_tolerance_deg
            )));
        }
        if self.velocity_set.is_empty() {
            return Err(RingError::InvalidConfig(
                "velocity probe set is empty".into(),
            ));
        }
        for &v in &self.velocity_set {
            if !v.is_finite() || v == 0.0 {
                return Err(RingError::InvalidConfig(format!(
                    "velocity probes must be finite and nonzero, got {v}"
                )));
            }
        }
        let has_pos = self.velocity_set.iter().any(|&v| v > 0.0);
        let has_neg = self.velocity_set.iter().any(|&v| v < 0.0);
        if !(has_pos && has_neg) {
            return Err(RingError::InvalidConfig(
                "velocity probe set must include both signs".into(),
            ));
        }
        let w = &self.loss_weights;
        for (name, value) in [
            ("stability", w.stability),
            ("rate", w.rate),
            ("velocity", w.velocity),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(RingError::InvalidConfig(format!(
                    "loss weight `{name}` must be nonnegative and finite, got {value}"
                )));
            }
        }
        if w.stability == 0.0 && w.rate == 0.0 && w.velocity == 0.0 {
            return Err(RingError::InvalidConfig(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Slope of decoded bump velocity against commanded velocity, constrained
/// through the origin, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub stderr: f64,
}

/// One velocity-probe measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeFit {
    /// Commanded velocity (rad/s).
    pub velocity: f64,
    /// Seed of the probe run.
    pub seed: u64,
    /// Fitted bump velocity (rad/s) from the unwrapped decoded trace.
    pub fitted_slope: f64,
    /// Standard error of the fitted slope.
    pub stderr: f64,
    pub r_squared: f64,
}

/// Bookkeeping attached to a calibration result.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    /// Per-probe velocity fits (empty for grid-stage results).
    pub probe_fits: Vec<ProbeFit>,
    /// True when the refinement loop met its stopping tolerance (grid-stage
    /// results set this trivially).
    pub converged: bool,
    /// Human-readable notes, e.g. a non-convergence warning.
    pub warnings: Vec<String>,
    /// Number of loss evaluations spent producing this result.
    pub evaluations: usize,
}

/// One tuned operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gains: GainSet,
    pub i_bg: f64,
    pub init_current: f64,
    /// Scalar loss this point was ranked or refined by.
    pub loss: f64,
    /// Velocity-gain slope; absent until the refinement stage measures it.
    pub velocity_gain_kappa: Option<KappaEstimate>,
    pub diagnostics: CalibrationDiagnostics,
}

/// What a stationary evaluation run observed.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StationaryStats {
    mean_error_deg: f64,
    peak_rate_hz: f64,
    dead: bool,
}

/// Duration of the stationary evaluation run (seconds).
pub const STATIONARY_RUN_SECONDS: f64 = 0.9;
/// Decoded samples before this time are excluded from the drift term so
/// the initialization transient does not count against stability.
const STATIONARY_SETTLE_SECONDS: f64 = 0.2;
/// Start of the window used for the peak-rate measurement and the
/// bump-death check.
const STATIONARY_TAIL_SECONDS: f64 = 0.6;

fn stationary_stats(cfg: &SimConfig) -> Result<StationaryStats> {
    let t_end = STATIONARY_RUN_SECONDS;
    let (raster, _) = run(cfg, &VelocityProfile::zero(), t_end)?;
    let trace = decode_trace(
        &raster,
        &cfg.geometry,
        crate::decoder::DEFAULT_PVA_DT,
        crate::decoder::DEFAULT_PVA_WINDOW,
    )?;
    let mut err_sum = 0.0;
    let mut err_n = 0usize;
    let mut tail_alive = false;
    for s in trace.valid_samples() {
        if s.time >= STATIONARY_SETTLE_SECONDS && s.time <= t_end {
            err_sum += crate::angle::wrap_diff(s.angle, cfg.init_angle).abs();
            err_n += 1;
        }
        if s.time >= STATIONARY_TAIL_SECONDS {
            tail_alive = true;
        }
    }
    let rates = crate::engine::mean_rate_profile(
        &raster,
        STATIONARY_TAIL_SECONDS - 0.3,
        t_end,
        cfg.geometry.n(),
    )?;
    let peak_rate_hz = rates.iter().cloned().fold(0.0_f64, f64::max);
    let dead = !tail_alive || err_n == 0;
    let mean_error_deg = if err_n > 0 {
        (err_sum / err_n as f64).to_degrees()
    } else {
        180.0
    };
    Ok(StationaryStats {
        mean_error_deg,
        peak_rate_hz,
        dead,
    })
}

fn loss_from_outcome(outcome: Result<StationaryStats>, obj: &CalibrationObjective) -> f64 {
    match outcome {
        Err(_) => BLOWUP_SENTINEL_LOSS,
        Ok(stats) => {
            let w = &obj.loss_weights;
            let stability = stats.mean_error_deg / obj.stationary_tolerance_deg;
            let rate_dev = stats.peak_rate_hz / obj.target_peak_rate - 1.0;
            let mut loss = w.stability * stability + w.rate * rate_dev * rate_dev;
            if stats.dead {
                loss += DEAD_BUMP_PENALTY;
            }
            loss
        }
    }
}

/// Score a configuration by how well a zero-velocity run holds its bump.
///
/// Runs 0.9 s at zero commanded velocity and combines three terms: the
/// mean absolute decoded drift from the initialization angle (normalized
/// by the objective's tolerance), the squared relative deviation of the
/// peak firing rate from the target rate, and a large penalty if the bump
/// dies before the end of the run. A failed simulation maps to
/// [`BLOWUP_SENTINEL_LOSS`]. Deterministic given `cfg.seed`.
pub fn stationarity_loss(cfg: &SimConfig, obj: &CalibrationObjective) -> Result<f64> {
    obj.validate()?;
    cfg.validate()?;
    Ok(loss_from_outcome(stationary_stats(cfg), obj))
}

/// One linearly spaced parameter axis of the search grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    /// Number of grid points along this axis (≥ 1; 1 pins the axis to
    /// `min`).
    pub steps: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || steps == 0 {
            return Err(RingError::InvalidConfig(format!(
                "grid axis must be finite with at least one step, got [{min}, {max}] x{steps}"
            )));
        }
        if steps > 1 && max < min {
            return Err(RingError::InvalidConfig(format!(
                "grid axis bounds out of order: [{min}, {max}]"
            )));
        }
        Ok(GridAxis { min, max, steps })
    }

    /// Pin an axis to a single value.
    pub fn fixed(value: f64) -> Self {
        GridAxis {
            min: value,
            max: value,
            steps: 1,
        }
    }

    fn value(&self, idx: usize) -> f64 {
        if self.steps <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * idx as f64 / (self.steps - 1) as f64
        }
    }

    fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }
}

/// Search space for the grid stage.
///
/// The currents (`i_bg`, `init_current`) are always searched. The
/// recurrent gains default to single-point axes pinned at the published
/// values; set `include_gains` and widen those axes to search them too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub i_bg: GridAxis,
    pub init_current: GridAxis,
    pub g_inh: GridAxis,
    pub g_cos: GridAxis,
    /// When false (default), `g_inh`/`g_cos` stay pinned at their `min`
    /// regardless of the axis step counts.
    pub include_gains: bool,
    /// Maximum number of grid points evaluated in one search.
    pub budget: usize,
}

/// Default evaluation budget for one grid search.
pub const DEFAULT_GRID_BUDGET: usize = 2000;
/// Default number of points per searched axis.
pub const DEFAULT_GRID_STEPS: usize = 5;

impl Default for GridSpace {
    fn default() -> Self {
        let gains = GainSet::default();
        GridSpace {
            i_bg: GridAxis {
                min: 0.990,
                max: 0.999,
                steps: DEFAULT_GRID_STEPS,
            },
            init_current: GridAxis {
                min: 1.0,
                max: 3.0,
                steps: DEFAULT_GRID_STEPS,
            },
            g_inh: GridAxis::fixed(gains.g_inh),
            g_cos: GridAxis::fixed(gains.g_cos),
            include_gains: false,
            budget: DEFAULT_GRID_BUDGET,
        }
    }
}

impl GridSpace {
    fn effective_axes(&self) -> [GridAxis; 4] {
        let mut g_inh = self.g_inh;
        let mut g_cos = self.g_cos;
        if !self.include_gains {
            g_inh = GridAxis::fixed(g_inh.min);
            g_cos = GridAxis::fixed(g_cos.min);
        }
        [self.i_bg, self.init_current, g_inh, g_cos]
    }

    /// Total number of points this space enumerates.
    pub fn n_points(&self) -> usize {
        self.effective_axes().iter().map(|a| a.steps).product()
    }
}

/// One grid point: currents plus (possibly pinned) recurrent gains.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    i_bg: f64,
    init_current: f64,
    g_inh: f64,
    g_cos: f64,
}

fn enumerate_points(space: &GridSpace) -> Vec<GridPoint> {
    let [ax_ibg, ax_init, ax_ginh, ax_gcos] = space.effective_axes();
    let mut points =
        Vec::with_capacity(ax_ibg.steps * ax_init.steps * ax_ginh.steps * ax_gcos.steps);
    for &g_inh in &ax_ginh.values() {
        for &g_cos in &ax_gcos.values() {
            for &i_bg in &ax_ibg.values() {
                for &init_current in &ax_init.values() {
                    points.push(GridPoint {
                        i_bg,
                        init_current,
                        g_inh,
                        g_cos,
                    });
                }
            }
        }
    }
    points
}

fn config_at_point(template: &SimConfig, point: &GridPoint) -> Result<SimConfig> {
    let mut cfg = template.clone();
    cfg.neuron.i_bg = point.i_bg;
    cfg.init_current = point.init_current;
    if point.g_inh != cfg.gains.g_inh || point.g_cos != cfg.gains.g_cos {
        let gains = GainSet {
            g_inh: point.g_inh,
            g_cos: point.g_cos,
            g_sin: cfg.gains.g_sin,
        };
        gains.validate()?;
        let boundary = cfg.weights.boundary().cloned();
        cfg.weights = WeightSet::build(&cfg.geometry, &gains, boundary)?;
        cfg.gains = gains;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Evaluate the stationarity loss at every point of `space` (in parallel)
/// and return the points ranked best-first.
///
/// The template supplies everything the grid does not vary (ring size,
/// time constants, noise, seed). Ties in loss break by grid enumeration
/// index, so the ranking is deterministic. Exceeding `space.budget`
/// (checked before any simulation) is an error.
pub fn grid_search(
    template: &SimConfig,
    space: &GridSpace,
    obj: &CalibrationObjective,
) -> Result<Vec<CalibrationResult>> {
    obj.validate()?;
    template.validate()?;
    for axis in space.effective_axes() {
        GridAxis::new(axis.min, axis.max, axis.steps)?;
    }
    let n_points = space.n_points();
    if n_points == 0 {
        return Err(RingError::InvalidConfig("empty grid space".into()));
    }
    if n_points > space.budget {
        return Err(RingError::Budget(format!(
            "grid has {n_points} points, budget is {}",
            space.budget
        )));
    }
    let points = enumerate_points(space);
    let mut scored: Vec<(usize, GridPoint, f64)> = points
        .into_par_iter()
        .enumerate()
        .map(|(idx, point)| {
            let loss = match config_at_point(template, &point) {
                Ok(cfg) => loss_from_outcome(stationary_stats(&cfg), obj),
                Err(_) => BLOWUP_SENTINEL_LOSS,
            };
            (idx, point, loss)
        })
        .collect();
    scored.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .map(|(_, point, loss)| CalibrationResult {
            gains: GainSet {
                g_inh: point.g_inh,
                g_cos: point.g_cos,
                g_sin: template.gains.g_sin,
            },
            i_bg: point.i_bg,
            init_current: point.init_current,
            loss,
            velocity_gain_kappa: None,
            diagnostics: CalibrationDiagnostics {
                converged: true,
                ..CalibrationDiagnostics::default()
            },
        })
        .collect())
}

/// Knobs for the velocity-gain refinement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Length of each probe run (seconds).
    pub probe_duration: f64,
    /// Velocity fit window start (seconds).
    pub fit_start: f64,
    /// Velocity fit window end (seconds).
    pub fit_end: f64,
    /// Seeds each probe velocity is replicated over; fixed across gain
    /// candidates so loss differences reflect the gain, not the noise.
    pub probe_seeds: Vec<u64>,
    /// Maximum accepted descent steps.
    pub max_iters: usize,
    /// Half-width of the central finite difference in `g_sin`.
    pub fd_step: f64,
    /// Initial descent step size in `g_sin` units per unit gradient.
    pub learning_rate: f64,
    /// Stop once an accepted step changes `g_sin` by less than this.
    pub gsin_tolerance: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            probe_duration: 6.0,
            fit_start: 1.0,
            fit_end: 5.8,
            probe_seeds: vec![11, 12],
            max_iters: 12,
            fd_step: 0.03,
            learning_rate: 0.8,
            gsin_tolerance: 5e-3,
        }
    }
}

impl RefineOptions {
    fn validate(&self) -> Result<()> {
        if !(self.probe_duration.is_finite() && self.probe_duration > 0.0) {
            return Err(RingError::InvalidConfig(
                "probe duration must be positive".into(),
            ));
        }
        if !(self.fit_start >= 0.0 && self.fit_end > self.fit_start)
            || self.fit_end > self.probe_duration
        {
            return Err(RingError::InvalidConfig(format!(
                "probe fit window [{}, {}] must sit inside (0, {})",
                self.fit_start, self.fit_end, self.probe_duration
            )));
        }
        if self.probe_seeds.is_empty() {
            return Err(RingError::InvalidConfig("no probe seeds".into()));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0)
            || !(self.learning_rate.is_finite() && self.learning_rate > 0.0)
            || !(self.gsin_tolerance.is_finite() && self.gsin_tolerance > 0.0)
        {
            return Err(RingError::InvalidConfig(
                "finite-difference step, learning rate, and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn config_with_gsin(template: &SimConfig, base: &CalibrationResult, g_sin: f64) -> Result<SimConfig> {
    let mut cfg = template.clone();
    cfg.neuron.i_bg = base.i_bg;
    cfg.init_current = base.init_current;
    let gains = GainSet {
        g_inh: base.gains.g_inh,
        g_cos: base.gains.g_cos,
        g_sin,
    };
    gains.validate()?;
    let boundary = cfg.weights.boundary().cloned();
    cfg.weights = WeightSet::build(&cfg.geometry, &gains, boundary)?;
    cfg.gains = gains;
    cfg.validate()?;
    Ok(cfg)
}

fn probe_jobs(obj: &CalibrationObjective, opts: &RefineOptions) -> Vec<(f64, u64)> {
    let mut jobs = Vec::with_capacity(obj.velocity_set.len() * opts.probe_seeds.len());
    for &v in &obj.velocity_set {
        for &seed in &opts.probe_seeds {
            jobs.push((v, seed));
        }
    }
    jobs
}

fn run_probe(
    template: &SimConfig,
    base: &CalibrationResult,
    g_sin: f64,
    velocity: f64,
    seed: u64,
    opts: &RefineOptions,
) -> Result<ProbeFit> {
    let mut cfg = config_with_gsin(template, base, g_sin)?;
    cfg.seed = seed;
    let (raster, _) = run(&cfg, &VelocityProfile::constant(velocity), opts.probe_duration)?;
    let trace = decode_trace(
        &raster,
        &cfg.geometry,
        crate::decoder::DEFAULT_PVA_DT,
        crate::decoder::DEFAULT_PVA_WINDOW,
    )?;
    let unwrapped = unwrap(&trace)?;
    let fit = fit_bump_velocity(&unwrapped, opts.fit_start, opts.fit_end)?;
    Ok(ProbeFit {
        velocity,
        seed,
        fitted_slope: fit.slope,
        stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
    })
}

fn probe_all(
    template: &SimConfig,
    base: &CalibrationResult,
    g_sin: f64,
    obj: &CalibrationObjective,
    opts: &RefineOptions,
) -> Result<Vec<ProbeFit>> {
    let jobs = probe_jobs(obj, opts);
    let mut fits: Vec<(usize, ProbeFit)> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(idx, (v, seed))| run_probe(template, base, g_sin, v, seed, opts).map(|f| (idx, f)))
        .collect::<Result<_>>()?;
    fits.sort_by_key(|(idx, _)| *idx);
    Ok(fits.into_iter().map(|(_, f)| f).collect())
}

fn velocity_match_loss(fits: &[ProbeFit], obj: &CalibrationObjective) -> f64 {
    let w = obj.loss_weights.velocity.max(f64::MIN_POSITIVE);
    w * fits
        .iter()
        .map(|f| {
            let r = f.fitted_slope - f.velocity;
            r * r
        })
        .sum::<f64>()
        / fits.len() as f64
}

/// Slope through the origin of fitted vs commanded velocity, weighted by
/// inverse squared fit standard errors, with the standard error of the
/// slope itself.
pub fn kappa_through_origin(fits: &[ProbeFit]) -> Result<KappaEstimate> {
    if fits.is_empty() {
        return Err(RingError::Fit("no probe fits to pool".into()));
    }
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for f in fits {
        let se = if f.stderr.is_finite() && f.stderr > 0.0 {
            f.stderr
        } else {
            return Err(RingError::Fit(format!(
                "probe at {} rad/s has unusable stderr {}",
                f.velocity, f.stderr
            )));
        };
        let w = 1.0 / (se * se);
        sxx += w * f.velocity * f.velocity;
        sxy += w * f.velocity * f.fitted_slope;
    }
    if sxx <= 0.0 {
        return Err(RingError::Fit("zero weighted variance in probes".into()));
    }
    Ok(KappaEstimate {
        kappa: sxy / sxx,
        stderr: (1.0 / sxx).sqrt(),
    })
}

/// Refine `g_sin` so fitted bump velocity matches commanded velocity.
///
/// Minimizes the mean squared per-probe mismatch by central
/// finite-difference gradient descent with backtracking, varying `g_sin`
/// only; currents and the other gains are taken from `base` unchanged.
/// The returned result is never worse than the input under the same probe
/// protocol. If the loop exhausts `max_iters` without the step shrinking
/// below tolerance, the best point found so far is returned and a warning
/// is recorded in the diagnostics.
pub fn refine_gsin(
    template: &SimConfig,
    base: &CalibrationResult,
    obj: &CalibrationObjective,
    opts: &RefineOptions,
) -> Result<CalibrationResult> {
    obj.validate()?;
    opts.validate()?;
    let mut evaluations = 0usize;
    let mut eval = |g: f64| -> Result<(f64, Vec<ProbeFit>)> {
        evaluations += 1;
        let fits = probe_all(template, base, g, obj, opts)?;
        Ok((velocity_match_loss(&fits, obj), fits))
    };

    let mut g_best = base.gains.g_sin;
    let (mut loss_best, mut fits_best) = eval(g_best)?;
    let mut g_cur = g_best;
    let mut loss_cur = loss_best;
    let mut lr = opts.learning_rate;
    let mut converged = false;
    let mut warnings = Vec::new();

    for _ in 0..opts.max_iters {
        let h = opts.fd_step;
        let (loss_plus, _) = eval(g_cur + h)?;
        let (loss_minus, _) = eval(g_cur - h)?;
        let grad = (loss_plus - loss_minus) / (2.0 * h);
        if grad == 0.0 {
            converged = true;
            break;
        }
        // Backtracking line search along the descent direction.
        let mut accepted = false;
        let mut step_lr = lr;
        for _ in 0..8 {
            let g_try = g_cur - step_lr * grad;
            let (loss_try, fits_try) = eval(g_try)?;
            if loss_try < loss_cur {
                let delta = (g_try - g_cur).abs();
                g_cur = g_try;
                loss_cur = loss_try;
                if loss_try < loss_best {
                    g_best = g_try;
                    loss_best = loss_try;
                    fits_best = fits_try;
                }
                // Re-expand toward the nominal rate so one early
                // backtrack does not pin later iterations to tiny steps.
                lr = (step_lr * 2.0).min(opts.learning_rate);
                accepted = true;
                if delta < opts.gsin_tolerance {
                    converged = true;
                }
                break;
            }
            step_lr *= 0.5;
        }
        if !accepted {
            // No improving step in this direction at any tried scale: the
            // current point is a local minimum at this resolution.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "gain refinement stopped at max_iters={} before reaching step tolerance; returning best point found",
            opts.max_iters
        ));
    }
    let kappa = kappa_through_origin(&fits_best)?;
    Ok(CalibrationResult {
        gains: GainSet {
            g_sin: g_best,
            ..base.gains
        },
        i_bg: base.i_bg,
        init_current: base.init_current,
        loss: loss_best,
        velocity_gain_kappa: Some(kappa),
        diagnostics: CalibrationDiagnostics {
            probe_fits: fits_best,
            converged,
            warnings,
            evaluations,
        },
    })
}

/// Which parameter a robustness sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Ring size; each sweep value is rounded to a neuron count.
    NNeurons,
    /// Multiplier on the objective's target peak rate.
    RateScale,
}

/// One row of a robustness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub value: f64,
    /// Mean absolute tracking error (degrees) on the fixed wide
    /// trajectory; absent when this point failed.
    pub mean_abs_error_deg: Option<f64>,
    /// Currents chosen by the per-point recalibration.
    pub i_bg: f64,
    pub current_scale: f64,
    /// Peak stationary rate at the recalibrated point (Hz).
    pub peak_rate_hz: f64,
    /// Failure description when `mean_abs_error_deg` is absent.
    pub error: Option<String>,
}

/// Knobs for the robustness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessOptions {
    /// Background currents tried during per-point recalibration.
    pub i_bg_grid: Vec<f64>,
    /// Recurrent current scales tried during per-point recalibration.
    pub current_scale_grid: Vec<f64>,
    /// Seed for the tracking run.
    pub seed: u64,
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        RobustnessOptions {
            i_bg_grid: vec![0.970, 0.980, 0.988, 0.994, 0.996, 0.998],
            current_scale_grid: vec![0.4, 0.6, 0.8],
            seed: 7,
        }
    }
}

/// The fixed wide-motion trajectory used by [`robustness_sweep`]: a
/// deterministic sequence of constant-velocity legs spanning well over a
/// full revolution of cumulative motion. Returns the velocity profile and
/// its exact integral as (time, angle) breakpoints starting from
/// `init_angle`.
pub fn wide_reference_profile(init_angle: f64) -> (VelocityProfile, Vec<(f64, f64)>, f64) {
    let legs: [(f64, f64); 7] = [
        (0.0, 0.0),
        (0.5, 0.9),
        (2.5, -0.7),
        (4.5, 0.5),
        (6.0, -0.9),
        (8.0, 0.6),
        (9.5, 0.0),
    ];
    let t_end = 10.0;
    let profile = VelocityProfile::new(legs.to_vec()).expect("reference legs are well-formed");
    let mut truth = Vec::with_capacity(legs.len() + 1);
    let mut angle = init_angle;
    truth.push((0.0, angle));
    for i in 0..legs.len() {
        let (t0, v) = legs[i];
        let t1 = if i + 1 < legs.len() { legs[i + 1].0 } else { t_end };
        angle += v * (t1 - t0);
        truth.push((t1, angle));
    }
    (profile, truth, t_end)
}

fn recalibrate_currents(
    template: &SimConfig,
    obj: &CalibrationObjective,
    opts: &RobustnessOptions,
) -> Result<(f64, f64, StationaryStats)> {
    let mut best: Option<(f64, f64, f64, StationaryStats)> = None;
    for &i_bg in &opts.i_bg_grid {
        for &scale in &opts.current_scale_grid {
            let mut cfg = template.clone();
            cfg.neuron.i_bg = i_bg;
            cfg.current_scale = scale;
            cfg.validate()?;
            let (loss, stats) = match stationary_stats(&cfg) {
                Ok(stats) => (loss_from_outcome(Ok(stats), obj), stats),
                Err(_) => (
                    BLOWUP_SENTINEL_LOSS,
                    StationaryStats {
                        mean_error_deg: 180.0,
                        peak_rate_hz: 0.0,
                        dead: true,
                    },
                ),
            };
            let better = match &best {
                None => true,
                Some((_, _, best_loss, _)) => loss < *best_loss,
            };
            if better {
                best = Some((i_bg, scale, loss, stats));
            }
        }
    }
    let (i_bg, scale, _, stats) =
        best.ok_or_else(|| RingError::Calibration("empty recalibration grid".into()))?;
    Ok((i_bg, scale, stats))
}

fn robustness_point(
    template: &SimConfig,
    param: SweepParam,
    value: f64,
    obj: &CalibrationObjective,
    opts: &RobustnessOptions,
) -> Result<RobustnessPoint> {
    let mut cfg = match param {
        SweepParam::NNeurons => {
            let n = value.round() as i64;
            if n < 4 || (n as f64 - value).abs() > 1e-9 {
                return Err(RingError::InvalidConfig(format!(
                    "ring size sweep value must be an integer ≥ 4, got {value}"
                )));
            }
            let n = n as usize;
            let geometry = build_geometry(n)?;
            let weights = WeightSet::build(&geometry, &template.gains, None)?;
            let mut cfg = template.clone();
            cfg.geometry = geometry;
            cfg.weights = weights;
            cfg
        }
        SweepParam::RateScale => {
            if !(value.is_finite() && value > 0.0) {
                return Err(RingError::InvalidConfig(format!(
                    "rate scale must be positive, got {value}"
                )));
            }
            template.clone()
        }
    };
    let mut point_obj = obj.clone();
    if let SweepParam::RateScale = param {
        point_obj.target_peak_rate = obj.target_peak_rate * value;
    }
    let (i_bg, scale, stats) = recalibrate_currents(&cfg, &point_obj, opts)?;
    cfg.neuron.i_bg = i_bg;
    cfg.current_scale = scale;
    cfg.seed = opts.seed;
    cfg.validate()?;

    let (profile, truth, t_end) = wide_reference_profile(cfg.init_angle);
    let (raster, _) = run(&cfg, &profile, t_end)?;
    let trace = decode_trace(
        &raster,
        &cfg.geometry,
        crate::decoder::DEFAULT_PVA_DT,
        crate::decoder::DEFAULT_PVA_WINDOW,
    )?;
    let err = tracking_error(&trace, &truth)?;
    Ok(RobustnessPoint {
        value,
        mean_abs_error_deg: Some(err.mean_deg),
        i_bg,
        current_scale: scale,
        peak_rate_hz: stats.peak_rate_hz,
        error: None,
    })
}

/// Re-run the stationary calibration at off-nominal settings and measure
/// tracking accuracy on a fixed wide trajectory.
///
/// For each sweep value, only the currents (`i_bg`, `current_scale`) are
/// retuned — gains stay fixed — by a small grid minimizing the
/// stationarity loss (with the target rate rescaled when sweeping
/// `RateScale`). A failed point is recorded with its error message and
/// the sweep continues.
pub fn robustness_sweep(
    template: &SimConfig,
    param: SweepParam,
    values: &[f64],
    obj: &CalibrationObjective,
    opts: &RobustnessOptions,
) -> Result<Vec<RobustnessPoint>> {
    obj.validate()?;
    template.validate()?;
    if values.is_empty() {
        return Err(RingError::InvalidConfig("empty sweep value list".into()));
    }
    if opts.i_bg_grid.is_empty() || opts.current_scale_grid.is_empty() {
        return Err(RingError::InvalidConfig(
            "recalibration grids must be nonempty".into(),
        ));
    }
    Ok(values
        .iter()
        .map(|&value| {
            robustness_point(template, param, value, obj, opts).unwrap_or_else(|e| {
                RobustnessPoint {
                    value,
                    mean_abs_error_deg: None,
                    i_bg: f64::NAN,
                    current_scale: f64::NAN,
                    peak_rate_hz: f64::NAN,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect())
}
