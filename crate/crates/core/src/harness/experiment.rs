//! Experiment orchestration and reports.
//!
//! Every runner is deterministic given its configuration and seed, and each
//! produces a [`Report`] that embeds both, so any report can be regenerated
//! bit-identically with [`regenerate`]. All angles in reports are degrees;
//! all internal computation is radians.

use crate::angle::wrap_2pi;
use crate::calibration::{
    grid_search, kappa_through_origin, refine_gsin, CalibrationObjective, CalibrationResult,
    GridSpace, RefineOptions, RobustnessOptions, RobustnessPoint, SweepParam,
};
use crate::decoder::{
    decode_trace, drift_windows, fit_bump_velocity, tracking_error, unwrap, DecodedTrace,
    LinearFit,
};
use crate::discrete_hw::{
    build_hw_ring, decode_hw_trace, mix_seed, run_hw, velocity_sweep, ConnectionTable, CueSpec,
    SweepRow, VelocityConnectionSet,
};
use crate::engine::{run, SpikeRaster};
use crate::error::{Result, RingError};
use crate::harness::config::HarnessConfig;
use crate::harness::trajectory::{
    import_trajectory, make_sine, make_trapezoid, MotionRegime, SinusoidParams, Trajectory,
    TrajectoryKind, TrajectorySample, TrapezoidParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which network variant an experiment drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Continuous ring without joint limits.
    Unbounded,
    /// Continuous ring with the joint-limit model.
    Bounded,
    /// Quantized hardware emulation.
    Hw,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Unbounded => "unbounded",
            ModelKind::Bounded => "bounded",
            ModelKind::Hw => "hw",
        })
    }
}

impl FromStr for ModelKind {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbounded" => Ok(ModelKind::Unbounded),
            "bounded" => Ok(ModelKind::Bounded),
            "hw" => Ok(ModelKind::Hw),
            other => Err(RingError::InvalidConfig(format!(
                "unknown model {other:?} (expected unbounded, bounded, or hw)"
            ))),
        }
    }
}

/// Self-contained description of where an experiment's trajectory comes
/// from; enough to rebuild it exactly (imported data is embedded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TrajectorySource {
    /// Seeded trapezoidal preset over the configured joint range.
    Preset(TrapezoidParams),
    /// Sinusoidal profile.
    Sine(SinusoidParams),
    /// Constant commanded velocity from a fixed start angle.
    Constant {
        angle: f64,
        velocity: f64,
        duration: f64,
    },
    /// Externally supplied samples (embedded for reproducibility).
    Imported {
        path: Option<String>,
        samples: Vec<TrajectorySample>,
    },
}

impl TrajectorySource {
    /// Load a CSV trajectory and embed its samples.
    pub fn from_file(path: &Path) -> Result<Self> {
        let traj = import_trajectory(path)?;
        Ok(TrajectorySource::Imported {
            path: Some(path.display().to_string()),
            samples: traj.samples().to_vec(),
        })
    }

    /// Build the concrete trajectory.
    pub fn build(&self) -> Result<Trajectory> {
        match self {
            TrajectorySource::Preset(p) => make_trapezoid(p),
            TrajectorySource::Sine(p) => make_sine(p),
            TrajectorySource::Constant {
                angle,
                velocity,
                duration,
            } => Trajectory::from_samples(
                vec![
                    TrajectorySample {
                        time: 0.0,
                        angle: *angle,
                        velocity: *velocity,
                    },
                    TrajectorySample {
                        time: *duration,
                        angle: *angle + *velocity * *duration,
                        velocity: 0.0,
                    },
                ],
                TrajectoryKind::SyntheticTrapezoid,
            ),
            TrajectorySource::Imported { samples, .. } => {
                Trajectory::from_samples(samples.clone(), TrajectoryKind::Imported)
            }
        }
    }
}

/// One tracking experiment: a model, a trajectory, and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelKind,
    pub source: TrajectorySource,
    pub seed: u64,
}

/// Summary metrics of one tracking run. `mean_error_deg`/`std_error_deg`
/// and the 1 s window table come from the tracking-error metric; counts
/// come from the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingOutcome {
    pub model: ModelKind,
    pub seed: u64,
    pub trajectory_kind: TrajectoryKind,
    pub duration_s: f64,
    pub mean_error_deg: f64,
    pub std_error_deg: f64,
    /// Per-1 s-window mean absolute error (window start, degrees); empty
    /// windows are null.
    pub windows_1s: Vec<(f64, Option<f64>)>,
    pub n_valid_samples: usize,
    pub n_spikes: usize,
}

/// Full output of a tracking run, including the artifacts the CLI writes.
#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub outcome: TrackingOutcome,
    pub trace: DecodedTrace,
    pub raster: SpikeRaster,
    pub truth: Vec<(f64, f64)>,
}

fn tag_seed(seed: u64) -> impl Fn(RingError) -> RingError {
    move |e| match e {
        RingError::Numeric(msg) => {
            RingError::Numeric(format!("{msg} (seed {seed} replays this run)"))
        }
        other => other,
    }
}

/// Run one tracking experiment: initialize the bump at the trajectory's
/// initial angle with the configured pulse, drive only the velocity
/// channel, decode, and score against the exact trajectory.
pub fn run_tracking_experiment(
    config: &HarnessConfig,
    spec: &ExperimentSpec,
) -> Result<TrackingRun> {
    let bounded = match spec.model {
        ModelKind::Unbounded => false,
        ModelKind::Bounded => true,
        ModelKind::Hw => {
            return Err(RingError::InvalidConfig(
                "tracking experiments drive the continuous model; \
                 use the hw experiments for the quantized network"
                    .into(),
            ))
        }
    };
    let trajectory = spec.source.build()?;
    if trajectory.start_time() != 0.0 {
        return Err(RingError::Trajectory(format!(
            "tracking needs a trajectory starting at time 0, got {}",
            trajectory.start_time()
        )));
    }
    let init_angle = wrap_2pi(trajectory.initial_angle());
    let cfg = config.sim_config(init_angle, spec.seed, bounded)?;
    let profile = trajectory.to_velocity_profile()?;
    let t_end = trajectory.end_time();
    let (raster, _) = run(&cfg, &profile, t_end).map_err(tag_seed(spec.seed))?;
    let mut trace = decode_trace(
        &raster,
        &cfg.geometry,
        config.experiment.pva_dt,
        config.experiment.pva_window,
    )?;
    // The decode grid rounds the raster span outward; drop any trailing
    // sample past the trajectory end, which has no ground truth to score.
    trace.samples.retain(|s| s.time <= t_end + 1e-9);
    let truth = trajectory.truth();
    let err = tracking_error(&trace, &truth)?;
    Ok(TrackingRun {
        outcome: TrackingOutcome {
            model: spec.model,
            seed: spec.seed,
            trajectory_kind: trajectory.kind(),
            duration_s: t_end,
            mean_error_deg: err.mean_deg,
            std_error_deg: err.std_deg,
            windows_1s: err.windows,
            n_valid_samples: trace.num_valid(),
            n_spikes: raster.len(),
        },
        trace,
        raster,
        truth,
    })
}

/// One bounded/unbounded pair on a shared trajectory and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair: usize,
    /// Seed shared by the trajectory and both simulations.
    pub seed: u64,
    pub bounded_mean_deg: f64,
    pub unbounded_mean_deg: f64,
    /// True when the bounded model's mean error is strictly smaller.
    pub bounded_wins: bool,
}

/// Paired bounded-vs-unbounded comparison. The two models of each pair see
/// the identical trajectory, seed, and currents — the only difference is
/// the joint-limit modulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub regime: MotionRegime,
    pub n_pairs: usize,
    pub rows: Vec<PairRow>,
    pub bounded_wins: usize,
    pub ties: usize,
    pub bounded_mean_deg: f64,
    pub bounded_std_deg: f64,
    pub unbounded_mean_deg: f64,
    pub unbounded_std_deg: f64,
    /// One-sided exact sign test: probability of at least this many bounded
    /// wins among the non-tied pairs under a fair coin.
    pub sign_test_p: f64,
}

/// Exact one-sided sign test: `P[X >= wins]` for `X ~ Binomial(wins +
/// losses, 1/2)`. Ties must already be excluded.
pub fn sign_test_one_sided(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // Direct summation; n is small in every caller.
    let mut coeff = 1.0_f64; // C(n, k) running value
    let mut total = 0.0_f64;
    for k in 0..=n {
        if k >= wins {
            total += coeff;
        }
        coeff = coeff * (n - k) as f64 / (k + 1) as f64;
    }
    (total / 2.0_f64.powi(n as i32)).min(1.0)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Run `n_pairs` paired comparisons on seeded preset trajectories over the
/// configured joint range. Pair `i` uses seed `base_seed + i` for the
/// trajectory and both simulations.
pub fn run_paired_comparison(
    config: &HarnessConfig,
    regime: MotionRegime,
    n_pairs: usize,
    base_seed: u64,
) -> Result<PairedReport> {
    if n_pairs == 0 {
        return Err(RingError::InvalidConfig("need at least one pair".into()));
    }
    let rows: Vec<PairRow> = (0..n_pairs)
        .into_par_iter()
        .map(|i| -> Result<PairRow> {
            let seed = base_seed + i as u64;
            let source = TrajectorySource::Preset(TrapezoidParams {
                theta_0: config.boundary.theta_0,
                theta_l: config.boundary.theta_l,
                regime,
                seed,
            });
            let run_model = |model: ModelKind| -> Result<f64> {
                let run = run_tracking_experiment(
                    config,
                    &ExperimentSpec {
                        name: format!("pair-{i}-{model}"),
                        model,
                        source: source.clone(),
                        seed,
                    },
                )?;
                Ok(run.outcome.mean_error_deg)
            };
            let bounded = run_model(ModelKind::Bounded)?;
            let unbounded = run_model(ModelKind::Unbounded)?;
            Ok(PairRow {
                pair: i,
                seed,
                bounded_mean_deg: bounded,
                unbounded_mean_deg: unbounded,
                bounded_wins: bounded < unbounded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let wins = rows.iter().filter(|r| r.bounded_wins).count();
    let ties = rows
        .iter()
        .filter(|r| r.bounded_mean_deg == r.unbounded_mean_deg)
        .count();
    let losses = n_pairs - wins - ties;
    let (bm, bs) = mean_std(&rows.iter().map(|r| r.bounded_mean_deg).collect::<Vec<_>>());
    let (um, us) = mean_std(&rows.iter().map(|r| r.unbounded_mean_deg).collect::<Vec<_>>());
    Ok(PairedReport {
        regime,
        n_pairs,
        rows,
        bounded_wins: wins,
        ties,
        bounded_mean_deg: bm,
        bounded_std_deg: bs,
        unbounded_mean_deg: um,
        unbounded_std_deg: us,
        sign_test_p: sign_test_one_sided(wins, losses),
    })
}

// --- hardware experiments ---

/// Drift of one cued hardware run, summarized in 0.5 s windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRunRow {
    pub seed_index: usize,
    pub population: usize,
    /// Derived per-run seed (replays the run).
    pub run_seed: u64,
    /// (window start, mean |error| in degrees); null when the window held
    /// no decodable activity.
    pub windows: Vec<(f64, Option<f64>)>,
    pub worst_window_deg: Option<f64>,
    /// True when some window had no decodable activity.
    pub dead: bool,
}

/// Hardware drift-stability report: per-run window errors and the
/// across-run median of every window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwDriftReport {
    pub n_seeds: usize,
    pub n_populations: usize,
    pub window_s: f64,
    /// Evaluation range (seconds, relative to run start).
    pub eval_start_s: f64,
    pub eval_end_s: f64,
    pub rows: Vec<DriftRunRow>,
    /// Median across runs of each window's mean error (degrees); a dead
    /// window counts as infinite, so a mostly-dead ensemble fails loudly.
    pub median_windows_deg: Vec<(f64, f64)>,
    pub worst_median_deg: f64,
    pub n_dead_runs: usize,
    /// One population spacing in degrees — the structural drift bound.
    pub spacing_deg: f64,
}

/// Drift window length (seconds).
pub const DRIFT_WINDOW: f64 = 0.5;
/// Drift evaluation span after the cue (seconds).
pub const DRIFT_EVAL_SPAN: f64 = 5.0;

/// Measure cue-and-hold drift: `n_seeds` seeds x every starting
/// population, each run cued for the configured duration and tracked over
/// the following [`DRIFT_EVAL_SPAN`] seconds in [`DRIFT_WINDOW`] windows.
pub fn run_hw_drift(
    config: &HarnessConfig,
    n_seeds: usize,
    base_seed: u64,
) -> Result<HwDriftReport> {
    if n_seeds == 0 {
        return Err(RingError::InvalidConfig("need at least one seed".into()));
    }
    let topo = config.hw_topology()?;
    let table = build_hw_ring(&topo, &config.gain_set())?;
    let eval_start = config.hw.cue_duration;
    let eval_end = eval_start + DRIFT_EVAL_SPAN;
    if config.hw.drift_t_end < eval_end {
        return Err(RingError::InvalidConfig(format!(
            "drift run length {} cannot cover the evaluation window ending at {}",
            config.hw.drift_t_end, eval_end
        )));
    }
    let jobs: Vec<(usize, usize)> = (0..n_seeds)
        .flat_map(|s| (0..topo.n_pops).map(move |p| (s, p)))
        .collect();
    let rows: Vec<DriftRunRow> = jobs
        .into_par_iter()
        .map(|(seed_index, population)| -> Result<DriftRunRow> {
            let run_seed = mix_seed(base_seed, seed_index as u64, population as u64, 0xD1);
            let opts = config.hw_run_options(run_seed, config.hw.drift_t_end);
            let cue = CueSpec {
                population,
                duration: config.hw.cue_duration,
                amplitude: config.hw.cue_amplitude,
            };
            let raster = run_hw(&topo, &table, &[], &cue, &opts)?;
            let trace = decode_hw_trace(&raster, &topo)?;
            let windows = drift_windows(
                &trace,
                topo.pop_angle(population),
                DRIFT_WINDOW,
                eval_start,
                eval_end,
            )?;
            let worst = windows
                .iter()
                .filter_map(|w| w.1)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            let dead = windows.iter().any(|w| w.1.is_none());
            Ok(DriftRunRow {
                seed_index,
                population,
                run_seed,
                windows,
                worst_window_deg: worst,
                dead,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_windows = rows[0].windows.len();
    let mut median_windows = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let mut values: Vec<f64> = rows
            .iter()
            .map(|r| r.windows[w].1.unwrap_or(f64::INFINITY))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = values.len() / 2;
        let median = if values.len() % 2 == 1 {
            values[mid]
        } else {
            0.5 * (values[mid - 1] + values[mid])
        };
        median_windows.push((rows[0].windows[w].0, median));
    }
    let worst_median = median_windows
        .iter()
        .map(|w| w.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HwDriftReport {
        n_seeds,
        n_populations: topo.n_pops,
        window_s: DRIFT_WINDOW,
        eval_start_s: eval_start,
        eval_end_s: eval_end,
        n_dead_runs: rows.iter().filter(|r| r.dead).count(),
        spacing_deg: topo.pop_spacing().to_degrees(),
        rows,
        median_windows_deg: median_windows,
        worst_median_deg: worst_median,
    })
}

/// Check that doubling the connection count doubles the mean velocity
/// within the combined 95% confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingCheck {
    pub low_count: u32,
    pub high_count: u32,
    pub low_mean: f64,
    pub high_mean: f64,
    pub ratio: f64,
    /// `high_mean - 2*low_mean`.
    pub difference: f64,
    /// 95% tolerance on that difference from the combined SEMs.
    pub tolerance_95: f64,
    pub within: bool,
}

/// Hardware velocity-sweep report: per-count statistics, the weighted
/// linear fit, and doubling checks for every (k, 2k) pair swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwSweepReport {
    pub rows: Vec<SweepRow>,
    pub fit: Option<LinearFit>,
    pub doubling: Vec<DoublingCheck>,
}

fn doubling_checks(rows: &[SweepRow]) -> Vec<DoublingCheck> {
    let mut checks = Vec::new();
    for low in rows {
        for high in rows {
            if high.count == 2 * low.count {
                let difference = high.mean_velocity - 2.0 * low.mean_velocity;
                let tolerance =
                    1.96 * ((2.0 * low.sem).powi(2) + high.sem.powi(2)).sqrt();
                checks.push(DoublingCheck {
                    low_count: low.count,
                    high_count: high.count,
                    low_mean: low.mean_velocity,
                    high_mean: high.mean_velocity,
                    ratio: high.mean_velocity / low.mean_velocity,
                    difference,
                    tolerance_95: tolerance,
                    within: difference.abs() <= tolerance,
                });
            }
        }
    }
    checks
}

/// Sweep mean bump velocity against connection count.
pub fn run_hw_velocity_sweep(
    config: &HarnessConfig,
    counts: &[u32],
    repeats: usize,
    base_seed: u64,
) -> Result<HwSweepReport> {
    let topo = config.hw_topology()?;
    let table = build_hw_ring(&topo, &config.gain_set())?;
    let opts = config.hw_sweep_options(base_seed);
    let sweep = velocity_sweep(&topo, &table, counts, repeats, &opts)?;
    Ok(HwSweepReport {
        doubling: doubling_checks(&sweep.rows),
        rows: sweep.rows,
        fit: sweep.fit,
    })
}

/// Slope of the decoded bump over one schedule phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub label: String,
    /// Velocity connections active during the phase.
    pub count: u32,
    pub fit_start_s: f64,
    pub fit_end_s: f64,
    pub slope_rad_s: f64,
    pub slope_stderr: f64,
}

/// Acceleration/recovery report: a baseline phase with no velocity
/// connections, one phase per connection step, and a recovery phase after
/// removal. Stationary phases must hold still; step phases must advance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwAccelReport {
    pub population: usize,
    pub seed: u64,
    pub counts: Vec<u32>,
    pub phases: Vec<PhaseFit>,
    /// Stationarity bound on fitted slopes: one population spacing per 3 s
    /// (rad/s).
    pub slope_bound_rad_s: f64,
    /// True when baseline and recovery slopes are inside the bound.
    pub stationary_ok: bool,
    /// True when every step phase has a positive slope.
    pub translation_positive: bool,
}

/// Artifacts of one acceleration run.
#[derive(Debug, Clone)]
pub struct HwAccelRun {
    pub report: HwAccelReport,
    pub trace: DecodedTrace,
    pub raster: SpikeRaster,
}

/// Settling time excluded from a phase before fitting its slope.
pub const ACCEL_SETTLE: f64 = 0.5;
/// Time the added connections are removed (seconds).
pub const ACCEL_REMOVE_AT: f64 = 9.0;

/// Run the acceleration/recovery schedule: cue, no velocity connections
/// until the configured switch-on, then the given counts in equal steps
/// until [`ACCEL_REMOVE_AT`], then none again until the end of the run.
pub fn run_hw_acceleration(
    config: &HarnessConfig,
    counts: &[u32],
    population: usize,
    seed: u64,
) -> Result<HwAccelRun> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(RingError::InvalidConfig(
            "need at least one nonzero connection count".into(),
        ));
    }
    let topo = config.hw_topology()?;
    let table = build_hw_ring(&topo, &config.gain_set())?;
    let t_end = config.hw.drift_t_end;
    let t_on = config.hw.velocity_on;
    if !(config.hw.cue_duration < t_on && t_on < ACCEL_REMOVE_AT && ACCEL_REMOVE_AT < t_end) {
        return Err(RingError::InvalidConfig(format!(
            "acceleration schedule needs cue end {} < velocity-on {} < removal {} < run end {}",
            config.hw.cue_duration, t_on, ACCEL_REMOVE_AT, t_end
        )));
    }
    let step = (ACCEL_REMOVE_AT - t_on) / counts.len() as f64;
    let mut schedule = Vec::with_capacity(counts.len() + 1);
    let mut phase_spans: Vec<(String, u32, f64, f64)> = Vec::new();
    phase_spans.push((
        "baseline".to_string(),
        0,
        config.hw.cue_duration,
        t_on,
    ));
    for (i, &count) in counts.iter().enumerate() {
        let t_start = t_on + i as f64 * step;
        let t_stop = t_on + (i + 1) as f64 * step;
        schedule.push((t_start, VelocityConnectionSet::build(&topo, 1, count)?));
        phase_spans.push((format!("step-{count}"), count, t_start + ACCEL_SETTLE, t_stop));
    }
    schedule.push((ACCEL_REMOVE_AT, VelocityConnectionSet::none(&topo)?));
    phase_spans.push((
        "recovery".to_string(),
        0,
        ACCEL_REMOVE_AT + ACCEL_SETTLE,
        t_end,
    ));

    let opts = config.hw_run_options(seed, t_end);
    let cue = CueSpec {
        population,
        duration: config.hw.cue_duration,
        amplitude: config.hw.cue_amplitude,
    };
    let raster = run_hw(&topo, &table, &schedule, &cue, &opts).map_err(tag_seed(seed))?;
    let trace = decode_hw_trace(&raster, &topo)?;
    let unwrapped = unwrap(&trace)?;
    let mut phases = Vec::with_capacity(phase_spans.len());
    for (label, count, t0, t1) in phase_spans {
        let fit = fit_bump_velocity(&unwrapped, t0, t1)?;
        phases.push(PhaseFit {
            label,
            count,
            fit_start_s: t0,
            fit_end_s: t1,
            slope_rad_s: fit.slope,
            slope_stderr: fit.slope_stderr,
        });
    }
    let slope_bound = topo.pop_spacing() / 3.0;
    let stationary_ok = phases
        .iter()
        .filter(|p| p.count == 0)
        .all(|p| p.slope_rad_s.abs() < slope_bound);
    let translation_positive = phases
        .iter()
        .filter(|p| p.count > 0)
        .all(|p| p.slope_rad_s > 0.0);
    Ok(HwAccelRun {
        report: HwAccelReport {
            population,
            seed,
            counts: counts.to_vec(),
            phases,
            slope_bound_rad_s: slope_bound,
            stationary_ok,
            translation_positive,
        },
        trace,
        raster,
    })
}

// --- calibration and robustness wrappers ---

/// Output of the `calibrate` command: the current grid search and the
/// velocity-gain refinement that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub grid: CalibrationResult,
    pub refined: CalibrationResult,
}

/// Grid-search the background current and initialization pulse at the
/// configured gains, then refine the velocity gain from that operating
/// point.
pub fn run_calibration(config: &HarnessConfig, budget: Option<usize>) -> Result<CalibrationSummary> {
    let template = config.sim_config(
        config.boundary.theta_0 + 0.5 * (config.boundary.theta_l - config.boundary.theta_0),
        config.experiment.seed,
        false,
    )?;
    let mut space = GridSpace::default();
    if let Some(b) = budget {
        space.budget = b;
    }
    let objective = CalibrationObjective::default();
    let results = grid_search(&template, &space, &objective)?;
    let best = results
        .first()
        .ok_or_else(|| RingError::Calibration("grid search returned no points".into()))?
        .clone();
    let mut tuned = template.clone();
    tuned.neuron.i_bg = best.i_bg;
    tuned.init_current = best.init_current;
    let refined = refine_gsin(&tuned, &best, &objective, &RefineOptions::default())?;
    Ok(CalibrationSummary {
        grid: best,
        refined,
    })
}

/// Robustness sweep over ring size or firing-rate scale.
pub fn run_robustness_sweep(
    config: &HarnessConfig,
    param: SweepParam,
    values: &[f64],
    seed: u64,
) -> Result<Vec<RobustnessPoint>> {
    let mid = config.boundary.theta_0 + 0.5 * (config.boundary.theta_l - config.boundary.theta_0);
    let template = config.sim_config(mid, seed, false)?;
    let opts = RobustnessOptions {
        seed,
        ..RobustnessOptions::default()
    };
    crate::calibration::robustness_sweep(&template, param, values, &CalibrationObjective::default(), &opts)
}

/// Refit kappa (decoded-velocity-per-commanded-velocity) from a finished
/// calibration, for reports.
pub fn kappa_of(result: &CalibrationResult) -> Result<crate::calibration::KappaEstimate> {
    match &result.velocity_gain_kappa {
        Some(k) => Ok(*k),
        None => kappa_through_origin(&result.diagnostics.probe_fits),
    }
}

// --- the report envelope ---

/// What was run, with every parameter needed to run it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentDescriptor {
    Track {
        model: ModelKind,
        source: TrajectorySource,
    },
    Paired {
        regime: MotionRegime,
        n_pairs: usize,
    },
    Calibrate {
        budget: Option<usize>,
    },
    Robustness {
        param: SweepParam,
        values: Vec<f64>,
    },
    HwDrift {
        n_seeds: usize,
    },
    HwSweep {
        counts: Vec<u32>,
        repeats: usize,
    },
    HwAccel {
        counts: Vec<u32>,
        population: usize,
    },
}

/// Metrics payload of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Metrics {
    Tracking(TrackingOutcome),
    Paired(PairedReport),
    Calibration(CalibrationSummary),
    Robustness { points: Vec<RobustnessPoint> },
    HwDrift(HwDriftReport),
    HwSweep(HwSweepReport),
    HwAccel(HwAccelReport),
}

/// A self-contained experiment report: metrics plus the exact configuration
/// and seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    /// Version of the crate that produced the report.
    pub version: String,
    pub seed: u64,
    pub config: HarnessConfig,
    pub descriptor: ExperimentDescriptor,
    pub metrics: Metrics,
}

impl Report {
    pub fn new(
        name: impl Into<String>,
        seed: u64,
        config: &HarnessConfig,
        descriptor: ExperimentDescriptor,
        metrics: Metrics,
    ) -> Self {
        Report {
            name: name.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: config.clone(),
            descriptor,
            metrics,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Re-run the experiment described by a report with its embedded
/// configuration and seed. The result serializes to the identical JSON.
pub fn regenerate(report: &Report) -> Result<Report> {
    let config = &report.config;
    let seed = report.seed;
    let metrics = match &report.descriptor {
        ExperimentDescriptor::Track { model, source } => {
            let run = run_tracking_experiment(
                config,
                &ExperimentSpec {
                    name: report.name.clone(),
                    model: *model,
                    source: source.clone(),
                    seed,
                },
            )?;
            Metrics::Tracking(run.outcome)
        }
        ExperimentDescriptor::Paired { regime, n_pairs } => {
            Metrics::Paired(run_paired_comparison(config, *regime, *n_pairs, seed)?)
        }
        ExperimentDescriptor::Calibrate { budget } => {
            Metrics::Calibration(run_calibration(config, *budget)?)
        }
        ExperimentDescriptor::Robustness { param, values } => Metrics::Robustness {
            points: run_robustness_sweep(config, *param, values, seed)?,
        },
        ExperimentDescriptor::HwDrift { n_seeds } => {
            Metrics::HwDrift(run_hw_drift(config, *n_seeds, seed)?)
        }
        ExperimentDescriptor::HwSweep { counts, repeats } => {
            Metrics::HwSweep(run_hw_velocity_sweep(config, counts, *repeats, seed)?)
        }
        ExperimentDescriptor::HwAccel { counts, population } => {
            Metrics::HwAccel(run_hw_acceleration(config, counts, *population, seed)?.report)
        }
    };
    Ok(Report {
        name: report.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: config.clone(),
        descriptor: report.descriptor.clone(),
        metrics,
    })
}

/// Direction of a ring-wide connection table check used by the sweep
/// wrappers; exported for reuse in integration tests.
pub fn hw_table(config: &HarnessConfig) -> Result<(crate::discrete_hw::HwTopology, ConnectionTable)> {
    let topo = config.hw_topology()?;
    let table = build_hw_ring(&topo, &config.gain_set())?;
    Ok((topo, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quick_config() -> HarnessConfig {
        HarnessConfig::default()
    }

    #[test]
    fn stationary_tracking_holds_under_five_degrees() {
        let config = quick_config();
        let spec = ExperimentSpec {
            name: "stationary".into(),
            model: ModelKind::Unbounded,
            source: TrajectorySource::Constant {
                angle: 2.0,
                velocity: 0.0,
                duration: 0.9,
            },
            seed: 5,
        };
        let run = run_tracking_experiment(&config, &spec).unwrap();
        assert!(
            run.outcome.mean_error_deg < 5.0,
            "mean error {}",
            run.outcome.mean_error_deg
        );
        assert!(run.outcome.n_valid_samples > 50);
    }

    #[test]
    fn tracking_rejects_hw_model_and_late_start() {
        let config = quick_config();
        let base = ExperimentSpec {
            name: "x".into(),
            model: ModelKind::Hw,
            source: TrajectorySource::Constant {
                angle: 1.0,
                velocity: 0.0,
                duration: 1.0,
            },
            seed: 0,
        };
        assert!(run_tracking_experiment(&config, &base).is_err());
        let late = ExperimentSpec {
            model: ModelKind::Unbounded,
            source: TrajectorySource::Imported {
                path: None,
                samples: vec![
                    TrajectorySample { time: 1.0, angle: 1.0, velocity: 0.0 },
                    TrajectorySample { time: 2.0, angle: 1.0, velocity: 0.0 },
                ],
            },
            ..base
        };
        let err = run_tracking_experiment(&config, &late).unwrap_err();
        assert!(err.to_string().contains("time 0"), "{err}");
    }

    #[test]
    fn sign_test_matches_exact_binomial_tails() {
        // Tail sums of Binomial(n, 1/2) computed by exact fraction
        // arithmetic: P[X >= 15 | n=20] = 21700/2^20, P[X >= 3 | n=3] = 1/8.
        assert_abs_diff_eq!(
            sign_test_one_sided(15, 5),
            21700.0 / (1u64 << 20) as f64,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(sign_test_one_sided(3, 0), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(sign_test_one_sided(0, 0), 1.0);
        assert_abs_diff_eq!(sign_test_one_sided(0, 4), 1.0, epsilon = 1e-12);
        // More wins out of the same n means a smaller tail.
        assert!(sign_test_one_sided(18, 2) < sign_test_one_sided(15, 5));
    }

    #[test]
    fn doubling_check_math_is_exact() {
        let rows = vec![
            SweepRow { count: 3, mean_velocity: 3.0, sem: 0.01, n_runs: 10, n_dead: 0 },
            SweepRow { count: 4, mean_velocity: 4.0, sem: 0.01, n_runs: 10, n_dead: 0 },
            SweepRow { count: 6, mean_velocity: 6.01, sem: 0.02, n_runs: 10, n_dead: 0 },
        ];
        let checks = doubling_checks(&rows);
        assert_eq!(checks.len(), 1);
        let c = &checks[0];
        assert_eq!((c.low_count, c.high_count), (3, 6));
        assert_abs_diff_eq!(c.difference, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.tolerance_95,
            1.96 * (0.02_f64.powi(2) + 0.02_f64.powi(2)).sqrt(),
            epsilon = 1e-12
        );
        assert!(c.within);
    }

    #[test]
    fn paired_rows_share_trajectory_and_seed() {
        let mut config = quick_config();
        // Two tiny pairs keep this test cheap; the full protocol runs in the
        // acceptance suite.
        config.experiment.pairs = 2;
        let report = run_paired_comparison(&config, MotionRegime::Limited, 2, 100).unwrap();
        assert_eq!(report.n_pairs, 2);
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].seed, 100);
        assert_eq!(report.rows[1].seed, 101);
        assert!(report.rows.iter().all(|r| r.bounded_mean_deg.is_finite()));
        assert!(report.sign_test_p > 0.0 && report.sign_test_p <= 1.0);
    }

    #[test]
    fn tracking_report_regenerates_bit_identically() {
        let config = quick_config();
        let descriptor = ExperimentDescriptor::Track {
            model: ModelKind::Unbounded,
            source: TrajectorySource::Constant {
                angle: 2.0,
                velocity: 0.0,
                duration: 0.9,
            },
        };
        let run = run_tracking_experiment(
            &config,
            &ExperimentSpec {
                name: "regen".into(),
                model: ModelKind::Unbounded,
                source: TrajectorySource::Constant {
                    angle: 2.0,
                    velocity: 0.0,
                    duration: 0.9,
                },
                seed: 9,
            },
        )
        .unwrap();
        let report = Report::new("regen", 9, &config, descriptor, Metrics::Tracking(run.outcome));
        let again = regenerate(&report).unwrap();
        assert_eq!(report.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn report_json_round_trips() {
        let config = quick_config();
        let report = Report::new(
            "x",
            1,
            &config,
            ExperimentDescriptor::HwSweep { counts: vec![3, 6], repeats: 2 },
            Metrics::HwSweep(HwSweepReport { rows: vec![], fit: None, doubling: vec![] }),
        );
        let text = report.to_json().unwrap();
        let back = Report::from_json(&text).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn hw_drift_single_seed_stays_reasonable() {
        let config = quick_config();
        let report = run_hw_drift(&config, 1, 3).unwrap();
        assert_eq!(report.rows.len(), config.hw.n_pops);
        assert_eq!(report.median_windows_deg.len(), 10);
        assert_eq!(report.n_dead_runs, 0);
        assert!(
            report.worst_median_deg < report.spacing_deg,
            "worst median {} vs spacing {}",
            report.worst_median_deg,
            report.spacing_deg
        );
    }

    #[test]
    fn hw_acceleration_three_phase_structure() {
        let config = quick_config();
        let run = run_hw_acceleration(&config, &[4], 5, 11).unwrap();
        let r = &run.report;
        assert_eq!(r.phases.len(), 3);
        assert_eq!(r.phases[0].label, "baseline");
        assert_eq!(r.phases[1].label, "step-4");
        assert_eq!(r.phases[2].label, "recovery");
        assert!(r.translation_positive, "step slope {:?}", r.phases[1]);
        assert!(
            r.phases[1].slope_rad_s > 1.0,
            "velocity phase slope {}",
            r.phases[1].slope_rad_s
        );
    }
}
