//! Joint trajectories: time-ordered `(time, angle, velocity)` samples.
//!
//! Synthetic trajectories are built as piecewise-constant velocity signals
//! (instant steps, no ramps) whose stored angle is the exact integral of the
//! stored velocity — the angle at each sample equals the previous angle plus
//! the previous velocity held over the gap, to within 1e-9 rad. Imported
//! trajectories skip the integral check: externally commanded velocity and
//! measured angle are inconsistent by design.

use crate::engine::VelocityProfile;
use crate::error::{Result, RingError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

/// Integral-consistency tolerance for synthetic trajectories (radians).
pub const INTEGRAL_TOLERANCE: f64 = 1e-9;

/// Where a trajectory came from; synthetic kinds carry the exact-integral
/// invariant, imported ones do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    SyntheticSine,
    SyntheticTrapezoid,
    Imported,
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrajectoryKind::SyntheticSine => "synthetic-sine",
            TrajectoryKind::SyntheticTrapezoid => "synthetic-trapezoid",
            TrajectoryKind::Imported => "imported",
        };
        f.write_str(s)
    }
}

impl FromStr for TrajectoryKind {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic-sine" => Ok(TrajectoryKind::SyntheticSine),
            "synthetic-trapezoid" => Ok(TrajectoryKind::SyntheticTrapezoid),
            "imported" => Ok(TrajectoryKind::Imported),
            other => Err(RingError::InvalidConfig(format!(
                "unknown trajectory kind {other:?} \
                 (expected synthetic-sine, synthetic-trapezoid, or imported)"
            ))),
        }
    }
}

/// One trajectory sample. `velocity` is the commanded velocity held from
/// `time` until the next sample (the last sample's velocity is not used).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub angle: f64,
    pub velocity: f64,
}

/// A validated joint trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    kind: TrajectoryKind,
}

impl Trajectory {
    /// Validate and wrap a sample list. Times must be strictly increasing
    /// and everything finite; synthetic kinds must additionally satisfy the
    /// exact-integral invariant.
    pub fn from_samples(samples: Vec<TrajectorySample>, kind: TrajectoryKind) -> Result<Self> {
        if samples.len() < 2 {
            return Err(RingError::Trajectory(format!(
                "a trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.time.is_finite() && s.angle.is_finite() && s.velocity.is_finite()) {
                return Err(RingError::Trajectory(format!(
                    "sample {i}: non-finite value (time {}, angle {}, velocity {})",
                    s.time, s.angle, s.velocity
                )));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(RingError::Trajectory(format!(
                    "sample {}: time {} is not after {}",
                    i + 1,
                    w[1].time,
                    w[0].time
                )));
            }
        }
        if kind != TrajectoryKind::Imported {
            for (i, w) in samples.windows(2).enumerate() {
                let predicted = w[0].angle + w[0].velocity * (w[1].time - w[0].time);
                let gap = (w[1].angle - predicted).abs();
                if gap > INTEGRAL_TOLERANCE {
                    return Err(RingError::Trajectory(format!(
                        "sample {}: angle {} is not the integral of the held \
                         velocity (expected {predicted}, off by {gap:.3e} rad)",
                        i + 1,
                        w[1].angle
                    )));
                }
            }
        }
        Ok(Trajectory { samples, kind })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].time
    }

    pub fn initial_angle(&self) -> f64 {
        self.samples[0].angle
    }

    pub fn min_angle(&self) -> f64 {
        self.samples.iter().map(|s| s.angle).fold(f64::INFINITY, f64::min)
    }

    pub fn max_angle(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.angle)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(time, angle)` ground-truth view for error metrics. Piecewise-linear
    /// interpolation between these points reproduces the exact angle at any
    /// time for piecewise-constant-velocity trajectories.
    pub fn truth(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.time, s.angle)).collect()
    }

    /// Commanded-velocity view for the simulation engine. The profile must
    /// start at t = 0; a trajectory starting later gets a leading zero-velocity
    /// leg.
    pub fn to_velocity_profile(&self) -> Result<VelocityProfile> {
        let mut legs: Vec<(f64, f64)> = Vec::with_capacity(self.samples.len() + 1);
        if self.samples[0].time > 0.0 {
            legs.push((0.0, 0.0));
        } else if self.samples[0].time < 0.0 {
            return Err(RingError::Trajectory(format!(
                "cannot drive a simulation from a trajectory starting at \
                 negative time {}",
                self.samples[0].time
            )));
        }
        for s in &self.samples {
            if legs.last().map_or(true, |&(_, v)| v != s.velocity) {
                legs.push((s.time, s.velocity));
            }
        }
        VelocityProfile::new(legs)
    }

    /// Write as CSV with the `time_s,angle_rad,velocity_rad_s` header.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "angle_rad", "velocity_rad_s"])?;
        for s in &self.samples {
            w.write_record(&[s.time.to_string(), s.angle.to_string(), s.velocity.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

// --- synthetic builders ---

/// Sinusoidal angle profile, emitted as a dense staircase of held velocities
/// whose exact integral reproduces the sine at every sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidParams {
    /// Center angle (radians).
    pub center: f64,
    /// Peak deviation from the center (radians, > 0).
    pub amplitude: f64,
    /// Oscillation period (seconds, > 0).
    pub period: f64,
    /// Phase offset (radians) of the sine at t = 0.
    pub phase: f64,
    /// Total duration (seconds).
    pub duration: f64,
    /// Staircase step (seconds); the commanded velocity is re-held at this
    /// interval.
    pub sample_dt: f64,
    /// Optional allowed angle range; the swept band must stay inside it.
    pub range: Option<(f64, f64)>,
}

impl Default for SinusoidParams {
    fn default() -> Self {
        SinusoidParams {
            center: 0.75 * std::f64::consts::PI,
            amplitude: 1.0,
            period: 4.0,
            phase: 0.0,
            duration: 8.0,
            sample_dt: 0.01,
            range: None,
        }
    }
}

/// Build a sinusoidal trajectory.
pub fn make_sine(params: &SinusoidParams) -> Result<Trajectory> {
    let p = params;
    if !(p.amplitude > 0.0 && p.amplitude.is_finite()) {
        return Err(RingError::Trajectory(format!(
            "sine amplitude must be positive, got {}",
            p.amplitude
        )));
    }
    if !(p.period > 0.0 && p.period.is_finite()) {
        return Err(RingError::Trajectory(format!(
            "sine period must be positive, got {}",
            p.period
        )));
    }
    if !(p.sample_dt > 0.0 && p.sample_dt.is_finite()) {
        return Err(RingError::Trajectory(format!(
            "sample_dt must be positive, got {}",
            p.sample_dt
        )));
    }
    if !(p.duration >= 2.0 * p.sample_dt && p.duration.is_finite()) {
        return Err(RingError::Trajectory(format!(
            "duration must cover at least two samples ({} s), got {}",
            2.0 * p.sample_dt,
            p.duration
        )));
    }
    if !(p.center.is_finite() && p.phase.is_finite()) {
        return Err(RingError::Trajectory(
            "sine center and phase must be finite".into(),
        ));
    }
    if let Some((lo, hi)) = p.range {
        if p.center - p.amplitude < lo || p.center + p.amplitude > hi {
            return Err(RingError::Trajectory(format!(
                "sine band [{}, {}] leaves the allowed range [{lo}, {hi}]",
                p.center - p.amplitude,
                p.center + p.amplitude
            )));
        }
    }
    let n_steps = (p.duration / p.sample_dt).round().max(2.0) as usize;
    let omega = std::f64::consts::TAU / p.period;
    let angle_at = |t: f64| p.center + p.amplitude * (omega * t + p.phase).sin();
    let mut samples = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let t = i as f64 * p.sample_dt;
        let angle = angle_at(t);
        let velocity = if i < n_steps {
            let t_next = (i + 1) as f64 * p.sample_dt;
            (angle_at(t_next) - angle) / (t_next - t)
        } else {
            0.0
        };
        samples.push(TrajectorySample { time: t, angle, velocity });
    }
    Trajectory::from_samples(samples, TrajectoryKind::SyntheticSine)
}

/// Motion regime of the trapezoidal presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionRegime {
    /// Spans the full joint range; the angle touches both limits exactly.
    Wide,
    /// Stays inside an inner band, away from both limits.
    Limited,
}

impl fmt::Display for MotionRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionRegime::Wide => "wide",
            MotionRegime::Limited => "limited",
        })
    }
}

impl FromStr for MotionRegime {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(MotionRegime::Wide),
            "limited" => Ok(MotionRegime::Limited),
            other => Err(RingError::InvalidConfig(format!(
                "unknown motion regime {other:?} (expected wide or limited)"
            ))),
        }
    }
}

/// Seeded trapezoidal-velocity preset over a joint range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidParams {
    /// Lower joint limit (radians).
    pub theta_0: f64,
    /// Upper joint limit (radians).
    pub theta_l: f64,
    pub regime: MotionRegime,
    /// Seed for the preset's dwell times, speeds, and waypoints.
    pub seed: u64,
}

/// Fraction of the range kept clear of each limit by the limited preset.
pub const LIMITED_MARGIN_FRACTION: f64 = 0.25;

/// Accumulates constant-velocity legs. Move legs land on their target angle
/// exactly (the target is assigned, not re-integrated), so limit touches are
/// exact and the integral invariant holds to round-off.
struct LegBuilder {
    samples: Vec<TrajectorySample>,
    t: f64,
    angle: f64,
}

impl LegBuilder {
    fn new(initial_angle: f64) -> Self {
        LegBuilder {
            samples: Vec::new(),
            t: 0.0,
            angle: initial_angle,
        }
    }

    fn dwell(&mut self, duration: f64) {
        self.samples.push(TrajectorySample {
            time: self.t,
            angle: self.angle,
            velocity: 0.0,
        });
        self.t += duration;
    }

    fn move_to(&mut self, target: f64, speed: f64) {
        let delta = target - self.angle;
        if delta.abs() < 1e-12 {
            return;
        }
        let duration = delta.abs() / speed;
        self.samples.push(TrajectorySample {
            time: self.t,
            angle: self.angle,
            velocity: delta / duration,
        });
        self.t += duration;
        self.angle = target;
    }

    fn finish(mut self) -> Vec<TrajectorySample> {
        self.samples.push(TrajectorySample {
            time: self.t,
            angle: self.angle,
            velocity: 0.0,
        });
        self.samples
    }
}

/// Build a trapezoidal preset trajectory.
///
/// Wide: starts at θ_0, sweeps to θ_l at full speed, then wanders between
/// seeded interior waypoints — the angle extremes equal the two limits
/// exactly. Limited: starts mid-range and wanders inside the inner band
/// `[θ_0 + 0.25·range, θ_l − 0.25·range]`, never approaching a limit.
pub fn make_trapezoid(params: &TrapezoidParams) -> Result<Trajectory> {
    let p = params;
    if !(p.theta_0.is_finite() && p.theta_l.is_finite()) {
        return Err(RingError::Trajectory(
            "joint limits must be finite".into(),
        ));
    }
    let range = p.theta_l - p.theta_0;
    if !(range > 0.5) {
        return Err(RingError::Trajectory(format!(
            "joint range must exceed 0.5 rad for the trapezoid presets, got {range}"
        )));
    }
    if !(0.0..std::f64::consts::TAU).contains(&p.theta_0) || p.theta_l > std::f64::consts::TAU {
        return Err(RingError::Trajectory(format!(
            "joint limits must satisfy 0 <= theta_0 < theta_l <= 2*pi, got \
             [{}, {}]",
            p.theta_0, p.theta_l
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ match p.regime {
        MotionRegime::Wide => 0x5749_4445,
        MotionRegime::Limited => 0x4c49_4d44,
    });
    let traj = match p.regime {
        MotionRegime::Wide => {
            let mut b = LegBuilder::new(p.theta_0);
            b.dwell(0.5);
            // Full-range sweep: this is the exact touch of the upper limit.
            b.move_to(p.theta_l, rng.gen_range(0.8..1.2));
            b.dwell(rng.gen_range(0.5..1.0));
            for _ in 0..2 {
                let target = p.theta_0 + range * rng.gen_range(0.15..0.85);
                let distance = (target - b.angle).abs();
                let speed = rng.gen_range(0.4_f64..1.2).max(distance / 3.0);
                b.move_to(target, speed);
                b.dwell(rng.gen_range(0.5..1.0));
            }
            b.dwell(0.5);
            b.finish()
        }
        MotionRegime::Limited => {
            let margin = LIMITED_MARGIN_FRACTION * range;
            let (lo, hi) = (p.theta_0 + margin, p.theta_l - margin);
            let mut b = LegBuilder::new(p.theta_0 + 0.5 * range);
            b.dwell(0.5);
            for _ in 0..3 {
                let target = rng.gen_range(lo..hi);
                let distance = (target - b.angle).abs();
                let speed = rng.gen_range(0.4_f64..1.0).max(distance / 2.5);
                b.move_to(target, speed);
                b.dwell(rng.gen_range(0.5..1.0));
            }
            b.dwell(0.5);
            b.finish()
        }
    };
    Trajectory::from_samples(traj, TrajectoryKind::SyntheticTrapezoid)
}

/// Parameter bundle for [`make_trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryParams {
    SyntheticSine(SinusoidParams),
    SyntheticTrapezoid(TrapezoidParams),
}

/// Build a synthetic trajectory from a tagged parameter bundle.
pub fn make_trajectory(params: &TrajectoryParams) -> Result<Trajectory> {
    match params {
        TrajectoryParams::SyntheticSine(p) => make_sine(p),
        TrajectoryParams::SyntheticTrapezoid(p) => make_trapezoid(p),
    }
}

// --- import ---

/// Read a trajectory from a CSV file with the header
/// `time_s,angle_rad,velocity_rad_s`. Times must be strictly increasing and
/// all values finite; integral consistency is not enforced.
pub fn import_trajectory(path: &Path) -> Result<Trajectory> {
    let file = std::fs::File::open(path)?;
    import_trajectory_reader(file)
}

/// [`import_trajectory`] over any reader.
pub fn import_trajectory_reader<R: Read>(reader: R) -> Result<Trajectory> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = r.headers()?.clone();
    let expected = ["time_s", "angle_rad", "velocity_rad_s"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(RingError::Trajectory(format!(
            "expected CSV header {expected:?}, got {got:?}"
        )));
    }
    let mut samples = Vec::new();
    for (i, record) in r.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != 3 {
            return Err(RingError::Trajectory(format!(
                "row {row}: expected 3 fields, got {}",
                record.len()
            )));
        }
        let parse = |field: usize, name: &str| -> Result<f64> {
            let raw = &record[field];
            let value: f64 = raw.parse().map_err(|_| {
                RingError::Trajectory(format!("row {row}: cannot parse {name} from {raw:?}"))
            })?;
            if !value.is_finite() {
                return Err(RingError::Trajectory(format!(
                    "row {row}: non-finite {name} ({value})"
                )));
            }
            Ok(value)
        };
        let sample = TrajectorySample {
            time: parse(0, "time_s")?,
            angle: parse(1, "angle_rad")?,
            velocity: parse(2, "velocity_rad_s")?,
        };
        if let Some(prev) = samples.last() {
            let prev: &TrajectorySample = prev;
            if sample.time <= prev.time {
                return Err(RingError::Trajectory(format!(
                    "row {row}: time {} is not after {}",
                    sample.time, prev.time
                )));
            }
        }
        samples.push(sample);
    }
    Trajectory::from_samples(samples, TrajectoryKind::Imported)
}
