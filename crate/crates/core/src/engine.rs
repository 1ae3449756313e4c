//! Fixed-step simulation of leaky integrate-and-fire neurons with
//! exponentially decaying synaptic traces, a constant background drive, an
//! initialization pulse, and per-step velocity-modulated coupling.
//!
//! Two recurrence backends share one membrane update: the ring backend
//! evaluates the circulant symmetric/sine kernels by offset (in a paired
//! form that makes rotations and reflections of the network state produce
//! bit-identical results), and a dense backend multiplies explicit weight
//! matrices per synapse class, which is what the hardware emulation uses.

use crate::error::{Result, RingError};
use crate::ring::{GainSet, RingGeometry, WeightSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Membrane parameters. `i_bg` holds every neuron just below threshold on
/// its own: the steady-state membrane level under constant current equals
/// the current, so `i_bg < v_th` is required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub tau_m: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub t_ref: f64,
    pub i_bg: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            tau_m: 0.02,
            v_th: 1.0,
            v_reset: 0.0,
            t_ref: 0.002,
            i_bg: 0.95,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "tau_m must be positive, got {}",
                self.tau_m
            )));
        }
        if !(self.v_reset < self.v_th) {
            return Err(RingError::InvalidConfig(format!(
                "v_reset ({}) must be below v_th ({})",
                self.v_reset, self.v_th
            )));
        }
        if !(self.t_ref >= 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "t_ref must be nonnegative, got {}",
                self.t_ref
            )));
        }
        if !(self.i_bg < self.v_th) {
            return Err(RingError::InvalidConfig(format!(
                "i_bg ({}) must stay below v_th ({}) so the background alone never fires",
                self.i_bg, self.v_th
            )));
        }
        Ok(())
    }
}

/// Synaptic trace parameters: decay time constant and the jump a presynaptic
/// spike adds to its own trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseParams {
    pub tau_syn: f64,
    pub spike_increment: f64,
}

impl Default for SynapseParams {
    fn default() -> Self {
        SynapseParams {
            tau_syn: 0.01,
            spike_increment: 1.0,
        }
    }
}

impl SynapseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_syn > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "tau_syn must be positive, got {}",
                self.tau_syn
            )));
        }
        if !(self.spike_increment > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "spike_increment must be positive, got {}",
                self.spike_increment
            )));
        }
        Ok(())
    }
}

/// Optional seeded Gaussian membrane noise. `sigma` is the stationary
/// standard deviation of the membrane fluctuation; the per-step kick is
/// scaled by `sqrt(1 − exp(−2·dt/tau_m))` so the stationary spread does not
/// depend on the step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub enabled: bool,
    pub sigma: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            enabled: false,
            sigma: 0.0,
        }
    }
}

/// Full configuration for one continuous-model simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub geometry: RingGeometry,
    pub weights: WeightSet,
    pub gains: GainSet,
    pub neuron: NeuronParams,
    pub synapse: SynapseParams,
    pub dt: f64,
    pub init_angle: f64,
    pub init_current: f64,
    pub init_duration: f64,
    /// Global scale applied to the recurrent input (together with 1/n).
    pub current_scale: f64,
    pub noise: NoiseParams,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        self.synapse.validate()?;
        if !(self.dt > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.init_duration >= 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "init_duration must be nonnegative, got {}",
                self.init_duration
            )));
        }
        if !(0.0..TAU).contains(&self.init_angle) {
            return Err(RingError::InvalidConfig(format!(
                "init_angle must lie in [0, 2π), got {}",
                self.init_angle
            )));
        }
        if !(self.current_scale >= 0.0 && self.current_scale.is_finite()) {
            return Err(RingError::InvalidConfig(format!(
                "current_scale must be finite and nonnegative, got {}",
                self.current_scale
            )));
        }
        if self.noise.enabled && !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(RingError::InvalidConfig(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.noise.sigma
            )));
        }
        if self.weights.n() != self.geometry.n() {
            return Err(RingError::InvalidConfig(format!(
                "weight set built for n={} but geometry has n={}",
                self.weights.n(),
                self.geometry.n()
            )));
        }
        Ok(())
    }
}

/// One spike: time in seconds and the index of the neuron that fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time: f64,
    pub neuron: u32,
}

/// Time-ordered spike record for a whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub events: Vec<SpikeEvent>,
}

impl SpikeRaster {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    /// Events with time in `[t0, t1)`, found by binary search.
    pub fn events_between(&self, t0: f64, t1: f64) -> &[SpikeEvent] {
        let lo = self.events.partition_point(|e| e.time < t0);
        let hi = self.events.partition_point(|e| e.time < t1);
        &self.events[lo..hi]
    }

    /// Spike counts per neuron over `[t0, t1)`.
    pub fn counts_between(&self, t0: f64, t1: f64, n: usize) -> Vec<u32> {
        let mut counts = vec![0u32; n];
        for e in self.events_between(t0, t1) {
            counts[e.neuron as usize] += 1;
        }
        counts
    }
}

/// Per-neuron mean firing rate (Hz) over `[t0, t1)`.
pub fn mean_rate_profile(raster: &SpikeRaster, t0: f64, t1: f64, n: usize) -> Result<Vec<f64>> {
    if !(t1 > t0) {
        return Err(RingError::InvalidConfig(format!(
            "rate window needs t1 > t0, got [{t0}, {t1})"
        )));
    }
    let counts = raster.counts_between(t0, t1, n);
    Ok(counts.iter().map(|&c| c as f64 / (t1 - t0)).collect())
}

/// Piecewise-constant (zero-order hold) velocity command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    samples: Vec<(f64, f64)>,
}

impl VelocityProfile {
    /// Times must be strictly increasing and start at 0.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(RingError::InvalidConfig(
                "velocity profile needs at least one sample".into(),
            ));
        }
        if samples[0].0 != 0.0 {
            return Err(RingError::InvalidConfig(format!(
                "velocity profile must start at t=0, got {}",
                samples[0].0
            )));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(RingError::InvalidConfig(format!(
                    "velocity profile times must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if samples.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(RingError::InvalidConfig(
                "velocity profile contains non-finite values".into(),
            ));
        }
        Ok(VelocityProfile { samples })
    }

    pub fn zero() -> Self {
        VelocityProfile {
            samples: vec![(0.0, 0.0)],
        }
    }

    pub fn constant(v: f64) -> Self {
        VelocityProfile {
            samples: vec![(0.0, v)],
        }
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Held value at time `t` (the last sample at or before `t`).
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|&(st, _)| st <= t);
        if idx == 0 {
            self.samples[0].1
        } else {
            self.samples[idx - 1].1
        }
    }

    /// Profile with every velocity negated.
    pub fn negated(&self) -> Self {
        VelocityProfile {
            samples: self.samples.iter().map(|&(t, v)| (t, -v)).collect(),
        }
    }
}

/// Constant extra current to a set of neurons over a half-open time window.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub neurons: Vec<usize>,
    pub amplitude: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Injection {
    fn active_at(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// Evolving state of one simulation: time, membranes, synaptic traces (one
/// vector per channel), refractory release times, the accumulated raster,
/// and the RNG stream when noise is enabled.
#[derive(Debug, Clone)]
pub struct SimState {
    pub step: u64,
    pub t: f64,
    pub v_mem: Vec<f64>,
    pub traces: Vec<Vec<f64>>,
    pub refrac_until: Vec<f64>,
    pub raster: SpikeRaster,
    pub rng: Option<ChaCha8Rng>,
    scratch_rec: Vec<f64>,
}

impl SimState {
    fn new(n: usize, n_channels: usize, rng: Option<ChaCha8Rng>) -> Self {
        SimState {
            step: 0,
            t: 0.0,
            v_mem: vec![0.0; n],
            traces: vec![vec![0.0; n]; n_channels],
            refrac_until: vec![0.0; n],
            raster: SpikeRaster::default(),
            rng,
            scratch_rec: vec![0.0; n],
        }
    }

    /// The single synaptic-trace vector of a one-channel simulation.
    pub fn s_trace(&self) -> &[f64] {
        &self.traces[0]
    }
}

/// Shared membrane update: exponential-Euler integration toward the input,
/// optional Gaussian kick, refractory clamp, threshold test. Used by both
/// the ring and dense backends so their spiking mechanics are identical.
struct LifCore {
    n: usize,
    dt: f64,
    alpha_m: Vec<f64>,
    noise_std: Vec<f64>,
    i_bg: Vec<f64>,
    v_th: f64,
    v_reset: f64,
    t_ref: f64,
    noise_on: bool,
}

impl LifCore {
    fn uniform(n: usize, neuron: &NeuronParams, noise: &NoiseParams, dt: f64) -> Self {
        let alpha = (-dt / neuron.tau_m).exp();
        let nstd = noise.sigma * (1.0 - alpha * alpha).sqrt();
        LifCore {
            n,
            dt,
            alpha_m: vec![alpha; n],
            noise_std: vec![nstd; n],
            i_bg: vec![neuron.i_bg; n],
            v_th: neuron.v_th,
            v_reset: neuron.v_reset,
            t_ref: neuron.t_ref,
            noise_on: noise.enabled,
        }
    }

    fn jittered(
        tau_m: &[f64],
        i_bg: &[f64],
        neuron: &NeuronParams,
        noise: &NoiseParams,
        dt: f64,
    ) -> Self {
        let n = tau_m.len();
        let alpha_m: Vec<f64> = tau_m.iter().map(|&tm| (-dt / tm).exp()).collect();
        let noise_std = alpha_m
            .iter()
            .map(|&a| noise.sigma * (1.0 - a * a).sqrt())
            .collect();
        LifCore {
            n,
            dt,
            alpha_m,
            noise_std,
            i_bg: i_bg.to_vec(),
            v_th: neuron.v_th,
            v_reset: neuron.v_reset,
            t_ref: neuron.t_ref,
            noise_on: noise.enabled,
        }
    }

    /// Advance membranes one step. `drive[j]` is the full non-background
    /// input (recurrent + injected). Spike indices are appended to `spikes`
    /// in ascending neuron order; the caller updates traces and the raster.
    fn advance(
        &self,
        state_step: u64,
        v_mem: &mut [f64],
        refrac_until: &mut [f64],
        rng: &mut Option<ChaCha8Rng>,
        drive: &[f64],
        spikes: &mut Vec<usize>,
    ) -> Result<f64> {
        let t_next = (state_step + 1) as f64 * self.dt;
        for j in 0..self.n {
            let target = self.i_bg[j] + drive[j];
            v_mem[j] = target + (v_mem[j] - target) * self.alpha_m[j];
        }
        if self.noise_on {
            let rng = rng
                .as_mut()
                .expect("noise enabled but no RNG stream in state");
            for j in 0..self.n {
                let z: f64 = StandardNormal.sample(rng);
                v_mem[j] += self.noise_std[j] * z;
            }
        }
        for j in 0..self.n {
            if t_next < refrac_until[j] {
                v_mem[j] = self.v_reset;
            }
        }
        for j in 0..self.n {
            let v = v_mem[j];
            if !v.is_finite() {
                return Err(RingError::Numeric(format!(
                    "membrane of neuron {j} became non-finite at t={t_next:.6}"
                )));
            }
            if v >= self.v_th {
                spikes.push(j);
                v_mem[j] = self.v_reset;
                refrac_until[j] = t_next + self.t_ref;
            }
        }
        Ok(t_next)
    }
}

/// Continuous-model engine: circulant ring coupling with velocity-gated
/// sine drive and (for bounded joints) attenuation plus a network-wide
/// inhibitory surcharge sourced from out-of-bound activity.
pub struct Engine {
    cfg: SimConfig,
    core: LifCore,
    init_neuron: usize,
    bounded: bool,
}

impl Engine {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.geometry.n();
        let core = LifCore::uniform(n, &cfg.neuron, &cfg.noise, cfg.dt);
        let init_neuron = cfg.geometry.nearest_index(cfg.init_angle);
        let bounded = cfg.weights.is_bounded();
        Ok(Engine {
            cfg: cfg.clone(),
            core,
            init_neuron,
            bounded,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn init_neuron(&self) -> usize {
        self.init_neuron
    }

    pub fn init_state(&self) -> SimState {
        let rng = self
            .cfg
            .noise
            .enabled
            .then(|| ChaCha8Rng::seed_from_u64(self.cfg.seed));
        SimState::new(self.cfg.geometry.n(), 1, rng)
    }

    /// Recurrent drive into each neuron, evaluated from the offset kernels.
    ///
    /// The symmetric part accumulates `kernel[d]·(s[j−d] + s[j+d])` and the
    /// sine part `kernel[d]·(s[j−d] − s[j+d])`, pairing opposite offsets so
    /// that rotating or reflecting the network state permutes the result
    /// bit-exactly.
    fn recurrent_drive(&self, s: &[f64], v_now: f64, rec: &mut [f64]) {
        let n = self.cfg.geometry.n();
        let ws = &self.cfg.weights;
        let sym = ws.sym_kernel_by_offset();
        let sin = ws.sine_kernel_by_offset();
        let half_pairs = (n - 1) / 2;
        let even = n % 2 == 0;
        let g_v = v_now * self.cfg.gains.g_sin;
        let atten = if v_now > 0.0 {
            ws.atten_plus()
        } else {
            ws.atten_minus()
        };
        // Out-of-bound activity broadcasts extra inhibition to the whole
        // ring: the bias vector holds each neuron's (negative) outgoing
        // surcharge, so the summed term is uniform across targets and a bump
        // pressed against a limit is not steered by it — it only damps
        // activity that strays into the forbidden arc.
        let oob_drive: f64 = if self.bounded {
            let bias = ws.bias();
            bias.iter().zip(s.iter()).map(|(b, x)| b * x).sum()
        } else {
            0.0
        };

        for j in 0..n {
            let mut acc_sym = sym[0] * s[j];
            if even {
                let opp = if j + n / 2 >= n { j + n / 2 - n } else { j + n / 2 };
                acc_sym += sym[n / 2] * s[opp];
            }
            let mut acc_sin = 0.0;
            for d in 1..=half_pairs {
                let jm = if j >= d { j - d } else { j + n - d };
                let jp = if j + d < n { j + d } else { j + d - n };
                acc_sym += sym[d] * (s[jm] + s[jp]);
                acc_sin += sin[d] * (s[jm] - s[jp]);
            }
            let mut r = acc_sym;
            if g_v != 0.0 {
                r += g_v * atten[j] * acc_sin;
            }
            if self.bounded {
                r += oob_drive;
            }
            rec[j] = r;
        }
    }

    /// Advance one step under the held velocity `v_now`.
    pub fn step(&self, state: &mut SimState, v_now: f64) -> Result<()> {
        let n = self.cfg.geometry.n();
        let dt = self.cfg.dt;
        let t_now = state.step as f64 * dt;
        let alpha_s = (-dt / self.cfg.synapse.tau_syn).exp();
        let scale = self.cfg.current_scale / n as f64;

        {
            let s = &mut state.traces[0];
            for x in s.iter_mut() {
                *x *= alpha_s;
            }
        }
        let mut rec = std::mem::take(&mut state.scratch_rec);
        self.recurrent_drive(&state.traces[0], v_now, &mut rec);
        for r in rec.iter_mut() {
            *r *= scale;
        }
        if t_now < self.cfg.init_duration && self.cfg.init_current != 0.0 {
            rec[self.init_neuron] += self.cfg.init_current;
        }

        let mut spikes = Vec::new();
        let t_next = self.core.advance(
            state.step,
            &mut state.v_mem,
            &mut state.refrac_until,
            &mut state.rng,
            &rec,
            &mut spikes,
        )?;
        state.scratch_rec = rec;
        for &j in &spikes {
            state.traces[0][j] += self.cfg.synapse.spike_increment;
            state.raster.events.push(SpikeEvent {
                time: t_next,
                neuron: j as u32,
            });
        }
        state.step += 1;
        state.t = t_next;
        Ok(())
    }
}

/// Advance a state one step under a configuration (convenience wrapper that
/// rebuilds the engine; prefer [`Engine::step`] in loops).
pub fn step(state: &mut SimState, cfg: &SimConfig, v_now: f64) -> Result<()> {
    Engine::new(cfg)?.step(state, v_now)
}

/// Run a full simulation: the initialization pulse is applied to the neuron
/// nearest `init_angle` during `[0, init_duration)`, the velocity profile is
/// zero-order-held per step, and the full raster is returned together with
/// the compressed list of `(time, velocity)` segments actually applied.
pub fn run(
    cfg: &SimConfig,
    profile: &VelocityProfile,
    t_end: f64,
) -> Result<(SpikeRaster, Vec<(f64, f64)>)> {
    if !(t_end > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let engine = Engine::new(cfg)?;
    let mut state = engine.init_state();
    let n_steps = (t_end / cfg.dt).round().max(1.0) as u64;
    let mut applied: Vec<(f64, f64)> = Vec::new();
    for _ in 0..n_steps {
        let t_now = state.step as f64 * cfg.dt;
        let v = profile.value_at(t_now);
        if applied.last().map_or(true, |&(_, pv)| pv != v) {
            applied.push((t_now, v));
        }
        engine.step(&mut state, v)?;
    }
    Ok((state.raster, applied))
}

/// One synapse channel of the dense backend: an explicit weight matrix
/// (rows are presynaptic) with its own decay constant and spike increment.
#[derive(Debug, Clone)]
pub struct DenseChannel {
    pub tau_syn: f64,
    pub spike_increment: f64,
    pub w: Vec<f64>,
}

/// Dense-matrix network: per-class channels, optionally per-neuron membrane
/// parameters (device mismatch), used by the hardware emulation.
pub struct DenseNet {
    pub n: usize,
    pub channels: Vec<DenseChannel>,
    pub neuron: NeuronParams,
    pub noise: NoiseParams,
    pub dt: f64,
    pub current_scale: f64,
    core: LifCore,
}

impl DenseNet {
    /// `per_neuron`: optional (tau_m, i_bg) vectors overriding the scalar
    /// parameters neuron-by-neuron.
    pub fn new(
        n: usize,
        channels: Vec<DenseChannel>,
        neuron: NeuronParams,
        noise: NoiseParams,
        dt: f64,
        current_scale: f64,
        per_neuron: Option<(&[f64], &[f64])>,
    ) -> Result<Self> {
        neuron.validate()?;
        if !(dt > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        for (k, ch) in channels.iter().enumerate() {
            if !(ch.tau_syn > 0.0) {
                return Err(RingError::InvalidConfig(format!(
                    "channel {k} tau_syn must be positive, got {}",
                    ch.tau_syn
                )));
            }
            if ch.w.len() != n * n {
                return Err(RingError::InvalidConfig(format!(
                    "channel {k} weight matrix has {} entries, expected {}",
                    ch.w.len(),
                    n * n
                )));
            }
        }
        let core = match per_neuron {
            None => LifCore::uniform(n, &neuron, &noise, dt),
            Some((tau_m, i_bg)) => {
                if tau_m.len() != n || i_bg.len() != n {
                    return Err(RingError::InvalidConfig(
                        "per-neuron parameter vectors must have length n".into(),
                    ));
                }
                if tau_m.iter().any(|&t| !(t > 0.0)) {
                    return Err(RingError::InvalidConfig(
                        "per-neuron tau_m must be positive".into(),
                    ));
                }
                LifCore::jittered(tau_m, i_bg, &neuron, &noise, dt)
            }
        };
        Ok(DenseNet {
            n,
            channels,
            neuron,
            noise,
            dt,
            current_scale,
            core,
        })
    }

    /// Fresh state; pass an RNG to continue an existing stream (jitter draws
    /// and membrane noise then share it), or None to seed from `seed`.
    pub fn init_state(&self, seed: u64, rng: Option<ChaCha8Rng>) -> SimState {
        let rng = rng.or_else(|| {
            self.noise
                .enabled
                .then(|| ChaCha8Rng::seed_from_u64(seed))
        });
        SimState::new(self.n, self.channels.len(), rng)
    }

    /// Replace the channel weight matrices (same shapes) without touching
    /// the evolving state — how velocity connection swaps take effect.
    pub fn set_weights(&mut self, weights: Vec<Vec<f64>>) -> Result<()> {
        if weights.len() != self.channels.len() {
            return Err(RingError::InvalidConfig(format!(
                "expected {} weight matrices, got {}",
                self.channels.len(),
                weights.len()
            )));
        }
        for (ch, w) in self.channels.iter_mut().zip(weights) {
            if w.len() != ch.w.len() {
                return Err(RingError::InvalidConfig(
                    "weight matrix size changed across a swap".into(),
                ));
            }
            ch.w = w;
        }
        Ok(())
    }

    /// Step until `state.t` reaches `t_end` (exclusive of further steps),
    /// applying the given injections.
    pub fn run_segment(
        &self,
        state: &mut SimState,
        injections: &[Injection],
        t_end: f64,
    ) -> Result<()> {
        let n = self.n;
        let end_step = (t_end / self.dt).round() as u64;
        let mut spikes = Vec::new();
        while state.step < end_step {
            let t_now = state.step as f64 * self.dt;
            for (ch, trace) in self.channels.iter().zip(state.traces.iter_mut()) {
                let alpha = (-self.dt / ch.tau_syn).exp();
                for x in trace.iter_mut() {
                    *x *= alpha;
                }
            }
            let mut rec = std::mem::take(&mut state.scratch_rec);
            rec.iter_mut().for_each(|r| *r = 0.0);
            for (ch, trace) in self.channels.iter().zip(state.traces.iter()) {
                for i in 0..n {
                    let si = trace[i];
                    if si == 0.0 {
                        continue;
                    }
                    let row = &ch.w[i * n..(i + 1) * n];
                    for j in 0..n {
                        rec[j] += si * row[j];
                    }
                }
            }
            let scale = self.current_scale / n as f64;
            for r in rec.iter_mut() {
                *r *= scale;
            }
            for inj in injections {
                if inj.active_at(t_now) {
                    for &j in &inj.neurons {
                        rec[j] += inj.amplitude;
                    }
                }
            }
            spikes.clear();
            let t_next = self.core.advance(
                state.step,
                &mut state.v_mem,
                &mut state.refrac_until,
                &mut state.rng,
                &rec,
                &mut spikes,
            )?;
            state.scratch_rec = rec;
            for &j in &spikes {
                for (ch, trace) in self.channels.iter().zip(state.traces.iter_mut()) {
                    trace[j] += ch.spike_increment;
                }
                state.raster.events.push(SpikeEvent {
                    time: t_next,
                    neuron: j as u32,
                });
            }
            state.step += 1;
            state.t = t_next;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{build_geometry, GainSet, WeightSet};
    use approx::assert_abs_diff_eq;

    fn tiny_cfg(n: usize, gains: GainSet, noise: bool) -> SimConfig {
        let geometry = build_geometry(n).unwrap();
        let weights = WeightSet::build(&geometry, &gains, None).unwrap();
        SimConfig {
            geometry,
            weights,
            gains,
            neuron: NeuronParams::default(),
            synapse: SynapseParams::default(),
            dt: 1e-4,
            init_angle: 0.0,
            init_current: 2.0,
            init_duration: 0.1,
            current_scale: 1.0,
            noise: NoiseParams {
                enabled: noise,
                sigma: 0.04,
            },
            seed: 7,
        }
    }

    #[test]
    fn silent_network_stays_silent() {
        let mut cfg = tiny_cfg(6, GainSet::default(), false);
        cfg.current_scale = 0.0;
        cfg.neuron.i_bg = 0.0;
        cfg.init_current = 0.0;
        let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.05).unwrap();
        assert!(raster.is_empty());
    }

    #[test]
    fn subthreshold_background_never_fires() {
        let mut cfg = tiny_cfg(6, GainSet::default(), false);
        cfg.current_scale = 0.0;
        cfg.neuron.i_bg = 0.9999;
        cfg.init_current = 0.0;
        let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.5).unwrap();
        assert!(raster.is_empty());
    }

    #[test]
    fn init_pulse_fires_and_resets() {
        let mut cfg = tiny_cfg(4, GainSet::default(), false);
        cfg.current_scale = 0.0;
        cfg.neuron.i_bg = 0.0;
        cfg.init_current = 2.0;
        // Drive toward 2.0 with tau_m = 20 ms crosses v_th = 1 at ~13.9 ms.
        let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.05).unwrap();
        assert!(!raster.is_empty());
        assert!(raster.events.iter().all(|e| e.neuron == 0));
        let t_first = raster.events[0].time;
        let expect = -0.02 * (1.0f64 - 0.5).ln();
        assert_abs_diff_eq!(t_first, expect, epsilon = 2e-4);

        // Replay step-by-step to look at the membrane right after the spike.
        let engine = Engine::new(&cfg).unwrap();
        let mut state = engine.init_state();
        let spike_step = (t_first / cfg.dt).round() as u64;
        for _ in 0..spike_step {
            engine.step(&mut state, 0.0).unwrap();
        }
        assert_eq!(state.raster.len(), 1);
        assert_eq!(state.v_mem[0], cfg.neuron.v_reset);
    }

    #[test]
    fn no_init_pulse_no_bump() {
        let mut cfg = tiny_cfg(8, GainSet::default(), false);
        cfg.init_current = 0.0;
        cfg.neuron.i_bg = 0.95;
        let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.3).unwrap();
        assert!(raster.is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = tiny_cfg(10, GainSet::default(), true);
        let (a, _) = run(&cfg, &VelocityProfile::constant(0.5), 0.3).unwrap();
        let (b, _) = run(&cfg, &VelocityProfile::constant(0.5), 0.3).unwrap();
        assert_eq!(a, b);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 8;
        let (c, _) = run(&cfg2, &VelocityProfile::constant(0.5), 0.3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn refractory_spacing_holds() {
        // Excitatory self-coupling keeps neurons firing; check spacing.
        let gains = GainSet {
            g_inh: -2.0,
            g_cos: 8.0,
            g_sin: 0.1,
        };
        let mut cfg = tiny_cfg(8, gains, true);
        cfg.neuron.i_bg = 0.9;
        let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.5).unwrap();
        assert!(raster.len() > 10);
        let mut last = vec![f64::NEG_INFINITY; 8];
        for e in &raster.events {
            let i = e.neuron as usize;
            assert!(e.time - last[i] >= cfg.neuron.t_ref - 1e-12);
            last[i] = e.time;
        }
    }

    #[test]
    fn velocity_profile_hold_and_applied_list() {
        let p = VelocityProfile::new(vec![(0.0, 0.0), (0.1, 1.0), (0.2, -0.5)]).unwrap();
        assert_eq!(p.value_at(0.05), 0.0);
        assert_eq!(p.value_at(0.1), 1.0);
        assert_eq!(p.value_at(0.15), 1.0);
        assert_eq!(p.value_at(0.25), -0.5);
        let mut cfg = tiny_cfg(6, GainSet::default(), false);
        cfg.current_scale = 0.0;
        cfg.init_current = 0.0;
        cfg.neuron.i_bg = 0.5;
        let (_, applied) = run(&cfg, &p, 0.3).unwrap();
        assert_eq!(applied.len(), 3);
        assert_eq!(applied[0], (0.0, 0.0));
        assert_abs_diff_eq!(applied[1].0, 0.1, epsilon = 1e-9);
        assert_eq!(applied[1].1, 1.0);
        assert_eq!(applied[2].1, -0.5);
    }

    #[test]
    fn velocity_profile_rejects_bad_times() {
        assert!(VelocityProfile::new(vec![]).is_err());
        assert!(VelocityProfile::new(vec![(0.1, 0.0)]).is_err());
        assert!(VelocityProfile::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn mean_rate_profile_counts() {
        let raster = SpikeRaster {
            events: (0..10)
                .map(|k| SpikeEvent {
                    time: 0.005 + k as f64 * 0.01,
                    neuron: 3,
                })
                .collect(),
        };
        let rates = mean_rate_profile(&raster, 0.0, 0.1, 6).unwrap();
        assert_abs_diff_eq!(rates[3], 100.0, epsilon = 1e-9);
        assert_eq!(rates[0], 0.0);
        let empty = mean_rate_profile(&SpikeRaster::default(), 0.0, 1.0, 4).unwrap();
        assert!(empty.iter().all(|&r| r == 0.0));
        assert!(mean_rate_profile(&raster, 0.2, 0.1, 6).is_err());
    }

    #[test]
    fn dense_backend_matches_ring_backend() {
        // Same network expressed both ways must spike identically
        // (noise off; identical deterministic arithmetic is not required,
        // but spike times at dt resolution must agree for a robust regime).
        let gains = GainSet {
            g_inh: -2.0,
            g_cos: 8.0,
            g_sin: 0.1,
        };
        let cfg = {
            let mut c = tiny_cfg(8, gains, false);
            c.neuron.i_bg = 0.9;
            c
        };
        let (ring_raster, _) = run(&cfg, &VelocityProfile::zero(), 0.4).unwrap();

        let dense = DenseNet::new(
            8,
            vec![DenseChannel {
                tau_syn: cfg.synapse.tau_syn,
                spike_increment: cfg.synapse.spike_increment,
                w: cfg.weights.w_sym().to_vec(),
            }],
            cfg.neuron,
            cfg.noise,
            cfg.dt,
            cfg.current_scale,
            None,
        )
        .unwrap();
        let mut state = dense.init_state(cfg.seed, None);
        let inj = Injection {
            neurons: vec![0],
            amplitude: cfg.init_current,
            t_start: 0.0,
            t_end: cfg.init_duration,
        };
        dense.run_segment(&mut state, &[inj], 0.4).unwrap();
        assert_eq!(ring_raster.len(), state.raster.len());
        for (a, b) in ring_raster.events.iter().zip(state.raster.events.iter()) {
            assert_eq!(a.neuron, b.neuron);
            assert_abs_diff_eq!(a.time, b.time, epsilon = 1e-12);
        }
    }
}
