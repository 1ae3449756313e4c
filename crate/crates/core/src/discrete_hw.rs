//! Emulation of a mixed-signal neuromorphic deployment of the ring.
//!
//! The target substrate differs from the continuous model in three ways it
//! is worth being faithful to: weights exist only as integer numbers of
//! identical unit synapses per (pre, post, class) triple; each neuron
//! accepts at most 64 incoming connection entries; and the ring shrinks to
//! ten populations of four neurons. Velocity input is not a gain but a set
//! of direction-selective connections added to (and removed from) the base
//! table at run time. Device mismatch is modeled as seeded per-neuron
//! jitter on the membrane time constant and background current, which is
//! what makes the four neurons of a population more than clones.
//!
//! Simulation reuses the dense multi-channel engine backend: one channel
//! per synapse class, each with its own time constant and unit efficacy,
//! and weight matrices assembled from the connection counts.

use crate::decoder::{
    decode_trace_grouped, fit_bump_velocity, unwrap, weighted_linear_fit, DecodedTrace, LinearFit,
};
use crate::engine::{DenseChannel, DenseNet, Injection, NeuronParams, NoiseParams, SpikeRaster};
use crate::error::{Result, RingError};
use crate::ring::GainSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

/// The four on-chip synapse circuits. Excitatory classes depolarize,
/// inhibitory classes hyperpolarize; fast and slow differ in their
/// current decay constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SynapseClass {
    FastExc,
    SlowExc,
    FastInh,
    SlowInh,
}

impl SynapseClass {
    pub const ALL: [SynapseClass; 4] = [
        SynapseClass::FastExc,
        SynapseClass::SlowExc,
        SynapseClass::FastInh,
        SynapseClass::SlowInh,
    ];

    pub fn index(self) -> usize {
        match self {
            SynapseClass::FastExc => 0,
            SynapseClass::SlowExc => 1,
            SynapseClass::FastInh => 2,
            SynapseClass::SlowInh => 3,
        }
    }

    /// +1 for excitatory classes, −1 for inhibitory ones.
    pub fn polarity(self) -> f64 {
        match self {
            SynapseClass::FastExc | SynapseClass::SlowExc => 1.0,
            SynapseClass::FastInh | SynapseClass::SlowInh => -1.0,
        }
    }
}

impl fmt::Display for SynapseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SynapseClass::FastExc => "fast_exc",
            SynapseClass::SlowExc => "slow_exc",
            SynapseClass::FastInh => "fast_inh",
            SynapseClass::SlowInh => "slow_inh",
        };
        f.write_str(s)
    }
}

impl FromStr for SynapseClass {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast_exc" => Ok(SynapseClass::FastExc),
            "slow_exc" => Ok(SynapseClass::SlowExc),
            "fast_inh" => Ok(SynapseClass::FastInh),
            "slow_inh" => Ok(SynapseClass::SlowInh),
            other => Err(RingError::InvalidConfig(format!(
                "unknown synapse class `{other}` (expected fast_exc, slow_exc, fast_inh, slow_inh)"
            ))),
        }
    }
}

/// Per-class unit synapse: the weight magnitude one connection contributes
/// and the decay constant of its current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    /// Weight magnitude of a single connection (sign comes from the class
    /// polarity).
    pub efficacy: f64,
    /// Synaptic current decay constant (seconds).
    pub tau_syn: f64,
}

/// Chip-level layout limits and synapse classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwTopology {
    pub n_pops: usize,
    pub pop_size: usize,
    /// Maximum summed incoming connection count per neuron.
    pub fan_in_limit: usize,
    /// Indexed by [`SynapseClass::index`].
    pub classes: [ClassParams; 4],
}

/// Hard cap on neurons per core.
pub const MAX_CORE_NEURONS: usize = 256;

impl HwTopology {
    pub fn validate(&self) -> Result<()> {
        if self.n_pops < 2 {
            return Err(RingError::InvalidConfig(format!(
                "need at least 2 populations, got {}",
                self.n_pops
            )));
        }
        if self.pop_size == 0 {
            return Err(RingError::InvalidConfig("population size is zero".into()));
        }
        if self.n_pops * self.pop_size > MAX_CORE_NEURONS {
            return Err(RingError::InvalidConfig(format!(
                "{} pops x {} neurons exceeds the {}-neuron core",
                self.n_pops, self.pop_size, MAX_CORE_NEURONS
            )));
        }
        if self.fan_in_limit == 0 {
            return Err(RingError::InvalidConfig("fan-in limit is zero".into()));
        }
        for (k, c) in self.classes.iter().enumerate() {
            if !(c.efficacy.is_finite() && c.efficacy > 0.0) || !(c.tau_syn > 0.0) {
                return Err(RingError::InvalidConfig(format!(
                    "synapse class {} must have positive efficacy and tau, got {:?}",
                    SynapseClass::ALL[k],
                    c
                )));
            }
        }
        Ok(())
    }

    pub fn n_neurons(&self) -> usize {
        self.n_pops * self.pop_size
    }

    /// Population of a neuron index.
    pub fn pop_of(&self, neuron: usize) -> usize {
        neuron / self.pop_size
    }

    /// Neurons of one population, in index order.
    pub fn neurons_of(&self, pop: usize) -> std::ops::Range<usize> {
        pop * self.pop_size..(pop + 1) * self.pop_size
    }

    /// Preferred angle of a population (evenly spaced around the circle).
    pub fn pop_angle(&self, pop: usize) -> f64 {
        TAU * pop as f64 / self.n_pops as f64
    }

    /// Preferred angles of all populations.
    pub fn pop_angles(&self) -> Vec<f64> {
        (0..self.n_pops).map(|p| self.pop_angle(p)).collect()
    }

    /// Angular spacing between adjacent populations (radians).
    pub fn pop_spacing(&self) -> f64 {
        TAU / self.n_pops as f64
    }

    pub fn class_params(&self, class: SynapseClass) -> ClassParams {
        self.classes[class.index()]
    }
}

/// One aggregated connection-table row: `count` unit synapses of one class
/// from one pre neuron onto one post neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnEntry {
    pub pre: u32,
    pub post: u32,
    pub class: SynapseClass,
    pub count: u32,
}

fn entry_key(e: &ConnEntry) -> (u32, u32, SynapseClass) {
    (e.pre, e.post, e.class)
}

/// The network as the chip sees it: a multiset of unit synapses, stored in
/// canonical form (sorted by (pre, post, class), duplicates merged, zero
/// counts dropped). Equality is therefore multiset equality. Fan-in is
/// checked at construction, so every table in circulation is deployable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionTable {
    entries: Vec<ConnEntry>,
    n_neurons: usize,
    fan_in_limit: usize,
}

impl ConnectionTable {
    /// Canonicalize and validate a list of entries against the topology.
    pub fn new(entries: Vec<ConnEntry>, topo: &HwTopology) -> Result<Self> {
        topo.validate()?;
        let n_neurons = topo.n_neurons();
        let mut entries = entries;
        for e in &entries {
            if e.pre as usize >= n_neurons || e.post as usize >= n_neurons {
                return Err(RingError::InvalidConfig(format!(
                    "connection ({}, {}) outside the {}-neuron network",
                    e.pre, e.post, n_neurons
                )));
            }
        }
        entries.sort_by_key(entry_key);
        let mut merged: Vec<ConnEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if entry_key(last) == entry_key(&e) => {
                    last.count = last.count.checked_add(e.count).ok_or_else(|| {
                        RingError::InvalidConfig("connection count overflow".into())
                    })?;
                }
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.count > 0);
        let table = ConnectionTable {
            entries: merged,
            n_neurons,
            fan_in_limit: topo.fan_in_limit,
        };
        table.check_fan_in()?;
        Ok(table)
    }

    /// Empty table for a topology.
    pub fn empty(topo: &HwTopology) -> Result<Self> {
        ConnectionTable::new(Vec::new(), topo)
    }

    fn check_fan_in(&self) -> Result<()> {
        let fan_in = self.fan_in_per_neuron();
        let mut offenders: Vec<(usize, u64)> = fan_in
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > self.fan_in_limit as u64)
            .map(|(j, &f)| (j, f))
            .collect();
        if offenders.is_empty() {
            return Ok(());
        }
        offenders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let worst: Vec<String> = offenders
            .iter()
            .take(3)
            .map(|(j, f)| format!("neuron {j}: {f}"))
            .collect();
        Err(RingError::InvalidConfig(format!(
            "fan-in limit {} exceeded by {} neuron(s); worst: {}",
            self.fan_in_limit,
            offenders.len(),
            worst.join(", ")
        )))
    }

    /// Summed incoming connection count per neuron, across all classes.
    pub fn fan_in_per_neuron(&self) -> Vec<u64> {
        let mut fan_in = vec![0u64; self.n_neurons];
        for e in &self.entries {
            fan_in[e.post as usize] += e.count as u64;
        }
        fan_in
    }

    /// Canonical entries (sorted, merged, no zeros).
    pub fn entries(&self) -> &[ConnEntry] {
        &self.entries
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of unit synapses.
    pub fn total_synapses(&self) -> u64 {
        self.entries.iter().map(|e| e.count as u64).sum()
    }

    /// Dense per-class weight matrices (row-major, entry `[pre*n + post]`),
    /// each count scaled by its class polarity and efficacy.
    pub fn class_weight_matrices(&self, topo: &HwTopology) -> Vec<Vec<f64>> {
        let n = self.n_neurons;
        let mut mats = vec![vec![0.0; n * n]; SynapseClass::ALL.len()];
        for e in &self.entries {
            let params = topo.class_params(e.class);
            mats[e.class.index()][e.pre as usize * n + e.post as usize] +=
                e.class.polarity() * params.efficacy * e.count as f64;
        }
        mats
    }

    /// Write the table as CSV with header `pre,post,class,count`.
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pre", "post", "class", "count"])?;
        for e in &self.entries {
            w.write_record([
                e.pre.to_string(),
                e.post.to_string(),
                e.class.to_string(),
                e.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a table from CSV with header `pre,post,class,count`.
    pub fn from_csv<R: std::io::Read>(reader: R, topo: &HwTopology) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let headers = r.headers()?;
            let expect = ["pre", "post", "class", "count"];
            if headers.len() != expect.len()
                || headers.iter().zip(expect).any(|(h, e)| h.trim() != e)
            {
                return Err(RingError::InvalidConfig(format!(
                    "connection CSV header must be `pre,post,class,count`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                )));
            }
        }
        let mut entries = Vec::new();
        for (idx, record) in r.records().enumerate() {
            let record = record?;
            let row = idx + 2; // 1-based, after the header line
            let field = |k: usize| -> Result<&str> {
                record.get(k).ok_or_else(|| {
                    RingError::InvalidConfig(format!("row {row}: missing field {k}"))
                })
            };
            let parse_u32 = |s: &str, what: &str| -> Result<u32> {
                s.trim().parse().map_err(|_| {
                    RingError::InvalidConfig(format!("row {row}: bad {what} `{s}`"))
                })
            };
            entries.push(ConnEntry {
                pre: parse_u32(field(0)?, "pre")?,
                post: parse_u32(field(1)?, "post")?,
                class: field(2)?.trim().parse().map_err(|e| {
                    RingError::InvalidConfig(format!("row {row}: {e}"))
                })?,
                count: parse_u32(field(3)?, "count")?,
            });
        }
        ConnectionTable::new(entries, topo)
    }
}

/// Integer synapse counts realizing one continuous weight row.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedProfile {
    /// Excitatory counts per entry (from the positive part).
    pub exc: Vec<u32>,
    /// Inhibitory counts per entry (from the negative part).
    pub inh: Vec<u32>,
    /// Signed leftover weight per entry: `w − (exc − inh)·unit`.
    pub residual: Vec<f64>,
}

/// Round a continuous weight row onto integer counts of unit synapses.
///
/// Positive weights become excitatory counts `round(w/unit)`, negative
/// weights inhibitory counts `round(−w/unit)`; each residual is at most
/// half a unit in magnitude.
pub fn quantize_profile(row: &[f64], unit_weight: f64) -> Result<QuantizedProfile> {
    if !(unit_weight.is_finite() && unit_weight > 0.0) {
        return Err(RingError::InvalidConfig(format!(
            "unit weight must be positive, got {unit_weight}"
        )));
    }
    let mut exc = Vec::with_capacity(row.len());
    let mut inh = Vec::with_capacity(row.len());
    let mut residual = Vec::with_capacity(row.len());
    for &w in row {
        if !w.is_finite() {
            return Err(RingError::InvalidConfig(format!(
                "weight entries must be finite, got {w}"
            )));
        }
        let e = (w.max(0.0) / unit_weight).round() as u32;
        let i = ((-w).max(0.0) / unit_weight).round() as u32;
        exc.push(e);
        inh.push(i);
        residual.push(w - (e as f64 - i as f64) * unit_weight);
    }
    Ok(QuantizedProfile { exc, inh, residual })
}

/// Build the base ring as a connection table: the population-level
/// symmetric kernel `g_inh + g_cos·cos(Δ)` is quantized per population
/// offset (excitatory part against the fast-excitatory unit, inhibitory
/// part against the fast-inhibitory unit) and expanded all-to-all between
/// the neurons of each population pair.
pub fn build_hw_ring(topo: &HwTopology, gains: &GainSet) -> Result<ConnectionTable> {
    topo.validate()?;
    gains.validate()?;
    let p = topo.n_pops;
    let kernel: Vec<f64> = (0..p)
        .map(|d| gains.g_inh + gains.g_cos * (TAU * d as f64 / p as f64).cos())
        .collect();
    let exc = quantize_profile(&kernel, topo.class_params(SynapseClass::FastExc).efficacy)?;
    let inh = quantize_profile(&kernel, topo.class_params(SynapseClass::FastInh).efficacy)?;
    let mut entries = Vec::new();
    for pre_pop in 0..p {
        for post_pop in 0..p {
            let d = (post_pop + p - pre_pop) % p;
            for (count, class) in [
                (exc.exc[d], SynapseClass::FastExc),
                (inh.inh[d], SynapseClass::FastInh),
            ] {
                if count == 0 {
                    continue;
                }
                for pre in topo.neurons_of(pre_pop) {
                    for post in topo.neurons_of(post_pop) {
                        entries.push(ConnEntry {
                            pre: pre as u32,
                            post: post as u32,
                            class,
                            count,
                        });
                    }
                }
            }
        }
    }
    ConnectionTable::new(entries, topo)
}

/// A deployable set of direction-selective velocity connections: count
/// `n_connections` fast-excitatory synapses from every neuron to every
/// neuron of the next population along `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityConnectionSet {
    direction: i8,
    n_connections: u32,
    realized: Vec<ConnEntry>,
}

impl VelocityConnectionSet {
    pub fn build(topo: &HwTopology, direction: i8, n_connections: u32) -> Result<Self> {
        topo.validate()?;
        if direction != 1 && direction != -1 {
            return Err(RingError::InvalidConfig(format!(
                "velocity direction must be +1 or -1, got {direction}"
            )));
        }
        let p = topo.n_pops;
        let mut realized = Vec::new();
        if n_connections > 0 {
            for pre_pop in 0..p {
                let post_pop = if direction > 0 {
                    (pre_pop + 1) % p
                } else {
                    (pre_pop + p - 1) % p
                };
                for pre in topo.neurons_of(pre_pop) {
                    for post in topo.neurons_of(post_pop) {
                        realized.push(ConnEntry {
                            pre: pre as u32,
                            post: post as u32,
                            class: SynapseClass::FastExc,
                            count: n_connections,
                        });
                    }
                }
            }
            realized.sort_by_key(entry_key);
        }
        Ok(VelocityConnectionSet {
            direction,
            n_connections,
            realized,
        })
    }

    /// The zero set: applying it changes nothing.
    pub fn none(topo: &HwTopology) -> Result<Self> {
        VelocityConnectionSet::build(topo, 1, 0)
    }

    pub fn direction(&self) -> i8 {
        self.direction
    }

    pub fn n_connections(&self) -> u32 {
        self.n_connections
    }

    /// The connection delta this set adds.
    pub fn realized(&self) -> &[ConnEntry] {
        &self.realized
    }
}

fn topo_like(table: &ConnectionTable, topo: &HwTopology) -> Result<()> {
    if table.n_neurons() != topo.n_neurons() || table.fan_in_limit != topo.fan_in_limit {
        return Err(RingError::InvalidConfig(
            "connection table does not match the topology".into(),
        ));
    }
    Ok(())
}

/// Add a velocity set's connections to a base table. Fails (leaving the
/// base untouched) if any neuron's fan-in would exceed the limit.
pub fn apply_velocity(
    table: &ConnectionTable,
    vset: &VelocityConnectionSet,
    topo: &HwTopology,
) -> Result<ConnectionTable> {
    topo_like(table, topo)?;
    let mut entries = table.entries.clone();
    entries.extend_from_slice(&vset.realized);
    ConnectionTable::new(entries, topo)
}

/// Remove a previously applied velocity set. Exact inverse of
/// [`apply_velocity`]: removing what was added restores the original
/// table's multiset of synapses. Removing connections that are not present
/// is an error.
pub fn remove_velocity(
    table: &ConnectionTable,
    vset: &VelocityConnectionSet,
    topo: &HwTopology,
) -> Result<ConnectionTable> {
    topo_like(table, topo)?;
    let mut entries = table.entries.clone();
    for delta in &vset.realized {
        let found = entries
            .iter_mut()
            .find(|e| entry_key(e) == entry_key(delta));
        match found {
            Some(e) if e.count >= delta.count => e.count -= delta.count,
            _ => {
                return Err(RingError::InvalidConfig(format!(
                    "cannot remove {} connections ({} -> {}, {}): not present in the table",
                    delta.count, delta.pre, delta.post, delta.class
                )))
            }
        }
    }
    ConnectionTable::new(entries, topo)
}

/// Constant-current cue driving one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueSpec {
    pub population: usize,
    /// Seconds from run start during which the cue current is on.
    pub duration: f64,
    /// Current amplitude added to each neuron of the cued population.
    pub amplitude: f64,
}

/// Run-level knobs for the hardware emulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwRunOptions {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Relative σ of the per-neuron mismatch jitter on tau_m and i_bg
    /// (multipliers clipped to [0.5, 1.5]); 0 disables jitter.
    pub jitter_sigma: f64,
    /// Base neuron parameters before jitter.
    pub neuron: NeuronParams,
    pub noise: NoiseParams,
    /// Global scale on recurrent currents (divided by the neuron count, as
    /// in the continuous model).
    pub current_scale: f64,
}

impl HwRunOptions {
    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) || !(self.dt > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "run needs positive dt and t_end, got dt={} t_end={}",
                self.dt, self.t_end
            )));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(RingError::InvalidConfig(format!(
                "jitter sigma must be nonnegative, got {}",
                self.jitter_sigma
            )));
        }
        if !(self.current_scale.is_finite() && self.current_scale > 0.0) {
            return Err(RingError::InvalidConfig(format!(
                "current scale must be positive, got {}",
                self.current_scale
            )));
        }
        Ok(())
    }
}

/// Draw the per-neuron mismatched parameter values: two standard normals
/// per neuron (tau_m then i_bg, interleaved), each mapped to a multiplier
/// `clip(1 + σz, 0.5, 1.5)` on the base value.
fn draw_jitter(
    rng: &mut ChaCha8Rng,
    n: usize,
    sigma: f64,
    base: &NeuronParams,
) -> (Vec<f64>, Vec<f64>) {
    let mut tau_m = Vec::with_capacity(n);
    let mut i_bg = Vec::with_capacity(n);
    for _ in 0..n {
        let zt: f64 = rng.sample(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        tau_m.push(base.tau_m * (1.0 + sigma * zt).clamp(0.5, 1.5));
        i_bg.push(base.i_bg * (1.0 + sigma * zi).clamp(0.5, 1.5));
    }
    (tau_m, i_bg)
}

/// Simulate the quantized network.
///
/// The cue population receives a constant current for the cue duration at
/// the start of the run. Each `(time, set)` schedule entry replaces the
/// previously active velocity set (deltas are always relative to the base
/// table) by swapping weight matrices at that time; the evolving membrane
/// and synaptic state carries across swaps. Returns the full spike raster.
pub fn run_hw(
    topo: &HwTopology,
    table: &ConnectionTable,
    schedule: &[(f64, VelocityConnectionSet)],
    cue: &CueSpec,
    opts: &HwRunOptions,
) -> Result<SpikeRaster> {
    topo.validate()?;
    opts.validate()?;
    topo_like(table, topo)?;
    if cue.population >= topo.n_pops {
        return Err(RingError::InvalidConfig(format!(
            "cue population {} out of range ({} pops)",
            cue.population, topo.n_pops
        )));
    }
    if !(cue.duration >= 0.0 && cue.amplitude.is_finite()) {
        return Err(RingError::InvalidConfig(
            "cue needs nonnegative duration and finite amplitude".into(),
        ));
    }
    for pair in schedule.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(RingError::InvalidConfig(format!(
                "schedule times must be strictly increasing, got {} then {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    if let Some((t, _)) = schedule.first() {
        if *t < 0.0 {
            return Err(RingError::InvalidConfig(format!(
                "schedule times must be nonnegative, got {t}"
            )));
        }
    }

    let n = topo.n_neurons();
    let mut seed_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let per_neuron = if opts.jitter_sigma > 0.0 {
        Some(draw_jitter(&mut seed_rng, n, opts.jitter_sigma, &opts.neuron))
    } else {
        None
    };
    let channels: Vec<DenseChannel> = SynapseClass::ALL
        .iter()
        .map(|&c| {
            let params = topo.class_params(c);
            DenseChannel {
                tau_syn: params.tau_syn,
                spike_increment: 1.0,
                w: vec![0.0; n * n],
            }
        })
        .collect();
    let mut net = DenseNet::new(
        n,
        channels,
        opts.neuron.clone(),
        opts.noise.clone(),
        opts.dt,
        opts.current_scale,
        per_neuron.as_ref().map(|(t, i)| (t.as_slice(), i.as_slice())),
    )?;
    // The mismatch draws and the membrane-noise stream share one RNG so a
    // seed pins down the entire run.
    let mut state = net.init_state(opts.seed, opts.noise.enabled.then_some(seed_rng));

    let cue_neurons: Vec<usize> = topo.neurons_of(cue.population).collect();
    let injections = vec![Injection {
        neurons: cue_neurons,
        amplitude: cue.amplitude,
        t_start: 0.0,
        t_end: cue.duration,
    }];

    // Segment boundaries: run start, each schedule time within range, run end.
    net.set_weights(table.class_weight_matrices(topo))?;
    let mut boundaries: Vec<(f64, Option<&VelocityConnectionSet>)> = vec![(0.0, None)];
    for (t, vset) in schedule {
        if *t < opts.t_end {
            boundaries.push((*t, Some(vset)));
        }
    }
    for k in 0..boundaries.len() {
        let (t0, vset) = (boundaries[k].0, boundaries[k].1);
        let t1 = boundaries.get(k + 1).map_or(opts.t_end, |b| b.0);
        if let Some(vset) = vset {
            let active = apply_velocity(table, vset, topo)?;
            net.set_weights(active.class_weight_matrices(topo))?;
        }
        debug_assert!(t1 >= t0);
        net.run_segment(&mut state, &injections, t1)?;
    }
    Ok(state.raster)
}

/// Population-level decoded trace of a hardware raster: spikes are pooled
/// per population before the vector average. The window is longer than in
/// the continuous model because forty neurons emit far fewer spikes.
pub const HW_PVA_WINDOW: f64 = 0.1;
/// Sample spacing of the hardware decoded trace (seconds).
pub const HW_PVA_DT: f64 = 0.01;

pub fn decode_hw_trace(raster: &SpikeRaster, topo: &HwTopology) -> Result<DecodedTrace> {
    let group_of: Vec<usize> = (0..topo.n_neurons()).map(|i| topo.pop_of(i)).collect();
    decode_trace_grouped(
        raster,
        &topo.pop_angles(),
        Some(&group_of),
        HW_PVA_DT,
        HW_PVA_WINDOW,
    )
}

/// One velocity-sweep condition after aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub count: u32,
    /// Mean fitted bump velocity across surviving runs (rad/s).
    pub mean_velocity: f64,
    /// Standard error of that mean.
    pub sem: f64,
    /// Runs that produced a usable velocity fit.
    pub n_runs: usize,
    /// Runs excluded because the bump died or the fit failed.
    pub n_dead: usize,
}

/// Velocity sweep output: per-count statistics plus the weighted linear
/// fit of mean velocity against connection count (present when at least
/// three counts were swept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySweep {
    pub rows: Vec<SweepRow>,
    pub fit: Option<LinearFit>,
}

/// Protocol knobs for [`velocity_sweep`] and the per-run fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub run: HwRunOptions,
    pub cue_amplitude: f64,
    pub cue_duration: f64,
    /// Time at which the velocity connections switch on.
    pub velocity_on: f64,
    /// Velocity-fit window (seconds).
    pub fit_start: f64,
    pub fit_end: f64,
    pub direction: i8,
}

impl SweepOptions {
    fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if !(self.velocity_on >= 0.0 && self.velocity_on < self.run.t_end) {
            return Err(RingError::InvalidConfig(format!(
                "velocity-on time {} outside the run (t_end {})",
                self.velocity_on, self.run.t_end
            )));
        }
        if !(self.fit_start >= 0.0 && self.fit_end > self.fit_start)
            || self.fit_end > self.run.t_end
        {
            return Err(RingError::InvalidConfig(format!(
                "fit window [{}, {}] must sit inside the run (t_end {})",
                self.fit_start, self.fit_end, self.run.t_end
            )));
        }
        Ok(())
    }
}

/// Deterministic per-run seed: a few rounds of splitmix64 over the base
/// seed and the run coordinates.
pub(crate) fn mix_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut x = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    for _ in 0..2 {
        x ^= x >> 30;
        x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 27;
        x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

/// Fit the bump velocity of one hardware run; `Ok(None)` marks a dead run
/// (no decodable bump or an unusable fit window).
fn fit_hw_run(
    topo: &HwTopology,
    table: &ConnectionTable,
    count: u32,
    start_pop: usize,
    seed: u64,
    opts: &SweepOptions,
) -> Result<Option<f64>> {
    let vset = VelocityConnectionSet::build(topo, opts.direction, count)?;
    let schedule = vec![(opts.velocity_on, vset)];
    let cue = CueSpec {
        population: start_pop,
        duration: opts.cue_duration,
        amplitude: opts.cue_amplitude,
    };
    let mut run_opts = opts.run.clone();
    run_opts.seed = seed;
    let raster = run_hw(topo, table, &schedule, &cue, &run_opts)?;
    let trace = decode_hw_trace(&raster, topo)?;
    let unwrapped = match unwrap(&trace) {
        Ok(u) => u,
        Err(_) => return Ok(None),
    };
    match fit_bump_velocity(&unwrapped, opts.fit_start, opts.fit_end) {
        Ok(fit) => Ok(Some(fit.slope)),
        Err(_) => Ok(None),
    }
}

/// Measure mean bump velocity as a function of the number of velocity
/// connections.
///
/// Every count is run `repeats` times from each starting population with
/// a seed derived from (base seed, count, population, repeat). Dead runs
/// are excluded from the statistics but counted; a count whose runs all
/// die aborts the sweep. Rows keep the order of `counts`; the cross-count
/// trend is summarized by a linear fit weighted by 1/SEM².
pub fn velocity_sweep(
    topo: &HwTopology,
    table: &ConnectionTable,
    counts: &[u32],
    repeats: usize,
    opts: &SweepOptions,
) -> Result<VelocitySweep> {
    topo.validate()?;
    opts.validate()?;
    topo_like(table, topo)?;
    if counts.is_empty() {
        return Err(RingError::InvalidConfig("no counts to sweep".into()));
    }
    if repeats < 2 {
        return Err(RingError::InvalidConfig(format!(
            "need at least 2 repeats to estimate a standard error, got {repeats}"
        )));
    }
    let jobs: Vec<(usize, u32, usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(ci, &count)| {
            (0..topo.n_pops).flat_map(move |pop| {
                (0..repeats).map(move |rep| (ci, count, pop, rep))
            })
        })
        .collect();
    let fits: Vec<(usize, Option<f64>)> = jobs
        .into_par_iter()
        .map(|(ci, count, pop, rep)| {
            let seed = mix_seed(opts.run.seed, count as u64, pop as u64, rep as u64);
            fit_hw_run(topo, table, count, pop, seed, opts).map(|f| (ci, f))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(counts.len());
    for (ci, &count) in counts.iter().enumerate() {
        let slopes: Vec<f64> = fits
            .iter()
            .filter(|(i, _)| *i == ci)
            .filter_map(|(_, s)| *s)
            .collect();
        let n_total = topo.n_pops * repeats;
        let n_dead = n_total - slopes.len();
        if slopes.len() < 2 {
            return Err(RingError::Calibration(format!(
                "count {count}: {} of {} runs dead — not enough survivors to aggregate",
                n_dead, n_total
            )));
        }
        let n = slopes.len() as f64;
        let mean = slopes.iter().sum::<f64>() / n;
        let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sem = (var / n).sqrt();
        rows.push(SweepRow {
            count,
            mean_velocity: mean,
            sem,
            n_runs: slopes.len(),
            n_dead,
        });
    }
    let fit = if rows.len() >= 3 {
        let points: Vec<(f64, f64, f64)> = rows
            .iter()
            .map(|r| (r.count as f64, r.mean_velocity, r.sem.max(1e-12)))
            .collect();
        Some(weighted_linear_fit(&points)?)
    } else {
        None
    };
    Ok(VelocitySweep { rows, fit })
}
