//! Calibrated operating points. These constants were produced by the
//! calibration pipeline in this crate (grid search over currents, velocity
//! gain refinement, and the hardware sweep tuning) and are frozen here so
//! experiments and tests are reproducible without re-running calibration.

use crate::discrete_hw::{ClassParams, HwRunOptions, HwTopology, SweepOptions};
use crate::engine::{NeuronParams, NoiseParams, SimConfig, SynapseParams};
use crate::error::Result;
use crate::ring::{build_geometry, BoundaryConfig, GainSet, WeightSet};
use std::f64::consts::PI;

/// Default ring size for the continuous model.
pub const N_DEFAULT: usize = 120;
/// Integration step (seconds).
pub const DT_DEFAULT: f64 = 1e-4;
/// Membrane time constant at the calibrated operating point. Short on
/// purpose: recovery from reset must be much faster than the synaptic
/// memory so active neurons can sustain ~100 Hz.
pub const TAU_M_CAL: f64 = 0.001;
/// Synaptic trace decay at the calibrated operating point. Long on purpose:
/// the number of spikes held in trace memory sets how strongly the bump
/// position is anchored against diffusion.
pub const TAU_SYN_CAL: f64 = 0.05;
/// Background current holding neurons just below the unit threshold.
pub const I_BG_CAL: f64 = 0.998;
/// Global recurrent current scale (applied together with 1/n).
pub const CURRENT_SCALE_CAL: f64 = 0.6;
/// Stationary membrane-noise standard deviation; the fluctuation drive that
/// lets the bump sustain itself.
pub const NOISE_SIGMA_CAL: f64 = 0.06;
/// Initialization pulse amplitude (in threshold units above background).
pub const INIT_CURRENT_CAL: f64 = 2.0;
/// Initialization pulse duration (seconds).
pub const INIT_DURATION: f64 = 0.1;
/// Velocity-modulation gain after refinement so decoded bump velocity
/// matches commanded velocity (slope ≈ 1). The unrefined published value
/// (`GainSet::default().g_sin` = 0.13) undershoots by ~6× at this
/// operating point.
pub const G_SIN_CAL: f64 = 0.81;

/// Generic limited-joint range used by the experiment presets.
pub const THETA_0_DEFAULT: f64 = 0.0;
pub const THETA_L_DEFAULT: f64 = 3.0 * PI / 2.0;
/// Calibrated attenuation ramp width for the bounded model.
pub const BOUNDARY_RAMP_CAL: f64 = PI / 24.0;
/// Calibrated peak of the out-of-bound inhibitory surcharge (same units as
/// the coupling gains; matches the type-level default |g_inh|/2). Because
/// the surcharge is broadcast uniformly, its strength damps stray activity
/// in the forbidden arc without displacing a bump parked at a limit.
pub const BOUNDARY_BIAS_PEAK_CAL: f64 = 16.46 / 2.0;

pub fn calibrated_neuron() -> NeuronParams {
    NeuronParams {
        tau_m: TAU_M_CAL,
        v_th: 1.0,
        v_reset: 0.0,
        t_ref: 0.002,
        i_bg: I_BG_CAL,
    }
}

pub fn calibrated_synapse() -> SynapseParams {
    SynapseParams {
        tau_syn: TAU_SYN_CAL,
        spike_increment: 1.0,
    }
}

pub fn calibrated_gains() -> GainSet {
    GainSet {
        g_sin: G_SIN_CAL,
        ..GainSet::default()
    }
}

pub fn calibrated_noise() -> NoiseParams {
    NoiseParams {
        enabled: true,
        sigma: NOISE_SIGMA_CAL,
    }
}

/// Calibrated boundary shape over the default joint range.
pub fn calibrated_boundary() -> BoundaryConfig {
    BoundaryConfig::new(
        THETA_0_DEFAULT,
        THETA_L_DEFAULT,
        BOUNDARY_RAMP_CAL,
        BOUNDARY_BIAS_PEAK_CAL,
    )
    .expect("calibrated boundary constants are valid")
}

/// Full calibrated continuous-model configuration, unbounded ring.
pub fn calibrated_config(n: usize, init_angle: f64, seed: u64) -> Result<SimConfig> {
    let geometry = build_geometry(n)?;
    let gains = calibrated_gains();
    let weights = WeightSet::build(&geometry, &gains, None)?;
    let cfg = SimConfig {
        geometry,
        weights,
        gains,
        neuron: calibrated_neuron(),
        synapse: calibrated_synapse(),
        dt: DT_DEFAULT,
        init_angle,
        init_current: INIT_CURRENT_CAL,
        init_duration: INIT_DURATION,
        current_scale: CURRENT_SCALE_CAL,
        noise: calibrated_noise(),
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Same operating point with the boundary model enabled over
/// `[theta_0, theta_l]`.
pub fn calibrated_bounded_config(
    n: usize,
    init_angle: f64,
    seed: u64,
    boundary: BoundaryConfig,
) -> Result<SimConfig> {
    let mut cfg = calibrated_config(n, init_angle, seed)?;
    cfg.weights = WeightSet::build(&cfg.geometry, &cfg.gains, Some(boundary))?;
    cfg.validate()?;
    Ok(cfg)
}

// --- Hardware-emulation operating point ---

/// Populations on the ring in hardware mode.
pub const HW_N_POPS: usize = 10;
/// Neurons per population.
pub const HW_POP_SIZE: usize = 4;
/// Incoming connection entries available per neuron.
pub const HW_FAN_IN_LIMIT: usize = 64;
/// Weight magnitude of one fast-inhibitory unit synapse. Sized so the
/// published symmetric kernel quantizes to per-offset counts
/// [0, 0, 1, 1, 2, 2]: base fan-in 40 per neuron, leaving room for up to
/// 6 velocity connections per pre/post pair.
pub const HW_INH_EFFICACY: f64 = 16.0;
/// Weight magnitude of one fast-excitatory unit synapse — the velocity
/// unit. Calibrated so doubling the connection count doubles the measured
/// bump velocity through the swept range (count 3 -> 6 lands on a factor
/// of 2.000 at the default seed protocol).
pub const HW_VEL_EFFICACY: f64 = 3.574;
/// Slow-class efficacies and decay (present for completeness; the base
/// ring and velocity sets use only the fast classes).
pub const HW_SLOW_EFFICACY: f64 = 16.0;
pub const HW_FAST_TAU_SYN: f64 = TAU_SYN_CAL;
pub const HW_SLOW_TAU_SYN: f64 = 0.1;

/// Hardware-mode background current (recalibrated separately from the
/// continuous model: 40 neurons, population-level kernel).
pub const HW_I_BG: f64 = 0.995;
/// Hardware-mode membrane noise (stationary standard deviation).
pub const HW_NOISE_SIGMA: f64 = 0.05;
/// Relative σ of per-neuron device-mismatch jitter on tau_m and i_bg.
pub const HW_JITTER_SIGMA: f64 = 0.05;
/// Global recurrent current scale in hardware mode.
pub const HW_CURRENT_SCALE: f64 = 0.6;
/// Cue: constant current to the target population.
pub const HW_CUE_AMPLITUDE: f64 = 2.0;
pub const HW_CUE_DURATION: f64 = 1.0;

/// Time the velocity connections switch on in sweep/profile runs.
pub const HW_VELOCITY_ON: f64 = 2.0;
/// Sweep run length and fit window.
pub const HW_SWEEP_T_END: f64 = 9.5;
pub const HW_FIT_START: f64 = 2.5;
pub const HW_FIT_END: f64 = 9.0;
/// Connection counts swept by default. Counts below 3 sit in an ignition
/// dead zone at the calibrated velocity unit: the excitatory drive cannot
/// pull the bump over its own trailing-edge inhibition, so the bump stalls
/// instead of translating. The fan-in budget caps counts at 6, making
/// (3, 6) the doubling pair.
pub const HW_SWEEP_COUNTS: [u32; 4] = [3, 4, 5, 6];
/// Repeats per (count, starting population) in the default sweep.
pub const HW_SWEEP_REPEATS: usize = 10;

/// Default hardware topology: 10 populations x 4 neurons, fan-in 64.
pub fn hw_topology() -> HwTopology {
    HwTopology {
        n_pops: HW_N_POPS,
        pop_size: HW_POP_SIZE,
        fan_in_limit: HW_FAN_IN_LIMIT,
        classes: [
            ClassParams {
                efficacy: HW_VEL_EFFICACY,
                tau_syn: HW_FAST_TAU_SYN,
            },
            ClassParams {
                efficacy: HW_SLOW_EFFICACY,
                tau_syn: HW_SLOW_TAU_SYN,
            },
            ClassParams {
                efficacy: HW_INH_EFFICACY,
                tau_syn: HW_FAST_TAU_SYN,
            },
            ClassParams {
                efficacy: HW_SLOW_EFFICACY,
                tau_syn: HW_SLOW_TAU_SYN,
            },
        ],
    }
}

/// Hardware run options at the calibrated operating point (12 s drift-run
/// length by default).
pub fn hw_run_options(seed: u64) -> HwRunOptions {
    HwRunOptions {
        t_end: 12.0,
        dt: DT_DEFAULT,
        seed,
        jitter_sigma: HW_JITTER_SIGMA,
        neuron: NeuronParams {
            tau_m: TAU_M_CAL,
            v_th: 1.0,
            v_reset: 0.0,
            t_ref: 0.002,
            i_bg: HW_I_BG,
        },
        noise: NoiseParams {
            enabled: true,
            sigma: HW_NOISE_SIGMA,
        },
        current_scale: HW_CURRENT_SCALE,
    }
}

/// Velocity-sweep protocol: cue at run start, connections on at 2 s, fit
/// over 2.5-9.0 s.
pub fn hw_sweep_options(seed: u64) -> SweepOptions {
    let mut run = hw_run_options(seed);
    run.t_end = HW_SWEEP_T_END;
    SweepOptions {
        run,
        cue_amplitude: HW_CUE_AMPLITUDE,
        cue_duration: HW_CUE_DURATION,
        velocity_on: HW_VELOCITY_ON,
        fit_start: HW_FIT_START,
        fit_end: HW_FIT_END,
        direction: 1,
    }
}
