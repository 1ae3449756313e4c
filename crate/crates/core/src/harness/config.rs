//! TOML configuration for the CLI and experiment runners.
//!
//! Every section is optional and every field has a default equal to the
//! calibrated operating point, so an empty file (or no `--config` at all)
//! reproduces the frozen presets. Unknown keys are rejected.

use crate::discrete_hw::{ClassParams, HwRunOptions, HwTopology, SweepOptions};
use crate::engine::{NeuronParams, NoiseParams, SimConfig, SynapseParams};
use crate::error::Result;
use crate::presets;
use crate::ring::{build_geometry, BoundaryConfig, GainSet, WeightSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Ring size and discretization of the continuous model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// Number of neurons on the continuous ring.
    pub n: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { n: presets::N_DEFAULT }
    }
}

/// Recurrent gain parameters (the symmetric kernel and the velocity gain)
/// plus the global recurrent current scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    pub g_inh: f64,
    pub g_cos: f64,
    pub g_sin: f64,
    /// Global scale applied to recurrent input (together with 1/n).
    pub current_scale: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        let gains = presets::calibrated_gains();
        GainsSection {
            g_inh: gains.g_inh,
            g_cos: gains.g_cos,
            g_sin: gains.g_sin,
            current_scale: presets::CURRENT_SCALE_CAL,
        }
    }
}

/// Leaky integrate-and-fire neuron parameters and membrane noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronSection {
    pub tau_m: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub t_ref: f64,
    pub i_bg: f64,
    /// Stationary standard deviation of the membrane noise (0 disables it).
    pub noise_sigma: f64,
}

impl Default for NeuronSection {
    fn default() -> Self {
        let n = presets::calibrated_neuron();
        NeuronSection {
            tau_m: n.tau_m,
            v_th: n.v_th,
            v_reset: n.v_reset,
            t_ref: n.t_ref,
            i_bg: n.i_bg,
            noise_sigma: presets::NOISE_SIGMA_CAL,
        }
    }
}

/// Synaptic trace parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynapseSection {
    pub tau_syn: f64,
    pub spike_increment: f64,
}

impl Default for SynapseSection {
    fn default() -> Self {
        let s = presets::calibrated_synapse();
        SynapseSection {
            tau_syn: s.tau_syn,
            spike_increment: s.spike_increment,
        }
    }
}

/// Joint-limit model parameters; applied only when an experiment selects
/// the bounded model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub theta_0: f64,
    pub theta_l: f64,
    pub ramp_width: f64,
    pub bias_peak: f64,
}

impl Default for BoundarySection {
    fn default() -> Self {
        BoundarySection {
            theta_0: presets::THETA_0_DEFAULT,
            theta_l: presets::THETA_L_DEFAULT,
            ramp_width: presets::BOUNDARY_RAMP_CAL,
            bias_peak: presets::BOUNDARY_BIAS_PEAK_CAL,
        }
    }
}

/// Quantized-hardware emulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HwSection {
    pub n_pops: usize,
    pub pop_size: usize,
    pub fan_in_limit: usize,
    /// Unit weight of one fast-excitatory (velocity) synapse.
    pub vel_efficacy: f64,
    /// Unit weight of one fast-inhibitory synapse.
    pub inh_efficacy: f64,
    /// Unit weight of the slow classes.
    pub slow_efficacy: f64,
    pub fast_tau_syn: f64,
    pub slow_tau_syn: f64,
    pub i_bg: f64,
    pub noise_sigma: f64,
    /// Relative σ of per-neuron mismatch jitter on tau_m and i_bg.
    pub jitter_sigma: f64,
    pub current_scale: f64,
    pub cue_amplitude: f64,
    pub cue_duration: f64,
    /// Length of drift and acceleration runs (seconds).
    pub drift_t_end: f64,
    /// Time the velocity connections switch on.
    pub velocity_on: f64,
    /// Length of velocity-sweep runs (seconds).
    pub sweep_t_end: f64,
    pub fit_start: f64,
    pub fit_end: f64,
    /// Connection counts swept by default.
    pub counts: Vec<u32>,
    /// Repeats per (count, starting population).
    pub repeats: usize,
}

impl Default for HwSection {
    fn default() -> Self {
        HwSection {
            n_pops: presets::HW_N_POPS,
            pop_size: presets::HW_POP_SIZE,
            fan_in_limit: presets::HW_FAN_IN_LIMIT,
            vel_efficacy: presets::HW_VEL_EFFICACY,
            inh_efficacy: presets::HW_INH_EFFICACY,
            slow_efficacy: presets::HW_SLOW_EFFICACY,
            fast_tau_syn: presets::HW_FAST_TAU_SYN,
            slow_tau_syn: presets::HW_SLOW_TAU_SYN,
            i_bg: presets::HW_I_BG,
            noise_sigma: presets::HW_NOISE_SIGMA,
            jitter_sigma: presets::HW_JITTER_SIGMA,
            current_scale: presets::HW_CURRENT_SCALE,
            cue_amplitude: presets::HW_CUE_AMPLITUDE,
            cue_duration: presets::HW_CUE_DURATION,
            drift_t_end: 12.0,
            velocity_on: presets::HW_VELOCITY_ON,
            sweep_t_end: presets::HW_SWEEP_T_END,
            fit_start: presets::HW_FIT_START,
            fit_end: presets::HW_FIT_END,
            counts: presets::HW_SWEEP_COUNTS.to_vec(),
            repeats: presets::HW_SWEEP_REPEATS,
        }
    }
}

/// Run-level parameters shared by the experiment commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Base seed; `--seed` overrides it.
    pub seed: u64,
    /// Integration step (seconds).
    pub dt: f64,
    /// Initialization pulse amplitude.
    pub init_current: f64,
    /// Initialization pulse duration (seconds).
    pub init_duration: f64,
    /// Decoder sliding-window length (seconds).
    pub pva_window: f64,
    /// Decoder output sample spacing (seconds).
    pub pva_dt: f64,
    /// Number of trajectory pairs in paired comparisons.
    pub pairs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            seed: 17,
            dt: presets::DT_DEFAULT,
            init_current: presets::INIT_CURRENT_CAL,
            init_duration: presets::INIT_DURATION,
            pva_window: crate::decoder::DEFAULT_PVA_WINDOW,
            pva_dt: crate::decoder::DEFAULT_PVA_DT,
            pairs: 20,
        }
    }
}

/// Complete harness configuration; see the section types for the fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub geometry: GeometrySection,
    pub gains: GainsSection,
    pub neuron: NeuronSection,
    pub synapse: SynapseSection,
    pub boundary: BoundarySection,
    pub hw: HwSection,
    pub experiment: ExperimentSection,
}

impl HarnessConfig {
    /// Parse a TOML string; missing sections and fields fall back to the
    /// calibrated defaults, unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Load from a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| crate::error::RingError::InvalidConfig(format!("cannot serialize: {e}")))
    }

    pub fn gain_set(&self) -> GainSet {
        GainSet {
            g_inh: self.gains.g_inh,
            g_cos: self.gains.g_cos,
            g_sin: self.gains.g_sin,
        }
    }

    pub fn neuron_params(&self) -> NeuronParams {
        NeuronParams {
            tau_m: self.neuron.tau_m,
            v_th: self.neuron.v_th,
            v_reset: self.neuron.v_reset,
            t_ref: self.neuron.t_ref,
            i_bg: self.neuron.i_bg,
        }
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams {
            enabled: self.neuron.noise_sigma > 0.0,
            sigma: self.neuron.noise_sigma,
        }
    }

    pub fn synapse_params(&self) -> SynapseParams {
        SynapseParams {
            tau_syn: self.synapse.tau_syn,
            spike_increment: self.synapse.spike_increment,
        }
    }

    pub fn boundary_config(&self) -> Result<BoundaryConfig> {
        BoundaryConfig::new(
            self.boundary.theta_0,
            self.boundary.theta_l,
            self.boundary.ramp_width,
            self.boundary.bias_peak,
        )
    }

    /// Full continuous-model simulation configuration. `bounded` selects the
    /// joint-limit model built from the `[boundary]` section.
    pub fn sim_config(&self, init_angle: f64, seed: u64, bounded: bool) -> Result<SimConfig> {
        let geometry = build_geometry(self.geometry.n)?;
        let gains = self.gain_set();
        let boundary = if bounded {
            Some(self.boundary_config()?)
        } else {
            None
        };
        let weights = WeightSet::build(&geometry, &gains, boundary)?;
        let cfg = SimConfig {
            geometry,
            weights,
            gains,
            neuron: self.neuron_params(),
            synapse: self.synapse_params(),
            dt: self.experiment.dt,
            init_angle,
            init_current: self.experiment.init_current,
            init_duration: self.experiment.init_duration,
            current_scale: self.gains.current_scale,
            noise: self.noise_params(),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hw_topology(&self) -> Result<HwTopology> {
        let topo = HwTopology {
            n_pops: self.hw.n_pops,
            pop_size: self.hw.pop_size,
            fan_in_limit: self.hw.fan_in_limit,
            classes: [
                ClassParams {
                    efficacy: self.hw.vel_efficacy,
                    tau_syn: self.hw.fast_tau_syn,
                },
                ClassParams {
                    efficacy: self.hw.slow_efficacy,
                    tau_syn: self.hw.slow_tau_syn,
                },
                ClassParams {
                    efficacy: self.hw.inh_efficacy,
                    tau_syn: self.hw.fast_tau_syn,
                },
                ClassParams {
                    efficacy: self.hw.slow_efficacy,
                    tau_syn: self.hw.slow_tau_syn,
                },
            ],
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn hw_run_options(&self, seed: u64, t_end: f64) -> HwRunOptions {
        HwRunOptions {
            t_end,
            dt: self.experiment.dt,
            seed,
            jitter_sigma: self.hw.jitter_sigma,
            neuron: NeuronParams {
                tau_m: self.neuron.tau_m,
                v_th: self.neuron.v_th,
                v_reset: self.neuron.v_reset,
                t_ref: self.neuron.t_ref,
                i_bg: self.hw.i_bg,
            },
            noise: NoiseParams {
                enabled: self.hw.noise_sigma > 0.0,
                sigma: self.hw.noise_sigma,
            },
            current_scale: self.hw.current_scale,
        }
    }

    pub fn hw_sweep_options(&self, seed: u64) -> SweepOptions {
        SweepOptions {
            run: self.hw_run_options(seed, self.hw.sweep_t_end),
            cue_amplitude: self.hw.cue_amplitude,
            cue_duration: self.hw.cue_duration,
            velocity_on: self.hw.velocity_on,
            fit_start: self.hw.fit_start,
            fit_end: self.hw.fit_end,
            direction: 1,
        }
    }

    /// Validate everything buildable from this configuration.
    pub fn validate(&self) -> Result<()> {
        self.sim_config(self.boundary.theta_0, self.experiment.seed, true)?;
        self.hw_topology()?;
        let opts = self.hw_sweep_options(self.experiment.seed);
        opts.run.validate()?;
        if !(self.experiment.pva_window > 0.0 && self.experiment.pva_dt > 0.0) {
            return Err(crate::error::RingError::InvalidConfig(format!(
                "decoder window and sample spacing must be positive, got {} and {}",
                self.experiment.pva_window, self.experiment.pva_dt
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_toml_reproduces_defaults() {
        let cfg = HarnessConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, HarnessConfig::default());
        cfg.validate().unwrap();
        assert_abs_diff_eq!(cfg.gains.g_inh, -16.46);
        assert_abs_diff_eq!(cfg.gains.g_cos, 15.86);
        assert_eq!(cfg.geometry.n, 120);
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let cfg = HarnessConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = HarnessConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_section_merges_with_defaults() {
        let cfg = HarnessConfig::from_toml_str(
            "[gains]\ng_sin = 0.5\n\n[geometry]\nn = 60\n",
        )
        .unwrap();
        assert_abs_diff_eq!(cfg.gains.g_sin, 0.5);
        assert_eq!(cfg.geometry.n, 60);
        // Untouched fields keep the calibrated defaults.
        assert_abs_diff_eq!(cfg.gains.g_inh, HarnessConfig::default().gains.g_inh);
        assert_eq!(cfg.neuron, HarnessConfig::default().neuron);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = HarnessConfig::from_toml_str("[gains]\ng_typo = 1.0\n").unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
        let err = HarnessConfig::from_toml_str("[nonsense]\nx = 1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = HarnessConfig::from_toml_str("[geometry]\nn = 2\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = HarnessConfig::from_toml_str("[experiment]\ndt = -1.0\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sim_config_matches_frozen_presets() {
        let cfg = HarnessConfig::default();
        let sim = cfg.sim_config(1.0, 7, false).unwrap();
        let reference = crate::presets::calibrated_config(120, 1.0, 7).unwrap();
        assert_eq!(sim.neuron, reference.neuron);
        assert_eq!(sim.gains, reference.gains);
        assert_abs_diff_eq!(sim.current_scale, reference.current_scale);
        assert_abs_diff_eq!(sim.noise.sigma, reference.noise.sigma);
        assert_eq!(sim.dt, reference.dt);
    }

    #[test]
    fn hw_builders_match_frozen_presets() {
        let cfg = HarnessConfig::default();
        let topo = cfg.hw_topology().unwrap();
        let reference = crate::presets::hw_topology();
        assert_eq!(topo.n_pops, reference.n_pops);
        assert_eq!(topo.pop_size, reference.pop_size);
        for (a, b) in topo.classes.iter().zip(reference.classes.iter()) {
            assert_abs_diff_eq!(a.efficacy, b.efficacy);
            assert_abs_diff_eq!(a.tau_syn, b.tau_syn);
        }
        let sweep = cfg.hw_sweep_options(17);
        let ref_sweep = crate::presets::hw_sweep_options(17);
        assert_eq!(sweep, ref_sweep);
    }
}
