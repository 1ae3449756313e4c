//! C ABI for the spiking ring-attractor engine.
//!
//! Conventions:
//! - Handles are opaque pointers created by `ringsim_sim_new*` and released
//!   with `ringsim_sim_free`. A NULL handle is rejected, never dereferenced.
//! - Functions return `RINGSIM_OK` (0) on success. On failure they return a
//!   nonzero code and leave a message readable via `ringsim_last_error()`
//!   (thread-local, valid until the next failing call on the same thread).
//! - Array-filling functions take a caller-owned buffer plus its capacity
//!   and return the total number of available elements, so callers can size
//!   buffers with a first call and fill them with a second.
//! - No callback ever unwinds across the boundary: internal panics are
//!   caught and reported as `RINGSIM_ERR_PANIC`.

use ringsim::decoder::{decode_trace, DecodedTrace};
use ringsim::engine::{run, SimConfig, SpikeRaster, VelocityProfile};
use ringsim::presets;
use ringsim::RingError;
use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Success.
pub const RINGSIM_OK: c_int = 0;
/// Runtime failure (simulation or decode error); see `ringsim_last_error`.
pub const RINGSIM_ERR_RUNTIME: c_int = 1;
/// Invalid configuration or argument values.
pub const RINGSIM_ERR_INVALID: c_int = 2;
/// A required pointer argument was NULL.
pub const RINGSIM_ERR_NULL: c_int = 3;
/// An internal panic was caught at the boundary.
pub const RINGSIM_ERR_PANIC: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn error_code(e: &RingError) -> c_int {
    match e.exit_code() {
        2 => RINGSIM_ERR_INVALID,
        _ => RINGSIM_ERR_RUNTIME,
    }
}

fn report(e: &RingError) -> c_int {
    set_error(&e.to_string());
    error_code(e)
}

/// Catch panics and turn them into an error code.
fn guarded<F: FnOnce() -> c_int>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            RINGSIM_ERR_PANIC
        }
    }
}

/// Simulation handle: a configured network plus, after a run, its spike
/// raster and decoded angle trace.
pub struct RingsimSim {
    cfg: SimConfig,
    raster: Option<SpikeRaster>,
    trace: Option<DecodedTrace>,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ringsim_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread (empty string when
/// none). The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn ringsim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn new_handle(cfg: Result<SimConfig, RingError>) -> *mut RingsimSim {
    match cfg {
        Ok(cfg) => Box::into_raw(Box::new(RingsimSim {
            cfg,
            raster: None,
            trace: None,
        })),
        Err(e) => {
            report(&e);
            std::ptr::null_mut()
        }
    }
}

/// Create a simulation with the calibrated defaults: `n` neurons, the bump
/// cued at `init_angle` (radians, wrapped into [0, 2pi)), noise seeded with
/// `seed`. Nonzero `bounded` adds the default joint-limit boundary.
/// Returns NULL on error (see `ringsim_last_error`).
#[no_mangle]
pub extern "C" fn ringsim_sim_new(
    n: usize,
    init_angle: c_double,
    seed: u64,
    bounded: c_int,
) -> *mut RingsimSim {
    let mut out = std::ptr::null_mut();
    guarded(|| {
        let wrapped = ringsim::angle::wrap_2pi(init_angle);
        let cfg = if bounded != 0 {
            presets::calibrated_bounded_config(n, wrapped, seed, presets::calibrated_boundary())
        } else {
            presets::calibrated_config(n, wrapped, seed)
        };
        out = new_handle(cfg);
        RINGSIM_OK
    });
    out
}

/// Like `ringsim_sim_new`, but configured from a TOML document (same
/// schema as the CLI's `--config` file). `toml_text` must be NUL-terminated
/// UTF-8.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_new_from_toml(
    toml_text: *const c_char,
    init_angle: c_double,
    seed: u64,
    bounded: c_int,
) -> *mut RingsimSim {
    let mut out = std::ptr::null_mut();
    guarded(|| {
        if toml_text.is_null() {
            set_error("toml_text is NULL");
            return RINGSIM_ERR_NULL;
        }
        let text = match unsafe { CStr::from_ptr(toml_text) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("toml_text is not valid UTF-8");
                return RINGSIM_ERR_INVALID;
            }
        };
        let cfg = ringsim::harness::config::HarnessConfig::from_toml_str(text).and_then(|c| {
            c.sim_config(ringsim::angle::wrap_2pi(init_angle), seed, bounded != 0)
        });
        out = new_handle(cfg);
        RINGSIM_OK
    });
    out
}

/// Run the simulation for `t_end` seconds under a piecewise-constant
/// commanded velocity profile: `times`/`velocities` are parallel arrays of
/// `n_points` breakpoints (first time must be 0, times strictly
/// increasing); each velocity holds until the next breakpoint. Pass
/// `n_points = 0` for a zero-velocity run. Replaces any previous results
/// stored in the handle.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_run(
    sim: *mut RingsimSim,
    times: *const c_double,
    velocities: *const c_double,
    n_points: usize,
    t_end: c_double,
) -> c_int {
    guarded(|| {
        let Some(sim) = (unsafe { sim.as_mut() }) else {
            set_error("sim handle is NULL");
            return RINGSIM_ERR_NULL;
        };
        let profile = if n_points == 0 {
            VelocityProfile::zero()
        } else {
            if times.is_null() || velocities.is_null() {
                set_error("times/velocities are NULL with n_points > 0");
                return RINGSIM_ERR_NULL;
            }
            let times = unsafe { std::slice::from_raw_parts(times, n_points) };
            let velocities = unsafe { std::slice::from_raw_parts(velocities, n_points) };
            let points: Vec<(f64, f64)> =
                times.iter().copied().zip(velocities.iter().copied()).collect();
            match VelocityProfile::new(points) {
                Ok(p) => p,
                Err(e) => return report(&e),
            }
        };
        let (raster, _) = match run(&sim.cfg, &profile, t_end) {
            Ok(r) => r,
            Err(e) => return report(&e),
        };
        let trace = match decode_trace(
            &raster,
            &sim.cfg.geometry,
            ringsim::decoder::DEFAULT_PVA_DT,
            ringsim::decoder::DEFAULT_PVA_WINDOW,
        ) {
            Ok(t) => t,
            Err(e) => return report(&e),
        };
        sim.raster = Some(raster);
        sim.trace = Some(trace);
        RINGSIM_OK
    })
}

/// Number of spikes recorded by the last run, or -1 before any run.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_spike_count(sim: *const RingsimSim) -> i64 {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        set_error("sim handle is NULL");
        return -1;
    };
    sim.raster.as_ref().map_or(-1, |r| r.len() as i64)
}

/// Copy up to `capacity` spikes into `out_times`/`out_neurons` (parallel
/// arrays) and return the total number of recorded spikes, or -1 on error.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_spikes(
    sim: *const RingsimSim,
    out_times: *mut c_double,
    out_neurons: *mut u32,
    capacity: usize,
) -> i64 {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        set_error("sim handle is NULL");
        return -1;
    };
    let Some(raster) = sim.raster.as_ref() else {
        set_error("no run results; call ringsim_sim_run first");
        return -1;
    };
    let n_copy = raster.len().min(capacity);
    if n_copy > 0 && (out_times.is_null() || out_neurons.is_null()) {
        set_error("output buffers are NULL with nonzero capacity");
        return -1;
    }
    for (i, event) in raster.events.iter().take(n_copy).enumerate() {
        unsafe {
            *out_times.add(i) = event.time;
            *out_neurons.add(i) = event.neuron;
        }
    }
    raster.len() as i64
}

/// Number of decoded trace samples from the last run, or -1 before any run.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_trace_count(sim: *const RingsimSim) -> i64 {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        set_error("sim handle is NULL");
        return -1;
    };
    sim.trace.as_ref().map_or(-1, |t| t.samples.len() as i64)
}

/// Copy up to `capacity` decoded samples into `out_times`/`out_angles`/
/// `out_valid` (parallel arrays; `out_valid` gets 0/1) and return the
/// total number of samples, or -1 on error.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_trace(
    sim: *const RingsimSim,
    out_times: *mut c_double,
    out_angles: *mut c_double,
    out_valid: *mut u8,
    capacity: usize,
) -> i64 {
    let Some(sim) = (unsafe { sim.as_ref() }) else {
        set_error("sim handle is NULL");
        return -1;
    };
    let Some(trace) = sim.trace.as_ref() else {
        set_error("no run results; call ringsim_sim_run first");
        return -1;
    };
    let n_copy = trace.samples.len().min(capacity);
    if n_copy > 0 && (out_times.is_null() || out_angles.is_null() || out_valid.is_null()) {
        set_error("output buffers are NULL with nonzero capacity");
        return -1;
    }
    for (i, s) in trace.samples.iter().take(n_copy).enumerate() {
        unsafe {
            *out_times.add(i) = s.time;
            *out_angles.add(i) = s.angle;
            *out_valid.add(i) = s.valid as u8;
        }
    }
    trace.samples.len() as i64
}

/// Mean absolute circular error (degrees) of the decoded angle against a
/// fixed target over `[t_start, end of run]`, written to `*out`.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_mean_error_deg(
    sim: *const RingsimSim,
    target_angle: c_double,
    t_start: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let Some(sim) = (unsafe { sim.as_ref() }) else {
            set_error("sim handle is NULL");
            return RINGSIM_ERR_NULL;
        };
        if out.is_null() {
            set_error("out is NULL");
            return RINGSIM_ERR_NULL;
        }
        let Some(trace) = sim.trace.as_ref() else {
            set_error("no run results; call ringsim_sim_run first");
            return RINGSIM_ERR_RUNTIME;
        };
        let errors: Vec<f64> = trace
            .samples
            .iter()
            .filter(|s| s.valid && s.time >= t_start)
            .map(|s| ringsim::angle::wrap_diff(s.angle, target_angle).abs().to_degrees())
            .collect();
        if errors.is_empty() {
            set_error("no valid decoded samples after t_start");
            return RINGSIM_ERR_RUNTIME;
        }
        unsafe {
            *out = errors.iter().sum::<f64>() / errors.len() as f64;
        }
        RINGSIM_OK
    })
}

/// Release a handle. NULL is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn ringsim_sim_free(sim: *mut RingsimSim) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_run_and_read_back() {
        let sim = ringsim_sim_new(60, 2.0, 9, 0);
        assert!(!sim.is_null());
        let code = unsafe { ringsim_sim_run(sim, std::ptr::null(), std::ptr::null(), 0, 0.5) };
        assert_eq!(code, RINGSIM_OK);
        let n_spikes = unsafe { ringsim_sim_spike_count(sim) };
        assert!(n_spikes > 100, "{n_spikes}");
        let n_trace = unsafe { ringsim_sim_trace_count(sim) };
        assert!(n_trace > 10, "{n_trace}");
        let mut times = vec![0.0; n_trace as usize];
        let mut angles = vec![0.0; n_trace as usize];
        let mut valid = vec![0u8; n_trace as usize];
        let total = unsafe {
            ringsim_sim_trace(
                sim,
                times.as_mut_ptr(),
                angles.as_mut_ptr(),
                valid.as_mut_ptr(),
                times.len(),
            )
        };
        assert_eq!(total, n_trace);
        let mut err = f64::NAN;
        let code = unsafe { ringsim_sim_mean_error_deg(sim, 2.0, 0.15, &mut err) };
        assert_eq!(code, RINGSIM_OK);
        assert!(err < 10.0, "mean error {err}");
        unsafe { ringsim_sim_free(sim) };
    }

    #[test]
    fn null_and_error_paths() {
        assert_eq!(unsafe { ringsim_sim_spike_count(std::ptr::null()) }, -1);
        let code = unsafe {
            ringsim_sim_run(std::ptr::null_mut(), std::ptr::null(), std::ptr::null(), 0, 1.0)
        };
        assert_eq!(code, RINGSIM_ERR_NULL);
        // Invalid construction: too few neurons.
        let sim = ringsim_sim_new(2, 0.0, 1, 0);
        assert!(sim.is_null());
        let msg = unsafe { CStr::from_ptr(ringsim_last_error()) };
        assert!(!msg.to_bytes().is_empty());
        // Reading before running is an error, not a crash.
        let sim = ringsim_sim_new(40, 0.0, 1, 1);
        assert!(!sim.is_null());
        assert_eq!(unsafe { ringsim_sim_spikes(sim, std::ptr::null_mut(), std::ptr::null_mut(), 0) }, -1);
        unsafe { ringsim_sim_free(sim) };
        unsafe { ringsim_sim_free(std::ptr::null_mut()) };
    }

    #[test]
    fn toml_construction_and_bad_velocity_profile() {
        let toml = std::ffi::CString::new("[geometry]\nn = 48\n").unwrap();
        let sim = unsafe { ringsim_sim_new_from_toml(toml.as_ptr(), 1.0, 3, 0) };
        assert!(!sim.is_null());
        let times = [0.5, 1.0];
        let velocities = [0.0, 0.1];
        let code = unsafe {
            ringsim_sim_run(sim, times.as_ptr(), velocities.as_ptr(), 2, 1.0)
        };
        assert_eq!(code, RINGSIM_ERR_INVALID, "profile must start at t = 0");
        unsafe { ringsim_sim_free(sim) };

        let bad = std::ffi::CString::new("[geometry]\nn = -3\n").unwrap();
        let sim = unsafe { ringsim_sim_new_from_toml(bad.as_ptr(), 0.0, 1, 0) };
        assert!(sim.is_null());
        let sim = unsafe { ringsim_sim_new_from_toml(std::ptr::null(), 0.0, 1, 0) };
        assert!(sim.is_null());
    }

    #[test]
    fn version_is_a_cstring() {
        let v = unsafe { CStr::from_ptr(ringsim_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
