//! Release gate: ten end-to-end checks, one per shipped claim.
//!
//! Every test prints exactly one `criterion NN PASS/FAIL` line (run with
//! `--nocapture` to stream them). The checks exercise the public API the
//! same way the CLI does, at fixed seeds, so a failure here reproduces
//! from the command line.

mod common;

use ringsim::angle::wrap_diff;
use ringsim::calibration::{
    CalibrationDiagnostics, CalibrationObjective, CalibrationResult, RefineOptions, SweepParam,
};
use ringsim::decoder::decode_trace;
use ringsim::engine::{run, VelocityProfile};
use ringsim::harness::config::HarnessConfig;
use ringsim::harness::experiment::{self, run_paired_comparison};
use ringsim::harness::trajectory::MotionRegime;
use ringsim::presets;
use std::f64::consts::PI;
use std::time::Instant;

fn report(number: u8, name: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("criterion {number:02} PASS  {name}: {detail}"),
        Err(detail) => {
            println!("criterion {number:02} FAIL  {name}: {detail}");
            panic!("criterion {number:02} ({name}) failed: {detail}");
        }
    }
}

fn check(cond: bool, ok: &mut bool, problems: &mut Vec<String>, msg: String) {
    if !cond {
        *ok = false;
        problems.push(msg);
    }
}

/// 1. A calibrated zero-velocity run holds the cued angle: mean decoded
/// error < 5 deg over 0.9 s, in under 10 s of wall time.
#[test]
fn criterion_01_stationary_stability() {
    let start = Instant::now();
    let init_angle = 2.0;
    let cfg = presets::calibrated_config(presets::N_DEFAULT, init_angle, 5).unwrap();
    let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.9).unwrap();
    let trace = decode_trace(&raster, &cfg.geometry, 0.01, 0.05).unwrap();
    let errors: Vec<f64> = trace
        .samples
        .iter()
        .filter(|s| s.valid && s.time >= 0.15)
        .map(|s| wrap_diff(s.angle, init_angle).abs().to_degrees())
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut ok = true;
    let mut problems = Vec::new();
    check(!errors.is_empty(), &mut ok, &mut problems, "no valid decoded samples".into());
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    check(mean < 5.0, &mut ok, &mut problems, format!("mean error {mean:.2} deg >= 5 deg"));
    check(elapsed < 10.0, &mut ok, &mut problems, format!("took {elapsed:.1} s >= 10 s"));
    report(
        1,
        "stationary stability",
        if ok {
            Ok(format!("mean error {mean:.2} deg over 0.9 s in {elapsed:.1} s"))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 2. After velocity-gain refinement, each commanded probe in
/// {±0.2, ±0.5, ±1.0} rad/s is matched within 10% and the through-origin
/// slope is 1 ± 0.05.
#[test]
fn criterion_02_velocity_linearity() {
    let template = presets::calibrated_config(presets::N_DEFAULT, 0.75 * PI, 17).unwrap();
    let base = CalibrationResult {
        gains: template.gains,
        i_bg: template.neuron.i_bg,
        init_current: template.init_current,
        loss: 0.0,
        velocity_gain_kappa: None,
        diagnostics: CalibrationDiagnostics::default(),
    };
    let refined = ringsim::calibration::refine_gsin(
        &template,
        &base,
        &CalibrationObjective::default(),
        &RefineOptions::default(),
    )
    .unwrap();
    let mut ok = true;
    let mut problems = Vec::new();
    // Per commanded velocity, average the probe repeats and compare.
    let mut by_velocity: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
    for p in &refined.diagnostics.probe_fits {
        by_velocity
            .entry((p.velocity * 10.0).round() as i64)
            .or_default()
            .push(p.fitted_slope);
    }
    check(
        by_velocity.len() == 6,
        &mut ok,
        &mut problems,
        format!("expected 6 probe velocities, saw {}", by_velocity.len()),
    );
    let mut worst = 0.0f64;
    for (key, fits) in &by_velocity {
        let commanded = *key as f64 / 10.0;
        let mean = fits.iter().sum::<f64>() / fits.len() as f64;
        let rel = (mean - commanded).abs() / commanded.abs();
        worst = worst.max(rel);
        check(
            rel <= 0.10,
            &mut ok,
            &mut problems,
            format!("probe {commanded:+.1} rad/s fitted {mean:+.3} ({:.1}% off)", rel * 100.0),
        );
    }
    let kappa = refined.velocity_gain_kappa.expect("refine reports a gain slope");
    check(
        (kappa.kappa - 1.0).abs() <= 0.05,
        &mut ok,
        &mut problems,
        format!("through-origin slope {:.4} outside 1 +/- 0.05", kappa.kappa),
    );
    report(
        2,
        "velocity linearity (continuous)",
        if ok {
            Ok(format!(
                "g_sin {:.3}, slope {:.4} +/- {:.4}, worst probe off {:.1}%",
                refined.gains.g_sin,
                kappa.kappa,
                kappa.stderr,
                worst * 100.0
            ))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 3. On 20 seed-matched wide-range trajectories, the bounded model beats
/// the unbounded model in at least 15 pairs, inside 5 minutes.
#[test]
fn criterion_03_bounded_wins_wide() {
    let start = Instant::now();
    let config = HarnessConfig::default();
    let paired = run_paired_comparison(&config, MotionRegime::Wide, 20, 17).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut ok = true;
    let mut problems = Vec::new();
    check(
        paired.bounded_wins >= 15,
        &mut ok,
        &mut problems,
        format!("bounded won only {}/20 pairs", paired.bounded_wins),
    );
    check(elapsed < 300.0, &mut ok, &mut problems, format!("took {elapsed:.0} s >= 300 s"));
    report(
        3,
        "bounded vs unbounded, wide motion",
        if ok {
            Ok(format!(
                "bounded wins {}/20 (bounded {:.1} deg, unbounded {:.1} deg, p = {:.4}) in {elapsed:.0} s",
                paired.bounded_wins,
                paired.bounded_mean_deg,
                paired.unbounded_mean_deg,
                paired.sign_test_p
            ))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 4. On 20 seed-matched limited-range trajectories, both models track
/// with mean error < 10 deg.
#[test]
fn criterion_04_limited_motion_parity() {
    let config = HarnessConfig::default();
    let paired = run_paired_comparison(&config, MotionRegime::Limited, 20, 17).unwrap();
    let mut ok = true;
    let mut problems = Vec::new();
    check(
        paired.bounded_mean_deg < 10.0,
        &mut ok,
        &mut problems,
        format!("bounded mean {:.2} deg >= 10 deg", paired.bounded_mean_deg),
    );
    check(
        paired.unbounded_mean_deg < 10.0,
        &mut ok,
        &mut problems,
        format!("unbounded mean {:.2} deg >= 10 deg", paired.unbounded_mean_deg),
    );
    report(
        4,
        "limited motion parity",
        if ok {
            Ok(format!(
                "bounded {:.2} deg, unbounded {:.2} deg over 20 pairs",
                paired.bounded_mean_deg, paired.unbounded_mean_deg
            ))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 5. Halving the ring to 60 neurons moves the wide-trajectory MAE by at
/// most 5 deg, and both sizes stay at or below 15 deg.
#[test]
fn criterion_05_size_robustness() {
    let config = HarnessConfig::default();
    let points =
        experiment::run_robustness_sweep(&config, SweepParam::NNeurons, &[60.0, 120.0], 7)
            .unwrap();
    let mut ok = true;
    let mut problems = Vec::new();
    let mae: Vec<Option<f64>> = points.iter().map(|p| p.mean_abs_error_deg).collect();
    match (mae.first().copied().flatten(), mae.get(1).copied().flatten()) {
        (Some(m60), Some(m120)) => {
            check(m60 <= 15.0, &mut ok, &mut problems, format!("MAE at 60 is {m60:.2} deg > 15"));
            check(
                m120 <= 15.0,
                &mut ok,
                &mut problems,
                format!("MAE at 120 is {m120:.2} deg > 15"),
            );
            check(
                (m60 - m120).abs() <= 5.0,
                &mut ok,
                &mut problems,
                format!("sizes differ by {:.2} deg > 5", (m60 - m120).abs()),
            );
            report(
                5,
                "size robustness",
                if ok {
                    Ok(format!("MAE {m60:.2} deg at n = 60 vs {m120:.2} deg at n = 120"))
                } else {
                    Err(problems.join("; "))
                },
            );
        }
        _ => {
            let errs: Vec<String> = points.iter().filter_map(|p| p.error.clone()).collect();
            report(5, "size robustness", Err(format!("sweep point failed: {}", errs.join("; "))));
        }
    }
}

/// 6. Quartering the firing-rate scale degrades tracking: MAE at 25% of
/// the optimum exceeds MAE at the optimum.
#[test]
fn criterion_06_rate_sensitivity() {
    let config = HarnessConfig::default();
    let points =
        experiment::run_robustness_sweep(&config, SweepParam::RateScale, &[0.25, 1.0], 7).unwrap();
    let low = points[0].mean_abs_error_deg;
    let full = points[1].mean_abs_error_deg;
    match (low, full) {
        (Some(low), Some(full)) => report(
            6,
            "firing-rate sensitivity",
            if low > full {
                Ok(format!(
                    "MAE {low:.2} deg at 25% rate vs {full:.2} deg at optimum (rates {:.0} / {:.0} Hz)",
                    points[0].peak_rate_hz, points[1].peak_rate_hz
                ))
            } else {
                Err(format!("MAE {low:.2} deg at 25% rate not worse than {full:.2} deg"))
            },
        ),
        _ => {
            let errs: Vec<String> = points.iter().filter_map(|p| p.error.clone()).collect();
            report(6, "firing-rate sensitivity", Err(format!("sweep point failed: {}", errs.join("; "))));
        }
    }
}

/// 7. Hardware-mode cue-and-hold: across 10 seeds x 10 starting
/// populations with 5% parameter jitter, every 0.5 s window's median
/// error stays below one population spacing (36 deg) for 5 s post-cue.
#[test]
fn criterion_07_hw_drift() {
    let config = HarnessConfig::default();
    let drift = experiment::run_hw_drift(&config, 10, 17).unwrap();
    let mut ok = true;
    let mut problems = Vec::new();
    check(
        drift.rows.len() == 100,
        &mut ok,
        &mut problems,
        format!("expected 100 runs, saw {}", drift.rows.len()),
    );
    check(
        drift.worst_median_deg < drift.spacing_deg,
        &mut ok,
        &mut problems,
        format!(
            "worst median window {:.1} deg >= spacing {:.0} deg",
            drift.worst_median_deg, drift.spacing_deg
        ),
    );
    report(
        7,
        "hardware-mode drift",
        if ok {
            Ok(format!(
                "worst median window {:.1} deg (< {:.0} deg) over {} runs, {} dead",
                drift.worst_median_deg,
                drift.spacing_deg,
                drift.rows.len(),
                drift.n_dead_runs
            ))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 8. Hardware-mode speed control is linear in the connection count:
/// inverse-variance fit r^2 >= 0.9 and doubling the count doubles the
/// speed within combined 95% confidence intervals.
#[test]
fn criterion_08_hw_velocity_linearity() {
    let config = HarnessConfig::default();
    let counts = config.hw.counts.clone();
    let sweep = experiment::run_hw_velocity_sweep(&config, &counts, 10, 17).unwrap();
    let mut ok = true;
    let mut problems = Vec::new();
    check(
        counts.len() >= 4,
        &mut ok,
        &mut problems,
        format!("only {} sweep counts", counts.len()),
    );
    let fit = match sweep.fit {
        Some(f) => f,
        None => {
            report(8, "hardware-mode velocity linearity", Err("no usable fit".into()));
            return;
        }
    };
    check(
        fit.r_squared >= 0.9,
        &mut ok,
        &mut problems,
        format!("r^2 {:.4} < 0.9", fit.r_squared),
    );
    check(!sweep.doubling.is_empty(), &mut ok, &mut problems, "no doubling pair in the counts".into());
    for d in &sweep.doubling {
        check(
            d.within,
            &mut ok,
            &mut problems,
            format!(
                "count {} -> {}: ratio {:.4}, |diff| {:.4} > tolerance {:.4}",
                d.low_count, d.high_count, d.ratio, d.difference.abs(), d.tolerance_95
            ),
        );
    }
    let dead: usize = sweep.rows.iter().map(|r| r.n_dead).sum();
    report(
        8,
        "hardware-mode velocity linearity",
        if ok {
            let d = &sweep.doubling[0];
            Ok(format!(
                "r^2 {:.4}; doubling {} -> {} ratio {:.4} within CI; {dead} dead runs",
                fit.r_squared, d.low_count, d.high_count, d.ratio
            ))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 9. Hardware-mode acceleration schedule: flat before and after
/// (|slope| below one population spacing per 3 s), positive translation
/// while velocity connections are in place.
#[test]
fn criterion_09_hw_acceleration() {
    let config = HarnessConfig::default();
    let run = experiment::run_hw_acceleration(&config, &[4], 5, 11).unwrap();
    let r = &run.report;
    let mut ok = true;
    let mut problems = Vec::new();
    check(
        r.phases.len() == 3,
        &mut ok,
        &mut problems,
        format!("expected 3 phases, saw {}", r.phases.len()),
    );
    check(
        r.stationary_ok,
        &mut ok,
        &mut problems,
        format!(
            "stationary slopes out of bound {:.3} rad/s: {:?}",
            r.slope_bound_rad_s,
            r.phases.iter().map(|p| p.slope_rad_s).collect::<Vec<_>>()
        ),
    );
    check(
        r.translation_positive,
        &mut ok,
        &mut problems,
        "velocity phase slope not positive".into(),
    );
    report(
        9,
        "hardware-mode acceleration/recovery",
        if ok {
            let slopes: Vec<String> =
                r.phases.iter().map(|p| format!("{} {:+.3}", p.label, p.slope_rad_s)).collect();
            Ok(format!("slopes rad/s: {} (bound {:.3})", slopes.join(", "), r.slope_bound_rad_s))
        } else {
            Err(problems.join("; "))
        },
    );
}

/// 10. The structural invariants hold as fast property suites: engine
/// equivariances, coupling algebra, decoder invariances, hardware-table
/// quantization — each family in under 30 s.
#[test]
fn criterion_10_invariant_suites() {
    let mut ok = true;
    let mut problems = Vec::new();
    let mut timings = Vec::new();
    let mut families: Vec<(&str, Box<dyn FnMut()>)> = vec![
        (
            "engine equivariance",
            Box::new(|| {
                for n in [12usize, 24] {
                    for shift in [1, n / 2, n - 1] {
                        for v in [0.0, 0.5, -0.5] {
                            common::check_rotation_equivariance(n, shift, v);
                        }
                    }
                    for init in [0, n / 3] {
                        for v in [0.0, 0.5, -0.5] {
                            common::check_reflection_equivariance(n, init, v);
                        }
                    }
                }
            }),
        ),
        (
            "coupling algebra",
            Box::new(|| {
                for n in [4usize, 60, 120] {
                    for v in [0.0, 0.37, -1.4] {
                        common::check_asym_antisymmetry(n, v);
                    }
                    for speed in [0.01, 0.5, 4.0] {
                        for sign in [1.0, -1.0] {
                            common::check_asym_linearity(n, speed, sign, false);
                            common::check_asym_linearity(n, speed, sign, true);
                        }
                    }
                }
            }),
        ),
        (
            "decoder invariance",
            Box::new(|| {
                let patterns: [&[u32]; 3] =
                    [&[0, 3, 9, 3, 0, 0], &[5, 5, 5, 5], &[1, 0, 0, 0, 0, 0, 0, 30]];
                for counts in patterns {
                    for k in [2, 3, 7] {
                        common::check_pva_scale_invariance(counts, k);
                    }
                }
                let ramp: Vec<f64> = (0..100).map(|i| -8.0 + 0.23 * i as f64).collect();
                for invalid_every in [0usize, 2, 3] {
                    common::check_unwrap_round_trip(&ramp, invalid_every);
                }
            }),
        ),
        (
            "hardware quantization",
            Box::new(|| {
                let kernel: Vec<f64> =
                    (0..10).map(|i| -16.46 + 15.86 * (2.0 * PI * i as f64 / 10.0).cos()).collect();
                for unit in [0.5, 16.0, 33.3] {
                    common::check_quantization_residual(&kernel, unit);
                }
                for direction in [-1i8, 1] {
                    for count in [0u32, 1, 3, 6] {
                        common::check_apply_remove_round_trip(direction, count);
                    }
                }
            }),
        ),
    ];
    for (name, body) in &mut families {
        let start = Instant::now();
        body();
        let elapsed = start.elapsed().as_secs_f64();
        timings.push(format!("{name} {elapsed:.1} s"));
        check(
            elapsed < 30.0,
            &mut ok,
            &mut problems,
            format!("{name} took {elapsed:.1} s >= 30 s"),
        );
    }
    report(
        10,
        "invariant suites",
        if ok { Ok(timings.join(", ")) } else { Err(problems.join("; ")) },
    );
}
