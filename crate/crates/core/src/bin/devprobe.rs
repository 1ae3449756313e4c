// Scratch probe used while freezing calibration constants. Not part of the
// shipped interface.

use ringsim::angle::wrap_diff;
use ringsim::decoder::{decode_trace, drift_windows, fit_bump_velocity, unwrap};
use ringsim::discrete_hw::{build_hw_ring, decode_hw_trace, run_hw, CueSpec};
use ringsim::engine::{mean_rate_profile, run, VelocityProfile};
use ringsim::presets;
use ringsim::ring::GainSet;

fn env_f(name: &str, default: f64) -> f64 {
    std::env::var(name)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn stationary(seed: u64) -> (f64, f64, f64) {
    let mut cfg = presets::calibrated_config(120, std::f64::consts::PI, seed).unwrap();
    cfg.neuron.i_bg = env_f("IBG", cfg.neuron.i_bg);
    cfg.noise.sigma = env_f("SIGMA", cfg.noise.sigma);
    cfg.current_scale = env_f("SCALE", cfg.current_scale);
    let (raster, _) = run(&cfg, &VelocityProfile::zero(), 0.9).unwrap();
    let trace = decode_trace(&raster, &cfg.geometry, 0.01, 0.05).unwrap();
    let errs: Vec<f64> = trace
        .samples
        .iter()
        .filter(|s| s.valid && s.time > 0.15)
        .map(|s| wrap_diff(s.angle, cfg.init_angle).abs().to_degrees())
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
    let max = errs.iter().cloned().fold(0.0, f64::max);
    let rates = mean_rate_profile(&raster, 0.3, 0.9, 120).unwrap();
    let peak = rates.iter().cloned().fold(0.0, f64::max);
    (mean, max, peak)
}

fn probe_slope(v: f64, g_sin: f64, seed: u64) -> f64 {
    let mut cfg = presets::calibrated_config(120, std::f64::consts::PI, seed).unwrap();
    cfg.gains.g_sin = g_sin;
    cfg.neuron.i_bg = env_f("IBG", cfg.neuron.i_bg);
    cfg.noise.sigma = env_f("SIGMA", cfg.noise.sigma);
    cfg.current_scale = env_f("SCALE", cfg.current_scale);
    let (raster, _) = run(&cfg, &VelocityProfile::constant(v), 6.0).unwrap();
    let trace = decode_trace(&raster, &cfg.geometry, 0.01, 0.05).unwrap();
    let un = unwrap(&trace).unwrap();
    fit_bump_velocity(&un, 1.0, 5.8).unwrap().slope
}

// survived, worst 0.5 s-window mean error in [1, 6] s (deg), peak pop rate (Hz)
fn hw_drift(seed: u64, pop: usize) -> (bool, f64, f64) {
    let topo = presets::hw_topology();
    let table = build_hw_ring(&topo, &GainSet::default()).unwrap();
    let mut opts = presets::hw_run_options(seed);
    opts.neuron.i_bg = env_f("HWIBG", opts.neuron.i_bg);
    opts.noise.sigma = env_f("HWSIGMA", opts.noise.sigma);
    opts.current_scale = env_f("HWSCALE", opts.current_scale);
    opts.jitter_sigma = env_f("HWJITTER", opts.jitter_sigma);
    opts.t_end = env_f("HWTEND", 12.0);
    let cue = CueSpec {
        population: pop,
        duration: presets::HW_CUE_DURATION,
        amplitude: env_f("HWCUE", presets::HW_CUE_AMPLITUDE),
    };
    let raster = run_hw(&topo, &table, &[], &cue, &opts).unwrap();
    let trace = decode_hw_trace(&raster, &topo).unwrap();
    let survived = trace
        .valid_samples()
        .any(|s| s.time >= opts.t_end - 0.5);
    let worst = match drift_windows(&trace, topo.pop_angle(pop), 0.5, 1.0, 6.0) {
        Ok(wins) => wins
            .iter()
            .map(|(_, e)| e.unwrap_or(180.0))
            .fold(0.0, f64::max),
        Err(_) => 180.0,
    };
    let mut pop_counts = vec![0usize; topo.n_pops];
    for ev in &raster.events {
        if ev.time >= 2.0 && ev.time < 6.0 {
            pop_counts[topo.pop_of(ev.neuron as usize)] += 1;
        }
    }
    let peak_pop_rate = pop_counts
        .iter()
        .map(|&c| c as f64 / (topo.pop_size as f64 * 4.0))
        .fold(0.0, f64::max);
    (survived, worst, peak_pop_rate)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("stationary");
    match mode {
        "stationary" => {
            for seed in 0..env_f("SEEDS", 8.0) as u64 {
                let (mean, max, peak) = stationary(seed);
                println!(
                    "seed {seed}: mean {mean:.2} deg, max {max:.2} deg, peak rate {peak:.1} Hz"
                );
            }
        }
        "gsin" => {
            let g: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.8);
            for &v in &[0.2f64, 0.5, 1.0, -0.5] {
                let s1 = probe_slope(v, g, 11);
                let s2 = probe_slope(v, g, 12);
                println!(
                    "g_sin {g}: v {v:+.1} -> slopes {s1:.3}, {s2:.3} (kappa {:.3}, {:.3})",
                    s1 / v,
                    s2 / v
                );
            }
        }
        "hw" => {
            let n_seeds = env_f("SEEDS", 6.0) as u64;
            let mut n_surv = 0u32;
            let mut n_total = 0u32;
            let mut worsts = Vec::new();
            let mut peaks = Vec::new();
            for seed in 0..n_seeds {
                for &pop in &[0usize, 3, 7] {
                    let (surv, worst, peak) = hw_drift(seed, pop);
                    n_total += 1;
                    if surv {
                        n_surv += 1;
                    }
                    worsts.push(worst);
                    peaks.push(peak);
                    println!(
                        "seed {seed} pop {pop}: survived {surv}, worst window {worst:.1} deg, peak pop rate {peak:.1} Hz"
                    );
                }
            }
            worsts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = worsts[worsts.len() / 2];
            let peak_avg = peaks.iter().sum::<f64>() / peaks.len() as f64;
            println!(
                "== survived {n_surv}/{n_total}, median worst-window {med:.1} deg, avg peak pop rate {peak_avg:.1} Hz"
            );
        }
        "hwsweep" => {
            let topo = presets::hw_topology();
            let mut t2 = topo.clone();
            t2.classes[0].efficacy = env_f("VELU", t2.classes[0].efficacy);
            let table = build_hw_ring(&t2, &GainSet::default()).unwrap();
            let mut opts = presets::hw_sweep_options(17);
            opts.run.neuron.i_bg = env_f("HWIBG", opts.run.neuron.i_bg);
            opts.run.noise.sigma = env_f("HWSIGMA", opts.run.noise.sigma);
            let repeats = env_f("REPEATS", 3.0) as usize;
            let counts: Vec<u32> = std::env::var("COUNTS")
                .unwrap_or_else(|_| "2,3,4,6".into())
                .split(',')
                .map(|s| s.parse().unwrap())
                .collect();
            let sweep =
                ringsim::discrete_hw::velocity_sweep(&t2, &table, &counts, repeats, &opts).unwrap();
            for r in &sweep.rows {
                println!(
                    "count {}: mean {:.6} rad/s, sem {:.6}, dead {}/{}",
                    r.count,
                    r.mean_velocity,
                    r.sem,
                    r.n_dead,
                    r.n_runs + r.n_dead
                );
            }
            if let Some(fit) = &sweep.fit {
                println!(
                    "fit: slope {:.4} intercept {:.4} r2 {:.4}",
                    fit.slope, fit.intercept, fit.r_squared
                );
            }
        }
        "hwspikes" => {
            let topo = presets::hw_topology();
            let table = build_hw_ring(&topo, &GainSet::default()).unwrap();
            let mut opts = presets::hw_run_options(0);
            opts.neuron.i_bg = env_f("HWIBG", opts.neuron.i_bg);
            opts.noise.sigma = env_f("HWSIGMA", opts.noise.sigma);
            opts.t_end = 4.0;
            let cue = CueSpec {
                population: 3,
                duration: 1.0,
                amplitude: env_f("HWCUE", 2.0),
            };
            let raster = run_hw(&topo, &table, &[], &cue, &opts).unwrap();
            for sec in 0..4 {
                let t0 = sec as f64;
                let mut per_pop = vec![0usize; topo.n_pops];
                for ev in &raster.events {
                    if ev.time >= t0 && ev.time < t0 + 1.0 {
                        per_pop[topo.pop_of(ev.neuron as usize)] += 1;
                    }
                }
                println!("[{t0:.0}-{:.0}s] pop spike counts: {per_pop:?}", t0 + 1.0);
            }
        }
        other => eprintln!("unknown probe {other}"),
    }
}
