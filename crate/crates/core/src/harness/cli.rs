//! Command-line interface.
//!
//! Subcommands: `simulate` (one run, raster + trace out), `track` (tracking
//! experiment), `calibrate`, `sweep` (robustness sweeps), `hw
//! drift|sweep|accel`, and `report` (aggregate JSON reports into a table).
//! `--config <toml>` works everywhere, `--seed` overrides the configured
//! base seed, and `--out-dir` picks the output directory. Exit codes: 0 on
//! success, 2 on validation errors (including usage errors), 1 on runtime
//! failures. The environment variable `RING_SIM_THREADS` caps parallelism.

use crate::calibration::SweepParam;
use crate::decoder::DecodedTrace;
use crate::engine::SpikeRaster;
use crate::error::{Result, RingError};
use crate::harness::config::HarnessConfig;
use crate::harness::experiment::{
    self, kappa_of, ExperimentDescriptor, ExperimentSpec, Metrics, ModelKind, Report,
    TrajectorySource,
};
use crate::harness::trajectory::{MotionRegime, SinusoidParams, TrapezoidParams};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "ringsim",
    version,
    about = "Spiking ring-attractor simulation and calibration toolkit",
    propagate_version = true
)]
struct Cli {
    /// TOML configuration file; omitted sections use the calibrated defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory the output files are written to.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write raster.csv, trace.csv, and summary.json.
    Simulate(SimulateArgs),
    /// Run a tracking experiment on a synthetic or imported trajectory.
    Track(TrackArgs),
    /// Calibrate currents (grid search) and the velocity gain (refinement).
    Calibrate(CalibrateArgs),
    /// Robustness sweep over ring size or firing-rate scale.
    Sweep(SweepArgs),
    /// Quantized-hardware experiments.
    #[command(subcommand)]
    Hw(HwCommand),
    /// Aggregate JSON reports into a summary table on stdout.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Run length in seconds.
    #[arg(long, default_value_t = 0.9)]
    t_end: f64,
    /// Model variant: unbounded or bounded.
    #[arg(long, default_value = "unbounded")]
    model: String,
    /// Constant commanded velocity (rad/s).
    #[arg(long, default_value_t = 0.0)]
    velocity: f64,
    /// Bump initialization angle (radians); defaults to mid-range.
    #[arg(long)]
    init_angle: Option<f64>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Model variant: unbounded, bounded, or both (paired comparison).
    #[arg(long, default_value = "unbounded")]
    model: String,
    /// Trajectory: "wide", "limited", "sine", or a CSV file path.
    #[arg(long, default_value = "wide")]
    trajectory: String,
    /// Number of trajectory pairs when --model both.
    #[arg(long)]
    pairs: Option<usize>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Maximum simulation evaluations the grid stage may spend.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Swept parameter: n-neurons or rate-scale.
    #[arg(long)]
    param: String,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Debug, Subcommand)]
enum HwCommand {
    /// Cue-and-hold drift stability across seeds and starting populations.
    Drift(HwDriftArgs),
    /// Mean bump velocity against velocity-connection count.
    Sweep(HwSweepArgs),
    /// Acceleration/recovery schedule with stepwise connection changes.
    Accel(HwAccelArgs),
}

#[derive(Debug, Args)]
struct HwDriftArgs {
    /// Number of seeds; every starting population is run for each.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
}

#[derive(Debug, Args)]
struct HwSweepArgs {
    /// Comma-separated connection counts; defaults to the configured sweep.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<u32>>,
    /// Repeats per (count, starting population).
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Debug, Args)]
struct HwAccelArgs {
    /// Connection counts added stepwise, then removed.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    counts: Vec<u32>,
    /// Cued starting population.
    #[arg(long, default_value_t = 5)]
    population: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// summary.json files to aggregate.
    #[arg(required = true, value_name = "FILE")]
    inputs: Vec<PathBuf>,
}

/// Entry point; returns the process exit code instead of exiting, so it is
/// testable in-process.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout with success, usage errors
            // to stderr with code 2 — exactly the contract.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cap_threads() {
    if let Ok(value) = std::env::var("RING_SIM_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                // Ignore the error if a pool already exists (tests, repeat
                // calls); the first initialization wins.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run_command(cli: Cli) -> Result<()> {
    cap_threads();
    let config = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    config.validate()?;
    let seed = cli.seed.unwrap_or(config.experiment.seed);
    let out = cli.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&config, seed, &out, args),
        Command::Track(args) => cmd_track(&config, seed, &out, args),
        Command::Calibrate(args) => cmd_calibrate(&config, seed, &out, args),
        Command::Sweep(args) => cmd_sweep(&config, seed, &out, args),
        Command::Hw(args) => cmd_hw(&config, seed, &out, args),
        Command::Report(args) => cmd_report(args),
    }
}

// --- output helpers ---

fn write_raster_csv(path: &Path, raster: &SpikeRaster) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "neuron"])?;
    for event in &raster.events {
        w.write_record(&[event.time.to_string(), event.neuron.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace_csv(path: &Path, trace: &DecodedTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "angle_rad", "valid"])?;
    for s in &trace.samples {
        w.write_record(&[s.time.to_string(), s.angle.to_string(), s.valid.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_report(out: &Path, report: &Report) -> Result<()> {
    let mut text = report.to_json()?;
    text.push('\n');
    std::fs::write(out.join("summary.json"), text)?;
    Ok(())
}

// --- subcommands ---

fn parse_continuous_model(s: &str) -> Result<ModelKind> {
    let model: ModelKind = s.parse()?;
    if model == ModelKind::Hw {
        return Err(RingError::InvalidConfig(
            "this command drives the continuous model; use `ringsim hw` \
             for the quantized network"
                .into(),
        ));
    }
    Ok(model)
}

fn cmd_simulate(config: &HarnessConfig, seed: u64, out: &Path, args: SimulateArgs) -> Result<()> {
    let model = parse_continuous_model(&args.model)?;
    let mid = config.boundary.theta_0 + 0.5 * (config.boundary.theta_l - config.boundary.theta_0);
    let source = TrajectorySource::Constant {
        angle: args.init_angle.unwrap_or(mid),
        velocity: args.velocity,
        duration: args.t_end,
    };
    let spec = ExperimentSpec {
        name: "simulate".into(),
        model,
        source: source.clone(),
        seed,
    };
    let run = experiment::run_tracking_experiment(config, &spec)?;
    write_raster_csv(&out.join("raster.csv"), &run.raster)?;
    write_trace_csv(&out.join("trace.csv"), &run.trace)?;
    let report = Report::new(
        "simulate",
        seed,
        config,
        ExperimentDescriptor::Track { model, source },
        Metrics::Tracking(run.outcome.clone()),
    );
    write_report(out, &report)?;
    println!(
        "simulate: {} spikes, mean error {:.2} deg over {:.1} s -> {}",
        run.outcome.n_spikes,
        run.outcome.mean_error_deg,
        run.outcome.duration_s,
        out.display()
    );
    Ok(())
}

fn trajectory_source(config: &HarnessConfig, which: &str, seed: u64) -> Result<TrajectorySource> {
    match which {
        "wide" | "limited" => Ok(TrajectorySource::Preset(TrapezoidParams {
            theta_0: config.boundary.theta_0,
            theta_l: config.boundary.theta_l,
            regime: which.parse::<MotionRegime>()?,
            seed,
        })),
        "sine" => {
            let range = config.boundary.theta_l - config.boundary.theta_0;
            Ok(TrajectorySource::Sine(SinusoidParams {
                center: config.boundary.theta_0 + 0.5 * range,
                amplitude: 0.25 * range,
                range: Some((config.boundary.theta_0, config.boundary.theta_l)),
                ..SinusoidParams::default()
            }))
        }
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(RingError::InvalidConfig(format!(
                    "trajectory {path:?} is not wide/limited/sine and no such file exists"
                )));
            }
            TrajectorySource::from_file(p)
        }
    }
}

fn cmd_track(config: &HarnessConfig, seed: u64, out: &Path, args: TrackArgs) -> Result<()> {
    if args.model == "both" {
        let regime: MotionRegime = args.trajectory.parse().map_err(|_| {
            RingError::InvalidConfig(
                "paired comparisons (--model both) need --trajectory wide or limited".into(),
            )
        })?;
        let n_pairs = args.pairs.unwrap_or(config.experiment.pairs);
        let paired = experiment::run_paired_comparison(config, regime, n_pairs, seed)?;
        println!(
            "track {regime}: bounded wins {}/{} (bounded {:.2} deg, unbounded {:.2} deg, sign test p = {:.4})",
            paired.bounded_wins, paired.n_pairs, paired.bounded_mean_deg,
            paired.unbounded_mean_deg, paired.sign_test_p
        );
        let report = Report::new(
            format!("track-{regime}-paired"),
            seed,
            config,
            ExperimentDescriptor::Paired { regime, n_pairs },
            Metrics::Paired(paired),
        );
        write_report(out, &report)?;
        return Ok(());
    }
    let model = parse_continuous_model(&args.model)?;
    let source = trajectory_source(config, &args.trajectory, seed)?;
    let spec = ExperimentSpec {
        name: format!("track-{}-{model}", args.trajectory),
        model,
        source: source.clone(),
        seed,
    };
    let run = experiment::run_tracking_experiment(config, &spec)?;
    write_raster_csv(&out.join("raster.csv"), &run.raster)?;
    write_trace_csv(&out.join("trace.csv"), &run.trace)?;
    let report = Report::new(
        spec.name.clone(),
        seed,
        config,
        ExperimentDescriptor::Track { model, source },
        Metrics::Tracking(run.outcome.clone()),
    );
    write_report(out, &report)?;
    println!(
        "{}: mean error {:.2} deg (std {:.2}) over {:.1} s -> {}",
        spec.name,
        run.outcome.mean_error_deg,
        run.outcome.std_error_deg,
        run.outcome.duration_s,
        out.display()
    );
    Ok(())
}

fn cmd_calibrate(config: &HarnessConfig, seed: u64, out: &Path, args: CalibrateArgs) -> Result<()> {
    let summary = experiment::run_calibration(config, args.budget)?;
    let kappa = kappa_of(&summary.refined)?;
    write_json(
        &out.join("fit.json"),
        &serde_json::json!({
            "velocity_gain_kappa": kappa,
            "g_sin": summary.refined.gains.g_sin,
            "probe_fits": summary.refined.diagnostics.probe_fits,
        }),
    )?;
    println!(
        "calibrate: i_bg {:.4}, init {:.2}, g_sin {:.3}, kappa {:.4} +/- {:.4}",
        summary.grid.i_bg,
        summary.grid.init_current,
        summary.refined.gains.g_sin,
        kappa.kappa,
        kappa.stderr
    );
    let report = Report::new(
        "calibrate",
        seed,
        config,
        ExperimentDescriptor::Calibrate { budget: args.budget },
        Metrics::Calibration(summary),
    );
    write_report(out, &report)?;
    Ok(())
}

fn cmd_sweep(config: &HarnessConfig, seed: u64, out: &Path, args: SweepArgs) -> Result<()> {
    let param = match args.param.as_str() {
        "n-neurons" => SweepParam::NNeurons,
        "rate-scale" => SweepParam::RateScale,
        other => {
            return Err(RingError::InvalidConfig(format!(
                "unknown sweep parameter {other:?} (expected n-neurons or rate-scale)"
            )))
        }
    };
    let points = experiment::run_robustness_sweep(config, param, &args.values, seed)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        "value",
        "mean_abs_error_deg",
        "i_bg",
        "current_scale",
        "peak_rate_hz",
        "error",
    ])?;
    for p in &points {
        w.write_record(&[
            p.value.to_string(),
            p.mean_abs_error_deg.map_or(String::new(), |v| v.to_string()),
            p.i_bg.to_string(),
            p.current_scale.to_string(),
            p.peak_rate_hz.to_string(),
            p.error.clone().unwrap_or_default(),
        ])?;
        match (&p.mean_abs_error_deg, &p.error) {
            (Some(mae), _) => println!("sweep {} = {}: MAE {mae:.2} deg", args.param, p.value),
            (None, Some(e)) => println!("sweep {} = {}: failed ({e})", args.param, p.value),
            (None, None) => println!("sweep {} = {}: no data", args.param, p.value),
        }
    }
    w.flush()?;
    let report = Report::new(
        format!("sweep-{}", args.param),
        seed,
        config,
        ExperimentDescriptor::Robustness { param, values: args.values.clone() },
        Metrics::Robustness { points },
    );
    write_report(out, &report)?;
    Ok(())
}

fn cmd_hw(config: &HarnessConfig, seed: u64, out: &Path, command: HwCommand) -> Result<()> {
    match command {
        HwCommand::Drift(args) => {
            let report = experiment::run_hw_drift(config, args.seeds, seed)?;
            let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
            w.write_record(["seed_index", "population", "window_start_s", "mean_error_deg"])?;
            for row in &report.rows {
                for (t, err) in &row.windows {
                    w.write_record(&[
                        row.seed_index.to_string(),
                        row.population.to_string(),
                        t.to_string(),
                        err.map_or(String::new(), |v| v.to_string()),
                    ])?;
                }
            }
            w.flush()?;
            println!(
                "hw drift: {} runs, worst median window {:.2} deg (spacing {:.0} deg), {} dead",
                report.rows.len(),
                report.worst_median_deg,
                report.spacing_deg,
                report.n_dead_runs
            );
            let envelope = Report::new(
                "hw-drift",
                seed,
                config,
                ExperimentDescriptor::HwDrift { n_seeds: args.seeds },
                Metrics::HwDrift(report),
            );
            write_report(out, &envelope)?;
        }
        HwCommand::Sweep(args) => {
            let counts = args.counts.unwrap_or_else(|| config.hw.counts.clone());
            let repeats = args.repeats.unwrap_or(config.hw.repeats);
            let report = experiment::run_hw_velocity_sweep(config, &counts, repeats, seed)?;
            let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
            w.write_record(["count", "mean_velocity_rad_s", "sem", "n_runs", "n_dead"])?;
            for row in &report.rows {
                w.write_record(&[
                    row.count.to_string(),
                    row.mean_velocity.to_string(),
                    row.sem.to_string(),
                    row.n_runs.to_string(),
                    row.n_dead.to_string(),
                ])?;
            }
            w.flush()?;
            write_json(
                &out.join("fit.json"),
                &serde_json::json!({ "fit": report.fit, "doubling": report.doubling }),
            )?;
            for row in &report.rows {
                println!(
                    "hw sweep count {}: {:.3} rad/s (sem {:.3}, {} runs, {} dead)",
                    row.count, row.mean_velocity, row.sem, row.n_runs, row.n_dead
                );
            }
            if let Some(fit) = &report.fit {
                println!(
                    "hw sweep fit: slope {:.4}, intercept {:.4}, r^2 {:.4}",
                    fit.slope, fit.intercept, fit.r_squared
                );
            }
            let envelope = Report::new(
                "hw-sweep",
                seed,
                config,
                ExperimentDescriptor::HwSweep { counts, repeats },
                Metrics::HwSweep(report),
            );
            write_report(out, &envelope)?;
        }
        HwCommand::Accel(args) => {
            let run = experiment::run_hw_acceleration(config, &args.counts, args.population, seed)?;
            write_raster_csv(&out.join("raster.csv"), &run.raster)?;
            write_trace_csv(&out.join("trace.csv"), &run.trace)?;
            write_json(&out.join("fit.json"), &run.report.phases)?;
            for phase in &run.report.phases {
                println!(
                    "hw accel {} (count {}): slope {:+.3} rad/s over [{:.1}, {:.1}] s",
                    phase.label, phase.count, phase.slope_rad_s, phase.fit_start_s, phase.fit_end_s
                );
            }
            let envelope = Report::new(
                "hw-accel",
                seed,
                config,
                ExperimentDescriptor::HwAccel {
                    counts: args.counts.clone(),
                    population: args.population,
                },
                Metrics::HwAccel(run.report),
            );
            write_report(out, &envelope)?;
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    println!("{:<28} {:>10} {:<12} key metrics", "name", "seed", "kind");
    for path in &args.inputs {
        let text = std::fs::read_to_string(path)?;
        let report = Report::from_json(&text)?;
        let (kind, highlight) = match &report.metrics {
            Metrics::Tracking(t) => (
                "tracking",
                format!("mean {:.2} deg, std {:.2} deg", t.mean_error_deg, t.std_error_deg),
            ),
            Metrics::Paired(p) => (
                "paired",
                format!(
                    "bounded wins {}/{}, p = {:.4}",
                    p.bounded_wins, p.n_pairs, p.sign_test_p
                ),
            ),
            Metrics::Calibration(c) => (
                "calibration",
                format!(
                    "g_sin {:.3}, kappa {}",
                    c.refined.gains.g_sin,
                    c.refined
                        .velocity_gain_kappa
                        .map_or("-".into(), |k| format!("{:.4}", k.kappa))
                ),
            ),
            Metrics::Robustness { points } => (
                "robustness",
                format!("{} points", points.len()),
            ),
            Metrics::HwDrift(d) => (
                "hw-drift",
                format!("worst median {:.2} deg", d.worst_median_deg),
            ),
            Metrics::HwSweep(s) => (
                "hw-sweep",
                s.fit.map_or("no fit".into(), |f| {
                    format!("slope {:.3}, r^2 {:.4}", f.slope, f.r_squared)
                }),
            ),
            Metrics::HwAccel(a) => (
                "hw-accel",
                format!(
                    "stationary ok: {}, translation positive: {}",
                    a.stationary_ok, a.translation_positive
                ),
            ),
        };
        println!("{:<28} {:>10} {:<12} {highlight}", report.name, report.seed, kind);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> i32 {
        cli_main(args.iter().map(|s| s.to_string()))
    }

    #[test]
    fn unknown_flag_exits_2() {
        assert_eq!(run_cli(&["ringsim", "--frobnicate"]), 2);
        assert_eq!(run_cli(&["ringsim", "simulate", "--no-such-flag"]), 2);
    }

    #[test]
    fn help_and_version_exit_0() {
        assert_eq!(run_cli(&["ringsim", "--help"]), 0);
        assert_eq!(run_cli(&["ringsim", "--version"]), 0);
        assert_eq!(run_cli(&["ringsim", "hw", "--help"]), 0);
    }

    #[test]
    fn missing_subcommand_exits_2() {
        assert_eq!(run_cli(&["ringsim"]), 2);
    }

    #[test]
    fn bad_config_file_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[gains]\ng_typo = 1.0\n").unwrap();
        let code = run_cli(&[
            "ringsim",
            "--config",
            path.to_str().unwrap(),
            "simulate",
            "--t-end",
            "0.2",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn simulate_writes_the_output_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let code = run_cli(&[
            "ringsim",
            "--out-dir",
            out.to_str().unwrap(),
            "--seed",
            "5",
            "simulate",
            "--t-end",
            "0.9",
        ]);
        assert_eq!(code, 0);
        for file in ["raster.csv", "trace.csv", "summary.json"] {
            assert!(out.join(file).exists(), "{file} missing");
        }
        let report =
            Report::from_json(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(report.seed, 5);
        match report.metrics {
            Metrics::Tracking(t) => assert!(t.mean_error_deg < 5.0, "{}", t.mean_error_deg),
            other => panic!("unexpected metrics {other:?}"),
        }
        // The report aggregator accepts its own output.
        assert_eq!(
            run_cli(&["ringsim", "report", out.join("summary.json").to_str().unwrap()]),
            0
        );
    }

    #[test]
    fn track_imports_csv_trajectories() {
        let dir = tempfile::tempdir().unwrap();
        let traj = dir.path().join("traj.csv");
        std::fs::write(
            &traj,
            "time_s,angle_rad,velocity_rad_s\n0.0,2.0,0.0\n1.5,2.0,0.0\n",
        )
        .unwrap();
        let out = dir.path().join("out");
        let code = run_cli(&[
            "ringsim",
            "--out-dir",
            out.to_str().unwrap(),
            "track",
            "--trajectory",
            traj.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report =
            Report::from_json(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        match report.descriptor {
            ExperimentDescriptor::Track { source: TrajectorySource::Imported { ref samples, .. }, .. } => {
                assert_eq!(samples.len(), 2);
            }
            other => panic!("unexpected descriptor {other:?}"),
        }
    }

    #[test]
    fn nonexistent_trajectory_file_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let code = run_cli(&[
            "ringsim",
            "--out-dir",
            out.to_str().unwrap(),
            "track",
            "--trajectory",
            "no-such-file.csv",
        ]);
        assert_eq!(code, 2);
    }
}
