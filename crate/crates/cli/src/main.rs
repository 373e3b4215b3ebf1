//! `genserve`: run deterministic co-serving experiments from a JSON config,
//! with flag overrides for the common scalars.
//!
//! Exit codes: 0 success, 2 config error (including flag misuse), 3
//! simulation contract violation, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use genserve_core::experiment::{
    ablation_run, dedicated_run, derive_seed, parse_mix, run_experiment, ExperimentConfig,
    ExperimentError, RunOutcome, SweepAxes, TraceSource,
};
use genserve_core::profile::LatencyProfile;
use genserve_core::sched::SchedulerKind;
use genserve_core::workload::{generate_trace, save_trace, ArrivalProcess};

#[derive(Parser)]
#[command(
    name = "genserve",
    version,
    about = "Deterministic cluster simulator for co-served image and video diffusion workloads"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Experiment config JSON; built-in anchor defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; replaces the config seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduler to run: fcfs|sjf|srtf|rasp|genserve.
    #[arg(long)]
    scheduler: Option<String>,
    /// Deadline tightness multiplier for generated traces.
    #[arg(long)]
    sigma: Option<f64>,
    /// Mean arrival rate in requests per minute for generated traces.
    #[arg(long)]
    rate: Option<f64>,
    /// Video share of the mix: light|balanced|heavy or a fraction in [0, 1].
    #[arg(long, value_parser = parse_mix)]
    mix: Option<f64>,
    /// Worker threads for sweep points; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the base point (sweep axes in the config are ignored).
    Run(CommonOpts),
    /// Simulate every sweep point from the config.
    Sweep(CommonOpts),
    /// Cumulative mechanism study: fcfs, +preemption, +dp, +sp.
    Ablate(CommonOpts),
    /// Replicated sharing vs dedicated image:video GPU splits.
    Dedicated(CommonOpts),
    /// Generate a trace file (JSONL, one request per line) and exit.
    GenTrace {
        #[command(flatten)]
        common: CommonOpts,
        /// Trace file to write.
        #[arg(long, default_value = "trace.jsonl")]
        trace_out: PathBuf,
    },
    /// Check a latency profile file for schema and consistency errors.
    ValidateProfile {
        /// Profile JSON path; the built-in profile when omitted.
        path: Option<PathBuf>,
    },
}

fn config_err(path: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Load the config (or defaults) and apply flag overrides to the top-level
/// scalars. `keep_sweep` distinguishes `sweep` from the single-point verbs.
fn build_config(opts: &CommonOpts, keep_sweep: bool) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &opts.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if !keep_sweep {
        cfg.sweep = SweepAxes::default();
    }
    if let Some(out) = &opts.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(s) = &opts.scheduler {
        let kind: SchedulerKind = s.parse().map_err(|e: String| config_err("scheduler", e))?;
        cfg.schedulers = vec![kind];
    }
    let trace_overrides = opts.sigma.is_some() || opts.rate.is_some() || opts.mix.is_some();
    if trace_overrides {
        let TraceSource::Inline(tc) = &mut cfg.trace else {
            return Err(config_err(
                "trace",
                "--sigma/--rate/--mix override generated traces, not a trace file",
            ));
        };
        if let Some(sigma) = opts.sigma {
            tc.sigma = sigma;
        }
        if let Some(rate) = opts.rate {
            match &mut tc.arrival {
                ArrivalProcess::Poisson { rate_per_min }
                | ArrivalProcess::Bursty { rate_per_min, .. } => *rate_per_min = rate,
            }
        }
        if let Some(mix) = opts.mix {
            tc.video_ratio = mix;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_jobs(opts: &CommonOpts) -> Result<()> {
    if let Some(jobs) = opts.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("failed to configure the worker pool")?;
    }
    Ok(())
}

fn fmt_sar(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.3}"),
        None => "n/a".to_string(),
    }
}

fn print_outcomes(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) {
    for o in outcomes {
        println!(
            "{}: sar_overall={:.3} sar_image={} sar_video={}",
            o.label(),
            o.report.sar_overall,
            fmt_sar(o.report.sar_image),
            fmt_sar(o.report.sar_video),
        );
    }
    println!(
        "wrote {} report sets and comparison.csv under {}",
        outcomes.len(),
        cfg.out_dir.display()
    );
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run(opts) => {
            let cfg = build_config(&opts, false)?;
            init_jobs(&opts)?;
            print_outcomes(&cfg, &run_experiment(&cfg)?);
        }
        Cmd::Sweep(opts) => {
            let cfg = build_config(&opts, true)?;
            init_jobs(&opts)?;
            print_outcomes(&cfg, &run_experiment(&cfg)?);
        }
        Cmd::Ablate(opts) => {
            let cfg = build_config(&opts, false)?;
            init_jobs(&opts)?;
            print_outcomes(&cfg, &ablation_run(&cfg)?);
        }
        Cmd::Dedicated(opts) => {
            let cfg = build_config(&opts, false)?;
            init_jobs(&opts)?;
            print_outcomes(&cfg, &dedicated_run(&cfg)?);
        }
        Cmd::GenTrace { common, trace_out } => {
            let cfg = build_config(&common, false)?;
            let TraceSource::Inline(tc) = &cfg.trace else {
                return Err(config_err("trace", "gen-trace needs an inline trace config").into());
            };
            let profile = cfg.load_profile()?;
            let trace = generate_trace(tc, derive_seed(cfg.seeds[0], 0), &profile)
                .map_err(ExperimentError::from)?;
            save_trace(&trace, &trace_out).map_err(ExperimentError::from)?;
            println!("wrote {} requests to {}", trace.len(), trace_out.display());
        }
        Cmd::ValidateProfile { path } => match path {
            Some(path) => {
                LatencyProfile::load(&path).map_err(ExperimentError::from)?;
                println!("profile OK: {}", path.display());
            }
            None => {
                LatencyProfile::builtin_default();
                println!("built-in profile OK");
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<ExperimentError>()
                .map(|e| e.exit_code())
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
