//! Experiment driver: one JSON config expands into (sweep point x seed x
//! variant) simulations, each emitting a report tree, plus an aggregate
//! comparison file.
//!
//! Output directory layout is a pure function of the config:
//!
//! ```text
//! {out_dir}/{point}/seed{seed}/{variant}/
//!     report.json  report.csv  cdf.csv  timing.json  result.json  result.csv
//! {out_dir}/comparison.csv
//! ```
//!
//! where `point` is `sigma{s}-rate{r}-mix{m}` for generated traces (floats in
//! shortest round-trip form) or `trace` for a trace loaded from a file, and
//! `variant` is the effective scheduler name, an ablation stage, or
//! `{partition}-{scheduler}` for partition studies. `timing.json` holds the
//! only non-deterministic numbers (wall-clock scheduler times); every other
//! file is byte-identical across reruns of the same config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::metrics::{comparison_csv, compute_report, MetricsError, Report};
use crate::profile::{LatencyProfile, ProfileError};
use crate::sched::{
    build_scheduler, BaselineConfig, Fcfs, FcfsPreempt, GenServe, GenServeConfig, SchedulerKind,
};
use crate::sim::{run_sim, Partition, Scheduler, SimConfig, SimError, SimResult};
use crate::workload::{generate_trace, load_trace, Request, TraceConfig, WorkloadError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("failed to read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ExperimentError {
    /// Process exit code class: 2 config error, 3 simulation contract
    /// violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. }
            | ExperimentError::Parse { .. }
            | ExperimentError::Profile(_)
            | ExperimentError::Workload(_)
            | ExperimentError::Metrics(MetricsError::EmptyResult) => 2,
            ExperimentError::Sim(_) => 3,
            ExperimentError::Io { .. } | ExperimentError::Metrics(_) => 1,
        }
    }
}

fn config_err(path: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Trace input: an inline generator config or a path to a JSONL trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceSource {
    Inline(TraceConfig),
    Path(PathBuf),
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Inline(TraceConfig::default())
    }
}

/// Mechanism toggles applied to the `genserve` scheduler selection.
/// `dp_solver: false` degrades it to arrival-order dispatch, keeping the
/// slack-ranked victim rule only while `preemption` stays on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub preemption: bool,
    pub dp_solver: bool,
    pub sp_switching: bool,
    pub batching: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            preemption: true,
            dp_solver: true,
            sp_switching: true,
            batching: true,
        }
    }
}

/// Sweep axes; an empty list leaves that axis at the base trace value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub sigmas: Vec<f64>,
    pub rates_per_min: Vec<f64>,
    /// Video share of the mix, in [0, 1].
    pub mixes: Vec<f64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty() && self.rates_per_min.is_empty() && self.mixes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cluster_size: usize,
    /// Latency profile JSON; builtin defaults when absent.
    pub profile: Option<PathBuf>,
    pub trace: TraceSource,
    pub schedulers: Vec<SchedulerKind>,
    pub baseline: BaselineConfig,
    pub genserve: GenServeConfig,
    pub ablation: AblationFlags,
    pub sweep: SweepAxes,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub partition: Partition,
}

impl Default for ExperimentConfig {
    /// The anchor setup: balanced 50:50 mix at 24 req/min, SLO scale 1.0,
    /// eight replicated GPUs, every scheduler, one seed.
    fn default() -> Self {
        ExperimentConfig {
            cluster_size: 8,
            profile: None,
            trace: TraceSource::default(),
            schedulers: SchedulerKind::ALL.to_vec(),
            baseline: BaselineConfig::default(),
            genserve: GenServeConfig::default(),
            ablation: AblationFlags::default(),
            sweep: SweepAxes::default(),
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            partition: Partition::Replicated,
        }
    }
}

/// Parse a mix flag: a named preset (`light`=0.2, `balanced`=0.5,
/// `heavy`=0.8 video share) or a literal fraction in [0, 1].
pub fn parse_mix(s: &str) -> Result<f64, String> {
    match s {
        "light" => Ok(0.2),
        "balanced" => Ok(0.5),
        "heavy" => Ok(0.8),
        other => match other.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
            _ => Err(format!(
                "expected light|balanced|heavy or a fraction in [0, 1], got `{other}`"
            )),
        },
    }
}

/// Stable per-trace seed: splitmix64 finalizer over the base seed xored
/// with the sweep-point index spread by the 64-bit golden ratio. Decouples
/// sweep points while keeping every (config, point) pair reproducible.
pub fn derive_seed(base: u64, point_index: u64) -> u64 {
    let mut z = base ^ point_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
enum PointKind {
    Generated {
        sigma: f64,
        rate_per_min: f64,
        mix: f64,
    },
    File,
}

/// One sweep point: a concrete (sigma, rate, mix) assignment, or the
/// verbatim trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    index: u64,
    kind: PointKind,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match &self.kind {
            PointKind::Generated {
                sigma,
                rate_per_min,
                mix,
            } => {
                format!("sigma{sigma}-rate{rate_per_min}-mix{mix}")
            }
            PointKind::File => "trace".to_string(),
        }
    }
}

/// A scheduler (plus partition) to run at every (point, seed).
pub struct Variant {
    pub label: String,
    pub partition: Partition,
    pub scheduler: Box<dyn Scheduler + Send + Sync>,
}

/// One finished simulation: where its files went and its computed report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub point: String,
    pub seed: u64,
    pub variant: String,
    pub dir: PathBuf,
    pub report: Report,
}

impl RunOutcome {
    pub fn label(&self) -> String {
        format!("{}/seed{}/{}", self.point, self.seed, self.variant)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| ExperimentError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.cluster_size == 0 {
            return Err(config_err("cluster_size", "must be at least 1"));
        }
        if let Partition::Dedicated {
            image_gpus,
            video_gpus,
        } = self.partition
        {
            if image_gpus + video_gpus != self.cluster_size {
                return Err(config_err(
                    "partition",
                    format!(
                        "image_gpus + video_gpus must equal cluster_size: {image_gpus} + {video_gpus} != {}",
                        self.cluster_size
                    ),
                ));
            }
            if image_gpus == 0 || video_gpus == 0 {
                return Err(config_err("partition", "each pool needs at least one GPU"));
            }
        }
        if self.schedulers.is_empty() {
            return Err(config_err("schedulers", "must name at least one scheduler"));
        }
        for (i, k) in self.schedulers.iter().enumerate() {
            if self.schedulers[..i].contains(k) {
                return Err(config_err("schedulers", format!("duplicate entry `{k}`")));
            }
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "must list at least one seed"));
        }
        for (i, s) in self.sweep.sigmas.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return Err(config_err(
                    &format!("sweep.sigmas[{i}]"),
                    format!("must be a positive finite number, got {s}"),
                ));
            }
        }
        for (i, r) in self.sweep.rates_per_min.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(config_err(
                    &format!("sweep.rates_per_min[{i}]"),
                    format!("must be a positive finite number, got {r}"),
                ));
            }
        }
        for (i, m) in self.sweep.mixes.iter().enumerate() {
            if !(m.is_finite() && (0.0..=1.0).contains(m)) {
                return Err(config_err(
                    &format!("sweep.mixes[{i}]"),
                    format!("must lie in [0, 1], got {m}"),
                ));
            }
        }
        match &self.trace {
            TraceSource::Inline(tc) => {
                if tc.n_requests == 0 {
                    return Err(config_err("trace.n_requests", "must be at least 1"));
                }
                tc.validate()
                    .map_err(|e| config_err("trace", e.to_string()))?;
            }
            TraceSource::Path(_) => {
                if !self.sweep.is_empty() {
                    return Err(config_err(
                        "sweep",
                        "sweeping sigma/rate/mix requires an inline trace config, not a trace file",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn load_profile(&self) -> Result<LatencyProfile, ExperimentError> {
        Ok(match &self.profile {
            Some(path) => LatencyProfile::load(path)?,
            None => LatencyProfile::builtin_default(),
        })
    }

    /// Cross product of the sweep axes, sigma-major then rate then mix, with
    /// base trace values filling unswept axes. A trace file yields the single
    /// `File` point.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let tc = match &self.trace {
            TraceSource::Path(_) => {
                return vec![SweepPoint {
                    index: 0,
                    kind: PointKind::File,
                }];
            }
            TraceSource::Inline(tc) => tc,
        };
        let base_rate = match tc.arrival {
            crate::workload::ArrivalProcess::Poisson { rate_per_min }
            | crate::workload::ArrivalProcess::Bursty { rate_per_min, .. } => rate_per_min,
        };
        let one_if_empty = |xs: &[f64], base: f64| {
            if xs.is_empty() {
                vec![base]
            } else {
                xs.to_vec()
            }
        };
        let sigmas = one_if_empty(&self.sweep.sigmas, tc.sigma);
        let rates = one_if_empty(&self.sweep.rates_per_min, base_rate);
        let mixes = one_if_empty(&self.sweep.mixes, tc.video_ratio);
        let mut points = Vec::with_capacity(sigmas.len() * rates.len() * mixes.len());
        for &sigma in &sigmas {
            for &rate_per_min in &rates {
                for &mix in &mixes {
                    points.push(SweepPoint {
                        index: points.len() as u64,
                        kind: PointKind::Generated {
                            sigma,
                            rate_per_min,
                            mix,
                        },
                    });
                }
            }
        }
        points
    }

    /// The scheduler actually run for a selected kind, after ablation flags.
    pub fn effective_scheduler(&self, kind: SchedulerKind) -> Box<dyn Scheduler + Send + Sync> {
        if kind != SchedulerKind::Genserve {
            return build_scheduler(kind, &self.baseline, &self.genserve);
        }
        if !self.ablation.dp_solver {
            return if self.ablation.preemption {
                Box::new(FcfsPreempt::new(
                    self.baseline.clone(),
                    self.genserve.safety_margin_steps,
                ))
            } else {
                Box::new(Fcfs::new(self.baseline.clone()))
            };
        }
        let mut g = self.genserve.clone();
        g.preemption &= self.ablation.preemption;
        g.sp_switching &= self.ablation.sp_switching;
        g.batching &= self.ablation.batching;
        Box::new(GenServe::new(g))
    }

    fn trace_for(
        &self,
        profile: &LatencyProfile,
        point: &SweepPoint,
        seed: u64,
    ) -> Result<Vec<Request>, ExperimentError> {
        match (&self.trace, &point.kind) {
            (TraceSource::Path(p), _) => Ok(load_trace(p)?),
            (
                TraceSource::Inline(tc),
                PointKind::Generated {
                    sigma,
                    rate_per_min,
                    mix,
                },
            ) => {
                let mut tc = tc.clone();
                tc.sigma = *sigma;
                tc.video_ratio = *mix;
                match &mut tc.arrival {
                    crate::workload::ArrivalProcess::Poisson { rate_per_min: r }
                    | crate::workload::ArrivalProcess::Bursty {
                        rate_per_min: r, ..
                    } => {
                        *r = *rate_per_min;
                    }
                }
                Ok(generate_trace(
                    &tc,
                    derive_seed(seed, point.index),
                    profile,
                )?)
            }
            (TraceSource::Inline(_), PointKind::File) => {
                unreachable!("file point only arises from a path trace")
            }
        }
    }
}

fn write_run_files(dir: &Path, result: &SimResult, report: &Report) -> Result<(), ExperimentError> {
    report.write_files(dir)?;
    result.write_json(&dir.join("result.json"))?;
    result.write_csv(&dir.join("result.csv"))?;
    Ok(())
}

/// Run every variant at every (sweep point x seed); one trace is generated
/// per (point, seed) and shared by all variants so comparisons are paired.
/// Returns outcomes in canonical order (point-major, then seed, then
/// variant) and writes `comparison.csv` under the output root.
pub fn execute(
    cfg: &ExperimentConfig,
    variants: &[Variant],
) -> Result<Vec<RunOutcome>, ExperimentError> {
    cfg.validate()?;
    for (i, v) in variants.iter().enumerate() {
        if variants[..i].iter().any(|w| w.label == v.label) {
            return Err(config_err(
                "schedulers",
                format!("duplicate effective variant label `{}`", v.label),
            ));
        }
    }
    let profile = cfg.load_profile()?;
    let points = cfg.sweep_points();
    let tasks: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(pi, _)| cfg.seeds.iter().map(move |&s| (pi, s)))
        .collect();

    let run_task = |&(pi, seed): &(usize, u64)| -> Result<Vec<RunOutcome>, ExperimentError> {
        let point = &points[pi];
        let trace = cfg.trace_for(&profile, point, seed)?;
        let mut outcomes = Vec::with_capacity(variants.len());
        for v in variants {
            let sim_cfg = SimConfig {
                cluster_size: cfg.cluster_size,
                partition: v.partition,
                round_every_steps: 1,
            };
            let result = run_sim(&trace, &profile, v.scheduler.as_ref(), &sim_cfg)?;
            let report = compute_report(&result)?;
            let dir = cfg
                .out_dir
                .join(point.label())
                .join(format!("seed{seed}"))
                .join(&v.label);
            write_run_files(&dir, &result, &report)?;
            outcomes.push(RunOutcome {
                point: point.label(),
                seed,
                variant: v.label.clone(),
                dir,
                report,
            });
        }
        Ok(outcomes)
    };

    #[cfg(feature = "parallel")]
    let nested: Vec<Vec<RunOutcome>> = tasks.par_iter().map(run_task).collect::<Result<_, _>>()?;
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Vec<RunOutcome>> = tasks.iter().map(run_task).collect::<Result<_, _>>()?;

    let outcomes: Vec<RunOutcome> = nested.into_iter().flatten().collect();
    let rows: Vec<(String, Report)> = outcomes
        .iter()
        .map(|o| (o.label(), o.report.clone()))
        .collect();
    let path = cfg.out_dir.join("comparison.csv");
    std::fs::write(&path, comparison_csv(&rows))
        .map_err(|source| ExperimentError::Io { path, source })?;
    Ok(outcomes)
}

/// Run the configured schedulers (after ablation flags) across the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, ExperimentError> {
    cfg.validate()?;
    let variants: Vec<Variant> = cfg
        .schedulers
        .iter()
        .map(|&k| {
            let scheduler = cfg.effective_scheduler(k);
            Variant {
                label: scheduler.name().to_string(),
                partition: cfg.partition,
                scheduler,
            }
        })
        .collect();
    execute(cfg, &variants)
}

/// Fixed ablation order; each stage adds one mechanism on top of the last.
pub const ABLATION_STAGES: [&str; 4] = ["fcfs", "plus-preemption", "plus-dp", "plus-sp"];

/// Cumulative mechanism study: arrival-order dispatch, plus slack-ranked
/// preemption, plus the joint solver (degree pinned), plus elastic scaling.
pub fn ablation_run(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, ExperimentError> {
    cfg.validate()?;
    let pinned = GenServeConfig {
        sp_switching: false,
        ..cfg.genserve.clone()
    };
    let variants: Vec<Variant> = vec![
        Variant {
            label: ABLATION_STAGES[0].to_string(),
            partition: cfg.partition,
            scheduler: Box::new(Fcfs::new(cfg.baseline.clone())),
        },
        Variant {
            label: ABLATION_STAGES[1].to_string(),
            partition: cfg.partition,
            scheduler: Box::new(FcfsPreempt::new(
                cfg.baseline.clone(),
                cfg.genserve.safety_margin_steps,
            )),
        },
        Variant {
            label: ABLATION_STAGES[2].to_string(),
            partition: cfg.partition,
            scheduler: Box::new(GenServe::new(pinned)),
        },
        Variant {
            label: ABLATION_STAGES[3].to_string(),
            partition: cfg.partition,
            scheduler: Box::new(GenServe::new(cfg.genserve.clone())),
        },
    ];
    execute(cfg, &variants)
}

/// Partition presets studied against replicated co-serving on 8 GPUs.
pub const DEDICATED_PRESETS: [(usize, usize); 3] = [(2, 6), (3, 5), (4, 4)];

/// Run each configured scheduler under replicated sharing and under each
/// dedicated image:video split.
pub fn dedicated_run(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, ExperimentError> {
    cfg.validate()?;
    let mut partitions: Vec<(String, Partition)> =
        vec![("replicated".to_string(), Partition::Replicated)];
    for (img, vid) in DEDICATED_PRESETS {
        if img + vid != cfg.cluster_size {
            return Err(config_err(
                "cluster_size",
                format!(
                    "dedicated presets {DEDICATED_PRESETS:?} require a cluster of {} GPUs, got {}",
                    img + vid,
                    cfg.cluster_size
                ),
            ));
        }
        partitions.push((
            format!("img{img}-vid{vid}"),
            Partition::Dedicated {
                image_gpus: img,
                video_gpus: vid,
            },
        ));
    }
    let mut variants = Vec::new();
    for (plabel, partition) in &partitions {
        for &k in &cfg.schedulers {
            let scheduler = cfg.effective_scheduler(k);
            variants.push(Variant {
                label: format!("{plabel}-{}", scheduler.name()),
                partition: *partition,
                scheduler,
            });
        }
    }
    execute(cfg, &variants)
}
