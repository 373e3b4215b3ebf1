//! Seeded workload generation and trace persistence.
//!
//! A trace is a list of timed requests, sorted by arrival. Deadlines are
//! assigned at generation time as `arrival + sigma * 1.5 * offline_e2e`,
//! where the offline reference latency comes from the profile, so the same
//! trace config produces different deadlines under a different profile.
//!
//! Generation is a pure function of `(config, seed, profile)`: one ChaCha8
//! stream drives every draw in a fixed order, which keeps traces
//! bit-identical across runs and platforms.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{LatencyProfile, ProfileError, RequestKind, ResolutionClass};

pub type RequestId = u64;

/// One serving request. `frames` is 1 for images; `steps_total` snapshots
/// the profile's denoising step count at generation time so a trace replays
/// identically even if the profile's step totals later change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub kind: RequestKind,
    pub resolution: ResolutionClass,
    pub frames: u32,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
    pub steps_total: u32,
    /// Opaque label. Never persisted: trace files regenerate the canonical
    /// `prompt-{id}` form on load.
    #[serde(skip, default)]
    pub prompt_tag: String,
}

impl Request {
    pub fn canonical_prompt_tag(id: RequestId) -> String {
        format!("prompt-{id}")
    }
}

/// Arrival process. Bursty mode alternates busy windows and silent gaps
/// while preserving the configured long-run average rate, so the same
/// nominal load arrives in concentrated waves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "lowercase")]
pub enum ArrivalProcess {
    Poisson {
        rate_per_min: f64,
    },
    Bursty {
        rate_per_min: f64,
        #[serde(default = "default_burst_width_ms")]
        burst_width_ms: f64,
        #[serde(default = "default_burst_gap_ms")]
        burst_gap_ms: f64,
    },
}

fn default_burst_width_ms() -> f64 {
    10_000.0
}

fn default_burst_gap_ms() -> f64 {
    50_000.0
}

impl ArrivalProcess {
    pub fn rate_per_min(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate_per_min } => rate_per_min,
            ArrivalProcess::Bursty { rate_per_min, .. } => rate_per_min,
        }
    }

    pub fn with_rate(&self, rate_per_min: f64) -> Self {
        let mut p = self.clone();
        match &mut p {
            ArrivalProcess::Poisson { rate_per_min: r } => *r = rate_per_min,
            ArrivalProcess::Bursty {
                rate_per_min: r, ..
            } => *r = rate_per_min,
        }
        p
    }
}

/// Per-kind resolution distribution. `Dirichlet` draws one weight vector
/// over the kind's three legal classes per trace and shares it across all
/// requests of that kind, producing traces skewed toward a random class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum ResolutionDist {
    Uniform,
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    #[serde(default = "default_n_requests")]
    pub n_requests: u32,
    /// Fraction of requests that are videos (mix is video:image).
    #[serde(default = "default_video_ratio")]
    pub video_ratio: f64,
    pub arrival: ArrivalProcess,
    #[serde(default = "default_resolution_dist")]
    pub resolutions: ResolutionDist,
    /// Deadline tightness multiplier; deadline = arrival + sigma * 1.5 * offline e2e.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_video_frames")]
    pub video_frames: u32,
}

fn default_n_requests() -> u32 {
    100
}

fn default_video_ratio() -> f64 {
    0.5
}

fn default_resolution_dist() -> ResolutionDist {
    ResolutionDist::Uniform
}

fn default_sigma() -> f64 {
    1.0
}

fn default_video_frames() -> u32 {
    81
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            n_requests: default_n_requests(),
            video_ratio: default_video_ratio(),
            arrival: ArrivalProcess::Poisson { rate_per_min: 24.0 },
            resolutions: default_resolution_dist(),
            sigma: default_sigma(),
            video_frames: default_video_frames(),
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        // Rejects zero, negatives, NaN, and infinities in one test.
        fn positive(x: f64) -> bool {
            x.is_finite() && x > 0.0
        }
        if !(0.0..=1.0).contains(&self.video_ratio) {
            return Err(WorkloadError::InvalidConfig(format!(
                "video_ratio must lie in [0, 1], got {}",
                self.video_ratio
            )));
        }
        if !positive(self.sigma) {
            return Err(WorkloadError::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        match self.arrival {
            ArrivalProcess::Poisson { rate_per_min } => {
                if !positive(rate_per_min) {
                    return Err(WorkloadError::InvalidConfig(format!(
                        "rate_per_min must be positive, got {rate_per_min}"
                    )));
                }
            }
            ArrivalProcess::Bursty {
                rate_per_min,
                burst_width_ms,
                burst_gap_ms,
            } => {
                if !positive(rate_per_min) {
                    return Err(WorkloadError::InvalidConfig(format!(
                        "rate_per_min must be positive, got {rate_per_min}"
                    )));
                }
                if !positive(burst_width_ms) || burst_gap_ms < 0.0 {
                    return Err(WorkloadError::InvalidConfig(format!(
                        "burst windows need positive width and non-negative gap, \
                         got width {burst_width_ms} gap {burst_gap_ms}"
                    )));
                }
            }
        }
        if let ResolutionDist::Dirichlet { alpha } = self.resolutions {
            if !positive(alpha) {
                return Err(WorkloadError::InvalidConfig(format!(
                    "dirichlet alpha must be positive, got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid trace config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("trace parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

struct ArrivalSampler {
    process: ArrivalProcess,
    virtual_now_ms: f64,
    exp: Exp<f64>,
}

impl ArrivalSampler {
    fn new(process: &ArrivalProcess) -> Self {
        // Bursty mode samples a Poisson stream on a compressed virtual
        // timeline covering only the busy windows; the in-burst rate is
        // scaled up so the long-run average over (width + gap) cycles
        // matches the configured rate.
        let lambda_per_ms = match *process {
            ArrivalProcess::Poisson { rate_per_min } => rate_per_min / 60_000.0,
            ArrivalProcess::Bursty {
                rate_per_min,
                burst_width_ms,
                burst_gap_ms,
            } => rate_per_min / 60_000.0 * (burst_width_ms + burst_gap_ms) / burst_width_ms,
        };
        ArrivalSampler {
            process: process.clone(),
            virtual_now_ms: 0.0,
            exp: Exp::new(lambda_per_ms).expect("validated rate"),
        }
    }

    fn next_arrival(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.virtual_now_ms += self.exp.sample(rng);
        match self.process {
            ArrivalProcess::Poisson { .. } => self.virtual_now_ms,
            ArrivalProcess::Bursty {
                burst_width_ms,
                burst_gap_ms,
                ..
            } => {
                let cycle = burst_width_ms + burst_gap_ms;
                let k = (self.virtual_now_ms / burst_width_ms).floor();
                k * cycle + (self.virtual_now_ms - k * burst_width_ms)
            }
        }
    }
}

fn draw_weights(rng: &mut ChaCha8Rng, dist: &ResolutionDist) -> [f64; 3] {
    match *dist {
        ResolutionDist::Uniform => [1.0 / 3.0; 3],
        ResolutionDist::Dirichlet { alpha } => {
            let d = Dirichlet::new([alpha; 3]).expect("validated alpha");
            d.sample(rng)
        }
    }
}

fn pick_class(
    rng: &mut ChaCha8Rng,
    classes: &[ResolutionClass; 3],
    weights: &[f64; 3],
) -> ResolutionClass {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return classes[i];
        }
        u -= w;
    }
    classes[2]
}

/// Generate exactly `n_requests` requests, sorted by arrival, with dense ids
/// `0..n`. Draw order per request is fixed (arrival, kind, resolution), with
/// the per-kind resolution weights drawn once up front, so a given
/// `(config, seed, profile)` triple always yields the same trace.
pub fn generate_trace(
    cfg: &TraceConfig,
    seed: u64,
    profile: &LatencyProfile,
) -> Result<Vec<Request>, WorkloadError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let video_weights = draw_weights(&mut rng, &cfg.resolutions);
    let image_weights = draw_weights(&mut rng, &cfg.resolutions);
    let mut sampler = ArrivalSampler::new(&cfg.arrival);
    let mut trace = Vec::with_capacity(cfg.n_requests as usize);
    for id in 0..cfg.n_requests as u64 {
        let arrival_ms = sampler.next_arrival(&mut rng);
        let kind = if rng.random::<f64>() < cfg.video_ratio {
            RequestKind::Video
        } else {
            RequestKind::Image
        };
        let (classes, weights) = match kind {
            RequestKind::Video => (&ResolutionClass::VIDEO, &video_weights),
            RequestKind::Image => (&ResolutionClass::IMAGE, &image_weights),
        };
        let resolution = pick_class(&mut rng, classes, weights);
        let frames = match kind {
            RequestKind::Video => cfg.video_frames,
            RequestKind::Image => 1,
        };
        let steps_total = match kind {
            RequestKind::Video => profile.video_steps_total(),
            RequestKind::Image => profile.image_steps_total(),
        };
        let offline = profile.offline_e2e_ms(kind, resolution, frames)?;
        let deadline_ms = arrival_ms + cfg.sigma * 1.5 * offline;
        trace.push(Request {
            id,
            kind,
            resolution,
            frames,
            arrival_ms,
            deadline_ms,
            steps_total,
            prompt_tag: Request::canonical_prompt_tag(id),
        });
    }
    Ok(trace)
}

/// One JSON object per line, fields in declaration order.
pub fn save_trace(trace: &[Request], path: impl AsRef<Path>) -> Result<(), WorkloadError> {
    let path = path.as_ref();
    let mut out = String::new();
    for req in trace {
        out.push_str(&serde_json::to_string(req).expect("request serialization cannot fail"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| WorkloadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<Request>, WorkloadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut trace = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut req: Request = serde_json::from_str(line).map_err(|e| WorkloadError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        req.prompt_tag = Request::canonical_prompt_tag(req.id);
        if !req.resolution.legal_for(req.kind) {
            return Err(WorkloadError::Parse {
                line: idx + 1,
                msg: format!("{} is not a legal {} resolution", req.resolution, req.kind),
            });
        }
        trace.push(req);
    }
    for w in trace.windows(2) {
        if w[1].arrival_ms < w[0].arrival_ms {
            return Err(WorkloadError::Parse {
                line: 0,
                msg: format!(
                    "trace not sorted by arrival: request {} at {} ms precedes request {} at {} ms",
                    w[1].id, w[1].arrival_ms, w[0].id, w[0].arrival_ms
                ),
            });
        }
    }
    let mut ids: Vec<RequestId> = trace.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != trace.len() {
        return Err(WorkloadError::Parse {
            line: 0,
            msg: "duplicate request ids".into(),
        });
    }
    Ok(trace)
}
