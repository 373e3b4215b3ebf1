//! Event-driven cluster engine.
//!
//! The engine owns all simulated state (GPU occupancy, request lifecycles,
//! the event heap) and delegates every allocation decision to a
//! [`Scheduler`]. Policies see an immutable [`ClusterSnapshot`] and answer
//! with a [`Plan`]; the engine validates the plan against the scheduling
//! contract before applying it, so a buggy policy fails loudly instead of
//! corrupting occupancy.
//!
//! Time is `f64` milliseconds. Events are processed in `(time, seq)` order
//! where `seq` is the enqueue sequence number; all events sharing a
//! timestamp are drained before a single scheduling round runs, so a round
//! always sees every arrival and boundary of its instant.

mod engine;
mod plan;
mod result;
mod snapshot;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{LatencyProfile, ProfileError};
use crate::workload::Request;

pub use engine::run;
pub use plan::{DeferReason, Plan, PlannedBatch, VideoAction};
pub use result::{RequestRecord, SimResult, SimTotals};
pub use snapshot::{
    BatchView, ClusterSnapshot, GpuSnapshot, Occupant, PausedVideoView, QueuedImageView,
    QueuedVideoView, RunningVideoView, VideoPhase,
};

pub type GpuId = usize;
pub type BatchId = u64;

/// Set of GPU ids as a bitmask. Cluster sizes are capped at 64.
/// Serializes as the raw bitmask.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GpuSet(u64);

impl GpuSet {
    pub const EMPTY: GpuSet = GpuSet(0);

    pub fn single(gpu: GpuId) -> Self {
        debug_assert!(gpu < 64);
        GpuSet(1 << gpu)
    }

    /// All GPUs in `[0, n)`.
    pub fn first_n(n: usize) -> Self {
        debug_assert!(n <= 64);
        if n == 64 {
            GpuSet(u64::MAX)
        } else {
            GpuSet((1u64 << n) - 1)
        }
    }

    /// GPUs in `[start, start + len)`.
    pub fn range(start: usize, len: usize) -> Self {
        GpuSet(Self::first_n(len).0 << start)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn from_bits(bits: u64) -> Self {
        GpuSet(bits)
    }

    pub fn insert(&mut self, gpu: GpuId) {
        self.0 |= 1 << gpu;
    }

    pub fn remove(&mut self, gpu: GpuId) {
        self.0 &= !(1 << gpu);
    }

    pub fn contains(self, gpu: GpuId) -> bool {
        self.0 & (1 << gpu) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: GpuSet) -> GpuSet {
        GpuSet(self.0 | other.0)
    }

    pub fn intersect(self, other: GpuSet) -> GpuSet {
        GpuSet(self.0 & other.0)
    }

    pub fn minus(self, other: GpuSet) -> GpuSet {
        GpuSet(self.0 & !other.0)
    }

    pub fn overlaps(self, other: GpuSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset_of(self, other: GpuSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn lowest(self) -> Option<GpuId> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros() as GpuId)
        }
    }

    /// The `k` lowest-index members, or `None` if fewer exist.
    pub fn take_lowest(self, k: usize) -> Option<GpuSet> {
        if self.len() < k {
            return None;
        }
        let mut bits = self.0;
        let mut out = 0u64;
        for _ in 0..k {
            let low = bits & bits.wrapping_neg();
            out |= low;
            bits ^= low;
        }
        Some(GpuSet(out))
    }

    pub fn iter(self) -> impl Iterator<Item = GpuId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let g = bits.trailing_zeros() as GpuId;
                bits &= bits - 1;
                Some(g)
            }
        })
    }
}

impl FromIterator<GpuId> for GpuSet {
    fn from_iter<T: IntoIterator<Item = GpuId>>(iter: T) -> Self {
        let mut s = GpuSet::EMPTY;
        for g in iter {
            s.insert(g);
        }
        s
    }
}

impl fmt::Debug for GpuSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, g) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{g}")?;
        }
        write!(f, "}}")
    }
}

/// GPU pool layout. `Dedicated` statically splits the cluster: images run
/// only on the first `image_gpus` devices, videos only on the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Partition {
    Replicated,
    Dedicated {
        image_gpus: usize,
        video_gpus: usize,
    },
}

impl Partition {
    pub fn image_pool(self, cluster_size: usize) -> GpuSet {
        match self {
            Partition::Replicated => GpuSet::first_n(cluster_size),
            Partition::Dedicated { image_gpus, .. } => GpuSet::first_n(image_gpus),
        }
    }

    pub fn video_pool(self, cluster_size: usize) -> GpuSet {
        match self {
            Partition::Replicated => GpuSet::first_n(cluster_size),
            Partition::Dedicated {
                image_gpus,
                video_gpus,
            } => GpuSet::range(image_gpus, video_gpus),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_cluster_size")]
    pub cluster_size: usize,
    #[serde(default = "default_partition")]
    pub partition: Partition,
    /// A video's step boundaries trigger a scheduling round every k steps;
    /// non-trigger boundaries auto-continue at the current configuration.
    #[serde(default = "default_round_every_steps")]
    pub round_every_steps: u32,
}

fn default_cluster_size() -> usize {
    8
}

fn default_partition() -> Partition {
    Partition::Replicated
}

fn default_round_every_steps() -> u32 {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cluster_size: default_cluster_size(),
            partition: default_partition(),
            round_every_steps: default_round_every_steps(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.cluster_size == 0 || self.cluster_size > 64 {
            return Err(SimError::InvalidConfig(format!(
                "cluster_size must lie in 1..=64, got {}",
                self.cluster_size
            )));
        }
        if self.round_every_steps == 0 {
            return Err(SimError::InvalidConfig(
                "round_every_steps must be positive".into(),
            ));
        }
        if let Partition::Dedicated {
            image_gpus,
            video_gpus,
        } = self.partition
        {
            if image_gpus + video_gpus != self.cluster_size {
                return Err(SimError::InvalidConfig(format!(
                    "dedicated pools must cover the cluster exactly: {image_gpus} + {video_gpus} != {}",
                    self.cluster_size
                )));
            }
            if image_gpus == 0 || video_gpus == 0 {
                return Err(SimError::InvalidConfig(
                    "dedicated pools must both be non-empty".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    InvalidConfig(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("scheduler contract violation at {now_ms} ms (round {round}): {msg}")]
    SchedulerContractViolation {
        now_ms: f64,
        round: u64,
        msg: String,
    },
    #[error(
        "simulation stalled at {now_ms} ms with {live} unfinished requests and no pending events"
    )]
    Stalled { now_ms: f64, live: usize },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("internal engine error: {0}")]
    Internal(String),
    #[error("result io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A scheduling policy. `plan` must be a pure function of the snapshot and
/// profile: the engine may call it at any round, and reruns of the same
/// simulation must see identical answers.
///
/// Running videos standing at a step boundary that receive no action in the
/// plan continue at their current configuration.
pub trait Scheduler {
    fn name(&self) -> &str;

    fn plan(&self, snapshot: &ClusterSnapshot, profile: &LatencyProfile) -> Plan;

    /// Policies that promise to pause only positive-slack videos opt into
    /// engine-side enforcement of that promise.
    fn enforces_victim_slack_safety(&self) -> bool {
        false
    }
}

/// Wrap a closure as a scheduler; handy for scripted tests.
pub struct FnScheduler<F> {
    name: String,
    enforce_victim_slack: bool,
    f: F,
}

impl<F> FnScheduler<F>
where
    F: Fn(&ClusterSnapshot, &LatencyProfile) -> Plan,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnScheduler {
            name: name.into(),
            enforce_victim_slack: false,
            f,
        }
    }

    /// Opt into engine-side victim slack enforcement.
    pub fn with_victim_slack_enforcement(mut self) -> Self {
        self.enforce_victim_slack = true;
        self
    }
}

impl<F> Scheduler for FnScheduler<F>
where
    F: Fn(&ClusterSnapshot, &LatencyProfile) -> Plan,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn plan(&self, snapshot: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        (self.f)(snapshot, profile)
    }

    fn enforces_victim_slack_safety(&self) -> bool {
        self.enforce_victim_slack
    }
}

/// Convenience entry point used throughout tests.
pub fn run_sim(
    trace: &[Request],
    profile: &LatencyProfile,
    scheduler: &dyn Scheduler,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    run(trace, profile, scheduler, cfg)
}
