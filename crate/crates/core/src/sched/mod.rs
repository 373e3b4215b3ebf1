//! Scheduling policies: the deadline-aware co-serving policy and the four
//! comparison baselines, all speaking the engine's `Scheduler` contract.

pub mod baselines;
pub mod dp;
pub mod edf;
pub mod genserve;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::profile::{LatencyProfile, ResolutionClass};
use crate::sim::{ClusterSnapshot, Scheduler};
use crate::workload::RequestId;

pub use baselines::{Fcfs, FcfsPreempt, Rasp, Sjf, Srtf};
pub use genserve::GenServe;

/// Policy selector as it appears in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Fcfs,
    Sjf,
    Srtf,
    Rasp,
    Genserve,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Fcfs,
        SchedulerKind::Sjf,
        SchedulerKind::Srtf,
        SchedulerKind::Rasp,
        SchedulerKind::Genserve,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::Fcfs => "fcfs",
            SchedulerKind::Sjf => "sjf",
            SchedulerKind::Srtf => "srtf",
            SchedulerKind::Rasp => "rasp",
            SchedulerKind::Genserve => "genserve",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fcfs" => Ok(SchedulerKind::Fcfs),
            "sjf" => Ok(SchedulerKind::Sjf),
            "srtf" => Ok(SchedulerKind::Srtf),
            "rasp" => Ok(SchedulerKind::Rasp),
            "genserve" => Ok(SchedulerKind::Genserve),
            other => Err(format!(
                "unknown scheduler '{other}' (expected fcfs|sjf|srtf|rasp|genserve)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Fixed sequence-parallel degree for FCFS/SJF/SRTF videos.
    #[serde(default = "default_baseline_video_sp")]
    pub baseline_video_sp: u32,
    /// Static resolution-to-degree table for the static-parallelism policy.
    #[serde(default = "default_rasp_table")]
    pub rasp_table: BTreeMap<ResolutionClass, u32>,
}

fn default_baseline_video_sp() -> u32 {
    1
}

fn default_rasp_table() -> BTreeMap<ResolutionClass, u32> {
    let mut m = BTreeMap::new();
    m.insert(ResolutionClass::R256, 1);
    m.insert(ResolutionClass::R480, 2);
    m.insert(ResolutionClass::R720, 4);
    m
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            baseline_video_sp: default_baseline_video_sp(),
            rasp_table: default_rasp_table(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenServeConfig {
    /// Allow pausing running videos (step-level preemption).
    #[serde(default = "default_true")]
    pub preemption: bool,
    /// Allow scale-up/scale-down candidates and degree choice at start;
    /// when false, videos are pinned at `pinned_degree`.
    #[serde(default = "default_true")]
    pub sp_switching: bool,
    /// Allow multi-image batches; when false every dispatch is a singleton.
    #[serde(default = "default_true")]
    pub batching: bool,
    /// Safety margin in step durations used by hold recoverability and the
    /// budget-tight resume rule.
    #[serde(default = "default_safety_margin_steps")]
    pub safety_margin_steps: u32,
    /// Idle-resume window; when unset, twice the paused video's step
    /// duration at its current degree.
    #[serde(default)]
    pub idle_window_ms: Option<f64>,
    /// Maximum time a feasible batch may be held open waiting for joiners.
    /// Zero dispatches eagerly.
    #[serde(default)]
    pub max_hold_ms: f64,
    /// Degree used when `sp_switching` is off.
    #[serde(default = "default_baseline_video_sp")]
    pub pinned_degree: u32,
}

fn default_true() -> bool {
    true
}

fn default_safety_margin_steps() -> u32 {
    1
}

impl Default for GenServeConfig {
    fn default() -> Self {
        GenServeConfig {
            preemption: true,
            sp_switching: true,
            batching: true,
            safety_margin_steps: default_safety_margin_steps(),
            idle_window_ms: None,
            max_hold_ms: 0.0,
            pinned_degree: 1,
        }
    }
}

/// Deadline slack of a running video under a given step latency:
/// deadline minus now minus remaining denoising work. Pure form: VAE and
/// overheads excluded.
pub fn compute_slack(deadline_ms: f64, now_ms: f64, steps_remaining: u32, step_ms: f64) -> f64 {
    deadline_ms - now_ms - f64::from(steps_remaining) * step_ms
}

/// Slack-ranked victim selection: denoising videos with positive slack and
/// a member device able to host paused state, ranked most-slack-first, up
/// to `needed`. The standalone preemption rule used by the preemption-only
/// policy variant.
pub fn select_victims(
    snapshot: &ClusterSnapshot,
    profile: &LatencyProfile,
    needed: usize,
) -> Vec<RequestId> {
    let mut ranked: Vec<(f64, RequestId)> = Vec::new();
    for v in &snapshot.running_videos {
        if v.pause_pending {
            continue;
        }
        let Ok(step) = profile.video_step_latency(v.resolution, v.frames, v.sp_degree) else {
            continue;
        };
        let slack = compute_slack(
            v.deadline_ms,
            snapshot.now_ms,
            v.steps_total - v.steps_done,
            step,
        );
        if slack <= 0.0 {
            continue;
        }
        let has_host = v
            .gpu_set
            .iter()
            .any(|g| snapshot.gpus[g].paused_resident.is_none());
        if !has_host {
            continue;
        }
        ranked.push((slack, v.id));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(needed).map(|(_, id)| id).collect()
}

/// Build a boxed policy for a selector, with the matching config block.
pub fn build_scheduler(
    kind: SchedulerKind,
    baseline: &BaselineConfig,
    genserve: &GenServeConfig,
) -> Box<dyn Scheduler + Send + Sync> {
    match kind {
        SchedulerKind::Fcfs => Box::new(Fcfs::new(baseline.clone())),
        SchedulerKind::Sjf => Box::new(Sjf::new(baseline.clone())),
        SchedulerKind::Srtf => Box::new(Srtf::new(baseline.clone())),
        SchedulerKind::Rasp => Box::new(Rasp::new(baseline.clone())),
        SchedulerKind::Genserve => Box::new(GenServe::new(genserve.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slack_matches_worked_values() {
        // D=60000, now=20000, 30 steps remaining at 1000 ms.
        assert_abs_diff_eq!(
            compute_slack(60000.0, 20000.0, 30, 1000.0),
            10000.0,
            epsilon = 1e-9
        );
        // Zero remaining work leaves exactly D - now.
        assert_abs_diff_eq!(
            compute_slack(60000.0, 20000.0, 0, 1000.0),
            40000.0,
            epsilon = 1e-12
        );
        // 30 steps against a 29 s budget is 1 s short.
        assert_abs_diff_eq!(
            compute_slack(49000.0, 20000.0, 30, 1000.0),
            -1000.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn scheduler_kind_round_trips() {
        for kind in SchedulerKind::ALL {
            assert_eq!(kind.label().parse::<SchedulerKind>().unwrap(), kind);
        }
        assert!("edf".parse::<SchedulerKind>().is_err());
    }
}
