//! Per-run output: one record per request plus run-level counters.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::profile::{RequestKind, ResolutionClass};
use crate::sim::{GpuSet, SimError};
use crate::workload::RequestId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: RequestId,
    pub kind: RequestKind,
    pub resolution: ResolutionClass,
    pub frames: u32,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
    pub steps_total: u32,
    /// First time any GPU work for this request was dispatched.
    pub first_dispatch_ms: Option<f64>,
    pub completion_ms: Option<f64>,
    /// Completed at or before the deadline.
    pub met: bool,
    pub pauses: u32,
    pub resumes: u32,
    pub sp_switches: u32,
    /// Union of all GPUs that ever served this request.
    pub gpus_used: GpuSet,
}

impl RequestRecord {
    pub fn queue_wait_ms(&self) -> Option<f64> {
        self.first_dispatch_ms.map(|d| d - self.arrival_ms)
    }

    pub fn turnaround_ms(&self) -> Option<f64> {
        self.completion_ms.map(|c| c - self.arrival_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTotals {
    pub rounds: u64,
    pub pauses: u64,
    pub resumes: u64,
    pub sp_switches: u64,
    /// Pauses latched mid-step but cancelled at the boundary because no
    /// member device could host the paused state by then.
    pub cancelled_pauses: u64,
    /// Denoising steps executed across all videos.
    pub denoise_steps: u64,
    pub image_batches: u64,
    /// Images dispatched in batches of size >= 2.
    pub batched_images: u64,
}

/// One pause observation kept for audit: slack (ms) of the victim at the
/// instant the pause was planned, under its then-current configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauseAudit {
    pub id: RequestId,
    pub at_ms: f64,
    pub slack_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scheduler: String,
    pub cluster_size: usize,
    /// Ascending id.
    pub records: Vec<RequestRecord>,
    pub totals: SimTotals,
    pub pause_audit: Vec<PauseAudit>,
    /// Simulated completion time of the last request.
    pub horizon_ms: f64,
    /// Wall-clock time of each scheduler invocation, microseconds.
    /// Non-deterministic; kept out of all report files.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub round_wall_us: Vec<f64>,
}

impl SimResult {
    pub fn to_json_string(&self) -> String {
        let mut trimmed = self.clone();
        trimmed.round_wall_us = Vec::new();
        let mut s = serde_json::to_string_pretty(&trimmed).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_json_string()).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// One row per request. `NA` marks requests that never dispatched or
    /// never completed (impossible after a successful run, but the format
    /// stays total).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "id,kind,resolution,frames,arrival_ms,deadline_ms,first_dispatch_ms,completion_ms,met,queue_wait_ms,turnaround_ms,pauses,resumes,sp_switches\n",
        );
        for r in &self.records {
            let fmt_opt = |v: Option<f64>| match v {
                Some(x) => format!("{x}"),
                None => "NA".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.id,
                r.kind,
                r.resolution.label(),
                r.frames,
                r.arrival_ms,
                r.deadline_ms,
                fmt_opt(r.first_dispatch_ms),
                fmt_opt(r.completion_ms),
                r.met,
                fmt_opt(r.queue_wait_ms()),
                fmt_opt(r.turnaround_ms()),
                r.pauses,
                r.resumes,
                r.sp_switches,
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut f = std::fs::File::create(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| SimError::Io {
                path: path.to_path_buf(),
                source: e,
            })
    }
}
