//! Scheduler output: the set of state changes to apply in one round.

use serde::{Deserialize, Serialize};

use crate::profile::ResolutionClass;
use crate::sim::{GpuId, GpuSet};
use crate::workload::RequestId;

/// Action on one video request.
///
/// `Continue` and omission are equivalent for a video at a step boundary.
/// `Pause` on a mid-step video takes effect at its next boundary. `Resume`
/// starts a queued video (no resume overhead, text encode charged) or wakes
/// a paused one (resume overhead charged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum VideoAction {
    Continue,
    Pause,
    Reconfigure { degree: u32, gpu_set: GpuSet },
    Resume { degree: u32, gpu_set: GpuSet },
}

/// One image batch dispatched to a single GPU. `members` lists request ids
/// in dispatch (deadline) order; all must share `resolution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedBatch {
    pub gpu: GpuId,
    pub resolution: ResolutionClass,
    pub members: Vec<RequestId>,
}

/// Why a request was deliberately left waiting this round. Recorded for
/// audit only; the engine does not act on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeferReason {
    /// Held for a later round (paused video kept paused, queued kept queued).
    Hold,
    /// An open batch is waiting for joiners within its wait budget.
    WaitBudget,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// At most one action per video.
    pub video_actions: Vec<(RequestId, VideoAction)>,
    pub image_batches: Vec<PlannedBatch>,
    pub deferred: Vec<(RequestId, DeferReason)>,
    /// Ask the engine for a scheduling round at this absolute time even if
    /// no event fires earlier (used for budget-tight resume timers).
    pub wake_at_ms: Option<f64>,
}

impl Plan {
    pub fn empty() -> Self {
        Plan::default()
    }

    pub fn is_empty(&self) -> bool {
        self.video_actions.is_empty() && self.image_batches.is_empty()
    }

    pub fn push_video(&mut self, id: RequestId, action: VideoAction) {
        self.video_actions.push((id, action));
    }

    pub fn push_batch(&mut self, batch: PlannedBatch) {
        self.image_batches.push(batch);
    }
}
