//! Immutable cluster state handed to schedulers each round.

use serde::{Deserialize, Serialize};

use crate::profile::{RequestKind, ResolutionClass};
use crate::sim::{BatchId, GpuId, GpuSet, Partition};
use crate::workload::RequestId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoPhase {
    Queued,
    Denoising,
    Paused,
    VaeDecoding,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Occupant {
    VideoDit { id: RequestId },
    VideoVae { id: RequestId },
    ImageBatch { id: BatchId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuSnapshot {
    pub id: GpuId,
    pub occupant: Option<Occupant>,
    /// Monotone clock: work placed here starts no earlier than this (covers
    /// pause overhead charged to a freed device).
    pub busy_until_ms: f64,
    /// Paused video whose state sits on this device; at most one.
    pub paused_resident: Option<RequestId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuedVideoView {
    pub id: RequestId,
    pub resolution: ResolutionClass,
    pub frames: u32,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
    pub steps_total: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuedImageView {
    pub id: RequestId,
    pub resolution: ResolutionClass,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningVideoView {
    pub id: RequestId,
    pub resolution: ResolutionClass,
    pub frames: u32,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
    pub steps_total: u32,
    pub steps_done: u32,
    pub sp_degree: u32,
    pub gpu_set: GpuSet,
    /// Standing at a step boundary this round; eligible for pause,
    /// reconfigure, or continue. Mid-step videos only accept `Pause`
    /// (deferred to their next boundary).
    pub at_boundary: bool,
    /// A pause is already latched for the next boundary.
    pub pause_pending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PausedVideoView {
    pub id: RequestId,
    pub resolution: ResolutionClass,
    pub frames: u32,
    pub arrival_ms: f64,
    pub deadline_ms: f64,
    pub steps_total: u32,
    pub steps_done: u32,
    /// Degree the video ran at when paused.
    pub sp_degree: u32,
    pub paused_since_ms: f64,
    pub host_gpu: GpuId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    pub id: BatchId,
    pub gpu: GpuId,
    pub resolution: ResolutionClass,
    pub members: Vec<RequestId>,
    pub done_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub now_ms: f64,
    pub round: u64,
    pub cluster_size: usize,
    pub partition: Partition,
    pub gpus: Vec<GpuSnapshot>,
    /// Arrival order.
    pub queued_videos: Vec<QueuedVideoView>,
    /// Arrival order.
    pub queued_images: Vec<QueuedImageView>,
    /// Ascending id.
    pub running_videos: Vec<RunningVideoView>,
    /// Ascending id.
    pub paused_videos: Vec<PausedVideoView>,
    /// Ascending id.
    pub inflight_batches: Vec<BatchView>,
    pub last_image_arrival_ms: Option<f64>,
}

impl ClusterSnapshot {
    pub fn image_pool(&self) -> GpuSet {
        self.partition.image_pool(self.cluster_size)
    }

    pub fn video_pool(&self) -> GpuSet {
        self.partition.video_pool(self.cluster_size)
    }

    /// GPUs with no occupant. Busy-until residue does not make a device
    /// non-free; newly placed work simply starts at `busy_until_ms`.
    pub fn free_gpus(&self) -> GpuSet {
        self.gpus
            .iter()
            .filter(|g| g.occupant.is_none())
            .map(|g| g.id)
            .collect()
    }

    pub fn free_video_gpus(&self) -> GpuSet {
        self.free_gpus().intersect(self.video_pool())
    }

    pub fn free_image_gpus(&self) -> GpuSet {
        self.free_gpus().intersect(self.image_pool())
    }

    /// GPUs whose running video stands at a boundary this round; these are
    /// reclaimable by pause or reconfigure in addition to `free_gpus`.
    pub fn boundary_gpus(&self) -> GpuSet {
        self.running_videos
            .iter()
            .filter(|v| v.at_boundary)
            .fold(GpuSet::EMPTY, |acc, v| acc.union(v.gpu_set))
    }

    pub fn running_video(&self, id: RequestId) -> Option<&RunningVideoView> {
        self.running_videos.iter().find(|v| v.id == id)
    }

    pub fn paused_video(&self, id: RequestId) -> Option<&PausedVideoView> {
        self.paused_videos.iter().find(|v| v.id == id)
    }

    pub fn kind_of(&self, id: RequestId) -> Option<RequestKind> {
        if self.queued_images.iter().any(|q| q.id == id) {
            return Some(RequestKind::Image);
        }
        if self.queued_videos.iter().any(|q| q.id == id)
            || self.running_videos.iter().any(|v| v.id == id)
            || self.paused_videos.iter().any(|v| v.id == id)
        {
            return Some(RequestKind::Video);
        }
        None
    }
}
