//! Event loop, plan validation, and state transitions.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::Instant;

use crate::profile::{LatencyProfile, RequestKind, ResolutionClass};
use crate::sim::plan::{Plan, VideoAction};
use crate::sim::result::{PauseAudit, RequestRecord, SimResult, SimTotals};
use crate::sim::snapshot::{
    BatchView, ClusterSnapshot, GpuSnapshot, Occupant, PausedVideoView, QueuedImageView,
    QueuedVideoView, RunningVideoView, VideoPhase,
};
use crate::sim::{BatchId, GpuId, GpuSet, Scheduler, SimConfig, SimError};
use crate::workload::{Request, RequestId};

const ROUND_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival(RequestId),
    StepBoundary(RequestId),
    ImageBatchDone(BatchId),
    VaeDone(RequestId),
    IdleTimer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time_ms: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_ms
            .total_cmp(&other.time_ms)
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct GpuState {
    occupant: Option<Occupant>,
    busy_until_ms: f64,
    paused_resident: Option<RequestId>,
}

#[derive(Debug, Clone)]
struct VideoRt {
    idx: usize,
    phase: VideoPhase,
    steps_done: u32,
    sp_degree: u32,
    gpu_set: GpuSet,
    boundary_pending: bool,
    pending_pause: bool,
    next_boundary_ms: f64,
    paused_since_ms: f64,
    host_gpu: Option<GpuId>,
}

#[derive(Debug, Clone)]
struct BatchRt {
    gpu: GpuId,
    resolution: ResolutionClass,
    members: Vec<RequestId>,
    done_ms: f64,
}

pub fn run(
    trace: &[Request],
    profile: &LatencyProfile,
    scheduler: &dyn Scheduler,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    let mut engine = Engine::new(trace, profile, cfg)?;
    engine.run_loop(scheduler)?;
    Ok(engine.finish(scheduler.name()))
}

struct Engine<'a> {
    profile: &'a LatencyProfile,
    cfg: SimConfig,
    requests: Vec<Request>,
    records: Vec<RequestRecord>,
    videos: BTreeMap<RequestId, VideoRt>,
    gpus: Vec<GpuState>,
    queued_videos: Vec<RequestId>,
    queued_images: Vec<RequestId>,
    batches: BTreeMap<BatchId, BatchRt>,
    next_batch_id: BatchId,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now_ms: f64,
    round: u64,
    live: usize,
    last_image_arrival_ms: Option<f64>,
    pending_timers: BTreeSet<u64>,
    totals: SimTotals,
    pause_audit: Vec<PauseAudit>,
    round_wall_us: Vec<f64>,
    horizon_ms: f64,
    id_to_idx: BTreeMap<RequestId, usize>,
}

impl<'a> Engine<'a> {
    fn new(
        trace: &[Request],
        profile: &'a LatencyProfile,
        cfg: &SimConfig,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut id_to_idx = BTreeMap::new();
        for (i, r) in trace.iter().enumerate() {
            if id_to_idx.insert(r.id, i).is_some() {
                return Err(SimError::InvalidTrace(format!(
                    "duplicate request id {}",
                    r.id
                )));
            }
            if !r.resolution.legal_for(r.kind) {
                return Err(SimError::InvalidTrace(format!(
                    "request {}: resolution {} is not valid for kind {}",
                    r.id,
                    r.resolution.label(),
                    r.kind
                )));
            }
            if r.steps_total == 0 {
                return Err(SimError::InvalidTrace(format!(
                    "request {}: steps_total is zero",
                    r.id
                )));
            }
            if !r.arrival_ms.is_finite() || !r.deadline_ms.is_finite() || r.arrival_ms < 0.0 {
                return Err(SimError::InvalidTrace(format!(
                    "request {}: non-finite or negative times",
                    r.id
                )));
            }
            if r.deadline_ms < r.arrival_ms {
                return Err(SimError::InvalidTrace(format!(
                    "request {}: deadline before arrival",
                    r.id
                )));
            }
        }
        let records = trace
            .iter()
            .map(|r| RequestRecord {
                id: r.id,
                kind: r.kind,
                resolution: r.resolution,
                frames: r.frames,
                arrival_ms: r.arrival_ms,
                deadline_ms: r.deadline_ms,
                steps_total: r.steps_total,
                first_dispatch_ms: None,
                completion_ms: None,
                met: false,
                pauses: 0,
                resumes: 0,
                sp_switches: 0,
                gpus_used: GpuSet::EMPTY,
            })
            .collect();
        let videos = trace
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == RequestKind::Video)
            .map(|(i, r)| {
                (
                    r.id,
                    VideoRt {
                        idx: i,
                        phase: VideoPhase::Queued,
                        steps_done: 0,
                        sp_degree: 0,
                        gpu_set: GpuSet::EMPTY,
                        boundary_pending: false,
                        pending_pause: false,
                        next_boundary_ms: f64::NAN,
                        paused_since_ms: f64::NAN,
                        host_gpu: None,
                    },
                )
            })
            .collect();
        let gpus = vec![
            GpuState {
                occupant: None,
                busy_until_ms: 0.0,
                paused_resident: None
            };
            cfg.cluster_size
        ];
        let mut engine = Engine {
            profile,
            cfg: cfg.clone(),
            requests: trace.to_vec(),
            records,
            videos,
            gpus,
            queued_videos: Vec::new(),
            queued_images: Vec::new(),
            batches: BTreeMap::new(),
            next_batch_id: 0,
            heap: BinaryHeap::new(),
            seq: 0,
            now_ms: 0.0,
            round: 0,
            live: trace.len(),
            last_image_arrival_ms: None,
            pending_timers: BTreeSet::new(),
            totals: SimTotals::default(),
            pause_audit: Vec::new(),
            round_wall_us: Vec::new(),
            horizon_ms: 0.0,
            id_to_idx,
        };
        for r in &engine.requests.clone() {
            engine.enqueue(r.arrival_ms, EventKind::Arrival(r.id));
        }
        Ok(engine)
    }

    fn enqueue(&mut self, time_ms: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time_ms,
            seq: self.seq,
            kind,
        }));
    }

    fn violation(&self, msg: String) -> SimError {
        SimError::SchedulerContractViolation {
            now_ms: self.now_ms,
            round: self.round,
            msg,
        }
    }

    fn free_gpu(&mut self, gpu: GpuId) {
        self.gpus[gpu].occupant = None;
        if self.gpus[gpu].busy_until_ms < self.now_ms {
            self.gpus[gpu].busy_until_ms = self.now_ms;
        }
    }

    fn run_loop(&mut self, scheduler: &dyn Scheduler) -> Result<(), SimError> {
        while let Some(Reverse(ev)) = self.heap.pop() {
            self.now_ms = ev.time_ms;
            let mut trigger = self.handle_event(ev)?;
            // Drain every event sharing this timestamp before scheduling.
            while let Some(&Reverse(peek)) = self.heap.peek() {
                if peek.time_ms.total_cmp(&self.now_ms) != Ordering::Equal {
                    break;
                }
                self.heap.pop();
                trigger |= self.handle_event(peek)?;
            }
            if trigger {
                self.run_round(scheduler)?;
            }
            if self.round > ROUND_BUDGET {
                return Err(SimError::Internal(
                    "round budget exceeded; scheduler is spinning".into(),
                ));
            }
        }
        if self.live > 0 {
            return Err(SimError::Stalled {
                now_ms: self.now_ms,
                live: self.live,
            });
        }
        Ok(())
    }

    fn handle_event(&mut self, ev: Event) -> Result<bool, SimError> {
        match ev.kind {
            EventKind::Arrival(id) => {
                let idx = self.id_to_idx[&id];
                match self.requests[idx].kind {
                    RequestKind::Image => {
                        self.queued_images.push(id);
                        self.last_image_arrival_ms = Some(self.now_ms);
                    }
                    RequestKind::Video => self.queued_videos.push(id),
                }
                Ok(true)
            }
            EventKind::StepBoundary(id) => self.on_step_boundary(id, ev.time_ms),
            EventKind::ImageBatchDone(bid) => {
                let batch = self
                    .batches
                    .remove(&bid)
                    .ok_or_else(|| SimError::Internal(format!("unknown batch {bid}")))?;
                self.free_gpu(batch.gpu);
                for m in batch.members {
                    self.complete_request(m);
                }
                Ok(true)
            }
            EventKind::VaeDone(id) => {
                let v = self
                    .videos
                    .get_mut(&id)
                    .ok_or_else(|| SimError::Internal(format!("unknown video {id}")))?;
                if v.phase != VideoPhase::VaeDecoding {
                    return Err(SimError::Internal(format!(
                        "vae-done for video {id} not decoding"
                    )));
                }
                v.phase = VideoPhase::Done;
                let set = v.gpu_set;
                v.gpu_set = GpuSet::EMPTY;
                for g in set.iter() {
                    self.free_gpu(g);
                }
                self.complete_request(id);
                Ok(true)
            }
            EventKind::IdleTimer => {
                self.pending_timers.remove(&ev.time_ms.to_bits());
                Ok(true)
            }
        }
    }

    fn complete_request(&mut self, id: RequestId) {
        let idx = self.id_to_idx[&id];
        let rec = &mut self.records[idx];
        rec.completion_ms = Some(self.now_ms);
        rec.met = self.now_ms <= rec.deadline_ms;
        self.live -= 1;
        if self.now_ms > self.horizon_ms {
            self.horizon_ms = self.now_ms;
        }
    }

    fn on_step_boundary(&mut self, id: RequestId, event_time: f64) -> Result<bool, SimError> {
        let profile = self.profile;
        let (idx, steps_done, pending_pause) = {
            let v = self
                .videos
                .get_mut(&id)
                .ok_or_else(|| SimError::Internal(format!("unknown video {id}")))?;
            if v.phase != VideoPhase::Denoising || v.boundary_pending {
                return Err(SimError::Internal(format!(
                    "stale boundary event for video {id}"
                )));
            }
            if v.next_boundary_ms.total_cmp(&event_time) != Ordering::Equal {
                return Err(SimError::Internal(format!(
                    "boundary time mismatch for video {id}"
                )));
            }
            v.steps_done += 1;
            (v.idx, v.steps_done, v.pending_pause)
        };
        self.totals.denoise_steps += 1;
        let req = self.requests[idx].clone();
        if steps_done == req.steps_total {
            // Denoising finished: keep the lowest-index member for VAE
            // decode, release the rest immediately.
            let v = self.videos.get_mut(&id).unwrap();
            let set = v.gpu_set;
            let leader = set.lowest().ok_or_else(|| {
                SimError::Internal(format!("video {id} finished with empty gpu set"))
            })?;
            v.phase = VideoPhase::VaeDecoding;
            v.gpu_set = GpuSet::single(leader);
            v.pending_pause = false;
            for g in set.iter() {
                if g != leader {
                    self.free_gpu(g);
                }
            }
            self.gpus[leader].occupant = Some(Occupant::VideoVae { id });
            let vae = profile.vae_decode_latency(req.resolution, req.frames)?;
            self.enqueue(self.now_ms + vae, EventKind::VaeDone(id));
            return Ok(true);
        }
        if pending_pause {
            let executed = self.execute_pause(id)?;
            if !executed {
                // No member device can host the paused state any more;
                // cancel the pause and keep denoising.
                self.totals.cancelled_pauses += 1;
                let v = self.videos.get_mut(&id).unwrap();
                let step = profile.video_step_latency(req.resolution, req.frames, v.sp_degree)?;
                v.next_boundary_ms = self.now_ms + step;
                v.pending_pause = false;
                self.enqueue(self.now_ms + step, EventKind::StepBoundary(id));
            }
            return Ok(true);
        }
        if steps_done % self.cfg.round_every_steps == 0 {
            let v = self.videos.get_mut(&id).unwrap();
            v.boundary_pending = true;
            Ok(true)
        } else {
            // Off-cadence boundary: continue at the current configuration
            // without consulting the scheduler.
            let v = self.videos.get_mut(&id).unwrap();
            let step = profile.video_step_latency(req.resolution, req.frames, v.sp_degree)?;
            v.next_boundary_ms = self.now_ms + step;
            self.enqueue(self.now_ms + step, EventKind::StepBoundary(id));
            Ok(false)
        }
    }

    /// Pause a denoising video standing at a boundary. Returns false when no
    /// member GPU can host the paused state (all already hold one).
    fn execute_pause(&mut self, id: RequestId) -> Result<bool, SimError> {
        let profile = self.profile;
        let (set, degree, idx) = {
            let v = &self.videos[&id];
            (v.gpu_set, v.sp_degree, v.idx)
        };
        let host = set.iter().find(|&g| self.gpus[g].paused_resident.is_none());
        let Some(host) = host else {
            let v = self.videos.get_mut(&id).unwrap();
            v.pending_pause = false;
            return Ok(false);
        };
        let pause_ms = profile.pause_overhead_ms(degree)?;
        for g in set.iter() {
            self.gpus[g].occupant = None;
            let until = self.now_ms + pause_ms;
            if self.gpus[g].busy_until_ms < until {
                self.gpus[g].busy_until_ms = until;
            }
        }
        self.gpus[host].paused_resident = Some(id);
        let v = self.videos.get_mut(&id).unwrap();
        v.phase = VideoPhase::Paused;
        v.gpu_set = GpuSet::EMPTY;
        v.paused_since_ms = self.now_ms;
        v.host_gpu = Some(host);
        v.boundary_pending = false;
        v.pending_pause = false;
        self.records[idx].pauses += 1;
        self.totals.pauses += 1;
        Ok(true)
    }

    fn run_round(&mut self, scheduler: &dyn Scheduler) -> Result<(), SimError> {
        self.round += 1;
        let snapshot = self.build_snapshot();
        let started = Instant::now();
        let plan = scheduler.plan(&snapshot, self.profile);
        self.round_wall_us
            .push(started.elapsed().as_secs_f64() * 1e6);
        self.validate_plan(&snapshot, &plan, scheduler.enforces_victim_slack_safety())?;
        self.apply_plan(&plan)?;
        self.auto_continue()?;
        if let Some(t) = plan.wake_at_ms {
            if t > self.now_ms && self.pending_timers.range(..=t.to_bits()).next().is_none() {
                self.pending_timers.insert(t.to_bits());
                self.enqueue(t, EventKind::IdleTimer);
            }
        }
        Ok(())
    }

    fn build_snapshot(&self) -> ClusterSnapshot {
        let gpus = self
            .gpus
            .iter()
            .enumerate()
            .map(|(id, g)| GpuSnapshot {
                id,
                occupant: g.occupant,
                busy_until_ms: g.busy_until_ms,
                paused_resident: g.paused_resident,
            })
            .collect();
        let queued_videos = self
            .queued_videos
            .iter()
            .map(|&id| {
                let r = &self.requests[self.id_to_idx[&id]];
                QueuedVideoView {
                    id,
                    resolution: r.resolution,
                    frames: r.frames,
                    arrival_ms: r.arrival_ms,
                    deadline_ms: r.deadline_ms,
                    steps_total: r.steps_total,
                }
            })
            .collect();
        let queued_images = self
            .queued_images
            .iter()
            .map(|&id| {
                let r = &self.requests[self.id_to_idx[&id]];
                QueuedImageView {
                    id,
                    resolution: r.resolution,
                    arrival_ms: r.arrival_ms,
                    deadline_ms: r.deadline_ms,
                }
            })
            .collect();
        let mut running_videos = Vec::new();
        let mut paused_videos = Vec::new();
        for (&id, v) in &self.videos {
            let r = &self.requests[v.idx];
            match v.phase {
                VideoPhase::Denoising => running_videos.push(RunningVideoView {
                    id,
                    resolution: r.resolution,
                    frames: r.frames,
                    arrival_ms: r.arrival_ms,
                    deadline_ms: r.deadline_ms,
                    steps_total: r.steps_total,
                    steps_done: v.steps_done,
                    sp_degree: v.sp_degree,
                    gpu_set: v.gpu_set,
                    at_boundary: v.boundary_pending,
                    pause_pending: v.pending_pause,
                }),
                VideoPhase::Paused => paused_videos.push(PausedVideoView {
                    id,
                    resolution: r.resolution,
                    frames: r.frames,
                    arrival_ms: r.arrival_ms,
                    deadline_ms: r.deadline_ms,
                    steps_total: r.steps_total,
                    steps_done: v.steps_done,
                    sp_degree: v.sp_degree,
                    paused_since_ms: v.paused_since_ms,
                    host_gpu: v.host_gpu.expect("paused video has host"),
                }),
                _ => {}
            }
        }
        let inflight_batches = self
            .batches
            .iter()
            .map(|(&id, b)| BatchView {
                id,
                gpu: b.gpu,
                resolution: b.resolution,
                members: b.members.clone(),
                done_ms: b.done_ms,
            })
            .collect();
        ClusterSnapshot {
            now_ms: self.now_ms,
            round: self.round,
            cluster_size: self.cfg.cluster_size,
            partition: self.cfg.partition,
            gpus,
            queued_videos,
            queued_images,
            running_videos,
            paused_videos,
            inflight_batches,
            last_image_arrival_ms: self.last_image_arrival_ms,
        }
    }

    fn validate_plan(
        &mut self,
        snap: &ClusterSnapshot,
        plan: &Plan,
        enforce_victim_slack: bool,
    ) -> Result<(), SimError> {
        let profile = self.profile;
        let video_pool = snap.video_pool();
        let image_pool = snap.image_pool();
        let usable = profile.usable_degrees(video_pool.len());

        // GPUs claimable this round: free ones plus those released by
        // boundary pauses and reconfigure shrinks in this same plan.
        let mut avail = snap.free_gpus();
        for (id, action) in &plan.video_actions {
            match action {
                VideoAction::Pause => {
                    if let Some(v) = snap.running_video(*id) {
                        if v.at_boundary {
                            avail = avail.union(v.gpu_set);
                        }
                    }
                }
                VideoAction::Reconfigure { gpu_set, .. } => {
                    if let Some(v) = snap.running_video(*id) {
                        avail = avail.union(v.gpu_set.minus(*gpu_set));
                    }
                }
                _ => {}
            }
        }

        let mut seen: BTreeSet<RequestId> = BTreeSet::new();
        let mut claimed = GpuSet::EMPTY;
        let mut audits: Vec<PauseAudit> = Vec::new();

        for (id, action) in &plan.video_actions {
            if !seen.insert(*id) {
                return Err(self.violation(format!("duplicate action for request {id}")));
            }
            match *action {
                VideoAction::Continue => {
                    let v = snap.running_video(*id).ok_or_else(|| {
                        self.violation(format!("continue on non-running video {id}"))
                    })?;
                    if !v.at_boundary {
                        return Err(self.violation(format!("continue on mid-step video {id}")));
                    }
                }
                VideoAction::Pause => {
                    let v = snap.running_video(*id).ok_or_else(|| {
                        self.violation(format!("pause on non-running video {id}"))
                    })?;
                    if v.pause_pending {
                        continue; // already latched; idempotent
                    }
                    let step = profile.video_step_latency(v.resolution, v.frames, v.sp_degree)?;
                    let remaining = f64::from(v.steps_total - v.steps_done);
                    let slack = v.deadline_ms - snap.now_ms - remaining * step;
                    if enforce_victim_slack && slack <= 0.0 {
                        return Err(self.violation(format!(
                            "pause victim {id} has non-positive slack {slack:.3} ms"
                        )));
                    }
                    if v.at_boundary {
                        let has_host = v
                            .gpu_set
                            .iter()
                            .any(|g| snap.gpus[g].paused_resident.is_none());
                        if !has_host {
                            return Err(self.violation(format!(
                                "pause of video {id} has no member device free of paused state"
                            )));
                        }
                    }
                    audits.push(PauseAudit {
                        id: *id,
                        at_ms: snap.now_ms,
                        slack_ms: slack,
                    });
                }
                VideoAction::Reconfigure { degree, gpu_set } => {
                    let v = snap.running_video(*id).ok_or_else(|| {
                        self.violation(format!("reconfigure on non-running video {id}"))
                    })?;
                    if !v.at_boundary {
                        return Err(self.violation(format!("reconfigure on mid-step video {id}")));
                    }
                    if gpu_set == v.gpu_set && degree == v.sp_degree {
                        return Err(
                            self.violation(format!("reconfigure of video {id} changes nothing"))
                        );
                    }
                    self.check_gang(snap, *id, degree, gpu_set, video_pool, &usable)?;
                    profile
                        .video_step_latency(v.resolution, v.frames, degree)
                        .map_err(|e| self.violation(format!("reconfigure of video {id}: {e}")))?;
                    let added = gpu_set.minus(v.gpu_set);
                    if !added.is_subset_of(avail) {
                        return Err(self.violation(format!(
                            "reconfigure of video {id} claims unavailable GPUs {:?}",
                            added.minus(avail)
                        )));
                    }
                    if added.overlaps(claimed) {
                        return Err(self.violation(format!(
                            "reconfigure of video {id} claims GPUs already claimed this round"
                        )));
                    }
                    claimed = claimed.union(added);
                }
                VideoAction::Resume { degree, gpu_set } => {
                    let paused = snap.paused_video(*id);
                    let queued = snap.queued_videos.iter().find(|q| q.id == *id);
                    let (res, frames) = match (paused, queued) {
                        (Some(p), _) => (p.resolution, p.frames),
                        (None, Some(q)) => (q.resolution, q.frames),
                        (None, None) => {
                            return Err(self.violation(format!(
                                "resume on video {id} that is neither paused nor queued"
                            )));
                        }
                    };
                    self.check_gang(snap, *id, degree, gpu_set, video_pool, &usable)?;
                    profile
                        .video_step_latency(res, frames, degree)
                        .map_err(|e| self.violation(format!("resume of video {id}: {e}")))?;
                    if !gpu_set.is_subset_of(avail) {
                        return Err(self.violation(format!(
                            "resume of video {id} claims unavailable GPUs {:?}",
                            gpu_set.minus(avail)
                        )));
                    }
                    if gpu_set.overlaps(claimed) {
                        return Err(self.violation(format!(
                            "resume of video {id} claims GPUs already claimed this round"
                        )));
                    }
                    claimed = claimed.union(gpu_set);
                }
            }
        }

        let mut batch_members: BTreeSet<RequestId> = BTreeSet::new();
        for batch in &plan.image_batches {
            if batch.members.is_empty() {
                return Err(self.violation("empty image batch".into()));
            }
            if !image_pool.contains(batch.gpu) {
                return Err(self.violation(format!(
                    "image batch on GPU {} outside the image pool",
                    batch.gpu
                )));
            }
            let g = GpuSet::single(batch.gpu);
            if !g.is_subset_of(avail) {
                return Err(self.violation(format!("image batch claims busy GPU {}", batch.gpu)));
            }
            if g.overlaps(claimed) {
                return Err(self.violation(format!(
                    "image batch claims GPU {} already claimed this round",
                    batch.gpu
                )));
            }
            claimed = claimed.union(g);
            for m in &batch.members {
                if !batch_members.insert(*m) {
                    return Err(self.violation(format!("image {m} appears in two batches")));
                }
                if seen.contains(m) {
                    return Err(self.violation(format!("image {m} also has a video action")));
                }
                let q = snap
                    .queued_images
                    .iter()
                    .find(|q| q.id == *m)
                    .ok_or_else(|| self.violation(format!("image {m} is not queued")))?;
                if q.resolution != batch.resolution {
                    return Err(self.violation(format!(
                        "image {m} resolution {} differs from batch resolution {}",
                        q.resolution.label(),
                        batch.resolution.label()
                    )));
                }
            }
            profile
                .image_batch_latency(batch.resolution, batch.members.len() as u32)
                .map_err(|e| self.violation(format!("image batch: {e}")))?;
        }

        if let Some(t) = plan.wake_at_ms {
            if !t.is_finite() {
                return Err(self.violation("non-finite wake_at_ms".into()));
            }
        }

        self.pause_audit.extend(audits);
        Ok(())
    }

    fn check_gang(
        &self,
        snap: &ClusterSnapshot,
        id: RequestId,
        degree: u32,
        gpu_set: GpuSet,
        video_pool: GpuSet,
        usable: &[u32],
    ) -> Result<(), SimError> {
        if degree == 0 || gpu_set.len() != degree as usize {
            return Err(self.violation(format!(
                "video {id}: gpu set {gpu_set:?} does not match degree {degree}"
            )));
        }
        if !usable.contains(&degree) {
            return Err(self.violation(format!(
                "video {id}: degree {degree} is not usable on a {}-GPU pool",
                video_pool.len()
            )));
        }
        if !gpu_set.is_subset_of(video_pool) {
            return Err(self.violation(format!(
                "video {id}: gpu set {gpu_set:?} leaves the video pool"
            )));
        }
        let _ = snap;
        Ok(())
    }

    fn apply_plan(&mut self, plan: &Plan) -> Result<(), SimError> {
        let profile = self.profile;
        let now = self.now_ms;

        // Pauses first, so released devices are usable by later phases.
        for (id, action) in &plan.video_actions {
            if *action != VideoAction::Pause {
                continue;
            }
            let at_boundary = self.videos[id].boundary_pending;
            if at_boundary {
                let executed = self.execute_pause(*id)?;
                if !executed {
                    return Err(SimError::Internal(format!(
                        "validated pause of video {id} found no host at apply time"
                    )));
                }
            } else {
                let v = self.videos.get_mut(id).unwrap();
                v.pending_pause = true;
            }
        }

        for (id, action) in &plan.video_actions {
            let VideoAction::Reconfigure { degree, gpu_set } = *action else {
                continue;
            };
            let (old_set, idx, res, frames) = {
                let v = &self.videos[id];
                let r = &self.requests[v.idx];
                (v.gpu_set, v.idx, r.resolution, r.frames)
            };
            for g in old_set.minus(gpu_set).iter() {
                self.free_gpu(g);
            }
            for g in gpu_set.minus(old_set).iter() {
                if self.gpus[g].occupant.is_some() {
                    return Err(SimError::Internal(format!(
                        "validated reconfigure of video {id} hit occupied GPU {g}"
                    )));
                }
                self.gpus[g].occupant = Some(Occupant::VideoDit { id: *id });
            }
            let start = gpu_set
                .iter()
                .map(|g| self.gpus[g].busy_until_ms)
                .fold(now, f64::max);
            let step = profile.video_step_latency(res, frames, degree)?;
            let boundary =
                start + profile.sp_reconfig_ms() + profile.resume_overhead_ms(degree)? + step;
            let v = self.videos.get_mut(id).unwrap();
            v.sp_degree = degree;
            v.gpu_set = gpu_set;
            v.boundary_pending = false;
            v.next_boundary_ms = boundary;
            self.records[idx].sp_switches += 1;
            self.records[idx].gpus_used = self.records[idx].gpus_used.union(gpu_set);
            self.totals.sp_switches += 1;
            self.enqueue(boundary, EventKind::StepBoundary(*id));
        }

        for (id, action) in &plan.video_actions {
            let VideoAction::Resume { degree, gpu_set } = *action else {
                continue;
            };
            self.apply_resume(*id, degree, gpu_set)?;
        }

        for batch in &plan.image_batches {
            let latency =
                profile.image_batch_latency(batch.resolution, batch.members.len() as u32)?;
            if self.gpus[batch.gpu].occupant.is_some() {
                return Err(SimError::Internal(format!(
                    "validated image batch hit occupied GPU {}",
                    batch.gpu
                )));
            }
            let start = now.max(self.gpus[batch.gpu].busy_until_ms);
            let done = start + latency;
            let bid = self.next_batch_id;
            self.next_batch_id += 1;
            self.gpus[batch.gpu].occupant = Some(Occupant::ImageBatch { id: bid });
            for m in &batch.members {
                let idx = self.id_to_idx[m];
                self.records[idx].first_dispatch_ms = Some(start);
                self.records[idx].gpus_used.insert(batch.gpu);
                self.queued_images.retain(|q| q != m);
            }
            self.totals.image_batches += 1;
            if batch.members.len() >= 2 {
                self.totals.batched_images += batch.members.len() as u64;
            }
            self.batches.insert(
                bid,
                BatchRt {
                    gpu: batch.gpu,
                    resolution: batch.resolution,
                    members: batch.members.clone(),
                    done_ms: done,
                },
            );
            self.enqueue(done, EventKind::ImageBatchDone(bid));
        }

        Ok(())
    }

    fn apply_resume(
        &mut self,
        id: RequestId,
        degree: u32,
        gpu_set: GpuSet,
    ) -> Result<(), SimError> {
        let profile = self.profile;
        let now = self.now_ms;
        let (phase, idx, old_degree, host) = {
            let v = &self.videos[&id];
            (v.phase, v.idx, v.sp_degree, v.host_gpu)
        };
        let req = self.requests[idx].clone();
        for g in gpu_set.iter() {
            if self.gpus[g].occupant.is_some() {
                return Err(SimError::Internal(format!(
                    "validated resume of video {id} hit occupied GPU {g}"
                )));
            }
            self.gpus[g].occupant = Some(Occupant::VideoDit { id });
        }
        let start = gpu_set
            .iter()
            .map(|g| self.gpus[g].busy_until_ms)
            .fold(now, f64::max);
        let step = profile.video_step_latency(req.resolution, req.frames, degree)?;
        let boundary = match phase {
            VideoPhase::Paused => {
                // Waking from pause: resume overhead, then the next step.
                if let Some(h) = host {
                    if self.gpus[h].paused_resident == Some(id) {
                        self.gpus[h].paused_resident = None;
                    }
                }
                self.records[idx].resumes += 1;
                self.totals.resumes += 1;
                if degree != old_degree {
                    self.records[idx].sp_switches += 1;
                    self.totals.sp_switches += 1;
                }
                start + profile.resume_overhead_ms(degree)? + step
            }
            VideoPhase::Queued => {
                // Fresh start: text encoding precedes the first step.
                self.queued_videos.retain(|q| *q != id);
                self.records[idx].first_dispatch_ms = Some(start);
                start + profile.text_encode_ms() + step
            }
            other => {
                return Err(SimError::Internal(format!(
                    "resume applied to video {id} in phase {other:?}"
                )));
            }
        };
        let v = self.videos.get_mut(&id).unwrap();
        v.phase = VideoPhase::Denoising;
        v.sp_degree = degree;
        v.gpu_set = gpu_set;
        v.boundary_pending = false;
        v.pending_pause = false;
        v.next_boundary_ms = boundary;
        v.host_gpu = None;
        self.records[idx].gpus_used = self.records[idx].gpus_used.union(gpu_set);
        self.enqueue(boundary, EventKind::StepBoundary(id));
        Ok(())
    }

    /// Videos still standing at a boundary after the plan continue at their
    /// current configuration.
    fn auto_continue(&mut self) -> Result<(), SimError> {
        let profile = self.profile;
        let pending: Vec<RequestId> = self
            .videos
            .iter()
            .filter(|(_, v)| v.phase == VideoPhase::Denoising && v.boundary_pending)
            .map(|(&id, _)| id)
            .collect();
        for id in pending {
            let (idx, degree) = {
                let v = &self.videos[&id];
                (v.idx, v.sp_degree)
            };
            let req = &self.requests[idx];
            let step = profile.video_step_latency(req.resolution, req.frames, degree)?;
            let boundary = self.now_ms + step;
            let v = self.videos.get_mut(&id).unwrap();
            v.boundary_pending = false;
            v.next_boundary_ms = boundary;
            self.enqueue(boundary, EventKind::StepBoundary(id));
        }
        Ok(())
    }

    fn finish(self, scheduler_name: &str) -> SimResult {
        SimResult {
            scheduler: scheduler_name.to_string(),
            cluster_size: self.cfg.cluster_size,
            records: self.records,
            totals: self.totals,
            pause_audit: self.pause_audit,
            horizon_ms: self.horizon_ms,
            round_wall_us: self.round_wall_us,
        }
    }
}
