//! The co-serving policy: per-video candidate generation, deadline-aware
//! image batching, and an exact per-round allocation solve.
//!
//! Each round builds one small candidate list per actionable video (at a
//! step boundary, paused, or queued), prices every free-device count for
//! the image queue, and lets the solver pick the joint assignment that
//! maximizes (deadline-recoverable jobs, urgency-weighted fit) under
//! disjoint GPU claims. Pauses free devices for images in the same round;
//! paused and held work is revived by budget-tight timers or an idle
//! image queue.

use crate::profile::{reference_sp_degree, LatencyProfile};
use crate::sched::dp::{dp_solve, CandKind, Candidate, ImageOption};
use crate::sched::edf::{dynamic_wait_budget_ms, plan_image_batches, BatchSpec};
use crate::sched::{compute_slack, GenServeConfig};
use crate::sim::{
    ClusterSnapshot, GpuSet, PausedVideoView, Plan, PlannedBatch, QueuedVideoView,
    RunningVideoView, Scheduler, VideoAction,
};
use crate::workload::RequestId;

/// What picking a candidate does to the plan.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Act {
    /// Pause a running video at its boundary.
    PauseRunning(RequestId),
    /// Leave a paused or queued video as it is.
    Keep,
    Continue(RequestId),
    Reconfigure(RequestId, u32, GpuSet),
    /// Wake a paused video or start a queued one.
    Resume(RequestId, u32, GpuSet),
}

struct Group {
    cands: Vec<Candidate>,
    acts: Vec<Act>,
}

impl Group {
    fn new() -> Self {
        Group {
            cands: Vec::new(),
            acts: Vec::new(),
        }
    }

    fn push(&mut self, cand: Candidate, act: Act) {
        self.cands.push(cand);
        self.acts.push(act);
    }
}

/// Deadline fit of a predicted finish: recoverable when it lands on time,
/// and a score that peaks for just-in-time finishes so surplus capacity
/// flows to tighter work.
fn fit(finish_ms: f64, deadline_ms: f64) -> (u32, f64) {
    let laxity_sec = (deadline_ms - finish_ms) / 1000.0;
    let rec = u32::from(laxity_sec >= 0.0);
    (rec, 1.0 / (1.0 + laxity_sec.abs()))
}

fn arm(wake: &mut Option<f64>, now_ms: f64, t: f64) {
    if t > now_ms {
        *wake = Some(wake.map_or(t, |w| w.min(t)));
    }
}

pub struct GenServe {
    cfg: GenServeConfig,
}

impl GenServe {
    pub fn new(cfg: GenServeConfig) -> Self {
        GenServe { cfg }
    }

    /// Degrees the policy may use on this video pool.
    fn degrees(&self, profile: &LatencyProfile, pool_len: usize) -> Vec<u32> {
        let usable = profile.usable_degrees(pool_len);
        if self.cfg.sp_switching {
            usable
        } else {
            usable
                .into_iter()
                .filter(|&d| d == self.cfg.pinned_degree)
                .collect()
        }
    }

    fn margin_ms(&self, step_ms: f64) -> f64 {
        f64::from(self.cfg.safety_margin_steps) * step_ms
    }

    /// Fastest allowed degree whose gang fits in `limit` devices; falls back
    /// to the fastest allowed degree overall for predictions when nothing
    /// fits.
    fn best_degree(&self, usable: &[u32], limit: usize) -> Option<u32> {
        usable
            .iter()
            .copied()
            .filter(|&d| d as usize <= limit)
            .max()
            .or_else(|| usable.iter().copied().max())
    }

    /// Latest time a paused video can still be started and finish
    /// `safety_margin_steps` before its deadline, predicting at the fastest
    /// degree available right now.
    fn resume_deadline(
        &self,
        profile: &LatencyProfile,
        pv: &PausedVideoView,
        usable: &[u32],
        free_count: usize,
    ) -> Option<f64> {
        let p_best = self.best_degree(usable, free_count.max(1))?;
        let step = profile
            .video_step_latency(pv.resolution, pv.frames, p_best)
            .ok()?;
        let vae = profile.vae_decode_latency(pv.resolution, pv.frames).ok()?;
        let resume = profile.resume_overhead_ms(p_best).ok()?;
        let rem = f64::from(pv.steps_total - pv.steps_done) * step;
        Some(pv.deadline_ms - (rem + vae + resume + self.margin_ms(step)))
    }

    /// Latest time a queued video can still be started, same prediction.
    fn start_deadline(
        &self,
        profile: &LatencyProfile,
        q: &QueuedVideoView,
        usable: &[u32],
        free_count: usize,
    ) -> Option<f64> {
        let p_best = self.best_degree(usable, free_count.max(1))?;
        let step = profile
            .video_step_latency(q.resolution, q.frames, p_best)
            .ok()?;
        let vae = profile.vae_decode_latency(q.resolution, q.frames).ok()?;
        let total = profile.text_encode_ms() + f64::from(q.steps_total) * step + vae;
        Some(q.deadline_ms - (total + self.margin_ms(step)))
    }

    /// True when the image side has gone quiet long enough that parked
    /// videos may take free capacity back.
    fn image_queue_idle(&self, snap: &ClusterSnapshot, default_window_ms: f64) -> bool {
        if !snap.queued_images.is_empty() {
            return false;
        }
        let window = self.cfg.idle_window_ms.unwrap_or(default_window_ms);
        snap.last_image_arrival_ms
            .is_none_or(|t| snap.now_ms - t >= window)
    }

    /// Candidates for a video sitting at a step boundary.
    fn running_group(
        &self,
        snap: &ClusterSnapshot,
        profile: &LatencyProfile,
        v: &RunningVideoView,
        free_video: GpuSet,
        usable: &[u32],
    ) -> Group {
        let mut g = Group::new();
        let now = snap.now_ms;
        let rem = v.steps_total - v.steps_done;
        let (Ok(step_cur), Ok(vae)) = (
            profile.video_step_latency(v.resolution, v.frames, v.sp_degree),
            profile.vae_decode_latency(v.resolution, v.frames),
        ) else {
            g.push(
                Candidate {
                    kind: CandKind::Continue,
                    claim: v.gpu_set,
                    recoverable: 0,
                    score: 0.0,
                },
                Act::Continue(v.id),
            );
            return g;
        };

        if self.cfg.preemption {
            let slack = compute_slack(v.deadline_ms, now, rem, step_cur);
            let has_host = v
                .gpu_set
                .iter()
                .any(|g| snap.gpus[g].paused_resident.is_none());
            if slack > 0.0 && has_host {
                if let Ok(resume) = profile.resume_overhead_ms(v.sp_degree) {
                    let finish =
                        now + self.margin_ms(step_cur) + resume + f64::from(rem) * step_cur + vae;
                    let rec = u32::from(finish <= v.deadline_ms);
                    g.push(
                        Candidate {
                            kind: CandKind::Hold,
                            claim: GpuSet::EMPTY,
                            recoverable: rec,
                            score: 0.0,
                        },
                        Act::PauseRunning(v.id),
                    );
                }
            }
        }

        let (rec, score) = fit(now + f64::from(rem) * step_cur + vae, v.deadline_ms);
        g.push(
            Candidate {
                kind: CandKind::Continue,
                claim: v.gpu_set,
                recoverable: rec,
                score,
            },
            Act::Continue(v.id),
        );

        if self.cfg.sp_switching {
            if let Some(idx) = usable.iter().position(|&d| d == v.sp_degree) {
                let mut scale = |p_new: u32, kind: CandKind, claim: GpuSet| {
                    let (Ok(step_new), Ok(resume)) = (
                        profile.video_step_latency(v.resolution, v.frames, p_new),
                        profile.resume_overhead_ms(p_new),
                    ) else {
                        return;
                    };
                    let finish =
                        now + profile.sp_reconfig_ms() + resume + f64::from(rem) * step_new + vae;
                    let (rec, score) = fit(finish, v.deadline_ms);
                    g.push(
                        Candidate {
                            kind,
                            claim,
                            recoverable: rec,
                            score,
                        },
                        Act::Reconfigure(v.id, p_new, claim),
                    );
                };
                if idx > 0 {
                    let p_dn = usable[idx - 1];
                    if let Some(claim) = v.gpu_set.take_lowest(p_dn as usize) {
                        scale(p_dn, CandKind::ScaleDown, claim);
                    }
                }
                if idx + 1 < usable.len() {
                    let p_up = usable[idx + 1];
                    let extra = (p_up - v.sp_degree) as usize;
                    if let Some(ext) = free_video.take_lowest(extra) {
                        scale(p_up, CandKind::ScaleUp, v.gpu_set.union(ext));
                    }
                }
            }
        }
        g
    }

    /// Candidates for a paused video. Resume options appear only when the
    /// budget-tight or image-idle trigger fires; `cursor` staggers anchor
    /// blocks so several parked videos can wake in one round.
    fn paused_group(
        &self,
        snap: &ClusterSnapshot,
        profile: &LatencyProfile,
        pv: &PausedVideoView,
        usable: &[u32],
        free_video: GpuSet,
        cursor: &mut GpuSet,
    ) -> Group {
        let mut g = Group::new();
        let now = snap.now_ms;
        let rem = pv.steps_total - pv.steps_done;
        let (Ok(step_last), Ok(vae), Ok(resume_last)) = (
            profile.video_step_latency(pv.resolution, pv.frames, pv.sp_degree),
            profile.vae_decode_latency(pv.resolution, pv.frames),
            profile.resume_overhead_ms(pv.sp_degree),
        ) else {
            g.push(
                Candidate {
                    kind: CandKind::Hold,
                    claim: GpuSet::EMPTY,
                    recoverable: 0,
                    score: 0.0,
                },
                Act::Keep,
            );
            return g;
        };

        let hold_finish =
            now + self.margin_ms(step_last) + resume_last + f64::from(rem) * step_last + vae;
        g.push(
            Candidate {
                kind: CandKind::Hold,
                claim: GpuSet::EMPTY,
                recoverable: u32::from(hold_finish <= pv.deadline_ms),
                score: 0.0,
            },
            Act::Keep,
        );

        let tight = self
            .resume_deadline(profile, pv, usable, free_video.len())
            .is_some_and(|t| now >= t);
        let idle = self.image_queue_idle(snap, 2.0 * step_last);
        if tight || idle {
            let mut degrees = vec![pv.sp_degree];
            if let Some(p_fast) = self.best_degree(usable, cursor.len()) {
                if p_fast != pv.sp_degree && (p_fast as usize) <= cursor.len() {
                    degrees.push(p_fast);
                }
            }
            let mut advanced = false;
            for p in degrees {
                let Some(block) = cursor.take_lowest(p as usize) else {
                    continue;
                };
                let (Ok(step), Ok(resume)) = (
                    profile.video_step_latency(pv.resolution, pv.frames, p),
                    profile.resume_overhead_ms(p),
                ) else {
                    continue;
                };
                let finish = now + resume + f64::from(rem) * step + vae;
                let (rec, score) = fit(finish, pv.deadline_ms);
                g.push(
                    Candidate {
                        kind: CandKind::Resume,
                        claim: block,
                        recoverable: rec,
                        score,
                    },
                    Act::Resume(pv.id, p, block),
                );
                if !advanced {
                    *cursor = cursor.minus(block);
                    advanced = true;
                }
            }
        }
        g
    }

    /// Candidates for a queued video: hold, start at the resolution's
    /// reference degree, start at the fastest degree that fits.
    fn queued_group(
        &self,
        profile: &LatencyProfile,
        q: &QueuedVideoView,
        now: f64,
        usable: &[u32],
        cursor: &mut GpuSet,
    ) -> Group {
        let mut g = Group::new();
        let hold_rec = (|| -> Option<u32> {
            let p_star = self.best_degree(usable, usize::MAX)?;
            let step = profile
                .video_step_latency(q.resolution, q.frames, p_star)
                .ok()?;
            let vae = profile.vae_decode_latency(q.resolution, q.frames).ok()?;
            let finish = now
                + self.margin_ms(step)
                + profile.text_encode_ms()
                + f64::from(q.steps_total) * step
                + vae;
            Some(u32::from(finish <= q.deadline_ms))
        })()
        .unwrap_or(0);
        g.push(
            Candidate {
                kind: CandKind::Hold,
                claim: GpuSet::EMPTY,
                recoverable: hold_rec,
                score: 0.0,
            },
            Act::Keep,
        );

        let p_ref = reference_sp_degree(q.resolution);
        let mut degrees: Vec<u32> = Vec::new();
        if usable.contains(&p_ref) {
            degrees.push(p_ref);
        }
        if let Some(p_fast) = self.best_degree(usable, cursor.len()) {
            if !degrees.contains(&p_fast) {
                degrees.push(p_fast);
            }
        }
        let mut advanced = false;
        for p in degrees {
            let Some(block) = cursor.take_lowest(p as usize) else {
                continue;
            };
            let (Ok(step), Ok(vae)) = (
                profile.video_step_latency(q.resolution, q.frames, p),
                profile.vae_decode_latency(q.resolution, q.frames),
            ) else {
                continue;
            };
            let finish = now + profile.text_encode_ms() + f64::from(q.steps_total) * step + vae;
            let (rec, score) = fit(finish, q.deadline_ms);
            g.push(
                Candidate {
                    kind: CandKind::Resume,
                    claim: block,
                    recoverable: rec,
                    score,
                },
                Act::Resume(q.id, p, block),
            );
            if !advanced {
                *cursor = cursor.minus(block);
                advanced = true;
            }
        }
        g
    }

    /// Batch plan and option value for `slots` free image devices, with
    /// hold-open batches split out.
    fn image_option(
        &self,
        snap: &ClusterSnapshot,
        profile: &LatencyProfile,
        slots: usize,
    ) -> (ImageOption, Vec<BatchSpec>, Vec<BatchSpec>) {
        let plan = plan_image_batches(
            &snap.queued_images,
            slots,
            snap.now_ms,
            profile,
            self.cfg.batching,
        );
        let mut dispatch: Vec<BatchSpec> = Vec::new();
        let mut deferred: Vec<BatchSpec> = Vec::new();
        for b in plan.batches {
            let hold_open = self.cfg.max_hold_ms > 0.0
                && !b.salvage
                && dynamic_wait_budget_ms(&b, &snap.queued_images) > 0.0
                && snap.now_ms - b.oldest_arrival_ms < self.cfg.max_hold_ms;
            if hold_open {
                deferred.push(b);
            } else {
                dispatch.push(b);
            }
        }
        let mut counted = 0u32;
        let mut urgency = 0.0f64;
        let mut dispatched = 0u32;
        for b in &dispatch {
            dispatched += b.members.len() as u32;
            if b.salvage {
                continue;
            }
            for m in &b.members {
                if let Some(q) = snap.queued_images.iter().find(|q| q.id == *m) {
                    counted += 1;
                    let slack_sec = (q.deadline_ms - b.completion_ms) / 1000.0;
                    urgency += 1.0 / (1.0 + slack_sec.max(0.0));
                }
            }
        }
        let opt = ImageOption {
            recoverable: counted,
            score: urgency,
            dispatched,
            gpus_used: dispatch.len(),
        };
        (opt, dispatch, deferred)
    }
}

impl Scheduler for GenServe {
    fn name(&self) -> &str {
        "genserve"
    }

    fn enforces_victim_slack_safety(&self) -> bool {
        true
    }

    fn plan(&self, snap: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        let now = snap.now_ms;
        let video_pool = snap.video_pool();
        let image_pool = snap.image_pool();
        let free_video = snap.free_video_gpus();
        let usable = self.degrees(profile, video_pool.len());

        // Image devices outside the video pool are free for images
        // regardless of what videos claim.
        let fixed_image = snap.free_image_gpus().minus(video_pool);
        let image_budget = move |mask: GpuSet| mask.intersect(image_pool).len() + fixed_image.len();

        // Groups: boundary videos, then paused, then queued.
        let mut boundary: Vec<&RunningVideoView> = snap
            .running_videos
            .iter()
            .filter(|v| v.at_boundary && !v.pause_pending)
            .collect();
        boundary.sort_by_key(|v| v.id);
        let mut paused: Vec<&PausedVideoView> = snap.paused_videos.iter().collect();
        paused.sort_by_key(|pv| pv.id);
        let mut queued: Vec<&QueuedVideoView> = snap.queued_videos.iter().collect();
        queued.sort_by(|a, b| a.arrival_ms.total_cmp(&b.arrival_ms).then(a.id.cmp(&b.id)));

        let mut avail = free_video;
        for v in &boundary {
            avail = avail.union(v.gpu_set);
        }

        let mut groups: Vec<Group> = Vec::new();
        for v in &boundary {
            groups.push(self.running_group(snap, profile, v, free_video, &usable));
        }
        let mut cursor = free_video;
        for pv in &paused {
            groups.push(self.paused_group(snap, profile, pv, &usable, free_video, &mut cursor));
        }
        for q in &queued {
            groups.push(self.queued_group(profile, q, now, &usable, &mut cursor));
        }

        // Price every possible free-image-device count once.
        let g_max = image_budget(avail);
        let mut options: Vec<ImageOption> = Vec::with_capacity(g_max + 1);
        let mut batch_plans: Vec<(Vec<BatchSpec>, Vec<BatchSpec>)> = Vec::with_capacity(g_max + 1);
        for g in 0..=g_max {
            let (opt, dispatch, deferred) = self.image_option(snap, profile, g);
            options.push(opt);
            batch_plans.push((dispatch, deferred));
        }

        let cand_lists: Vec<Vec<Candidate>> = groups.iter().map(|g| g.cands.clone()).collect();
        let sol = dp_solve(&cand_lists, avail, &options, image_budget);

        // Materialize the chosen candidates.
        let mut plan = Plan::empty();
        let mut paused_now: Vec<RequestId> = Vec::new();
        let mut resumed: Vec<RequestId> = Vec::new();
        for (gi, &ci) in sol.choices.iter().enumerate() {
            match groups[gi].acts[ci] {
                Act::PauseRunning(id) => {
                    plan.push_video(id, VideoAction::Pause);
                    paused_now.push(id);
                }
                Act::Keep => {}
                Act::Continue(id) => plan.push_video(id, VideoAction::Continue),
                Act::Reconfigure(id, degree, gpu_set) => {
                    plan.push_video(id, VideoAction::Reconfigure { degree, gpu_set });
                }
                Act::Resume(id, degree, gpu_set) => {
                    plan.push_video(id, VideoAction::Resume { degree, gpu_set });
                    resumed.push(id);
                }
            }
        }

        let g_chosen = image_budget(sol.residual);
        let (dispatch, deferred) = &batch_plans[g_chosen];
        let mut image_gpus = sol.residual.intersect(image_pool).union(fixed_image);
        for spec in dispatch {
            let Some(gpu) = image_gpus.lowest() else {
                break;
            };
            image_gpus.remove(gpu);
            plan.push_batch(PlannedBatch {
                gpu,
                resolution: spec.resolution,
                members: spec.members.clone(),
            });
        }
        for spec in deferred {
            for m in &spec.members {
                plan.deferred
                    .push((*m, crate::sim::DeferReason::WaitBudget));
            }
        }

        // Wake timers: every parked or parking video and every held-open
        // batch gets a revisit time; the engine dedupes.
        let mut wake: Option<f64> = None;
        for pv in &paused {
            if resumed.contains(&pv.id) {
                continue;
            }
            if let Some(t) = self.resume_deadline(profile, pv, &usable, free_video.len()) {
                arm(&mut wake, now, t);
            }
            if snap.queued_images.is_empty() {
                if let (Some(last), Ok(step)) = (
                    snap.last_image_arrival_ms,
                    profile.video_step_latency(pv.resolution, pv.frames, pv.sp_degree),
                ) {
                    let window = self.cfg.idle_window_ms.unwrap_or(2.0 * step);
                    arm(&mut wake, now, last + window);
                }
            }
        }
        for id in &paused_now {
            let Some(v) = snap.running_video(*id) else {
                continue;
            };
            let pv = PausedVideoView {
                id: v.id,
                resolution: v.resolution,
                frames: v.frames,
                arrival_ms: v.arrival_ms,
                deadline_ms: v.deadline_ms,
                steps_total: v.steps_total,
                steps_done: v.steps_done,
                sp_degree: v.sp_degree,
                paused_since_ms: now,
                host_gpu: v.gpu_set.lowest().unwrap_or(0),
            };
            if let Some(t) = self.resume_deadline(profile, &pv, &usable, free_video.len()) {
                if t > now {
                    arm(&mut wake, now, t);
                } else if let Ok(step) =
                    profile.video_step_latency(v.resolution, v.frames, v.sp_degree)
                {
                    // Already past the tight point: revisit one step out.
                    arm(&mut wake, now, now + step);
                }
            }
        }
        for q in &queued {
            if resumed.contains(&q.id) {
                continue;
            }
            if let Some(t) = self.start_deadline(profile, q, &usable, free_video.len()) {
                arm(&mut wake, now, t);
            }
        }
        for spec in deferred {
            let budget = dynamic_wait_budget_ms(spec, &snap.queued_images);
            let flush = (spec.oldest_arrival_ms + self.cfg.max_hold_ms).min(now + budget);
            arm(&mut wake, now, flush);
        }
        plan.wake_at_ms = wake;
        plan
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::profile::{RequestKind, ResolutionClass};
    use crate::sim::{run_sim, GpuSnapshot, Occupant, Partition, SimConfig};
    use crate::workload::Request;

    fn profile() -> LatencyProfile {
        LatencyProfile::builtin_default()
    }

    fn video(id: u64, res: ResolutionClass, arrival: f64, deadline: f64) -> Request {
        Request {
            id,
            kind: RequestKind::Video,
            resolution: res,
            frames: 81,
            arrival_ms: arrival,
            deadline_ms: deadline,
            steps_total: 50,
            prompt_tag: Request::canonical_prompt_tag(id),
        }
    }

    fn image(id: u64, res: ResolutionClass, arrival: f64, deadline: f64) -> Request {
        Request {
            id,
            kind: RequestKind::Image,
            resolution: res,
            frames: 1,
            arrival_ms: arrival,
            deadline_ms: deadline,
            steps_total: 28,
            prompt_tag: Request::canonical_prompt_tag(id),
        }
    }

    /// Snapshot with one sp=2 video on {0,1} at a boundary, {2,3} free.
    fn boundary_snapshot() -> ClusterSnapshot {
        let v = RunningVideoView {
            id: 7,
            resolution: ResolutionClass::R480,
            frames: 81,
            arrival_ms: 0.0,
            deadline_ms: 15300.0,
            steps_total: 50,
            steps_done: 10,
            sp_degree: 2,
            gpu_set: [0, 1].into_iter().collect(),
            at_boundary: true,
            pause_pending: false,
        };
        let gpus = (0..4)
            .map(|id| GpuSnapshot {
                id,
                occupant: (id < 2).then_some(Occupant::VideoDit { id: 7 }),
                busy_until_ms: 0.0,
                paused_resident: None,
            })
            .collect();
        ClusterSnapshot {
            now_ms: 1862.0,
            round: 11,
            cluster_size: 4,
            partition: Partition::Replicated,
            gpus,
            queued_videos: vec![],
            queued_images: vec![],
            running_videos: vec![v],
            paused_videos: vec![],
            inflight_batches: vec![],
            last_image_arrival_ms: None,
        }
    }

    #[test]
    fn boundary_video_offers_hold_continue_and_both_scales() {
        let p = profile();
        let gs = GenServe::new(GenServeConfig::default());
        let snap = boundary_snapshot();
        let v = &snap.running_videos[0];
        let usable = gs.degrees(&p, 4);
        assert_eq!(usable, vec![1, 2, 4]);
        let g = gs.running_group(&snap, &p, v, snap.free_video_gpus(), &usable);

        let kinds: Vec<CandKind> = g.cands.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![
                CandKind::Hold,
                CandKind::Continue,
                CandKind::ScaleDown,
                CandKind::ScaleUp
            ]
        );
        assert_eq!(g.cands[0].claim, GpuSet::EMPTY);
        assert_eq!(g.cands[1].claim, [0, 1].into_iter().collect::<GpuSet>());
        assert_eq!(g.cands[2].claim, [0].into_iter().collect::<GpuSet>());
        assert_eq!(
            g.cands[3].claim,
            [0, 1, 2, 3].into_iter().collect::<GpuSet>()
        );
        assert_eq!(g.acts[2], Act::Reconfigure(7, 1, [0].into_iter().collect()));
        assert_eq!(
            g.acts[3],
            Act::Reconfigure(7, 4, [0, 1, 2, 3].into_iter().collect())
        );
        // Continue finishes at 1862 + 40 * 183.2 + 1010 = 10200: on time.
        assert_eq!(g.cands[1].recoverable, 1);
        assert_abs_diff_eq!(g.cands[1].score, 1.0 / 6.1, epsilon = 1e-9);
        // Dropping to sp=1 lands at 15696.036 > 15300: not recoverable.
        assert_eq!(g.cands[2].recoverable, 0);
    }

    #[test]
    fn preemption_off_removes_hold_and_pinning_removes_scales() {
        let p = profile();
        let snap = boundary_snapshot();
        let v = &snap.running_videos[0];

        let no_preempt = GenServe::new(GenServeConfig {
            preemption: false,
            ..GenServeConfig::default()
        });
        let usable = no_preempt.degrees(&p, 4);
        let g = no_preempt.running_group(&snap, &p, v, snap.free_video_gpus(), &usable);
        assert!(g.cands.iter().all(|c| c.kind != CandKind::Hold));

        let pinned = GenServe::new(GenServeConfig {
            sp_switching: false,
            pinned_degree: 2,
            ..GenServeConfig::default()
        });
        let usable = pinned.degrees(&p, 4);
        assert_eq!(usable, vec![2]);
        let g = pinned.running_group(&snap, &p, v, snap.free_video_gpus(), &usable);
        let kinds: Vec<CandKind> = g.cands.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![CandKind::Hold, CandKind::Continue]);
    }

    #[test]
    fn edf_worked_example_urgency() {
        // Two 720p images on one slot: batch of 2 completes at now + 1960;
        // slacks 0.04 s and 1.04 s give 1/1.04 + 1/2.04.
        let p = profile();
        let gs = GenServe::new(GenServeConfig::default());
        let snap = ClusterSnapshot {
            now_ms: 0.0,
            round: 0,
            cluster_size: 1,
            partition: Partition::Replicated,
            gpus: vec![GpuSnapshot {
                id: 0,
                occupant: None,
                busy_until_ms: 0.0,
                paused_resident: None,
            }],
            queued_videos: vec![],
            queued_images: vec![
                crate::sim::QueuedImageView {
                    id: 1,
                    resolution: ResolutionClass::R720,
                    arrival_ms: 0.0,
                    deadline_ms: 2000.0,
                },
                crate::sim::QueuedImageView {
                    id: 2,
                    resolution: ResolutionClass::R720,
                    arrival_ms: 0.0,
                    deadline_ms: 3000.0,
                },
            ],
            running_videos: vec![],
            paused_videos: vec![],
            inflight_batches: vec![],
            last_image_arrival_ms: Some(0.0),
        };
        let (opt, dispatch, deferred) = gs.image_option(&snap, &p, 1);
        assert_eq!(dispatch.len(), 1);
        assert!(deferred.is_empty());
        assert_eq!(dispatch[0].members, vec![1, 2]);
        assert_eq!(opt.recoverable, 2);
        assert_abs_diff_eq!(opt.score, 1.0 / 1.04 + 1.0 / 2.04, epsilon = 1e-9);
    }

    #[test]
    fn pauses_video_for_urgent_image_and_resumes_by_budget() {
        // One device: the video yields its GPU at the first boundary, the
        // image meets its deadline, and the wake timer revives the video at
        // the last start time that still meets its own.
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            image(1, ResolutionClass::R720, 100.0, 2000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig {
            idle_window_ms: Some(1e12), // force the budget-tight path
            ..GenServeConfig::default()
        });
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        assert_eq!(res.records[0].pauses, 1);
        assert!(res.records[1].met);
        assert_abs_diff_eq!(
            res.records[1].first_dispatch_ms.unwrap(),
            118.2034,
            epsilon = 1e-6
        );
        // Resume fires at 7170 - (49 * 88.2 + 340 + 0.036 + 88.2) = 2419.964
        // and completes one safety step before the deadline.
        assert_abs_diff_eq!(
            res.records[0].completion_ms.unwrap(),
            7081.8,
            epsilon = 1e-6
        );
        assert!(res.records[0].met);
    }

    #[test]
    fn idle_image_queue_returns_gpus_to_paused_video() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            image(1, ResolutionClass::R720, 100.0, 2000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig::default());
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        // Image done at 1518.2034; the idle trigger resumes immediately.
        assert_abs_diff_eq!(
            res.records[0].completion_ms.unwrap(),
            6180.0394,
            epsilon = 1e-6
        );
        assert!(res.records[0].met && res.records[1].met);
    }

    #[test]
    fn elastic_start_prefers_reference_degree_then_sheds_gpus() {
        // A lone 480p video with a 1.5x deadline starts at its reference
        // degree (2), not the fastest (4): just-in-time fit wins. With no
        // image pressure it then sheds parallelism step by step, drifting
        // toward the deadline while staying recoverable.
        let p = profile();
        let trace = vec![video(0, ResolutionClass::R480, 0.0, 15300.0)];
        let cfg = SimConfig {
            cluster_size: 4,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig::default());
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        let r = &res.records[0];
        assert_eq!(r.gpus_used.len(), 2, "started on two devices, never grew");
        assert!(r.met);
        let done = r.completion_ms.unwrap();
        assert!(
            done > 10200.0 && done <= 15300.0,
            "drifted but on time: {done}"
        );
        assert!(r.sp_switches >= 1, "shed at least one device");
    }

    #[test]
    fn pinned_degree_misses_what_elastic_meets() {
        // At sp=1 the same 480p video needs 17070 ms against a 15300 ms
        // deadline; parallelism is the only way to meet it.
        let p = profile();
        let trace = vec![video(0, ResolutionClass::R480, 0.0, 15300.0)];
        let cfg = SimConfig {
            cluster_size: 4,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig {
            sp_switching: false,
            pinned_degree: 1,
            ..GenServeConfig::default()
        });
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        assert!(!res.records[0].met);
        assert_abs_diff_eq!(
            res.records[0].completion_ms.unwrap(),
            17070.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn hold_open_defers_lone_image_within_budget() {
        let p = profile();
        let trace = vec![image(0, ResolutionClass::R720, 0.0, 5000.0)];
        let cfg = SimConfig {
            cluster_size: 2,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig {
            max_hold_ms: 500.0,
            ..GenServeConfig::default()
        });
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        // Held for joiners until the hold window lapses, then flushed.
        assert_abs_diff_eq!(
            res.records[0].first_dispatch_ms.unwrap(),
            500.0,
            epsilon = 1e-6
        );
        assert!(res.records[0].met);

        let gs = GenServe::new(GenServeConfig::default());
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        assert_abs_diff_eq!(
            res.records[0].first_dispatch_ms.unwrap(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn batches_images_when_slots_are_scarce() {
        // Two same-resolution images, one device: they ride one batch.
        let p = profile();
        let trace = vec![
            image(0, ResolutionClass::R720, 0.0, 3000.0),
            image(1, ResolutionClass::R720, 0.0, 3000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig::default());
        let res = run_sim(&trace, &p, &gs, &cfg).unwrap();
        assert_eq!(res.totals.image_batches, 1);
        assert_eq!(res.totals.batched_images, 2);
        assert!(res.records.iter().all(|r| r.met));
    }

    #[test]
    fn replicated_runs_are_deterministic() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            video(1, ResolutionClass::R480, 40.0, 15340.0),
            image(2, ResolutionClass::R720, 50.0, 2150.0),
            image(3, ResolutionClass::R1024, 60.0, 4260.0),
            image(4, ResolutionClass::R720, 900.0, 3000.0),
            video(5, ResolutionClass::R256, 1000.0, 8170.0),
        ];
        let cfg = SimConfig {
            cluster_size: 4,
            ..SimConfig::default()
        };
        let gs = GenServe::new(GenServeConfig::default());
        let a = run_sim(&trace, &p, &gs, &cfg).unwrap();
        let b = run_sim(&trace, &p, &gs, &cfg).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert!(a.records.iter().all(|r| r.completion_ms.is_some()));
    }
}
