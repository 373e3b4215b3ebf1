//! Comparison policies: arrival-order, shortest-job, shortest-remaining,
//! and static-parallelism scheduling, plus the preemption-only variant
//! used by the mechanism ablation.

use crate::profile::{LatencyProfile, RequestKind, ResolutionClass};
use crate::sched::{select_victims, BaselineConfig};
use crate::sim::{ClusterSnapshot, GpuSet, Plan, PlannedBatch, Scheduler, VideoAction};
use crate::workload::RequestId;

#[derive(Debug, Clone, Copy)]
struct Job {
    id: RequestId,
    kind: RequestKind,
    resolution: ResolutionClass,
    frames: u32,
    arrival_ms: f64,
}

fn queued_jobs(snap: &ClusterSnapshot) -> Vec<Job> {
    let mut jobs: Vec<Job> = snap
        .queued_videos
        .iter()
        .map(|q| Job {
            id: q.id,
            kind: RequestKind::Video,
            resolution: q.resolution,
            frames: q.frames,
            arrival_ms: q.arrival_ms,
        })
        .chain(snap.queued_images.iter().map(|q| Job {
            id: q.id,
            kind: RequestKind::Image,
            resolution: q.resolution,
            frames: 1,
            arrival_ms: q.arrival_ms,
        }))
        .collect();
    jobs.sort_by(|a, b| a.arrival_ms.total_cmp(&b.arrival_ms).then(a.id.cmp(&b.id)));
    jobs
}

/// Largest usable degree not exceeding `want` on a pool of `pool_len`
/// devices (1 is always usable on a non-empty pool).
fn capped_degree(profile: &LatencyProfile, pool_len: usize, want: u32) -> Option<u32> {
    profile
        .usable_degrees(pool_len)
        .into_iter()
        .filter(|&d| d <= want)
        .max()
}

/// Dispatch `jobs` in order onto free devices, stopping at the first job
/// that does not fit (strict head-of-line blocking). Videos take
/// `degree_of(job)` devices; images go out one per device, unbatched.
fn dispatch_strict(
    snap: &ClusterSnapshot,
    jobs: &[Job],
    degree_of: impl Fn(&Job) -> Option<u32>,
    plan: &mut Plan,
) {
    let mut free = snap.free_gpus();
    for job in jobs {
        match job.kind {
            RequestKind::Video => {
                let Some(degree) = degree_of(job) else {
                    break;
                };
                let pool = free.intersect(snap.video_pool());
                let Some(set) = pool.take_lowest(degree as usize) else {
                    break;
                };
                free = free.minus(set);
                plan.push_video(
                    job.id,
                    VideoAction::Resume {
                        degree,
                        gpu_set: set,
                    },
                );
            }
            RequestKind::Image => {
                let Some(g) = free.intersect(snap.image_pool()).lowest() else {
                    break;
                };
                free.remove(g);
                plan.push_batch(PlannedBatch {
                    gpu: g,
                    resolution: job.resolution,
                    members: vec![job.id],
                });
            }
        }
    }
}

/// Arrival-order service, non-preemptive, strict head-of-line blocking.
pub struct Fcfs {
    cfg: BaselineConfig,
}

impl Fcfs {
    pub fn new(cfg: BaselineConfig) -> Self {
        Fcfs { cfg }
    }
}

impl Scheduler for Fcfs {
    fn name(&self) -> &str {
        "fcfs"
    }

    fn plan(&self, snap: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        let mut plan = Plan::empty();
        let jobs = queued_jobs(snap);
        let pool_len = snap.video_pool().len();
        dispatch_strict(
            snap,
            &jobs,
            |_| capped_degree(profile, pool_len, self.cfg.baseline_video_sp),
            &mut plan,
        );
        plan
    }
}

/// Shortest estimated total runtime first, non-preemptive.
pub struct Sjf {
    cfg: BaselineConfig,
}

impl Sjf {
    pub fn new(cfg: BaselineConfig) -> Self {
        Sjf { cfg }
    }
}

impl Scheduler for Sjf {
    fn name(&self) -> &str {
        "sjf"
    }

    fn plan(&self, snap: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        let mut plan = Plan::empty();
        let mut jobs = queued_jobs(snap);
        jobs.sort_by(|a, b| {
            let ea = profile
                .offline_e2e_ms(a.kind, a.resolution, a.frames)
                .unwrap_or(f64::INFINITY);
            let eb = profile
                .offline_e2e_ms(b.kind, b.resolution, b.frames)
                .unwrap_or(f64::INFINITY);
            ea.total_cmp(&eb)
                .then(a.arrival_ms.total_cmp(&b.arrival_ms))
                .then(a.id.cmp(&b.id))
        });
        let pool_len = snap.video_pool().len();
        dispatch_strict(
            snap,
            &jobs,
            |_| capped_degree(profile, pool_len, self.cfg.baseline_video_sp),
            &mut plan,
        );
        plan
    }
}

/// Shortest remaining time first, preemptive at step boundaries.
pub struct Srtf {
    cfg: BaselineConfig,
}

impl Srtf {
    pub fn new(cfg: BaselineConfig) -> Self {
        Srtf { cfg }
    }
}

impl Srtf {
    fn video_degree(&self, profile: &LatencyProfile, pool_len: usize) -> Option<u32> {
        capped_degree(profile, pool_len, self.cfg.baseline_video_sp)
    }
}

impl Scheduler for Srtf {
    fn name(&self) -> &str {
        "srtf"
    }

    fn plan(&self, snap: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        let mut plan = Plan::empty();
        let pool_len = snap.video_pool().len();
        let Some(degree) = self.video_degree(profile, pool_len) else {
            return plan;
        };

        // Waiting pool: queued work plus paused videos, by remaining time.
        #[derive(Clone, Copy)]
        enum Waiting {
            Image(RequestId, ResolutionClass),
            FreshVideo(RequestId),
            PausedVideo(RequestId, u32),
        }
        let mut waiting: Vec<(f64, f64, RequestId, Waiting)> = Vec::new();
        for q in &snap.queued_images {
            let rem = profile
                .offline_e2e_ms(RequestKind::Image, q.resolution, 1)
                .unwrap_or(f64::INFINITY);
            waiting.push((rem, q.arrival_ms, q.id, Waiting::Image(q.id, q.resolution)));
        }
        for q in &snap.queued_videos {
            let rem = (|| -> Option<f64> {
                let step = profile
                    .video_step_latency(q.resolution, q.frames, degree)
                    .ok()?;
                let vae = profile.vae_decode_latency(q.resolution, q.frames).ok()?;
                Some(profile.text_encode_ms() + f64::from(q.steps_total) * step + vae)
            })()
            .unwrap_or(f64::INFINITY);
            waiting.push((rem, q.arrival_ms, q.id, Waiting::FreshVideo(q.id)));
        }
        for pv in &snap.paused_videos {
            let rem = (|| -> Option<f64> {
                let step = profile
                    .video_step_latency(pv.resolution, pv.frames, pv.sp_degree)
                    .ok()?;
                let vae = profile.vae_decode_latency(pv.resolution, pv.frames).ok()?;
                let resume = profile.resume_overhead_ms(pv.sp_degree).ok()?;
                Some(resume + f64::from(pv.steps_total - pv.steps_done) * step + vae)
            })()
            .unwrap_or(f64::INFINITY);
            waiting.push((
                rem,
                pv.arrival_ms,
                pv.id,
                Waiting::PausedVideo(pv.id, pv.sp_degree),
            ));
        }
        waiting.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut free = snap.free_gpus();
        let mut unplaced: Vec<(f64, usize)> = Vec::new();
        for (rem, _, _, w) in &waiting {
            match *w {
                Waiting::Image(id, res) => {
                    if let Some(g) = free.intersect(snap.image_pool()).lowest() {
                        free.remove(g);
                        plan.push_batch(PlannedBatch {
                            gpu: g,
                            resolution: res,
                            members: vec![id],
                        });
                    } else {
                        unplaced.push((*rem, 1));
                    }
                }
                Waiting::FreshVideo(id) => {
                    if let Some(set) = free
                        .intersect(snap.video_pool())
                        .take_lowest(degree as usize)
                    {
                        free = free.minus(set);
                        plan.push_video(
                            id,
                            VideoAction::Resume {
                                degree,
                                gpu_set: set,
                            },
                        );
                    } else {
                        unplaced.push((*rem, degree as usize));
                    }
                }
                Waiting::PausedVideo(id, d) => {
                    if let Some(set) = free.intersect(snap.video_pool()).take_lowest(d as usize) {
                        free = free.minus(set);
                        plan.push_video(
                            id,
                            VideoAction::Resume {
                                degree: d,
                                gpu_set: set,
                            },
                        );
                    } else {
                        unplaced.push((*rem, d as usize));
                    }
                }
            }
        }

        // Preempt: each unplaced job may pause one running video whose
        // remaining time exceeds its own. Remaining-time priority only; no
        // slack awareness. Devices already being released by latched pauses
        // count against demand first so one waiting job never claims two
        // victims across rounds.
        let mut pending_credit: usize = snap
            .running_videos
            .iter()
            .filter(|v| v.pause_pending)
            .map(|v| v.gpu_set.len())
            .sum();
        unplaced.retain(|&(_, need)| {
            if pending_credit >= need {
                pending_credit -= need;
                false
            } else {
                true
            }
        });
        if !unplaced.is_empty() {
            let mut running: Vec<(f64, RequestId)> = snap
                .running_videos
                .iter()
                .filter(|v| !v.pause_pending)
                .filter_map(|v| {
                    let step = profile
                        .video_step_latency(v.resolution, v.frames, v.sp_degree)
                        .ok()?;
                    let vae = profile.vae_decode_latency(v.resolution, v.frames).ok()?;
                    let rem = f64::from(v.steps_total - v.steps_done) * step + vae;
                    // A boundary pause needs a member device able to hold
                    // the paused state.
                    if v.at_boundary {
                        let has_host = v
                            .gpu_set
                            .iter()
                            .any(|g| snap.gpus[g].paused_resident.is_none());
                        if !has_host {
                            return None;
                        }
                    }
                    Some((rem, v.id))
                })
                .collect();
            running.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut victims = running.into_iter();
            for (waiting_rem, _) in &unplaced {
                let Some((running_rem, victim)) = victims.next() else {
                    break;
                };
                if *waiting_rem < running_rem {
                    plan.push_video(victim, VideoAction::Pause);
                }
            }
        }
        plan
    }
}

/// Arrival order with a static per-resolution parallel degree; a video
/// waits until its full gang is free.
pub struct Rasp {
    cfg: BaselineConfig,
}

impl Rasp {
    pub fn new(cfg: BaselineConfig) -> Self {
        Rasp { cfg }
    }
}

impl Scheduler for Rasp {
    fn name(&self) -> &str {
        "rasp"
    }

    fn plan(&self, snap: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        let mut plan = Plan::empty();
        let jobs = queued_jobs(snap);
        let pool_len = snap.video_pool().len();
        dispatch_strict(
            snap,
            &jobs,
            |job| {
                let want = self
                    .cfg
                    .rasp_table
                    .get(&job.resolution)
                    .copied()
                    .unwrap_or(1);
                capped_degree(profile, pool_len, want)
            },
            &mut plan,
        );
        plan
    }
}

/// Arrival-order dispatch plus the standalone slack-ranked preemption rule:
/// waiting images may pause positive-slack videos, and paused videos resume
/// on the budget-tight or queue-idle conditions. The mechanism-ablation
/// rung between plain arrival order and the full policy.
pub struct FcfsPreempt {
    cfg: BaselineConfig,
    safety_margin_steps: u32,
}

impl FcfsPreempt {
    pub fn new(cfg: BaselineConfig, safety_margin_steps: u32) -> Self {
        FcfsPreempt {
            cfg,
            safety_margin_steps,
        }
    }
}

impl Scheduler for FcfsPreempt {
    fn name(&self) -> &str {
        "fcfs-preempt"
    }

    fn enforces_victim_slack_safety(&self) -> bool {
        true
    }

    fn plan(&self, snap: &ClusterSnapshot, profile: &LatencyProfile) -> Plan {
        let mut plan = Plan::empty();
        let now = snap.now_ms;
        let pool_len = snap.video_pool().len();
        let Some(degree) = capped_degree(profile, pool_len, self.cfg.baseline_video_sp) else {
            return plan;
        };
        let mut free = snap.free_gpus();
        let mut wake: Option<f64> = None;
        let push_wake = |wake: &mut Option<f64>, t: f64| {
            if t > now {
                *wake = Some(wake.map_or(t, |w: f64| w.min(t)));
            }
        };

        // Budget-tight resumes take priority over new work.
        for pv in &snap.paused_videos {
            let Ok(step) = profile.video_step_latency(pv.resolution, pv.frames, pv.sp_degree)
            else {
                continue;
            };
            let Ok(vae) = profile.vae_decode_latency(pv.resolution, pv.frames) else {
                continue;
            };
            let Ok(resume) = profile.resume_overhead_ms(pv.sp_degree) else {
                continue;
            };
            let rem = f64::from(pv.steps_total - pv.steps_done) * step;
            let margin = f64::from(self.safety_margin_steps) * step;
            let t_tight = pv.deadline_ms - (rem + vae + resume + margin);
            if now >= t_tight {
                if let Some(set) = free
                    .intersect(snap.video_pool())
                    .take_lowest(pv.sp_degree as usize)
                {
                    free = free.minus(set);
                    plan.push_video(
                        pv.id,
                        VideoAction::Resume {
                            degree: pv.sp_degree,
                            gpu_set: set,
                        },
                    );
                }
            } else {
                push_wake(&mut wake, t_tight);
            }
        }

        // Arrival-order dispatch; blocked jobs are skipped, not barriers,
        // so preemption can serve work stuck behind an oversized head.
        let jobs = queued_jobs(snap);
        let mut waiting_images = 0usize;
        for job in &jobs {
            match job.kind {
                RequestKind::Video => {
                    if let Some(set) = free
                        .intersect(snap.video_pool())
                        .take_lowest(degree as usize)
                    {
                        free = free.minus(set);
                        plan.push_video(
                            job.id,
                            VideoAction::Resume {
                                degree,
                                gpu_set: set,
                            },
                        );
                    }
                }
                RequestKind::Image => {
                    if let Some(g) = free.intersect(snap.image_pool()).lowest() {
                        free.remove(g);
                        plan.push_batch(PlannedBatch {
                            gpu: g,
                            resolution: job.resolution,
                            members: vec![job.id],
                        });
                    } else {
                        waiting_images += 1;
                    }
                }
            }
        }

        // Slack-ranked victims for still-waiting images. Devices freed by a
        // boundary pause are usable immediately; mid-step pauses land at
        // the victim's next boundary.
        if waiting_images > 0 {
            let victims = select_victims(snap, profile, waiting_images);
            let mut reclaimed = GpuSet::EMPTY;
            for id in &victims {
                plan.push_video(*id, VideoAction::Pause);
                if let Some(v) = snap.running_video(*id) {
                    if v.at_boundary {
                        reclaimed = reclaimed.union(v.gpu_set);
                    }
                }
            }
            let mut pool = reclaimed.intersect(snap.image_pool());
            let placed: Vec<RequestId> = plan
                .image_batches
                .iter()
                .flat_map(|b| b.members.iter().copied())
                .collect();
            for job in &jobs {
                if job.kind != RequestKind::Image || placed.contains(&job.id) {
                    continue;
                }
                let Some(g) = pool.lowest() else {
                    break;
                };
                pool.remove(g);
                plan.push_batch(PlannedBatch {
                    gpu: g,
                    resolution: job.resolution,
                    members: vec![job.id],
                });
            }
        }

        // Queue-idle resumes: with no image waiting, paused videos take any
        // remaining free devices in deadline order.
        if waiting_images == 0 && snap.queued_images.is_empty() {
            let mut by_deadline: Vec<_> = snap
                .paused_videos
                .iter()
                .filter(|pv| !plan.video_actions.iter().any(|(id, _)| *id == pv.id))
                .collect();
            by_deadline.sort_by(|a, b| {
                a.deadline_ms
                    .total_cmp(&b.deadline_ms)
                    .then(a.id.cmp(&b.id))
            });
            for pv in by_deadline {
                if let Some(set) = free
                    .intersect(snap.video_pool())
                    .take_lowest(pv.sp_degree as usize)
                {
                    free = free.minus(set);
                    plan.push_video(
                        pv.id,
                        VideoAction::Resume {
                            degree: pv.sp_degree,
                            gpu_set: set,
                        },
                    );
                }
            }
        }

        plan.wake_at_ms = wake;
        plan
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::profile::LatencyProfile;
    use crate::sched::BaselineConfig;
    use crate::sim::{run_sim, SimConfig};
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

    #[test]
    fn fcfs_image_blocks_behind_video_head() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            image(1, ResolutionClass::R720, 1.0, 2101.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let sched = Fcfs::new(BaselineConfig::default());
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        // The image waits for the full video: 4780 then 1400 more.
        assert_abs_diff_eq!(
            res.records[1].first_dispatch_ms.unwrap(),
            4780.0,
            epsilon = 1e-6
        );
        assert!(!res.records[1].met);
        assert_eq!(res.totals.pauses, 0);
    }

    #[test]
    fn fcfs_videos_monopolize_full_cluster() {
        let p = profile();
        let mut trace: Vec<Request> = (0..8)
            .map(|i| video(i, ResolutionClass::R256, 0.0, 30000.0))
            .collect();
        trace.push(image(8, ResolutionClass::R720, 1.0, 30000.0));
        let cfg = SimConfig {
            cluster_size: 8,
            ..SimConfig::default()
        };
        let sched = Fcfs::new(BaselineConfig::default());
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        assert_abs_diff_eq!(
            res.records[8].first_dispatch_ms.unwrap(),
            4780.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn sjf_orders_by_estimated_runtime() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R720, 0.0, 40000.0),
            image(1, ResolutionClass::R720, 0.0, 2100.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let sched = Sjf::new(BaselineConfig::default());
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        // Image (1.4 s estimate) goes first despite equal arrival.
        assert_abs_diff_eq!(
            res.records[1].first_dispatch_ms.unwrap(),
            0.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            res.records[0].first_dispatch_ms.unwrap(),
            1400.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn srtf_pauses_largest_remaining_video() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 30000.0),
            video(1, ResolutionClass::R480, 0.0, 30000.0),
            image(2, ResolutionClass::R720, 100.0, 30000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 2,
            ..SimConfig::default()
        };
        let sched = Srtf::new(BaselineConfig::default());
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        assert_eq!(
            res.records[0].pauses, 0,
            "smaller-remaining video untouched"
        );
        assert_eq!(res.records[1].pauses, 1, "largest-remaining video paused");
        // Pause latched at 100 executes at the 480p video's first boundary
        // (350.6); the freed device carries the 3.4 us pause overhead.
        assert_abs_diff_eq!(
            res.records[2].first_dispatch_ms.unwrap(),
            350.6034,
            epsilon = 1e-6
        );
        assert!(res.records.iter().all(|r| r.completion_ms.is_some()));
    }

    #[test]
    fn srtf_never_pauses_nearly_finished_video() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            video(1, ResolutionClass::R256, 4300.0, 12000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let sched = Srtf::new(BaselineConfig::default());
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        assert_eq!(res.records[0].pauses, 0);
        assert_abs_diff_eq!(
            res.records[0].completion_ms.unwrap(),
            4780.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn rasp_waits_for_full_gang() {
        let p = profile();
        let trace = vec![
            image(0, ResolutionClass::R720, 0.0, 30000.0),
            video(1, ResolutionClass::R720, 0.5, 40000.0),
            video(2, ResolutionClass::R256, 1.0, 40000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 4,
            ..SimConfig::default()
        };
        let sched = Rasp::new(BaselineConfig::default());
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        // The 720p video needs all 4 devices, so it waits for the image;
        // the 256p video is stuck behind it despite idle capacity.
        assert_abs_diff_eq!(
            res.records[1].first_dispatch_ms.unwrap(),
            1400.0,
            epsilon = 1e-6
        );
        assert_eq!(res.records[1].gpus_used.len(), 4);
        let denoise_end = 1400.0 + 30.0 + 50.0 * 265.30612244897964;
        assert_abs_diff_eq!(
            res.records[2].first_dispatch_ms.unwrap(),
            denoise_end,
            epsilon = 1e-6
        );
        assert_eq!(res.totals.pauses, 0);
        assert_eq!(res.totals.sp_switches, 0);
    }

    #[test]
    fn preempt_variant_rescues_waiting_image() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            image(1, ResolutionClass::R720, 100.0, 2000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 1,
            ..SimConfig::default()
        };
        let sched = FcfsPreempt::new(BaselineConfig::default(), 1);
        let res = run_sim(&trace, &p, &sched, &cfg).unwrap();
        let img = &res.records[1];
        // Image dispatches at the video's first boundary (118.2 plus the
        // pause overhead) and meets its deadline; the video resumes
        // afterwards and still meets.
        assert_abs_diff_eq!(img.first_dispatch_ms.unwrap(), 118.2034, epsilon = 1e-6);
        assert!(img.met);
        assert_eq!(res.records[0].pauses, 1);
        assert!(res.records[0].met);
        assert!(res.pause_audit.iter().all(|a| a.slack_ms > 0.0));
    }

    #[test]
    fn nonpreemptive_baselines_never_pause() {
        let p = profile();
        let trace = vec![
            video(0, ResolutionClass::R256, 0.0, 7170.0),
            video(1, ResolutionClass::R480, 10.0, 20000.0),
            image(2, ResolutionClass::R720, 20.0, 4000.0),
            image(3, ResolutionClass::R1024, 30.0, 9000.0),
        ];
        let cfg = SimConfig {
            cluster_size: 2,
            ..SimConfig::default()
        };
        for sched in [
            Box::new(Fcfs::new(BaselineConfig::default())) as Box<dyn Scheduler>,
            Box::new(Sjf::new(BaselineConfig::default())),
            Box::new(Rasp::new(BaselineConfig::default())),
        ] {
            let res = run_sim(&trace, &p, sched.as_ref(), &cfg).unwrap();
            assert_eq!(res.totals.pauses, 0, "{}", sched.name());
            assert_eq!(res.totals.resumes, 0, "{}", sched.name());
            assert_eq!(res.totals.sp_switches, 0, "{}", sched.name());
            assert_eq!(res.totals.batched_images, 0, "{}", sched.name());
        }
    }
}
