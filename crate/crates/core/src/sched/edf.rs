//! Deadline-ordered image batching.
//!
//! Queued images are scanned in earliest-deadline-first order. Each image
//! joins the first open batch of its resolution whose enlarged latency
//! still lets every member (itself included) meet its deadline; otherwise
//! it opens a new batch while open slots remain. An image that cannot meet
//! its deadline even alone is dispatched alone anyway (work is never
//! dropped) but contributes nothing to the option's value.

use crate::profile::{LatencyProfile, ResolutionClass};
use crate::sim::QueuedImageView;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub resolution: ResolutionClass,
    /// Members in deadline order.
    pub members: Vec<u64>,
    /// Earliest member arrival, for hold-open bookkeeping.
    pub oldest_arrival_ms: f64,
    /// Completion estimate at the current size.
    pub completion_ms: f64,
    /// True when the batch exists only to flush a deadline-infeasible head.
    pub salvage: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchPlan {
    pub batches: Vec<BatchSpec>,
    /// Images in value-counted batches (salvage dispatches excluded).
    pub counted: u32,
    /// Sum over counted images of 1 / (1 + max(0, slack_sec)).
    pub urgency_score: f64,
}

/// Plan batches for `slots` free image devices at time `now`. With
/// `batching` false every dispatch is a singleton. Returns the plan in
/// EDF dispatch order.
pub fn plan_image_batches(
    queued: &[QueuedImageView],
    slots: usize,
    now_ms: f64,
    profile: &LatencyProfile,
    batching: bool,
) -> BatchPlan {
    let mut order: Vec<&QueuedImageView> = queued.iter().collect();
    order.sort_by(|a, b| {
        a.deadline_ms
            .total_cmp(&b.deadline_ms)
            .then(a.arrival_ms.total_cmp(&b.arrival_ms))
            .then(a.id.cmp(&b.id))
    });

    let mut plan = BatchPlan::default();
    if slots == 0 {
        return plan;
    }

    for img in order {
        let solo = match profile.image_batch_latency(img.resolution, 1) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let solo_completion = now_ms + solo;
        if solo_completion > img.deadline_ms {
            // Deadline already unreachable: flush alone, value zero.
            if plan.batches.len() < slots {
                plan.batches.push(BatchSpec {
                    resolution: img.resolution,
                    members: vec![img.id],
                    oldest_arrival_ms: img.arrival_ms,
                    completion_ms: solo_completion,
                    salvage: true,
                });
            }
            continue;
        }
        let mut joined = false;
        if batching {
            for b in plan.batches.iter_mut() {
                if b.salvage || b.resolution != img.resolution {
                    continue;
                }
                let grown =
                    match profile.image_batch_latency(img.resolution, b.members.len() as u32 + 1) {
                        Ok(l) => l,
                        Err(_) => continue,
                    };
                let completion = now_ms + grown;
                if completion > img.deadline_ms {
                    continue;
                }
                let members_meet = b.members.iter().all(|&m| {
                    queued
                        .iter()
                        .find(|q| q.id == m)
                        .is_some_and(|q| completion <= q.deadline_ms)
                });
                if members_meet {
                    b.members.push(img.id);
                    b.completion_ms = completion;
                    joined = true;
                    break;
                }
            }
        }
        if !joined && plan.batches.len() < slots {
            plan.batches.push(BatchSpec {
                resolution: img.resolution,
                members: vec![img.id],
                oldest_arrival_ms: img.arrival_ms,
                completion_ms: solo_completion,
                salvage: false,
            });
        }
    }

    for b in &plan.batches {
        if b.salvage {
            continue;
        }
        for &m in &b.members {
            let q = queued.iter().find(|q| q.id == m).expect("member is queued");
            let slack_sec = (q.deadline_ms - b.completion_ms).max(0.0) / 1000.0;
            plan.counted += 1;
            plan.urgency_score += 1.0 / (1.0 + slack_sec);
        }
    }
    plan
}

/// Remaining margin before any member of a planned batch would miss its
/// deadline if dispatch were delayed: min over members of
/// (deadline - predicted completion), clamped at zero.
pub fn dynamic_wait_budget_ms(batch: &BatchSpec, queued: &[QueuedImageView]) -> f64 {
    let mut budget = f64::INFINITY;
    for &m in &batch.members {
        if let Some(q) = queued.iter().find(|q| q.id == m) {
            budget = budget.min(q.deadline_ms - batch.completion_ms);
        }
    }
    if budget.is_finite() {
        budget.max(0.0)
    } else {
        0.0
    }
}
