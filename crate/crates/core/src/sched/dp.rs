//! Exact per-round allocation solver.
//!
//! Each group (one video) offers a small candidate list; each candidate
//! claims a fixed GPU set and carries a (recoverable, score) value. The
//! solver picks one candidate per group with pairwise-disjoint claims drawn
//! from the available mask, then hands every remaining free device to the
//! image option for that residual count. The objective is lexicographic:
//! maximize recoverable count, then total score.
//!
//! States are keyed by the exact residual GPU mask (not just its size), so
//! overlapping candidate anchors are resolved exactly; with at most 64
//! devices and a handful of groups the state space stays tiny.

use std::collections::BTreeMap;

use crate::sim::GpuSet;

/// Tie order across candidate kinds: earlier wins on equal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CandKind {
    Hold,
    Continue,
    Pause,
    ScaleDown,
    ScaleUp,
    Resume,
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    pub kind: CandKind,
    /// GPUs this candidate takes out of the available mask. Empty for
    /// holds and pauses (a pause returns its devices to the round's pool).
    pub claim: GpuSet,
    /// 1 when the action keeps the video's deadline reachable.
    pub recoverable: u32,
    pub score: f64,
}

/// Value of dispatching images on `g` free devices, for each `g`.
#[derive(Debug, Clone, Default)]
pub struct ImageOption {
    pub recoverable: u32,
    pub score: f64,
    /// Images dispatched under this option (feasible or not).
    pub dispatched: u32,
    /// Devices actually used (may be fewer than `g`).
    pub gpus_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// Chosen candidate index per group.
    pub choices: Vec<usize>,
    /// Residual free mask after all video claims.
    pub residual: GpuSet,
    pub recoverable: u32,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
struct State {
    recoverable: u32,
    score: f64,
    back: Option<(u64, usize)>, // (previous mask, candidate index)
}

/// `image_options[g]` must be present for every `g` in
/// `0..=image_budget(avail)`. `image_budget` maps a residual video-side
/// mask to the image-pool device count that would be free under it.
///
/// Every group must contain at least one candidate that fits any reachable
/// mask (in practice a zero-claim hold or a continue on the group's own
/// devices); otherwise no joint assignment exists and the solve panics.
pub fn dp_solve(
    groups: &[Vec<Candidate>],
    avail: GpuSet,
    image_options: &[ImageOption],
    image_budget: impl Fn(GpuSet) -> usize,
) -> DpSolution {
    let mut layer: BTreeMap<u64, State> = BTreeMap::new();
    layer.insert(
        avail.bits(),
        State {
            recoverable: 0,
            score: 0.0,
            back: None,
        },
    );
    let mut layers: Vec<BTreeMap<u64, State>> = vec![layer];

    for cands in groups {
        let prev = layers.last().unwrap();
        let mut next: BTreeMap<u64, State> = BTreeMap::new();
        for (&mask_bits, state) in prev {
            let mask = GpuSet::from_bits(mask_bits);
            for (ci, c) in cands.iter().enumerate() {
                if !c.claim.is_subset_of(mask) {
                    continue;
                }
                let new_bits = mask.minus(c.claim).bits();
                let cand_state = State {
                    recoverable: state.recoverable + c.recoverable,
                    score: state.score + c.score,
                    back: Some((mask_bits, ci)),
                };
                match next.get(&new_bits) {
                    Some(existing)
                        if (existing.recoverable, existing.score)
                            >= (cand_state.recoverable, cand_state.score) => {}
                    _ => {
                        // Strictly better only: the first writer among equals
                        // wins, which fixes ties by group-major candidate
                        // order.
                        let replace = match next.get(&new_bits) {
                            None => true,
                            Some(existing) => {
                                (cand_state.recoverable, cand_state.score)
                                    > (existing.recoverable, existing.score)
                            }
                        };
                        if replace {
                            next.insert(new_bits, cand_state);
                        }
                    }
                }
            }
        }
        debug_assert!(
            !next.is_empty(),
            "group without a feasible fallback candidate"
        );
        layers.push(next);
    }

    // Terminal: add the image option for each residual mask and pick the
    // lexicographic best: recoverable desc, score desc, images dispatched
    // desc, devices used asc, lowest mask.
    let last = layers.last().unwrap();
    let mut best: Option<(u32, f64, u32, usize, u64)> = None;
    let mut best_mask = avail.bits();
    for (&mask_bits, state) in last {
        let mask = GpuSet::from_bits(mask_bits);
        let g = image_budget(mask);
        let opt = &image_options[g];
        let rec = state.recoverable + opt.recoverable;
        let score = state.score + opt.score;
        let used = avail.minus(mask).len() + opt.gpus_used;
        let key = (rec, score, opt.dispatched, used, mask_bits);
        let better = match &best {
            None => true,
            Some(b) => {
                (key.0, key.1).partial_cmp(&(b.0, b.1)) == Some(std::cmp::Ordering::Greater)
                    || ((key.0, key.1) == (b.0, b.1)
                        && (key.2 > b.2
                            || (key.2 == b.2 && (key.3 < b.3 || (key.3 == b.3 && key.4 < b.4)))))
            }
        };
        if better {
            best = Some(key);
            best_mask = mask_bits;
        }
    }
    let best = best.expect("dp has at least the all-hold state");

    // Backtrack.
    let mut choices = vec![0usize; groups.len()];
    let mut mask_bits = best_mask;
    for j in (0..groups.len()).rev() {
        let state = layers[j + 1][&mask_bits];
        let (prev, ci) = state.back.expect("non-root layer has back pointer");
        choices[j] = ci;
        mask_bits = prev;
    }

    DpSolution {
        choices,
        residual: GpuSet::from_bits(best_mask),
        recoverable: best.0,
        score: best.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cand(kind: CandKind, claim: &[usize], rec: u32, score: f64) -> Candidate {
        Candidate {
            kind,
            claim: claim.iter().copied().collect(),
            recoverable: rec,
            score,
        }
    }

    fn no_images(n: usize) -> Vec<ImageOption> {
        (0..=n).map(|_| ImageOption::default()).collect()
    }

    #[test]
    fn prefers_recoverable_count_over_score() {
        // Group 0: hold (rec 0, score 0.9) vs resume on {0,1} (rec 1, 0.2).
        let groups = vec![vec![
            cand(CandKind::Hold, &[], 0, 0.9),
            cand(CandKind::Resume, &[0, 1], 1, 0.2),
        ]];
        let avail: GpuSet = [0, 1].into_iter().collect();
        let sol = dp_solve(&groups, avail, &no_images(2), |m| m.len());
        assert_eq!(sol.choices, vec![1]);
        assert_eq!(sol.recoverable, 1);
        assert_abs_diff_eq!(sol.score, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn resolves_overlapping_anchors_exactly() {
        // Both groups anchor their 2-GPU resume on {0,1}; group 1 also has
        // a 1-GPU fallback on {2}. Exhaustively, the best is group 0 on
        // {0,1} and group 1 on {2}: both recoverable.
        let groups = vec![
            vec![
                cand(CandKind::Hold, &[], 0, 0.1),
                cand(CandKind::Resume, &[0, 1], 1, 0.5),
            ],
            vec![
                cand(CandKind::Hold, &[], 0, 0.1),
                cand(CandKind::Resume, &[0, 1], 1, 0.6),
                cand(CandKind::Resume, &[2], 1, 0.4),
            ],
        ];
        let avail: GpuSet = [0, 1, 2].into_iter().collect();
        let sol = dp_solve(&groups, avail, &no_images(3), |m| m.len());
        assert_eq!(sol.choices, vec![1, 2]);
        assert_eq!(sol.recoverable, 2);
        assert_abs_diff_eq!(sol.score, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn images_compete_for_residual_gpus() {
        // One video can scale up onto the last free GPU for +0.3 score, but
        // the image option on one GPU is worth a recoverable image.
        let groups = vec![vec![
            cand(CandKind::Continue, &[0], 1, 0.5),
            cand(CandKind::ScaleUp, &[0, 1], 1, 0.8),
        ]];
        let avail: GpuSet = [0, 1].into_iter().collect();
        let mut opts = no_images(2);
        opts[1] = ImageOption {
            recoverable: 1,
            score: 0.9,
            dispatched: 1,
            gpus_used: 1,
        };
        opts[2] = ImageOption {
            recoverable: 1,
            score: 0.9,
            dispatched: 1,
            gpus_used: 1,
        };
        let sol = dp_solve(&groups, avail, &opts, |m| m.len());
        assert_eq!(sol.choices, vec![0]);
        assert_eq!(sol.recoverable, 2);
        assert_abs_diff_eq!(sol.score, 1.4, epsilon = 1e-12);
    }

    #[test]
    fn ties_prefer_more_images_then_fewer_gpus() {
        // Scale-up gains nothing; the image option dispatches an extra
        // (non-recoverable, zero-score) image on the freed GPU. Equal
        // (rec, score) must fall to the option that dispatches more.
        let groups = vec![vec![
            cand(CandKind::Continue, &[0], 1, 0.5),
            cand(CandKind::ScaleUp, &[0, 1], 1, 0.5),
        ]];
        let avail: GpuSet = [0, 1].into_iter().collect();
        let mut opts = no_images(2);
        opts[1] = ImageOption {
            recoverable: 0,
            score: 0.0,
            dispatched: 1,
            gpus_used: 1,
        };
        opts[2] = ImageOption {
            recoverable: 0,
            score: 0.0,
            dispatched: 1,
            gpus_used: 1,
        };
        let sol = dp_solve(&groups, avail, &opts, |m| m.len());
        assert_eq!(
            sol.choices,
            vec![0],
            "continue frees a GPU for the pending image"
        );
        assert_eq!(sol.residual.len(), 1);
    }

    #[test]
    fn infeasible_claims_are_skipped() {
        let groups = vec![vec![
            cand(CandKind::Hold, &[], 0, 0.3),
            cand(CandKind::Resume, &[5], 1, 0.9),
        ]];
        let avail: GpuSet = [0].into_iter().collect();
        let sol = dp_solve(&groups, avail, &no_images(1), |m| m.len());
        assert_eq!(sol.choices, vec![0], "claim outside the mask is unusable");
        assert_eq!(sol.recoverable, 0);
    }

    #[test]
    fn matches_exhaustive_enumeration_on_random_instances() {
        // Small seeded instances; the oracle enumerates every combination
        // in group-major candidate order, keeping strictly better answers.
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};

        for seed in 0..200u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let n = rng.random_range(2..=5);
            let avail = GpuSet::first_n(n);
            let n_groups = rng.random_range(1..=3);
            let groups: Vec<Vec<Candidate>> = (0..n_groups)
                .map(|_| {
                    let k = rng.random_range(1..=3);
                    (0..k)
                        .map(|ci| {
                            // Candidate 0 is the zero-claim fallback every
                            // real group carries.
                            let claim_len = if ci == 0 {
                                0
                            } else {
                                rng.random_range(0..=2.min(n))
                            };
                            let mut claim = GpuSet::EMPTY;
                            while claim.len() < claim_len {
                                claim.insert(rng.random_range(0..n));
                            }
                            Candidate {
                                kind: CandKind::Hold,
                                claim,
                                recoverable: rng.random_range(0..=1),
                                score: f64::from(rng.random_range(0..100)) / 64.0,
                            }
                        })
                        .collect()
                })
                .collect();
            let options: Vec<ImageOption> = (0..=n)
                .map(|g| ImageOption {
                    recoverable: (g as u32) / 2,
                    score: f64::from(g as u32) * 0.25,
                    dispatched: g as u32,
                    gpus_used: g,
                })
                .collect();

            let sol = dp_solve(&groups, avail, &options, |m| m.len());

            // Oracle.
            let mut best: Option<(u32, f64, u32, usize, u64, Vec<usize>)> = None;
            let mut idx = vec![0usize; groups.len()];
            loop {
                let mut mask = avail;
                let mut ok = true;
                let mut rec = 0u32;
                let mut score = 0.0f64;
                for (j, &ci) in idx.iter().enumerate() {
                    let c = &groups[j][ci];
                    if !c.claim.is_subset_of(mask) {
                        ok = false;
                        break;
                    }
                    mask = mask.minus(c.claim);
                    rec += c.recoverable;
                    score += c.score;
                }
                if ok {
                    let opt = &options[mask.len()];
                    let key = (
                        rec + opt.recoverable,
                        score + opt.score,
                        opt.dispatched,
                        avail.minus(mask).len() + opt.gpus_used,
                        mask.bits(),
                    );
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            (key.0, key.1) > (b.0, b.1)
                                || ((key.0, key.1) == (b.0, b.1)
                                    && (key.2 > b.2
                                        || (key.2 == b.2
                                            && (key.3 < b.3 || (key.3 == b.3 && key.4 < b.4)))))
                        }
                    };
                    if better {
                        best = Some((key.0, key.1, key.2, key.3, key.4, idx.clone()));
                    }
                }
                // Advance group-major.
                let mut j = groups.len();
                loop {
                    if j == 0 {
                        break;
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < groups[j].len() {
                        break;
                    }
                    idx[j] = 0;
                }
                if idx.iter().all(|&x| x == 0) {
                    break;
                }
            }
            let best = best.unwrap();
            assert_eq!(sol.recoverable, best.0, "seed {seed}");
            assert_abs_diff_eq!(sol.score, best.1, epsilon = 1e-9);
            assert_eq!(sol.residual.bits(), best.4, "seed {seed}");
        }
    }
}
