//! Shared fixtures for the integration suite: a random scenario generator
//! and a deliberately naive reference evaluator.
//!
//! The reference evaluator repeats none of the library's machinery: frame
//! assignments come from exhaustive search over injective mappings instead
//! of a Hungarian solver, trajectory identity credit from recursive
//! enumeration, and the track-quality numbers from direct timeline scans.
//! Scenarios use continuous coordinates, so cost ties between distinct
//! pairs have probability zero and both evaluators must pick the same
//! matching.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

use skymot::geom::PixelBox;
use skymot::metrics::FrameObjects;

// ---------------------------------------------------------------------------
// Scenario generation
// ---------------------------------------------------------------------------

/// Per-frame ground truth and hypotheses, ids and boxes, continuous coords.
pub type Scenario = Vec<(FrameObjects, FrameObjects)>;

/// A random tracking scenario with up to `max_objects` ground-truth tracks
/// over up to `max_frames` frames. Hypotheses are corrupted copies of the
/// ground truth: jittered boxes, dropped detections, occasional id swaps,
/// plus unrelated clutter tracks.
pub fn random_scenario(rng: &mut ChaCha8Rng, max_objects: usize, max_frames: usize) -> Scenario {
    loop {
        let n_frames = rng.gen_range(1..=max_frames);
        let n_gt = rng.gen_range(1..=max_objects);

        struct Born {
            id: u32,
            birth: usize,
            death: usize,
            x: f64,
            y: f64,
            vx: f64,
            vy: f64,
            w: f64,
            h: f64,
        }
        let tracks: Vec<Born> = (0..n_gt as u32)
            .map(|id| {
                let birth = rng.gen_range(0..n_frames);
                let death = rng.gen_range(birth..n_frames);
                Born {
                    id: id + 1,
                    birth,
                    death,
                    x: rng.gen_range(0.0..120.0),
                    y: rng.gen_range(0.0..120.0),
                    vx: rng.gen_range(-6.0..6.0),
                    vy: rng.gen_range(-6.0..6.0),
                    w: rng.gen_range(6.0..18.0),
                    h: rng.gen_range(6.0..18.0),
                }
            })
            .collect();

        // How each track's hypothesis behaves for the whole scenario.
        let drop_track: Vec<bool> = tracks.iter().map(|_| rng.gen_bool(0.15)).collect();
        let relabel: Vec<u32> = tracks
            .iter()
            .map(|t| if rng.gen_bool(0.3) { t.id + 100 } else { t.id })
            .collect();
        // One optional id swap between two tracks from a chosen frame on.
        let swap = if n_gt >= 2 && rng.gen_bool(0.35) {
            let a = rng.gen_range(0..n_gt);
            let mut b = rng.gen_range(0..n_gt);
            while b == a {
                b = rng.gen_range(0..n_gt);
            }
            Some((a, b, rng.gen_range(0..n_frames)))
        } else {
            None
        };

        let mut scenario = Vec::with_capacity(n_frames);
        let mut gt_seen = false;
        for f in 0..n_frames {
            let mut gt: FrameObjects = Vec::new();
            let mut hyp: FrameObjects = Vec::new();
            for (i, t) in tracks.iter().enumerate() {
                if f < t.birth || f > t.death {
                    continue;
                }
                let cx = t.x + t.vx * f as f64;
                let cy = t.y + t.vy * f as f64;
                let b = PixelBox::new(cx - t.w / 2.0, cy - t.h / 2.0, cx + t.w / 2.0, cy + t.h / 2.0);
                gt.push((t.id, b));
                gt_seen = true;

                if drop_track[i] || rng.gen_bool(0.12) {
                    continue;
                }
                // Jitter: usually small (keeps IoU above the gate), sometimes
                // large enough to break the match.
                let amp = if rng.gen_bool(0.2) {
                    t.w.max(t.h)
                } else {
                    rng.gen_range(0.0..0.12) * t.w.min(t.h)
                };
                let dx = rng.gen_range(-amp..=amp);
                let dy = rng.gen_range(-amp..=amp);
                let mut id = relabel[i];
                if let Some((a, bidx, from)) = swap {
                    if f >= from {
                        if i == a {
                            id = relabel[bidx];
                        } else if i == bidx {
                            id = relabel[a];
                        }
                    }
                }
                hyp.push((
                    id,
                    PixelBox::new(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy),
                ));
            }
            // Clutter far away from everything real.
            if rng.gen_bool(0.25) {
                let cx = rng.gen_range(500.0..600.0);
                let cy = rng.gen_range(500.0..600.0);
                hyp.push((
                    900 + rng.gen_range(0..3),
                    PixelBox::new(cx, cy, cx + 10.0, cy + 10.0),
                ));
            }
            // Ids must be unique per frame on each side; clutter can collide
            // with itself when drawn twice, so dedupe.
            hyp.sort_by_key(|(id, _)| *id);
            hyp.dedup_by_key(|(id, _)| *id);
            scenario.push((gt, hyp));
        }
        if gt_seen {
            return scenario;
        }
    }
}

// ---------------------------------------------------------------------------
// Reference evaluation
// ---------------------------------------------------------------------------

/// Everything the reference evaluator reports; mirrors the meaning (not the
/// code) of the library's report.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
    pub gt_tracks: usize,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub idtp: usize,
    pub distance_sum: f64,
    pub frames: usize,
}

impl OracleReport {
    pub fn mota(&self) -> f64 {
        100.0 * (1.0 - (self.misses + self.false_positives + self.id_switches) as f64 / self.gt_total as f64)
    }
    pub fn motp(&self) -> f64 {
        100.0 * (1.0 - self.distance_sum / self.matches as f64)
    }
    pub fn motal(&self) -> f64 {
        100.0
            * (1.0
                - ((self.misses + self.false_positives) as f64
                    + (self.id_switches as f64 + 1.0).log10())
                    / self.gt_total as f64)
    }
    pub fn recall(&self) -> f64 {
        100.0 * self.matches as f64 / self.gt_total as f64
    }
    pub fn precision(&self) -> f64 {
        100.0 * self.matches as f64 / self.hyp_total as f64
    }
    pub fn far(&self) -> f64 {
        self.false_positives as f64 / self.frames as f64
    }
    pub fn idf1(&self) -> f64 {
        100.0 * 2.0 * self.idtp as f64 / (self.gt_total + self.hyp_total) as f64
    }
    pub fn idp(&self) -> f64 {
        100.0 * self.idtp as f64 / self.hyp_total as f64
    }
    pub fn idr(&self) -> f64 {
        100.0 * self.idtp as f64 / self.gt_total as f64
    }
}

fn oracle_iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    let area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// All injective gated assignments between the free objects, best by (most
/// matches, then least total distance).
fn best_assignment(
    gt: &[(u32, PixelBox)],
    hyp: &[(u32, PixelBox)],
    gate: f64,
) -> Vec<(u32, u32, f64)> {
    fn rec(
        gt: &[(u32, PixelBox)],
        hyp: &[(u32, PixelBox)],
        gate: f64,
        row: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<(u32, u32, f64)>,
        best: &mut (usize, f64, Vec<(u32, u32, f64)>),
    ) {
        if row == gt.len() {
            let count = current.len();
            let cost: f64 = current.iter().map(|&(_, _, d)| d).sum();
            if count > best.0 || (count == best.0 && cost < best.1) {
                *best = (count, cost, current.clone());
            }
            return;
        }
        // Leave this ground-truth object unmatched.
        rec(gt, hyp, gate, row + 1, used, current, best);
        for j in 0..hyp.len() {
            if used[j] {
                continue;
            }
            let ov = oracle_iou(&gt[row].1, &hyp[j].1);
            if ov > gate {
                used[j] = true;
                current.push((gt[row].0, hyp[j].0, 1.0 - ov));
                rec(gt, hyp, gate, row + 1, used, current, best);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0usize, f64::INFINITY, Vec::new());
    rec(
        gt,
        hyp,
        gate,
        0,
        &mut vec![false; hyp.len()],
        &mut Vec::new(),
        &mut best,
    );
    best.2
}

/// Maximum total per-frame gated overlap over every injective pairing of
/// ground-truth and hypothesis trajectories.
fn brute_idtp(overlap: &BTreeMap<(u32, u32), usize>, gt_ids: &[u32], hyp_ids: &[u32]) -> usize {
    fn rec(
        overlap: &BTreeMap<(u32, u32), usize>,
        gt_ids: &[u32],
        hyp_ids: &[u32],
        row: usize,
        used: &mut Vec<bool>,
    ) -> usize {
        if row == gt_ids.len() {
            return 0;
        }
        let mut best = rec(overlap, gt_ids, hyp_ids, row + 1, used);
        for j in 0..hyp_ids.len() {
            if !used[j] {
                used[j] = true;
                let credit = overlap.get(&(gt_ids[row], hyp_ids[j])).copied().unwrap_or(0);
                best = best.max(credit + rec(overlap, gt_ids, hyp_ids, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    rec(overlap, gt_ids, hyp_ids, 0, &mut vec![false; hyp_ids.len()])
}

/// Evaluate a scenario the slow, obvious way.
pub fn oracle_evaluate(scenario: &Scenario, gate: f64) -> OracleReport {
    // Frame matching with previous-frame carry-over and exhaustive
    // assignment for the remainder.
    let mut prev: BTreeMap<u32, u32> = BTreeMap::new();
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    let mut matches = 0;
    let mut misses = 0;
    let mut false_positives = 0;
    let mut id_switches = 0;
    let mut distance_sum = 0.0;
    let mut gt_total = 0;
    let mut hyp_total = 0;
    // Per ground-truth id: matched flag per frame it exists on.
    let mut timelines: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();

    for (gt, hyp) in scenario {
        let gt_ids: BTreeSet<u32> = gt.iter().map(|(id, _)| *id).collect();
        let hyp_ids: BTreeSet<u32> = hyp.iter().map(|(id, _)| *id).collect();
        assert_eq!(gt_ids.len(), gt.len(), "duplicate gt id in scenario");
        assert_eq!(hyp_ids.len(), hyp.len(), "duplicate hyp id in scenario");

        let box_of = |objs: &FrameObjects, id: u32| -> PixelBox {
            objs.iter().find(|(i, _)| *i == id).map(|(_, b)| *b).unwrap()
        };

        // Carry over still-valid pairs.
        let mut frame_matches: Vec<(u32, u32, f64)> = Vec::new();
        for (&g, &h) in prev.iter() {
            if gt_ids.contains(&g) && hyp_ids.contains(&h) {
                let ov = oracle_iou(&box_of(gt, g), &box_of(hyp, h));
                if ov > gate {
                    frame_matches.push((g, h, 1.0 - ov));
                }
            }
        }
        let taken_gt: BTreeSet<u32> = frame_matches.iter().map(|&(g, _, _)| g).collect();
        let taken_hyp: BTreeSet<u32> = frame_matches.iter().map(|&(_, h, _)| h).collect();
        let free_gt: Vec<(u32, PixelBox)> = gt
            .iter()
            .filter(|(id, _)| !taken_gt.contains(id))
            .cloned()
            .collect();
        let free_hyp: Vec<(u32, PixelBox)> = hyp
            .iter()
            .filter(|(id, _)| !taken_hyp.contains(id))
            .cloned()
            .collect();
        frame_matches.extend(best_assignment(&free_gt, &free_hyp, gate));

        for &(g, h, d) in &frame_matches {
            if let Some(&was) = last.get(&g) {
                if was != h {
                    id_switches += 1;
                }
            }
            last.insert(g, h);
            distance_sum += d;
        }
        prev = frame_matches.iter().map(|&(g, h, _)| (g, h)).collect();

        matches += frame_matches.len();
        misses += gt.len() - frame_matches.len();
        false_positives += hyp.len() - frame_matches.len();
        gt_total += gt.len();
        hyp_total += hyp.len();

        let matched_now: BTreeSet<u32> = frame_matches.iter().map(|&(g, _, _)| g).collect();
        for (id, _) in gt {
            timelines.entry(*id).or_default().push(matched_now.contains(id));
        }
        for (gid, gb) in gt {
            for (hid, hb) in hyp {
                if oracle_iou(gb, hb) > gate {
                    *overlap.entry((*gid, *hid)).or_default() += 1;
                }
            }
        }
    }

    // Track-quality classification and fragmentation from the timelines.
    let mut mostly_tracked = 0;
    let mut partially_tracked = 0;
    let mut mostly_lost = 0;
    let mut fragmentations = 0;
    for flags in timelines.values() {
        let present = flags.len();
        let matched = flags.iter().filter(|&&m| m).count();
        let ratio = matched as f64 / present as f64;
        if ratio > 0.8 {
            mostly_tracked += 1;
        } else if ratio < 0.2 {
            mostly_lost += 1;
        } else {
            partially_tracked += 1;
        }
        let mut runs = 0;
        let mut in_run = false;
        for &m in flags {
            if m && !in_run {
                runs += 1;
            }
            in_run = m;
        }
        if runs > 1 {
            fragmentations += runs - 1;
        }
    }

    let gt_ids: Vec<u32> = timelines.keys().copied().collect();
    let hyp_ids: Vec<u32> = {
        let mut ids: BTreeSet<u32> = BTreeSet::new();
        for (_, hyp) in scenario {
            ids.extend(hyp.iter().map(|(id, _)| *id));
        }
        ids.into_iter().collect()
    };
    let idtp = brute_idtp(&overlap, &gt_ids, &hyp_ids);

    OracleReport {
        matches,
        misses,
        false_positives,
        id_switches,
        fragmentations,
        gt_total,
        hyp_total,
        gt_tracks: timelines.len(),
        mostly_tracked,
        partially_tracked,
        mostly_lost,
        idtp,
        distance_sum,
        frames: scenario.len(),
    }
}

/// Equal within `tol`, treating two NaNs as equal (both sides undefined).
pub fn close_or_both_nan(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol
}
