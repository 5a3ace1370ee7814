//! Multi-object tracking evaluation.
//!
//! The evaluation protocol is the classical event-based one:
//!
//! 1. Per frame, ground-truth objects and hypotheses are matched. Matches
//!    from the previous frame that are still valid (both parties present,
//!    overlap above the gate) are carried over first; the remaining objects
//!    are assigned by minimum total `1 - IoU` cost, admitting only pairs
//!    with `IoU` strictly greater than the gate (0.5 by default).
//! 2. Each frame then contributes matches, misses (FN), false positives
//!    (FP), and identity mismatches (ID: a ground-truth object matched to a
//!    different hypothesis id than in its last match, however long ago).
//! 3. Totals fold into the summary scores:
//!    - `MOTA  = 100 * (1 - (FN + FP + ID) / GT_total)`, can go negative,
//!    - `MOTAL = 100 * (1 - (FN + FP + log10(ID + 1)) / GT_total)`,
//!    - `MOTP  = 100 * (1 - mean match distance)` with distance `1 - IoU`,
//!      so higher is better; the raw mean distance is also reported,
//!    - Rcll, Prcn, FAR (false positives per frame), MT/PT/ML (mostly
//!      tracked above 80% coverage, mostly lost below 20%, boundaries count
//!      as partially tracked), FM (interruptions of a ground-truth
//!      trajectory's matched state), and the identity scores IDF1/IDP/IDR
//!      from a global trajectory-level assignment.
//!
//! Degenerate denominators follow the usual reporting convention: with zero
//! matches the mean distance (and so MOTP) is NaN, with zero hypotheses
//! precision is NaN. A scenario with no ground truth at all is an error.

pub mod assignment;
mod identity;
mod report;

pub use report::{render_csv, render_table, COLUMNS};

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::data::Hypothesis;
use crate::error::{Error, Result};
use crate::geom::{iou, point_to_box, PixelBox};

/// Overlap gate: a pair is admissible when `IoU` is strictly greater.
pub const DEFAULT_IOU_GATE: f64 = 0.5;

/// Coverage thresholds for the mostly-tracked / mostly-lost classification.
pub const MOSTLY_TRACKED_MIN: f64 = 0.8;
pub const MOSTLY_LOST_MAX: f64 = 0.2;

/// Objects present on one frame: `(object id, box)`. Ids must be unique
/// within the frame.
pub type FrameObjects = Vec<(u32, PixelBox)>;

// ---------------------------------------------------------------------------
// Per-frame matching
// ---------------------------------------------------------------------------

/// Error events of a single frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameErrorCounts {
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
    pub gt_count: usize,
    pub hyp_count: usize,
    /// Sum of `1 - IoU` over this frame's matches.
    pub distance_sum: f64,
}

/// Cross-frame matching memory.
#[derive(Debug, Clone, Default)]
pub struct MatchState {
    /// Matches of the immediately preceding frame (carry-over candidates).
    prev: BTreeMap<u32, u32>,
    /// Most recent match of each ground-truth id, across any gap
    /// (identity-switch detection).
    last: BTreeMap<u32, u32>,
}

/// Matches of one frame: `(gt id, hyp id, distance)` plus the event counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatchResult {
    pub matches: Vec<(u32, u32, f64)>,
    pub counts: FrameErrorCounts,
}

fn check_unique_ids(objects: &FrameObjects, what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (id, _) in objects {
        if !seen.insert(*id) {
            return Err(Error::invalid(format!("duplicate {what} id {id} within one frame")));
        }
    }
    Ok(())
}

/// Match one frame's objects and update the cross-frame state.
pub fn match_frame(
    gt: &FrameObjects,
    hyp: &FrameObjects,
    state: &mut MatchState,
    gate: f64,
) -> Result<FrameMatchResult> {
    check_unique_ids(gt, "ground-truth")?;
    check_unique_ids(hyp, "hypothesis")?;

    let gt_by_id: BTreeMap<u32, &PixelBox> = gt.iter().map(|(id, b)| (*id, b)).collect();
    let hyp_by_id: BTreeMap<u32, &PixelBox> = hyp.iter().map(|(id, b)| (*id, b)).collect();

    let mut matches: Vec<(u32, u32, f64)> = Vec::new();
    let mut matched_gt: BTreeSet<u32> = BTreeSet::new();
    let mut matched_hyp: BTreeSet<u32> = BTreeSet::new();

    // Phase 1: keep still-valid matches from the previous frame. This is what
    // makes the metric reward stable associations instead of re-solving each
    // frame from scratch.
    for (&g, &h) in state.prev.iter() {
        if let (Some(gb), Some(hb)) = (gt_by_id.get(&g), hyp_by_id.get(&h)) {
            let ov = iou(gb, hb);
            if ov > gate && !matched_hyp.contains(&h) {
                matches.push((g, h, 1.0 - ov));
                matched_gt.insert(g);
                matched_hyp.insert(h);
            }
        }
    }

    // Phase 2: minimum-cost assignment over everything left, gated.
    let free_gt: Vec<u32> = gt_by_id.keys().copied().filter(|g| !matched_gt.contains(g)).collect();
    let free_hyp: Vec<u32> = hyp_by_id.keys().copied().filter(|h| !matched_hyp.contains(h)).collect();
    if !free_gt.is_empty() && !free_hyp.is_empty() {
        let mut cost = Array2::from_elem((free_gt.len(), free_hyp.len()), assignment::FORBIDDEN);
        for (i, g) in free_gt.iter().enumerate() {
            for (j, h) in free_hyp.iter().enumerate() {
                let ov = iou(gt_by_id[g], hyp_by_id[h]);
                if ov > gate {
                    cost[(i, j)] = 1.0 - ov;
                }
            }
        }
        for (i, assigned) in assignment::solve(&cost).into_iter().enumerate() {
            if let Some(j) = assigned {
                let (g, h) = (free_gt[i], free_hyp[j]);
                matches.push((g, h, cost[(i, j)]));
                matched_gt.insert(g);
                matched_hyp.insert(h);
            }
        }
    }

    // Identity switches: compare against the last match of each object, no
    // matter how long ago it was.
    let mut mismatches = 0;
    for &(g, h, _) in &matches {
        if let Some(&prev_h) = state.last.get(&g) {
            if prev_h != h {
                mismatches += 1;
            }
        }
        state.last.insert(g, h);
    }
    state.prev = matches.iter().map(|&(g, h, _)| (g, h)).collect();

    let counts = FrameErrorCounts {
        matches: matches.len(),
        misses: gt.len() - matches.len(),
        false_positives: hyp.len() - matches.len(),
        mismatches,
        gt_count: gt.len(),
        hyp_count: hyp.len(),
        distance_sum: matches.iter().map(|&(_, _, d)| d).sum(),
    };
    Ok(FrameMatchResult { matches, counts })
}

// ---------------------------------------------------------------------------
// Accumulation across frames
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct GtTrace {
    present: usize,
    matched: usize,
    fragmentations: usize,
    ever_matched: bool,
    /// True while the object sits in a gap: it was matched at some point,
    /// then seen unmatched. The next match completes an interruption.
    in_break: bool,
}

/// Folds per-frame events into totals and per-trajectory traces.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    gate: f64,
    state: MatchState,
    frames: usize,
    matches: usize,
    misses: usize,
    false_positives: usize,
    mismatches: usize,
    gt_total: usize,
    distance_sum: f64,
    per_gt: BTreeMap<u32, GtTrace>,
    hyp_lengths: BTreeMap<u32, usize>,
    /// Frames in which a (gt, hyp) pair overlapped above the gate,
    /// independently of the frame-wise assignment; feeds IDF1/IDP/IDR.
    gated_overlap: BTreeMap<(u32, u32), usize>,
}

impl MetricAccumulator {
    pub fn new(gate: f64) -> Self {
        MetricAccumulator {
            gate,
            state: MatchState::default(),
            frames: 0,
            matches: 0,
            misses: 0,
            false_positives: 0,
            mismatches: 0,
            gt_total: 0,
            distance_sum: 0.0,
            per_gt: BTreeMap::new(),
            hyp_lengths: BTreeMap::new(),
            gated_overlap: BTreeMap::new(),
        }
    }

    /// Fold in one frame. Frames must be pushed in temporal order.
    pub fn push_frame(&mut self, gt: &FrameObjects, hyp: &FrameObjects) -> Result<FrameErrorCounts> {
        let result = match_frame(gt, hyp, &mut self.state, self.gate)?;

        self.frames += 1;
        self.matches += result.counts.matches;
        self.misses += result.counts.misses;
        self.false_positives += result.counts.false_positives;
        self.mismatches += result.counts.mismatches;
        self.gt_total += result.counts.gt_count;
        self.distance_sum += result.counts.distance_sum;

        for (id, _) in hyp {
            *self.hyp_lengths.entry(*id).or_default() += 1;
        }
        for ((gid, gb), (hid, hb)) in gt.iter().flat_map(|g| hyp.iter().map(move |h| (g, h))) {
            if iou(gb, hb) > self.gate {
                *self.gated_overlap.entry((*gid, *hid)).or_default() += 1;
            }
        }

        let matched_now: BTreeSet<u32> = result.matches.iter().map(|&(g, _, _)| g).collect();
        for (id, _) in gt {
            let trace = self.per_gt.entry(*id).or_default();
            trace.present += 1;
            if matched_now.contains(id) {
                trace.matched += 1;
                if trace.in_break {
                    trace.fragmentations += 1;
                    trace.in_break = false;
                }
                trace.ever_matched = true;
            } else if trace.ever_matched {
                trace.in_break = true;
            }
        }

        Ok(result.counts)
    }

    /// Compute the final report. Errors if no ground truth was ever seen.
    pub fn finalize(self, name: impl Into<String>) -> Result<MetricReport> {
        if self.gt_total == 0 {
            return Err(Error::invalid(
                "cannot evaluate a scenario without any ground-truth annotations",
            ));
        }
        let gt_lengths: BTreeMap<u32, usize> =
            self.per_gt.iter().map(|(id, t)| (*id, t.present)).collect();
        let idtp = identity::id_true_positives(&gt_lengths, &self.hyp_lengths, &self.gated_overlap);
        let hyp_total: usize = self.hyp_lengths.values().sum();

        let mut mt = 0;
        let mut pt = 0;
        let mut ml = 0;
        let mut fm = 0;
        for trace in self.per_gt.values() {
            let ratio = trace.matched as f64 / trace.present as f64;
            if ratio > MOSTLY_TRACKED_MIN {
                mt += 1;
            } else if ratio < MOSTLY_LOST_MAX {
                ml += 1;
            } else {
                pt += 1;
            }
            fm += trace.fragmentations;
        }

        let gt_total = self.gt_total as f64;
        let motp_distance = self.distance_sum / self.matches as f64; // NaN when 0 matches
        Ok(MetricReport {
            name: name.into(),
            idf1: 100.0 * 2.0 * idtp as f64 / (gt_total + hyp_total as f64),
            idp: 100.0 * idtp as f64 / hyp_total as f64,
            idr: 100.0 * idtp as f64 / gt_total,
            recall: 100.0 * self.matches as f64 / gt_total,
            precision: 100.0 * self.matches as f64 / hyp_total as f64,
            far: self.false_positives as f64 / self.frames as f64,
            gt_tracks: self.per_gt.len(),
            mostly_tracked: mt,
            partially_tracked: pt,
            mostly_lost: ml,
            false_positives: self.false_positives,
            misses: self.misses,
            id_switches: self.mismatches,
            fragmentations: fm,
            mota: mota(self.misses, self.false_positives, self.mismatches, self.gt_total),
            motp: motp(self.distance_sum, self.matches),
            motal: motal(self.misses, self.false_positives, self.mismatches, self.gt_total),
            motp_distance,
            frames: self.frames,
            gt_total: self.gt_total,
            matches: self.matches,
            idtp,
            idfp: hyp_total - idtp,
            idfn: self.gt_total - idtp,
        })
    }
}

// ---------------------------------------------------------------------------
// Summary formulas
// ---------------------------------------------------------------------------

/// Multi-object tracking accuracy, percent. Unbounded below: a tracker can
/// commit more errors than there are ground-truth observations.
pub fn mota(misses: usize, false_positives: usize, mismatches: usize, gt_total: usize) -> f64 {
    100.0 * (1.0 - (misses + false_positives + mismatches) as f64 / gt_total as f64)
}

/// Log-discounted variant: identity switches enter as `log10(ID + 1)`, so it
/// equals MOTA exactly when ID is zero.
pub fn motal(misses: usize, false_positives: usize, mismatches: usize, gt_total: usize) -> f64 {
    100.0
        * (1.0
            - ((misses + false_positives) as f64 + (mismatches as f64 + 1.0).log10())
                / gt_total as f64)
}

/// Multi-object tracking precision, percent: `100 * (1 - mean distance)`
/// where distance is `1 - IoU`. NaN with zero matches.
pub fn motp(distance_sum: f64, matches: usize) -> f64 {
    100.0 * (1.0 - distance_sum / matches as f64)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Full evaluation summary for one scenario, field names following the
/// conventional report table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    /// Identity F1 / precision / recall, percent.
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    /// Detection recall and precision, percent.
    pub recall: f64,
    pub precision: f64,
    /// False positives per frame.
    pub far: f64,
    /// Number of distinct ground-truth trajectories.
    pub gt_tracks: usize,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub false_positives: usize,
    pub misses: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub mota: f64,
    pub motp: f64,
    pub motal: f64,
    /// Raw mean match distance (`1 - IoU`), the quantity MOTP is derived from.
    pub motp_distance: f64,
    pub frames: usize,
    pub gt_total: usize,
    pub matches: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

// ---------------------------------------------------------------------------
// Sequence-level entry point
// ---------------------------------------------------------------------------

/// Pair ground-truth annotations (expanded to boxes) with hypotheses, frame
/// by frame.
pub fn frames_from_sequence(
    seq: &crate::data::Sequence,
    hypotheses: &[Hypothesis],
    extent_m: f64,
    min_side: f64,
) -> Result<Vec<(FrameObjects, FrameObjects)>> {
    let n = seq.frames.len();
    let mut per_frame_hyp: Vec<FrameObjects> = vec![Vec::new(); n];
    for h in hypotheses {
        if h.frame >= n {
            return Err(Error::invalid(format!(
                "hypothesis references frame {} but sequence `{}` has {n} frames",
                h.frame, seq.meta.name
            )));
        }
        per_frame_hyp[h.frame].push((h.id, h.bbox));
    }
    Ok(seq
        .frames
        .iter()
        .zip(per_frame_hyp)
        .map(|(frame, hyp)| {
            let gt = frame
                .annotations
                .iter()
                .map(|a| (a.id, point_to_box(a.x, a.y, seq.meta.gsd, extent_m, min_side)))
                .collect();
            (gt, hyp)
        })
        .collect())
}

/// Evaluate one sequence against a hypothesis set.
pub fn evaluate_sequence(
    seq: &crate::data::Sequence,
    hypotheses: &[Hypothesis],
    gate: f64,
    extent_m: f64,
    min_side: f64,
) -> Result<MetricReport> {
    let frames = frames_from_sequence(seq, hypotheses, extent_m, min_side)?;
    let mut acc = MetricAccumulator::new(gate);
    for (gt, hyp) in &frames {
        acc.push_frame(gt, hyp)?;
    }
    acc.finalize(seq.meta.name.clone())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
