//! Trajectory-level identity matching behind IDF1/IDP/IDR.
//!
//! Ground-truth and hypothesis trajectories are matched once, globally, by
//! minimizing the number of frame-level disagreements of the chosen pairing.
//! With `m(g, h)` the number of frames where `g` and `h` overlap above the
//! gate, pairing them costs `(len_g - m) + (len_h - m)`; leaving either side
//! unmatched costs its full length. The identity true positives of the
//! optimal pairing determine all three scores.

use std::collections::BTreeMap;

use ndarray::Array2;

use super::assignment::{self, FORBIDDEN};

/// Optimal identity true positives for trajectory length maps and gated
/// per-pair overlap counts.
pub(crate) fn id_true_positives(
    gt_lengths: &BTreeMap<u32, usize>,
    hyp_lengths: &BTreeMap<u32, usize>,
    gated_overlap: &BTreeMap<(u32, u32), usize>,
) -> usize {
    let gt_ids: Vec<u32> = gt_lengths.keys().copied().collect();
    let hyp_ids: Vec<u32> = hyp_lengths.keys().copied().collect();
    let (m, n) = (gt_ids.len(), hyp_ids.len());
    if m == 0 || n == 0 {
        return 0;
    }

    // Padded square problem: real pairs top-left, "stay unmatched" dummies
    // on the diagonals of the side blocks, free dummy-dummy pairs bottom
    // right. Every total cost equals sum(len) - 2 * IDTP, so minimizing cost
    // maximizes IDTP regardless of tie-breaking.
    let size = m + n;
    let mut cost = Array2::from_elem((size, size), FORBIDDEN);
    for (i, g) in gt_ids.iter().enumerate() {
        for (j, h) in hyp_ids.iter().enumerate() {
            let overlap = gated_overlap.get(&(*g, *h)).copied().unwrap_or(0);
            cost[(i, j)] =
                (gt_lengths[g] - overlap) as f64 + (hyp_lengths[h] - overlap) as f64;
        }
        cost[(i, n + i)] = gt_lengths[g] as f64;
    }
    for (j, h) in hyp_ids.iter().enumerate() {
        cost[(m + j, j)] = hyp_lengths[h] as f64;
    }
    for i in 0..n {
        for j in 0..m {
            cost[(m + i, n + j)] = 0.0;
        }
    }

    let mut idtp = 0;
    for (i, assigned) in assignment::solve(&cost).into_iter().enumerate() {
        if let Some(j) = assigned {
            if i < m && j < n {
                idtp += gated_overlap.get(&(gt_ids[i], hyp_ids[j])).copied().unwrap_or(0);
            }
        }
    }
    idtp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lengths(pairs: &[(u32, usize)]) -> BTreeMap<u32, usize> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn prefers_the_longer_association() {
        // gt 1 overlaps hyp 7 for 8 frames and hyp 8 for 2 frames.
        let gt = lengths(&[(1, 10)]);
        let hyp = lengths(&[(7, 8), (8, 2)]);
        let mut overlap = BTreeMap::new();
        overlap.insert((1, 7), 8);
        overlap.insert((1, 8), 2);
        assert_eq!(id_true_positives(&gt, &hyp, &overlap), 8);
    }

    #[test]
    fn split_track_keeps_only_one_fragment() {
        // One gt track of 10 frames covered 5+5 by two hypothesis ids: only
        // one fragment can be credited.
        let gt = lengths(&[(1, 10)]);
        let hyp = lengths(&[(7, 5), (8, 5)]);
        let mut overlap = BTreeMap::new();
        overlap.insert((1, 7), 5);
        overlap.insert((1, 8), 5);
        assert_eq!(id_true_positives(&gt, &hyp, &overlap), 5);
    }

    #[test]
    fn crossing_tracks_pick_the_consistent_pairing() {
        // Two gt tracks, two hyps; the consistent pairing credits 6 + 6, the
        // swapped one only 4 + 4.
        let gt = lengths(&[(1, 10), (2, 10)]);
        let hyp = lengths(&[(7, 10), (8, 10)]);
        let mut overlap = BTreeMap::new();
        overlap.insert((1, 7), 6);
        overlap.insert((1, 8), 4);
        overlap.insert((2, 7), 4);
        overlap.insert((2, 8), 6);
        assert_eq!(id_true_positives(&gt, &hyp, &overlap), 12);
    }

    #[test]
    fn exhaustive_oracle_agreement_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.gen_range(1..=4usize);
            let n = rng.gen_range(1..=4usize);
            let frames = 8usize;
            let gt: BTreeMap<u32, usize> =
                (0..m as u32).map(|i| (i, rng.gen_range(1..=frames))).collect();
            let hyp: BTreeMap<u32, usize> =
                (10..10 + n as u32).map(|i| (i, rng.gen_range(1..=frames))).collect();
            let mut overlap = BTreeMap::new();
            for (&g, &lg) in &gt {
                for (&h, &lh) in &hyp {
                    let o = rng.gen_range(0..=lg.min(lh));
                    if o > 0 {
                        overlap.insert((g, h), o);
                    }
                }
            }
            let got = id_true_positives(&gt, &hyp, &overlap);
            let want = brute_force_idtp(&gt, &hyp, &overlap);
            assert_eq!(got, want, "gt {gt:?} hyp {hyp:?} overlap {overlap:?}");
        }
    }

    /// Maximum credited overlap over every injective gt-to-hyp mapping.
    fn brute_force_idtp(
        gt: &BTreeMap<u32, usize>,
        hyp: &BTreeMap<u32, usize>,
        overlap: &BTreeMap<(u32, u32), usize>,
    ) -> usize {
        let gt_ids: Vec<u32> = gt.keys().copied().collect();
        let hyp_ids: Vec<u32> = hyp.keys().copied().collect();
        fn rec(
            gt_ids: &[u32],
            hyp_ids: &[u32],
            overlap: &BTreeMap<(u32, u32), usize>,
            row: usize,
            used: &mut Vec<bool>,
        ) -> usize {
            if row == gt_ids.len() {
                return 0;
            }
            // Leave this gt unmatched.
            let mut best = rec(gt_ids, hyp_ids, overlap, row + 1, used);
            for j in 0..hyp_ids.len() {
                if !used[j] {
                    used[j] = true;
                    let credit = overlap.get(&(gt_ids[row], hyp_ids[j])).copied().unwrap_or(0);
                    best = best.max(credit + rec(gt_ids, hyp_ids, overlap, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(&gt_ids, &hyp_ids, overlap, 0, &mut vec![false; hyp_ids.len()])
    }
}
