//! Minimum-cost bipartite assignment.
//!
//! Shortest-augmenting-path solver with dual potentials, O(n^2 m) for an
//! n x m matrix with n <= m (the matrix is transposed internally when taller
//! than wide). The optimum is exact for finite costs, which is what the
//! evaluation engine needs: its results are compared against an exhaustive
//! oracle and must agree to the last integer.
//!
//! Pairs that must never be matched (gating) are encoded by [`FORBIDDEN`].
//! Because every admissible cost in this crate is orders of magnitude below
//! it, minimizing total cost first maximizes the number of admissible pairs
//! and then minimizes their cost sum; `solve` strips forbidden pairs from the
//! returned matching, so callers see only admissible assignments.

use ndarray::Array2;

/// Cost marker for pairs outside the gate. Callers must keep admissible
/// costs small enough that `n * max_cost < FORBIDDEN` holds; the solver
/// asserts a generous version of this.
pub const FORBIDDEN: f64 = 1e8;

/// Minimum-cost assignment on an `n x m` cost matrix.
///
/// Returns `row_to_col`: for each row, the column it was assigned, or `None`
/// if the row stayed unassigned (more rows than columns, or only forbidden
/// pairs left).
pub fn solve(cost: &Array2<f64>) -> Vec<Option<usize>> {
    let (nr, nc) = cost.dim();
    if nr == 0 || nc == 0 {
        return vec![None; nr];
    }
    for &c in cost.iter() {
        assert!(c.is_finite(), "assignment costs must be finite, got {c}");
        assert!(
            c <= FORBIDDEN,
            "assignment cost {c} above FORBIDDEN; encode gated pairs as exactly FORBIDDEN"
        );
        assert!(
            c >= FORBIDDEN || c * (nr.max(nc) as f64 + 1.0) < FORBIDDEN,
            "admissible cost {c} too close to FORBIDDEN for a {nr}x{nc} problem"
        );
    }

    if nr <= nc {
        let col4row = lapjv(nr, nc, |i, j| cost[(i, j)]);
        col4row
            .into_iter()
            .enumerate()
            .map(|(i, j)| j.filter(|&j| cost[(i, j)] < FORBIDDEN))
            .collect()
    } else {
        let col4row = lapjv(nc, nr, |i, j| cost[(j, i)]);
        let mut row_to_col = vec![None; nr];
        for (j, i) in col4row.into_iter().enumerate() {
            if let Some(i) = i {
                if cost[(i, j)] < FORBIDDEN {
                    row_to_col[i] = Some(j);
                }
            }
        }
        row_to_col
    }
}

/// Core solver for `nr <= nc`. Returns the assigned column per row.
fn lapjv(nr: usize, nc: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut col4row: Vec<Option<usize>> = vec![None; nr];
    let mut row4col: Vec<Option<usize>> = vec![None; nc];

    let mut shortest = vec![f64::INFINITY; nc];
    let mut path = vec![0usize; nc];
    let mut in_sr = vec![false; nr];
    let mut in_sc = vec![false; nc];
    let mut remaining = vec![0usize; nc];

    for cur_row in 0..nr {
        shortest.fill(f64::INFINITY);
        in_sr.fill(false);
        in_sc.fill(false);
        let mut num_remaining = nc;
        for (it, slot) in remaining.iter_mut().enumerate() {
            *slot = nc - it - 1;
        }

        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let sink;
        loop {
            in_sr[i] = true;
            let mut index = usize::MAX;
            let mut lowest = f64::INFINITY;
            for (it, &j) in remaining.iter().enumerate().take(num_remaining) {
                let r = min_val + cost(i, j) - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                // Prefer unassigned columns on ties so augmenting paths stay
                // as short as possible.
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j].is_none()) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            assert!(
                min_val.is_finite(),
                "assignment infeasible; finite costs should make this unreachable"
            );
            let j = remaining[index];
            in_sc[j] = true;
            num_remaining -= 1;
            remaining[index] = remaining[num_remaining];
            if row4col[j].is_none() {
                sink = j;
                break;
            }
            i = row4col[j].unwrap();
        }

        // Dual update keeps reduced costs nonnegative for future rows.
        u[cur_row] += min_val;
        for r in 0..nr {
            if in_sr[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r].unwrap()];
            }
        }
        for c in 0..nc {
            if in_sc[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        // Augment backwards along the recorded path.
        let mut j = sink;
        loop {
            let i = path[j];
            row4col[j] = Some(i);
            let prev = col4row[i].replace(j);
            match prev {
                _ if i == cur_row => break,
                Some(prev_j) => j = prev_j,
                None => unreachable!("interior path rows are always assigned"),
            }
        }
    }
    col4row
}
