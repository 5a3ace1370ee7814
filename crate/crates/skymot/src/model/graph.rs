//! Neighbor-relation encoder.
//!
//! For every history step the tracked object's surroundings are summarized
//! as one column of a fixed-shape matrix:
//!
//!   row 0, 1        target center (x, y) in crop coordinates
//!   rows 2 + 2i     displacement (dx, dy) from the target to its i-th
//!                   nearest neighbor, in crop pixels, for up to
//!                   `graph_neighbors` neighbors inside the metric radius
//!
//! Columns are ordered oldest step first; unused columns and neighbor slots
//! are exactly zero. Neighbors are ranked by Euclidean distance with track
//! id breaking ties, which makes the matrix a deterministic function of its
//! inputs. The encoder itself is three 1x1 convolutions over the columns
//! (per-column linear maps) with ReLU, followed by global average pooling
//! over all columns. Inputs are divided by the crop size on the way in so
//! the encoder sees coordinates of order one regardless of crop resolution.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::CropTransform;

use super::layers::{init_uniform, relu_backward, relu_forward};
use super::snn::fold_bit;

/// The positions visible at one history step, all in image coordinates.
#[derive(Debug, Clone, Default)]
pub struct StepPositions {
    pub target: (f64, f64),
    /// Other live objects as `(track_id, center)`.
    pub others: Vec<(u32, (f64, f64))>,
}

/// The fixed-shape neighbor matrix fed to [`GraphEncoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    /// `[2 + 2 * neighbors, history_len]`
    pub data: Array2<f64>,
    /// How many leading columns hold real steps.
    pub valid_cols: usize,
}

impl NeighborGraph {
    pub fn empty(neighbors: usize, history_len: usize) -> Self {
        NeighborGraph {
            data: Array2::zeros((2 + 2 * neighbors, history_len)),
            valid_cols: 0,
        }
    }
}

/// Assemble the neighbor matrix for a track. `steps` holds the most recent
/// `<= history_len` observations, oldest first; `to_crop` maps image
/// coordinates into the current search crop; `radius_m / gsd` bounds the
/// neighborhood in pixels.
pub fn build_neighbor_graph(
    steps: &[StepPositions],
    to_crop: &CropTransform,
    gsd: f64,
    neighbors: usize,
    radius_m: f64,
    history_len: usize,
) -> Result<NeighborGraph> {
    if !(gsd.is_finite() && gsd > 0.0) {
        return Err(Error::invalid(format!(
            "neighbor graph needs a positive ground sampling distance, got {gsd}"
        )));
    }
    if steps.len() > history_len {
        return Err(Error::invalid(format!(
            "{} history steps exceed the configured history length {history_len}",
            steps.len()
        )));
    }
    let radius_px = radius_m / gsd;
    let mut graph = NeighborGraph::empty(neighbors, history_len);
    graph.valid_cols = steps.len();
    for (col, step) in steps.iter().enumerate() {
        let (tx, ty) = to_crop.unapply_point(step.target.0, step.target.1);
        graph.data[(0, col)] = tx;
        graph.data[(1, col)] = ty;

        let mut ranked: Vec<(f64, u32, (f64, f64))> = step
            .others
            .iter()
            .filter_map(|&(id, (ox, oy))| {
                let d = ((ox - step.target.0).powi(2) + (oy - step.target.1).powi(2)).sqrt();
                (d <= radius_px).then_some((d, id, (ox, oy)))
            })
            .collect();
        ranked.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("distances are finite")
                .then(a.1.cmp(&b.1))
        });
        for (slot, &(_, _, (ox, oy))) in ranked.iter().take(neighbors).enumerate() {
            // Displacements scale like points without the offset.
            graph.data[(2 + 2 * slot, col)] = (ox - step.target.0) / to_crop.scale;
            graph.data[(3 + 2 * slot, col)] = (oy - step.target.1) / to_crop.scale;
        }
    }
    Ok(graph)
}

/// Three stacked 1x1 convolutions with ReLU and a global average pool.
#[derive(Debug, Clone)]
pub struct GraphEncoder {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    /// Divisor applied to the input matrix (the crop size).
    pub input_scale: f64,
}

pub struct GraphCache {
    x0: Array2<f64>,
    x1: Array2<f64>,
    x2: Array2<f64>,
    m1: Vec<bool>,
    m2: Vec<bool>,
    m3: Vec<bool>,
    cols: usize,
}

impl GraphCache {
    /// Fold every interior ReLU state into a decision hash. The column mean
    /// at the output hides flips in the per-column activations, so the
    /// bundle signs alone cannot detect them.
    pub fn fold_decisions(&self, hash: &mut u64) {
        for &m in self.m1.iter().chain(&self.m2).chain(&self.m3) {
            fold_bit(hash, m);
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl GraphEncoder {
    pub fn new(rng: &mut ChaCha8Rng, in_rows: usize, channels: [usize; 3], input_scale: f64) -> Self {
        let mut mk = |rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), init_uniform(rng, cols, rows * cols))
                .expect("buffer matches shape")
        };
        let w1 = mk(channels[0], in_rows);
        let w2 = mk(channels[1], channels[0]);
        let w3 = mk(channels[2], channels[1]);
        GraphEncoder {
            w1,
            b1: Array1::zeros(channels[0]),
            w2,
            b2: Array1::zeros(channels[1]),
            w3,
            b3: Array1::zeros(channels[2]),
            input_scale,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w3.shape()[0]
    }

    fn conv_block(w: &Array2<f64>, b: &Array1<f64>, x: &Array2<f64>) -> (Array2<f64>, Vec<bool>) {
        let mut y = w.dot(x);
        for (mut row, bv) in y.outer_iter_mut().zip(b.iter()) {
            row += *bv;
        }
        let mask = relu_forward(y.as_slice_mut().expect("gemm output is contiguous"));
        (y, mask)
    }

    pub fn forward(&self, graph: &NeighborGraph) -> (Array1<f64>, GraphCache) {
        let x0 = graph.data.mapv(|v| v / self.input_scale);
        let cols = x0.shape()[1];
        let (x1, m1) = Self::conv_block(&self.w1, &self.b1, &x0);
        let (x2, m2) = Self::conv_block(&self.w2, &self.b2, &x1);
        let (x3, m3) = Self::conv_block(&self.w3, &self.b3, &x2);
        // Average over every column: the matrix shape is fixed, so padding
        // columns are part of the contract rather than masked out.
        let out = x3.mean_axis(ndarray::Axis(1)).expect("at least one column");
        (
            out,
            GraphCache {
                x0,
                x1,
                x2,
                m1,
                m2,
                m3,
                cols,
            },
        )
    }

    pub fn backward(&self, grad_out: &Array1<f64>, cache: &GraphCache) -> GraphGrad {
        let t = cache.cols as f64;
        let ones = Array2::from_elem((1, cache.cols), 1.0 / t);
        let mut d3 = grad_out.view().insert_axis(ndarray::Axis(1)).dot(&ones);
        relu_backward(d3.as_slice_mut().expect("contiguous"), &cache.m3);
        let gw3 = d3.dot(&cache.x2.t());
        let gb3 = d3.sum_axis(ndarray::Axis(1));

        let mut d2 = self.w3.t().dot(&d3);
        relu_backward(d2.as_slice_mut().expect("contiguous"), &cache.m2);
        let gw2 = d2.dot(&cache.x1.t());
        let gb2 = d2.sum_axis(ndarray::Axis(1));

        let mut d1 = self.w2.t().dot(&d2);
        relu_backward(d1.as_slice_mut().expect("contiguous"), &cache.m1);
        let gw1 = d1.dot(&cache.x0.t());
        let gb1 = d1.sum_axis(ndarray::Axis(1));

        GraphGrad {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
            w3: gw3,
            b3: gb3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn transform() -> CropTransform {
        // A 32 px window resized to a 64 px crop: scale 0.5.
        CropTransform::new(0.5, (100.0, 200.0)).unwrap()
    }

    fn step(target: (f64, f64), others: &[(u32, (f64, f64))]) -> StepPositions {
        StepPositions {
            target,
            others: others.to_vec(),
        }
    }

    #[test]
    fn graph_shape_and_padding() {
        let steps = vec![step((110.0, 210.0), &[])];
        let g = build_neighbor_graph(&steps, &transform(), 0.1, 8, 7.5, 5).unwrap();
        assert_eq!(g.data.shape(), &[18, 5]);
        assert_eq!(g.valid_cols, 1);
        // Column 0 carries the target in crop coordinates; everything else
        // is exactly zero.
        assert_eq!(g.data[(0, 0)], 20.0);
        assert_eq!(g.data[(1, 0)], 20.0);
        let nonzero = g.data.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn neighbors_rank_by_distance_then_id() {
        let others = [
            (9, (113.0, 210.0)),  // distance 3
            (4, (110.0, 212.0)),  // distance 2
            (2, (113.0, 210.0)),  // distance 3, lower id than 9
            (7, (240.0, 210.0)),  // outside the radius
        ];
        let steps = vec![step((110.0, 210.0), &others)];
        // radius 7.5 m at gsd 0.1 = 75 px.
        let g = build_neighbor_graph(&steps, &transform(), 0.1, 8, 7.5, 5).unwrap();
        // Slot 0: id 4 at (0, +2) image px = (0, +4) crop px.
        assert_eq!((g.data[(2, 0)], g.data[(3, 0)]), (0.0, 4.0));
        // Slot 1: id 2 (tie broken by id), (+3, 0) image = (+6, 0) crop.
        assert_eq!((g.data[(4, 0)], g.data[(5, 0)]), (6.0, 0.0));
        // Slot 2: id 9.
        assert_eq!((g.data[(6, 0)], g.data[(7, 0)]), (6.0, 0.0));
        // Slot 3 unused.
        assert_eq!((g.data[(8, 0)], g.data[(9, 0)]), (0.0, 0.0));
    }

    #[test]
    fn at_most_k_neighbors_are_kept() {
        let others: Vec<(u32, (f64, f64))> = (0..12)
            .map(|i| (i as u32, (111.0 + i as f64 * 0.25, 210.0)))
            .collect();
        let steps = vec![step((110.0, 210.0), &others)];
        let g = build_neighbor_graph(&steps, &transform(), 0.1, 8, 7.5, 5).unwrap();
        // All 8 slots filled, nothing spills past row 17.
        for slot in 0..8 {
            assert!(g.data[(2 + 2 * slot, 0)] > 0.0, "slot {slot} filled");
        }
        assert_eq!(g.data.shape()[0], 18);
    }

    #[test]
    fn rejects_bad_gsd_and_overflowing_history() {
        let steps = vec![step((0.0, 0.0), &[])];
        assert!(build_neighbor_graph(&steps, &transform(), 0.0, 8, 7.5, 5).is_err());
        assert!(build_neighbor_graph(&steps, &transform(), -0.3, 8, 7.5, 5).is_err());
        let six = vec![step((0.0, 0.0), &[]); 6];
        assert!(build_neighbor_graph(&six, &transform(), 0.1, 8, 7.5, 5).is_err());
    }

    #[test]
    fn encoder_output_dimension_and_input_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = GraphEncoder::new(&mut rng, 18, [32, 64, 128], 64.0);
        let steps = vec![step((110.0, 210.0), &[(1, (112.0, 211.0))])];
        let g = build_neighbor_graph(&steps, &transform(), 0.1, 8, 7.5, 5).unwrap();
        let (out, cache) = enc.forward(&g);
        assert_eq!(out.len(), 128);
        // The cached input is the graph divided by the crop size.
        assert!((cache.x0[(0, 0)] - 20.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut enc = GraphEncoder::new(&mut rng, 6, [4, 5, 7], 10.0);
        // Freshly built encoders have zero biases, which parks dead columns
        // exactly on ReLU kinks where finite differences are meaningless;
        // probe at a generic point instead.
        for b in [&mut enc.b1, &mut enc.b2, &mut enc.b3] {
            for v in b.iter_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
        let mut g = NeighborGraph::empty(2, 3);
        for v in g.data.iter_mut() {
            *v = rng.gen_range(-5.0..5.0);
        }
        g.valid_cols = 3;

        let probe = |y: &Array1<f64>| -> f64 {
            y.iter().enumerate().map(|(i, v)| (i % 3 + 1) as f64 * v).sum()
        };
        let (out, cache) = enc.forward(&g);
        let go = Array1::from_shape_fn(out.len(), |i| (i % 3 + 1) as f64);
        let grads = enc.backward(&go, &cache);

        let h = 1e-6;
        let mut check = |get: &mut dyn FnMut(&mut GraphEncoder) -> &mut f64, analytic: f64| {
            let orig = *get(&mut enc);
            *get(&mut enc) = orig + h;
            let plus = probe(&enc.forward(&g).0);
            *get(&mut enc) = orig - h;
            let minus = probe(&enc.forward(&g).0);
            *get(&mut enc) = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic - numeric).abs() / denom < 1e-5,
                "analytic {analytic:.6e} vs numeric {numeric:.6e}"
            );
        };
        check(&mut |e| &mut e.w1[(2, 4)], grads.w1[(2, 4)]);
        check(&mut |e| &mut e.b1[0], grads.b1[0]);
        check(&mut |e| &mut e.w2[(3, 1)], grads.w2[(3, 1)]);
        check(&mut |e| &mut e.w3[(6, 2)], grads.w3[(6, 2)]);
        check(&mut |e| &mut e.b3[5], grads.b3[5]);
    }

    #[test]
    fn all_zero_graph_with_zero_biases_encodes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = GraphEncoder::new(&mut rng, 18, [32, 64, 128], 64.0);
        let g = NeighborGraph::empty(8, 5);
        let (out, _) = enc.forward(&g);
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
