//! The fused tracking network and its parts.
//!
//! [`net::Network`] regresses an object's bounding box in a search crop
//! from three information sources: a shared-weight conv stack over the
//! previous-frame target crop and current-frame search crop, an LSTM over
//! recent center displacements, and a 1x1-conv encoder over a fixed-shape
//! neighbor matrix. See each submodule for the details; `checkpoint` reads
//! and writes the weight archive format.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod lstm;
pub mod net;
pub mod snn;

pub use graph::{build_neighbor_graph, GraphEncoder, NeighborGraph, StepPositions};
pub use lstm::MotionEncoder;
pub use net::{
    crop_box_to_output, l1_loss, l1_loss_grad, normalize_crop, output_to_crop_box, AblationMode,
    ConvSpec, FeatureBundle, ForwardCache, Gradients, MotionHistory, Network, NetworkConfig,
    OUTPUT_SCALE, PIXEL_MEAN,
};
pub use snn::ConvStack;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Zero padding in the fixed-width history buffer must never reach the
    /// motion encoding: a short history encodes exactly like the same steps
    /// fed through the LSTM one at a time.
    #[test]
    fn motion_encoding_ignores_history_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let enc = MotionEncoder::new(&mut rng, 2, 16, 32);
        let steps = [(2.5, -1.0), (0.75, 3.0)];
        let history = MotionHistory::from_steps(&steps, 5);
        assert_eq!(history.padded().shape(), &[5, 2]);

        let (encoded, _) = enc.forward(history.valid_steps(), None);

        // Oracle: drive the two LSTM layers step by step, no padding
        // anywhere in sight, then apply the projection and ReLU.
        let mut h0 = Array1::zeros(16);
        let mut c0 = Array1::zeros(16);
        let mut h1 = Array1::zeros(16);
        let mut c1 = Array1::zeros(16);
        for &(dx, dy) in &steps {
            let x = Array1::from_vec(vec![dx, dy]);
            let (h, c, _) = enc.l0.step(&x, &h0, &c0);
            h0 = h;
            c0 = c;
            let (h, c, _) = enc.l1.step(&h0, &h1, &c1);
            h1 = h;
            c1 = c;
        }
        let (expected, _) = enc.fc.forward(&h1);
        let expected = expected.mapv(|v| v.max(0.0));
        assert_eq!(encoded, expected);
    }

    /// The padded views of two histories with the same valid steps are
    /// byte-identical regardless of how the history was assembled.
    #[test]
    fn equal_valid_steps_mean_equal_padded_buffers() {
        let a = MotionHistory::from_steps(&[(1.0, 2.0), (3.0, 4.0)], 5);
        let mut b = MotionHistory::new(5);
        b.push(9.0, 9.0);
        b.push(8.0, 8.0);
        b.push(7.0, 7.0);
        b.push(1.0, 2.0);
        b.push(3.0, 4.0);
        // b is full; two more pushes roll the early junk out.
        b.push(1.0, 2.0);
        b.push(3.0, 4.0);
        assert_ne!(a.padded(), b.padded(), "b still holds older steps");
        let c = MotionHistory::from_steps(&[(1.0, 2.0), (3.0, 4.0)], 5);
        assert_eq!(a.padded(), c.padded());
        assert_eq!(a.valid_steps(), c.valid_steps());
    }
}
