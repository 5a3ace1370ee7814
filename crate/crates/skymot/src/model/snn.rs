//! Appearance encoder: a shared-weight convolutional stack applied to both
//! the target crop (previous frame) and the search crop (current frame).
//!
//! Each stage runs conv, ReLU, then optionally local response normalization
//! and max pooling as dictated by its [`ConvSpec`]. The two branch outputs
//! are flattened and concatenated target-first; because the weights are
//! shared, the backward pass sums the parameter gradients of both branches.

use ndarray::{Array1, Array3};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    relu_backward, relu_forward, Conv2d, Conv2dCache, Conv2dGrad, Lrn, LrnCache, MaxPool2d,
    MaxPoolCache,
};
use super::net::ConvSpec;

#[derive(Debug, Clone)]
pub struct ConvStack {
    pub convs: Vec<Conv2d>,
    pub specs: Vec<ConvSpec>,
    pub lrn: Lrn,
    pub pool: MaxPool2d,
}

struct StageCache {
    conv: Conv2dCache,
    relu_mask: Vec<bool>,
    lrn: Option<LrnCache>,
    pool: Option<MaxPoolCache>,
}

pub struct ConvStackCache {
    stages: Vec<StageCache>,
    out_shape: (usize, usize, usize),
}

impl ConvStack {
    pub fn new(rng: &mut ChaCha8Rng, in_channels: usize, specs: &[ConvSpec]) -> Self {
        let mut convs = Vec::with_capacity(specs.len());
        let mut prev = in_channels;
        for spec in specs {
            convs.push(Conv2d::new(
                rng,
                prev,
                spec.out_channels,
                spec.kernel,
                spec.stride,
                spec.padding,
            ));
            prev = spec.out_channels;
        }
        ConvStack {
            convs,
            specs: specs.to_vec(),
            lrn: Lrn::default(),
            pool: MaxPool2d { kernel: 3, stride: 2 },
        }
    }

    /// Output `(channels, h, w)` for a square input of side `size`.
    pub fn out_shape(&self, size: usize) -> (usize, usize, usize) {
        let (mut h, mut w) = (size, size);
        let mut c = 0;
        for (conv, spec) in self.convs.iter().zip(&self.specs) {
            let (oh, ow) = conv.out_hw(h, w);
            h = oh;
            w = ow;
            if spec.pool {
                let (ph, pw) = self.pool.out_hw(h, w);
                h = ph;
                w = pw;
            }
            c = spec.out_channels;
        }
        (c, h, w)
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array1<f64>, ConvStackCache) {
        let mut cur = x.clone();
        let mut stages = Vec::with_capacity(self.convs.len());
        for (conv, spec) in self.convs.iter().zip(&self.specs) {
            let (mut y, conv_cache) = conv.forward(&cur);
            let relu_mask = relu_forward(y.as_slice_mut().expect("conv output is contiguous"));
            let lrn_cache = if spec.lrn {
                let (z, c) = self.lrn.forward(&y);
                y = z;
                Some(c)
            } else {
                None
            };
            let pool_cache = if spec.pool {
                let (z, c) = self.pool.forward(&y);
                y = z;
                Some(c)
            } else {
                None
            };
            stages.push(StageCache {
                conv: conv_cache,
                relu_mask,
                lrn: lrn_cache,
                pool: pool_cache,
            });
            cur = y;
        }
        let out_shape = cur.dim();
        let flat = Array1::from_vec(cur.into_raw_vec_and_offset().0);
        (flat, ConvStackCache { stages, out_shape })
    }

    /// Backward through one branch, accumulating parameter gradients into
    /// `grads` (one entry per conv stage). The gradient with respect to the
    /// input crop is discarded: pixels are data, not parameters.
    pub fn backward(
        &self,
        grad_flat: &Array1<f64>,
        cache: &ConvStackCache,
        grads: &mut [Conv2dGrad],
    ) {
        debug_assert_eq!(grads.len(), self.convs.len());
        let mut grad = grad_flat
            .clone()
            .into_shape_with_order(cache.out_shape)
            .expect("flat gradient matches the stack output");
        for idx in (0..self.convs.len()).rev() {
            let stage = &cache.stages[idx];
            if let Some(pc) = &stage.pool {
                grad = self.pool.backward(&grad, pc);
            }
            if let Some(lc) = &stage.lrn {
                grad = self.lrn.backward(&grad, lc);
            }
            relu_backward(
                grad.as_slice_mut().expect("gradient is contiguous"),
                &stage.relu_mask,
            );
            let (grad_in, g) = self.convs[idx].backward(&grad, &stage.conv);
            grads[idx].weight += &g.weight;
            grads[idx].bias += &g.bias;
            grad = grad_in;
        }
    }

    pub fn zero_grads(&self) -> Vec<Conv2dGrad> {
        self.convs
            .iter()
            .map(|c| Conv2dGrad {
                weight: ndarray::Array4::zeros(c.weight.raw_dim()),
                bias: Array1::zeros(c.bias.raw_dim()),
            })
            .collect()
    }

    /// Fold the discrete forward decisions (ReLU masks, pool argmaxes) into
    /// a hash so two nearby forward passes can be compared for kink
    /// crossings.
    pub fn fold_decisions(&self, cache: &ConvStackCache, hash: &mut u64) {
        for stage in &cache.stages {
            for &m in &stage.relu_mask {
                fold_bit(hash, m);
            }
            if let Some(pc) = &stage.pool {
                for &idx in pc.argmax_slice() {
                    fold_u64(hash, idx as u64);
                }
            }
        }
    }
}

pub fn fold_bit(hash: &mut u64, bit: bool) {
    fold_u64(hash, bit as u64);
}

pub fn fold_u64(hash: &mut u64, v: u64) {
    // FNV-1a over the 8 bytes.
    for b in v.to_le_bytes() {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(0x100000001b3);
    }
}
