//! Primitive differentiable layers.
//!
//! Design: layers own their parameters; `forward` returns the output plus a
//! cache of whatever the matching `backward` needs. Nothing here mutates the
//! layer, so one network instance can run many forward/backward passes (and
//! be shared across threads) while each pass carries its own caches. All
//! math is f64: the training problems are desk-scale and analytic gradients
//! are verified against central finite differences, which f32 would make
//! needlessly fragile.
//!
//! Convolutions run as im2col plus one matrix product per layer, which keeps
//! the hot loop inside the gemm kernel instead of hand-rolled index
//! arithmetic.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// Local response normalization constants, the classical cross-channel
// parameterization. `LRN_ALPHA` is divided by the window size in the scale
// term: s[c] = k + (alpha/n) * sum of squares over the channel window.
pub const LRN_SIZE: usize = 5;
pub const LRN_ALPHA: f64 = 1e-4;
pub const LRN_BETA: f64 = 0.75;
pub const LRN_K: f64 = 2.0;

/// Fan-in-scaled uniform initialization: U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
pub fn init_uniform(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 2-D convolution over `[C, H, W]` tensors.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub padding: usize,
}

pub struct Conv2dCache {
    /// im2col matrix `[in_channels * k * k, out_h * out_w]`.
    cols: Array2<f64>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Conv2dGrad {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl Conv2d {
    pub fn new(
        rng: &mut ChaCha8Rng,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = Array4::from_shape_vec(
            (out_channels, in_channels, kernel, kernel),
            init_uniform(rng, fan_in, out_channels * fan_in),
        )
        .expect("weight buffer matches its shape");
        Conv2d {
            weight,
            bias: Array1::zeros(out_channels),
            stride,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        let oh = (h + 2 * self.padding - k) / self.stride + 1;
        let ow = (w + 2 * self.padding - k) / self.stride + 1;
        (oh, ow)
    }

    /// Weight viewed as the `[out_channels, fan_in]` gemm operand.
    fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        let (oc, ic, kh, kw) = self.weight.dim();
        self.weight
            .view()
            .into_shape_with_order((oc, ic * kh * kw))
            .expect("weight is contiguous")
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (c, h, w) = x.dim();
        let k = self.kernel();
        let (oh, ow) = self.out_hw(h, w);
        let mut cols = Array2::zeros((c * k * k, oh * ow));
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[(row, oy * ow + ox)] = x[(ci, iy as usize, ix as usize)];
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Conv2dCache) {
        let (c, h, w) = x.dim();
        debug_assert_eq!(c, self.in_channels(), "input channel mismatch");
        let (oh, ow) = self.out_hw(h, w);
        let cols = self.im2col(x);
        let mut out = self.weight_matrix().dot(&cols);
        for (mut row, b) in out.outer_iter_mut().zip(self.bias.iter()) {
            row += *b;
        }
        let out = out
            .into_shape_with_order((self.out_channels(), oh, ow))
            .expect("gemm output is contiguous");
        (
            out,
            Conv2dCache {
                cols,
                in_shape: (c, h, w),
                out_hw: (oh, ow),
            },
        )
    }

    pub fn backward(
        &self,
        grad_out: &Array3<f64>,
        cache: &Conv2dCache,
    ) -> (Array3<f64>, Conv2dGrad) {
        let (oc, _, kh, kw) = self.weight.dim();
        let (oh, ow) = cache.out_hw;
        let go = grad_out
            .to_shape((oc, oh * ow))
            .expect("grad_out matches the conv output");

        let grad_weight_flat = go.dot(&cache.cols.t());
        // The gemm result is not guaranteed standard layout when a
        // dimension degenerates to 1, so reshape through to_shape.
        let grad_weight = grad_weight_flat
            .to_shape((oc, self.in_channels(), kh, kw))
            .expect("weight gradient has one entry per weight")
            .to_owned();
        let grad_bias = go.sum_axis(Axis(1));

        let grad_cols = self.weight_matrix().t().dot(&go);
        let grad_in = self.col2im(&grad_cols, cache.in_shape, cache.out_hw);
        (
            grad_in,
            Conv2dGrad {
                weight: grad_weight,
                bias: grad_bias,
            },
        )
    }

    fn col2im(
        &self,
        cols: &Array2<f64>,
        in_shape: (usize, usize, usize),
        out_hw: (usize, usize),
    ) -> Array3<f64> {
        let (c, h, w) = in_shape;
        let (oh, ow) = out_hw;
        let k = self.kernel();
        let mut x = Array3::zeros((c, h, w));
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            x[(ci, iy as usize, ix as usize)] += cols[(row, oy * ow + ox)];
                        }
                    }
                }
            }
        }
        x
    }
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

/// Rectified linear unit on any contiguous buffer. The backward subgradient
/// at exactly zero is zero.
pub fn relu_forward(x: &mut [f64]) -> Vec<bool> {
    x.iter_mut()
        .map(|v| {
            if *v > 0.0 {
                true
            } else {
                *v = 0.0;
                false
            }
        })
        .collect()
}

pub fn relu_backward(grad: &mut [f64], mask: &[bool]) {
    debug_assert_eq!(grad.len(), mask.len());
    for (g, &m) in grad.iter_mut().zip(mask) {
        if !m {
            *g = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

/// Max pooling with ceil-mode output sizing: windows may be clipped at the
/// lower-right border, so `out = ceil((in - k) / stride) + 1`. This keeps
/// small feature maps poolable (a 3x3 window on a 2x2 map yields one clipped
/// window) and reduces to the exact division on the classical sizes.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
}

pub struct MaxPoolCache {
    /// Flat input index of each output's argmax (first maximum on ties).
    argmax: Vec<usize>,
    in_shape: (usize, usize, usize),
}

impl MaxPoolCache {
    /// The argmax routing decisions, exposed for decision hashing.
    pub fn argmax_slice(&self) -> &[usize] {
        &self.argmax
    }
}

impl MaxPool2d {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let run = |n: usize| -> usize {
            if n <= self.kernel {
                1
            } else {
                (n - self.kernel).div_ceil(self.stride) + 1
            }
        };
        (run(h), run(w))
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, MaxPoolCache) {
        let (c, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let mut out = Array3::zeros((c, oh, ow));
        let mut argmax = vec![0usize; c * oh * ow];
        let xs = x.as_slice().expect("pool input is contiguous");
        for ci in 0..c {
            for oy in 0..oh {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.kernel).min(h);
                for ox in 0..ow {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.kernel).min(w);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            let idx = (ci * h + iy) * w + ix;
                            if xs[idx] > best {
                                best = xs[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[(ci, oy, ox)] = best;
                    argmax[(ci * oh + oy) * ow + ox] = best_idx;
                }
            }
        }
        (
            out,
            MaxPoolCache {
                argmax,
                in_shape: (c, h, w),
            },
        )
    }

    pub fn backward(&self, grad_out: &Array3<f64>, cache: &MaxPoolCache) -> Array3<f64> {
        let mut grad_in = Array3::zeros(cache.in_shape);
        let gi = grad_in.as_slice_mut().expect("fresh array is contiguous");
        for (g, &idx) in grad_out.iter().zip(&cache.argmax) {
            gi[idx] += *g;
        }
        grad_in
    }
}

// ---------------------------------------------------------------------------
// Local response normalization (cross-channel)
// ---------------------------------------------------------------------------

/// `b[c] = a[c] / (k + (alpha/n) * sum_{c' in window(c)} a[c']^2)^beta` with
/// the window of `n` channels centered on `c`, clipped at the ends.
#[derive(Debug, Clone, Copy)]
pub struct Lrn {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for Lrn {
    fn default() -> Self {
        Lrn {
            size: LRN_SIZE,
            alpha: LRN_ALPHA,
            beta: LRN_BETA,
            k: LRN_K,
        }
    }
}

pub struct LrnCache {
    input: Array3<f64>,
    /// The scale term `s[c]` per position.
    scale: Array3<f64>,
}

impl Lrn {
    fn window(&self, c: usize, channels: usize) -> (usize, usize) {
        let half = self.size / 2;
        let lo = c.saturating_sub(half);
        let hi = (c + half + 1).min(channels);
        (lo, hi)
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, LrnCache) {
        let (c, h, w) = x.dim();
        let an = self.alpha / self.size as f64;
        let mut scale = Array3::zeros((c, h, w));
        let mut out = Array3::zeros((c, h, w));
        for iy in 0..h {
            for ix in 0..w {
                for ci in 0..c {
                    let (lo, hi) = self.window(ci, c);
                    let mut s = self.k;
                    for cj in lo..hi {
                        s += an * x[(cj, iy, ix)] * x[(cj, iy, ix)];
                    }
                    scale[(ci, iy, ix)] = s;
                    out[(ci, iy, ix)] = x[(ci, iy, ix)] * s.powf(-self.beta);
                }
            }
        }
        (
            out,
            LrnCache {
                input: x.clone(),
                scale,
            },
        )
    }

    pub fn backward(&self, grad_out: &Array3<f64>, cache: &LrnCache) -> Array3<f64> {
        let (c, h, w) = cache.input.dim();
        let an = self.alpha / self.size as f64;
        let mut grad_in = Array3::zeros((c, h, w));
        for iy in 0..h {
            for ix in 0..w {
                // Direct term plus the cross-channel coupling through the
                // scale of every output whose window contains this channel.
                for cj in 0..c {
                    let s = cache.scale[(cj, iy, ix)];
                    grad_in[(cj, iy, ix)] += grad_out[(cj, iy, ix)] * s.powf(-self.beta);
                }
                for ci in 0..c {
                    let (lo, hi) = self.window(ci, c);
                    let s = cache.scale[(ci, iy, ix)];
                    let common = grad_out[(ci, iy, ix)]
                        * cache.input[(ci, iy, ix)]
                        * (-self.beta)
                        * s.powf(-self.beta - 1.0)
                        * an
                        * 2.0;
                    for cj in lo..hi {
                        grad_in[(cj, iy, ix)] += common * cache.input[(cj, iy, ix)];
                    }
                }
            }
        }
        grad_in
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

pub struct LinearCache {
    input: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        let weight =
            Array2::from_shape_vec((out_dim, in_dim), init_uniform(rng, in_dim, out_dim * in_dim))
                .expect("weight buffer matches its shape");
        Linear {
            weight,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array1<f64>) -> (Array1<f64>, LinearCache) {
        let out = self.weight.dot(x) + &self.bias;
        (out, LinearCache { input: x.clone() })
    }

    pub fn backward(&self, grad_out: &Array1<f64>, cache: &LinearCache) -> (Array1<f64>, LinearGrad) {
        // Built explicitly rather than as a gemm outer product so the
        // result is always standard layout, and written exactly once: this
        // is the single hottest allocation in a training step.
        let (out_dim, in_dim) = self.weight.dim();
        let x = cache.input.as_slice().expect("owned input is contiguous");
        let mut buf = Vec::with_capacity(out_dim * in_dim);
        for &g in grad_out {
            if g == 0.0 {
                buf.resize(buf.len() + in_dim, 0.0);
            } else {
                buf.extend(x.iter().map(|&xi| g * xi));
            }
        }
        let grad_weight =
            Array2::from_shape_vec((out_dim, in_dim), buf).expect("buffer sized to the weight");
        // Input gradient as a row-wise axpy sum rather than a transposed
        // matrix-vector product: the weight is walked in memory order and
        // rows silenced by the loss (or a dead relu) cost nothing.
        let mut grad_in = Array1::zeros(in_dim);
        {
            let gi = grad_in.as_slice_mut().expect("fresh array is contiguous");
            let w = self.weight.as_slice().expect("owned weight is contiguous");
            for (o, &g) in grad_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (acc, &wi) in gi.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                    *acc += g * wi;
                }
            }
        }
        (
            grad_in,
            LinearGrad {
                weight: grad_weight,
                bias: grad_out.clone(),
            },
        )
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout: at train time each unit survives with probability
/// `1 - p` and is scaled by `1 / (1 - p)`; at eval time this is the identity.
pub fn dropout_forward(x: &mut [f64], p: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    debug_assert!((0.0..1.0).contains(&p));
    let keep = 1.0 - p;
    x.iter_mut()
        .map(|v| {
            if rng.gen_bool(keep) {
                *v /= keep;
                true
            } else {
                *v = 0.0;
                false
            }
        })
        .collect()
}

pub fn dropout_backward(grad: &mut [f64], mask: &[bool], p: f64) {
    let keep = 1.0 - p;
    for (g, &m) in grad.iter_mut().zip(mask) {
        if m {
            *g /= keep;
        } else {
            *g = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// Tests: every backward is checked against central finite differences.
// ---------------------------------------------------------------------------
