//! Motion encoder: a two-layer LSTM over recent displacement vectors.
//!
//! Each input step is a `(dx, dy)` pair, oldest first. Only valid steps are
//! processed, so zero padding in a fixed-width history buffer can never leak
//! into the encoding. An empty history is encoded as a single all-zero input
//! step, which keeps newborn tracks on the same code path as established
//! ones. The hidden state of the last layer at the final valid step passes
//! through a linear layer plus ReLU to produce the motion feature.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    dropout_backward, dropout_forward, init_uniform, relu_backward, relu_forward, Linear,
    LinearGrad,
};

/// One LSTM layer. Gate pre-activations are stored in i, f, g, o row order
/// within the stacked `[4 * hidden, ...]` weight matrices:
///
///   i = sigmoid(pre_i)    input gate
///   f = sigmoid(pre_f)    forget gate
///   g = tanh(pre_g)       cell candidate
///   o = sigmoid(pre_o)    output gate
///   c = f * c_prev + i * g
///   h = o * tanh(c)
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
    pub hidden: usize,
}

/// Everything one step's backward pass needs.
pub struct LstmStepCache {
    input: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    c: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmLayerGrad {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmLayer {
    pub fn new(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        // The classical recurrent initialization scales every parameter,
        // biases included, by the hidden size.
        let mut mk2 = |rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), init_uniform(rng, hidden, rows * cols))
                .expect("buffer matches shape")
        };
        let w_ih = mk2(4 * hidden, input);
        let w_hh = mk2(4 * hidden, hidden);
        LstmLayer {
            w_ih,
            w_hh,
            b_ih: Array1::zeros(4 * hidden),
            b_hh: Array1::zeros(4 * hidden),
            hidden,
        }
    }

    pub fn zero_grad(&self) -> LstmLayerGrad {
        LstmLayerGrad {
            w_ih: Array2::zeros(self.w_ih.raw_dim()),
            w_hh: Array2::zeros(self.w_hh.raw_dim()),
            b_ih: Array1::zeros(self.b_ih.raw_dim()),
            b_hh: Array1::zeros(self.b_hh.raw_dim()),
        }
    }

    /// One forward step; returns `(h, c)` plus the cache.
    pub fn step(
        &self,
        x: &Array1<f64>,
        h_prev: &Array1<f64>,
        c_prev: &Array1<f64>,
    ) -> (Array1<f64>, Array1<f64>, LstmStepCache) {
        let hn = self.hidden;
        let pre = self.w_ih.dot(x) + &self.b_ih + self.w_hh.dot(h_prev) + &self.b_hh;
        let i = pre.slice(ndarray::s![0..hn]).mapv(sigmoid);
        let f = pre.slice(ndarray::s![hn..2 * hn]).mapv(sigmoid);
        let g = pre.slice(ndarray::s![2 * hn..3 * hn]).mapv(f64::tanh);
        let o = pre.slice(ndarray::s![3 * hn..4 * hn]).mapv(sigmoid);
        let c = &f * c_prev + &i * &g;
        let h = &o * &c.mapv(f64::tanh);
        let cache = LstmStepCache {
            input: x.clone(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            i,
            f,
            g,
            o,
            c: c.clone(),
        };
        (h, c, cache)
    }

    /// One backward step. `dh`/`dc` are the gradients flowing into this
    /// step's outputs; returns gradients for the input and the previous
    /// hidden/cell state, accumulating parameter gradients into `grad`.
    pub fn step_backward(
        &self,
        dh: &Array1<f64>,
        dc_in: &Array1<f64>,
        cache: &LstmStepCache,
        grad: &mut LstmLayerGrad,
    ) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
        let hn = self.hidden;
        let tanh_c = cache.c.mapv(f64::tanh);
        let d_o = dh * &tanh_c;
        let dc = dc_in + &(dh * &cache.o * &tanh_c.mapv(|t| 1.0 - t * t));
        let d_f = &dc * &cache.c_prev;
        let d_i = &dc * &cache.g;
        let d_g = &dc * &cache.i;
        let dc_prev = &dc * &cache.f;

        let mut dpre = Array1::zeros(4 * hn);
        dpre.slice_mut(ndarray::s![0..hn])
            .assign(&(&d_i * &cache.i * &cache.i.mapv(|v| 1.0 - v)));
        dpre.slice_mut(ndarray::s![hn..2 * hn])
            .assign(&(&d_f * &cache.f * &cache.f.mapv(|v| 1.0 - v)));
        dpre.slice_mut(ndarray::s![2 * hn..3 * hn])
            .assign(&(&d_g * &cache.g.mapv(|v| 1.0 - v * v)));
        dpre.slice_mut(ndarray::s![3 * hn..4 * hn])
            .assign(&(&d_o * &cache.o * &cache.o.mapv(|v| 1.0 - v)));

        grad.w_ih += &dpre
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.input.view().insert_axis(ndarray::Axis(0)));
        grad.w_hh += &dpre
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.h_prev.view().insert_axis(ndarray::Axis(0)));
        grad.b_ih += &dpre;
        grad.b_hh += &dpre;

        let dx = self.w_ih.t().dot(&dpre);
        let dh_prev = self.w_hh.t().dot(&dpre);
        (dx, dh_prev, dc_prev)
    }
}

/// The full motion branch: two stacked LSTM layers with dropout between
/// them, then a linear projection of the final hidden state plus ReLU.
#[derive(Debug, Clone)]
pub struct MotionEncoder {
    pub l0: LstmLayer,
    pub l1: LstmLayer,
    pub fc: Linear,
    pub dropout: f64,
    pub out_dim: usize,
}

pub struct MotionCache {
    steps0: Vec<LstmStepCache>,
    steps1: Vec<LstmStepCache>,
    /// Dropout mask per step applied to layer 0's hidden output, empty in
    /// eval mode.
    drop_masks: Vec<Vec<bool>>,
    fc_cache: super::layers::LinearCache,
    relu_mask: Vec<bool>,
    n_steps: usize,
}

#[derive(Debug, Clone)]
pub struct MotionGrad {
    pub l0: LstmLayerGrad,
    pub l1: LstmLayerGrad,
    pub fc: LinearGrad,
}

impl MotionEncoder {
    pub fn new(rng: &mut ChaCha8Rng, input: usize, hidden: usize, out_dim: usize) -> Self {
        // Construction order is part of the checkpoint contract: layer 0,
        // layer 1, projection.
        let l0 = LstmLayer::new(rng, input, hidden);
        let l1 = LstmLayer::new(rng, hidden, hidden);
        let fc = Linear::new(rng, hidden, out_dim);
        MotionEncoder {
            l0,
            l1,
            fc,
            dropout: 0.5,
            out_dim,
        }
    }

    /// Encode a displacement sequence (oldest first). `rng` enables train
    /// mode: dropout is applied between the two layers at every step.
    pub fn forward(
        &self,
        steps: &[(f64, f64)],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array1<f64>, MotionCache) {
        let hn = self.l0.hidden;
        // An empty history still produces a feature: one zero input step.
        let inputs: Vec<Array1<f64>> = if steps.is_empty() {
            vec![Array1::zeros(2)]
        } else {
            steps
                .iter()
                .map(|&(dx, dy)| Array1::from_vec(vec![dx, dy]))
                .collect()
        };

        let mut h0 = Array1::zeros(hn);
        let mut c0 = Array1::zeros(hn);
        let mut h1 = Array1::zeros(hn);
        let mut c1 = Array1::zeros(hn);
        let mut steps0 = Vec::with_capacity(inputs.len());
        let mut steps1 = Vec::with_capacity(inputs.len());
        let mut drop_masks = Vec::new();
        for x in &inputs {
            let (h, c, cache) = self.l0.step(x, &h0, &c0);
            steps0.push(cache);
            h0 = h;
            c0 = c;
            let mut mid = h0.clone();
            if let Some(r) = rng.as_deref_mut() {
                let mask = dropout_forward(
                    mid.as_slice_mut().expect("hidden state is contiguous"),
                    self.dropout,
                    r,
                );
                drop_masks.push(mask);
            }
            let (h, c, cache) = self.l1.step(&mid, &h1, &c1);
            steps1.push(cache);
            h1 = h;
            c1 = c;
        }

        let (mut out, fc_cache) = self.fc.forward(&h1);
        let relu_mask = relu_forward(out.as_slice_mut().expect("output is contiguous"));
        let n_steps = inputs.len();
        (
            out,
            MotionCache {
                steps0,
                steps1,
                drop_masks,
                fc_cache,
                relu_mask,
                n_steps,
            },
        )
    }

    pub fn backward(&self, grad_out: &Array1<f64>, cache: &MotionCache) -> MotionGrad {
        let hn = self.l0.hidden;
        let mut go = grad_out.clone();
        relu_backward(go.as_slice_mut().expect("contiguous"), &cache.relu_mask);
        let (dh1_last, fc_grad) = self.fc.backward(&go, &cache.fc_cache);

        let mut g0 = self.l0.zero_grad();
        let mut g1 = self.l1.zero_grad();

        // Layer 1 backward pass collects the per-step input gradients that
        // then feed layer 0's backward pass through the dropout masks.
        let mut dmid = vec![Array1::zeros(hn); cache.n_steps];
        let mut dh = dh1_last;
        let mut dc = Array1::zeros(hn);
        for t in (0..cache.n_steps).rev() {
            let (dx, dh_prev, dc_prev) = self.l1.step_backward(&dh, &dc, &cache.steps1[t], &mut g1);
            dmid[t] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }

        let mut dh = Array1::zeros(hn);
        let mut dc = Array1::zeros(hn);
        for t in (0..cache.n_steps).rev() {
            let mut d = dmid[t].clone();
            if !cache.drop_masks.is_empty() {
                dropout_backward(
                    d.as_slice_mut().expect("contiguous"),
                    &cache.drop_masks[t],
                    self.dropout,
                );
            }
            d += &dh;
            let (_dx, dh_prev, dc_prev) = self.l0.step_backward(&d, &dc, &cache.steps0[t], &mut g0);
            dh = dh_prev;
            dc = dc_prev;
        }

        MotionGrad {
            l0: g0,
            l1: g1,
            fc: fc_grad,
        }
    }
}
