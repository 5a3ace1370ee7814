//! The fused regression network.
//!
//! Three encoders feed one regression head:
//!
//!   appearance  shared-weight conv stack over the target and search crops,
//!               outputs concatenated target-first
//!   motion      two-layer LSTM over recent center displacements
//!   neighbors   1x1-conv encoder over the neighbor matrix
//!
//! Their features are concatenated (appearance, motion, neighbors) and
//! passed through four fully connected layers with ReLU after all but the
//! last. The four outputs live in a scaled coordinate system: multiplying
//! by `crop_size / 10` yields `(x1, y1, x2, y2)` in crop pixels. Training
//! losses are taken in the scaled space, which keeps gradients comparable
//! across crop resolutions.
//!
//! Ablations disable the motion and/or neighbor branch by feeding exact
//! zeros in their slice of the concatenation; the fused code path is
//! otherwise identical, so an ablated network is the full network with a
//! structurally zero feature, not a different architecture.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array3, ArrayD, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PixelBox;

use super::graph::{GraphCache, GraphEncoder, NeighborGraph};
use super::layers::{relu_backward, relu_forward, Linear, LinearCache};
use super::lstm::{MotionCache, MotionEncoder};
use super::snn::{fold_bit, ConvStack, ConvStackCache};

/// The regression outputs are box corners divided by
/// `crop_size / OUTPUT_SCALE`, so a corner at the far crop edge maps to 10.
pub const OUTPUT_SCALE: f64 = 10.0;

/// Pixel intensities are divided by 255 and shifted by this constant, so
/// crops enter the conv stack roughly centered in `[-0.5, 0.5]`.
pub const PIXEL_MEAN: f64 = 0.5;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One appearance stage: conv, ReLU, then optional normalization / pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub lrn: bool,
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Side of the square input crops, in pixels.
    pub crop_size: usize,
    pub conv_plan: Vec<ConvSpec>,
    /// Widths of the four regression layers; the last entry is the output
    /// dimension and must be 4.
    pub fc_plan: Vec<usize>,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub lstm_dropout: f64,
    /// Width of the motion feature after the post-LSTM projection.
    pub motion_out: usize,
    pub graph_channels: [usize; 3],
    /// Maximum number of neighbors per history step.
    pub graph_neighbors: usize,
    /// Neighborhood radius in meters; divided by the ground sampling
    /// distance to obtain pixels.
    pub graph_radius_m: f64,
    /// Number of history steps kept for the motion and neighbor branches.
    pub history_len: usize,
}

impl NetworkConfig {
    /// The full-size configuration.
    pub fn production() -> Self {
        let c = |out, k, s, p, lrn, pool| ConvSpec {
            out_channels: out,
            kernel: k,
            stride: s,
            padding: p,
            lrn,
            pool,
        };
        NetworkConfig {
            crop_size: 227,
            conv_plan: vec![
                c(96, 11, 4, 0, true, true),
                c(256, 5, 1, 2, true, true),
                c(384, 3, 1, 1, false, false),
                c(384, 3, 1, 1, false, false),
                c(256, 3, 1, 1, false, true),
            ],
            fc_plan: vec![4096, 4096, 4096, 4],
            lstm_hidden: 64,
            lstm_layers: 2,
            lstm_dropout: 0.5,
            motion_out: 128,
            graph_channels: [32, 64, 128],
            graph_neighbors: 8,
            graph_radius_m: 7.5,
            history_len: 5,
        }
    }

    /// A narrow configuration with the same topology: 64 px crops, thinner
    /// conv and fc layers. Used where full-size inference would be wasteful
    /// (tests, quick experiments, CPU-only runs).
    pub fn reduced() -> Self {
        let mut cfg = Self::production();
        cfg.crop_size = 64;
        let widths = [24, 64, 96, 96, 64];
        for (spec, w) in cfg.conv_plan.iter_mut().zip(widths) {
            spec.out_channels = w;
        }
        cfg.fc_plan = vec![1024, 1024, 1024, 4];
        cfg
    }

    pub fn graph_rows(&self) -> usize {
        2 + 2 * self.graph_neighbors
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_size < 16 {
            return Err(Error::invalid(format!(
                "crop size {} is too small for the conv plan",
                self.crop_size
            )));
        }
        if self.conv_plan.is_empty() {
            return Err(Error::invalid("conv plan must have at least one stage"));
        }
        for (i, s) in self.conv_plan.iter().enumerate() {
            if s.out_channels == 0 || s.kernel == 0 || s.stride == 0 {
                return Err(Error::invalid(format!(
                    "conv stage {} has a zero dimension",
                    i + 1
                )));
            }
        }
        if self.fc_plan.len() != 4 || *self.fc_plan.last().unwrap() != 4 {
            return Err(Error::invalid(
                "the regression head is four layers ending in 4 outputs",
            ));
        }
        if self.lstm_layers != 2 {
            return Err(Error::invalid("the motion encoder is a two-layer LSTM"));
        }
        if !(0.0..1.0).contains(&self.lstm_dropout) {
            return Err(Error::invalid("lstm dropout must lie in [0, 1)"));
        }
        if self.lstm_hidden == 0 || self.motion_out == 0 {
            return Err(Error::invalid("motion branch widths must be positive"));
        }
        if self.graph_channels.contains(&0) || self.graph_neighbors == 0 {
            return Err(Error::invalid("neighbor branch widths must be positive"));
        }
        if !(self.graph_radius_m.is_finite() && self.graph_radius_m > 0.0) {
            return Err(Error::invalid("neighbor radius must be positive"));
        }
        if self.history_len == 0 {
            return Err(Error::invalid("history length must be at least 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

/// Which branches contribute features. Appearance is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    #[serde(rename = "snn")]
    SnnOnly,
    #[serde(rename = "snn+lstm")]
    SnnLstm,
    #[serde(rename = "snn+gcnn")]
    SnnGcnn,
    #[serde(rename = "full")]
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::SnnOnly,
        AblationMode::SnnLstm,
        AblationMode::SnnGcnn,
        AblationMode::Full,
    ];

    pub fn uses_motion(self) -> bool {
        matches!(self, AblationMode::SnnLstm | AblationMode::Full)
    }

    pub fn uses_graph(self) -> bool {
        matches!(self, AblationMode::SnnGcnn | AblationMode::Full)
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AblationMode::SnnOnly => "snn",
            AblationMode::SnnLstm => "snn+lstm",
            AblationMode::SnnGcnn => "snn+gcnn",
            AblationMode::Full => "full",
        };
        f.write_str(s)
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snn" => Ok(AblationMode::SnnOnly),
            "snn+lstm" => Ok(AblationMode::SnnLstm),
            "snn+gcnn" => Ok(AblationMode::SnnGcnn),
            "full" => Ok(AblationMode::Full),
            other => Err(Error::invalid(format!(
                "unknown ablation '{other}' (expected snn, snn+lstm, snn+gcnn or full)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Motion history
// ---------------------------------------------------------------------------

/// Rolling window of the most recent center displacements `(dx, dy)`,
/// oldest first, at most `history_len` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionHistory {
    steps: Vec<(f64, f64)>,
    history_len: usize,
}

impl MotionHistory {
    pub fn new(history_len: usize) -> Self {
        MotionHistory {
            steps: Vec::new(),
            history_len,
        }
    }

    pub fn from_steps(steps: &[(f64, f64)], history_len: usize) -> Self {
        let mut h = MotionHistory::new(history_len);
        for &(dx, dy) in steps {
            h.push(dx, dy);
        }
        h
    }

    /// Append a displacement, dropping the oldest entry once full.
    pub fn push(&mut self, dx: f64, dy: f64) {
        if self.steps.len() == self.history_len {
            self.steps.remove(0);
        }
        self.steps.push((dx, dy));
    }

    pub fn valid_steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The fixed-width zero-padded view `[history_len, 2]`, padding after
    /// the valid prefix.
    pub fn padded(&self) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((self.history_len, 2));
        for (i, &(dx, dy)) in self.steps.iter().enumerate() {
            m[(i, 0)] = dx;
            m[(i, 1)] = dy;
        }
        m
    }
}

// ---------------------------------------------------------------------------
// The network
// ---------------------------------------------------------------------------

/// The three branch features before fusion, in concatenation order.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    pub appearance: Array1<f64>,
    pub motion: Array1<f64>,
    pub neighbors: Array1<f64>,
}

impl FeatureBundle {
    pub fn concat(&self) -> Array1<f64> {
        ndarray::concatenate(
            Axis(0),
            &[
                self.appearance.view(),
                self.motion.view(),
                self.neighbors.view(),
            ],
        )
        .expect("one-dimensional concatenation")
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub snn: ConvStack,
    pub motion: MotionEncoder,
    pub graph: GraphEncoder,
    pub head: Vec<Linear>,
}

pub struct ForwardCache {
    ablation: AblationMode,
    snn_target: ConvStackCache,
    snn_search: ConvStackCache,
    motion: Option<MotionCache>,
    graph: Option<GraphCache>,
    head: Vec<(LinearCache, Option<Vec<bool>>)>,
    pub bundle: FeatureBundle,
    pub output: Array1<f64>,
}

impl ForwardCache {
    /// Hash of every discrete routing decision (ReLU masks, pool argmaxes)
    /// taken during the forward pass. Two passes with the same hash lie on
    /// the same smooth piece of the network function.
    pub fn decision_signature(&self, net: &Network) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        net.snn.fold_decisions(&self.snn_target, &mut h);
        net.snn.fold_decisions(&self.snn_search, &mut h);
        for (_, mask) in &self.head {
            if let Some(m) = mask {
                for &b in m {
                    fold_bit(&mut h, b);
                }
            }
        }
        // The motion branch is smooth except for its output ReLU, folded
        // via the bundle signs. The graph branch has interior ReLUs whose
        // flips the column-averaged output can hide, so its cache folds
        // them explicitly.
        for &v in self.bundle.motion.iter() {
            fold_bit(&mut h, v > 0.0);
        }
        if let Some(g) = &self.graph {
            g.fold_decisions(&mut h);
        }
        for &v in self.bundle.neighbors.iter() {
            fold_bit(&mut h, v > 0.0);
        }
        h
    }
}

/// Named gradient tensors, keyed exactly like [`Network::param_names`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let mut tensors = BTreeMap::new();
        for name in net.param_names() {
            let shape = net.param(&name).expect("name from param_names").raw_dim();
            tensors.insert(name, ArrayD::zeros(shape));
        }
        Gradients { tensors }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.tensors {
            match self.tensors.get_mut(name) {
                Some(acc) => *acc += g,
                None => {
                    self.tensors.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.tensors.values_mut() {
            *g *= factor;
        }
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.tensors.get(name)
    }

    /// Euclidean norm over every tensor whose name starts with `prefix`.
    pub fn group_norm(&self, prefix: &str) -> f64 {
        self.tensors
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Network {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Construction order fixes the weight layout for a given seed:
        // appearance stack, motion encoder, neighbor encoder, head.
        let snn = ConvStack::new(&mut rng, 3, &config.conv_plan);
        let (c, h, w) = snn.out_shape(config.crop_size);
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "crop size {} collapses to nothing through the conv plan",
                config.crop_size
            )));
        }
        let motion = {
            let mut m = MotionEncoder::new(&mut rng, 2, config.lstm_hidden, config.motion_out);
            m.dropout = config.lstm_dropout;
            m
        };
        let graph = GraphEncoder::new(
            &mut rng,
            config.graph_rows(),
            config.graph_channels,
            config.crop_size as f64,
        );
        let bundle_dim = 2 * c * h * w + config.motion_out + config.graph_channels[2];
        let mut head = Vec::with_capacity(config.fc_plan.len());
        let mut prev = bundle_dim;
        for &width in &config.fc_plan {
            head.push(Linear::new(&mut rng, prev, width));
            prev = width;
        }
        Ok(Network {
            config,
            snn,
            motion,
            graph,
            head,
        })
    }

    /// Length of the appearance feature (both branches concatenated).
    pub fn appearance_dim(&self) -> usize {
        let (c, h, w) = self.snn.out_shape(self.config.crop_size);
        2 * c * h * w
    }

    fn check_crop(&self, name: &str, crop: &Array3<f64>) -> Result<()> {
        let s = self.config.crop_size;
        if crop.dim() != (3, s, s) {
            return Err(Error::invalid(format!(
                "{name} crop must be [3, {s}, {s}], got {:?}",
                crop.dim()
            )));
        }
        Ok(())
    }

    /// Run the fused forward pass. `rng` switches on train-mode dropout;
    /// pass `None` for inference. The output is in the scaled coordinate
    /// system (multiply by `crop_size / 10` for crop pixels).
    pub fn forward(
        &self,
        target: &Array3<f64>,
        search: &Array3<f64>,
        history: &MotionHistory,
        graph: &NeighborGraph,
        ablation: AblationMode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_crop("target", target)?;
        self.check_crop("search", search)?;
        let expected = (self.config.graph_rows(), self.config.history_len);
        if graph.data.dim() != expected {
            return Err(Error::invalid(format!(
                "neighbor matrix must be {expected:?}, got {:?}",
                graph.data.dim()
            )));
        }

        let (feat_t, snn_target) = self.snn.forward(target);
        let (feat_s, snn_search) = self.snn.forward(search);
        let appearance = ndarray::concatenate(Axis(0), &[feat_t.view(), feat_s.view()])
            .expect("flat features concatenate");

        let (motion_feat, motion_cache) = if ablation.uses_motion() {
            let (f, c) = self.motion.forward(history.valid_steps(), rng);
            (f, Some(c))
        } else {
            (Array1::zeros(self.config.motion_out), None)
        };
        let (graph_feat, graph_cache) = if ablation.uses_graph() {
            let (f, c) = self.graph.forward(graph);
            (f, Some(c))
        } else {
            (Array1::zeros(self.graph.out_dim()), None)
        };

        let bundle = FeatureBundle {
            appearance,
            motion: motion_feat,
            neighbors: graph_feat,
        };
        let (output, head_caches) = self.regress(&bundle);
        Ok((
            output.clone(),
            ForwardCache {
                ablation,
                snn_target,
                snn_search,
                motion: motion_cache,
                graph: graph_cache,
                head: head_caches,
                bundle,
                output,
            },
        ))
    }

    /// The regression head alone: four linear layers, ReLU after all but
    /// the last.
    pub fn regress(&self, bundle: &FeatureBundle) -> (Array1<f64>, Vec<(LinearCache, Option<Vec<bool>>)>) {
        let mut x = bundle.concat();
        let mut caches = Vec::with_capacity(self.head.len());
        let last = self.head.len() - 1;
        for (i, layer) in self.head.iter().enumerate() {
            let (mut y, cache) = layer.forward(&x);
            let mask = if i < last {
                Some(relu_forward(y.as_slice_mut().expect("contiguous")))
            } else {
                None
            };
            caches.push((cache, mask));
            x = y;
        }
        (x, caches)
    }

    /// Backpropagate from the scaled-space output gradient. Branches that
    /// were ablated out contribute exactly zero gradient tensors.
    pub fn backward(&self, grad_output: &Array1<f64>, cache: &ForwardCache) -> Gradients {
        let mut grads = Gradients::default();

        // Head, in reverse.
        let mut g = grad_output.clone();
        let mut head_grads = Vec::with_capacity(self.head.len());
        for (i, layer) in self.head.iter().enumerate().rev() {
            let (cache_i, mask) = &cache.head[i];
            if let Some(m) = mask {
                relu_backward(g.as_slice_mut().expect("contiguous"), m);
            }
            let (g_in, lg) = layer.backward(&g, cache_i);
            head_grads.push((i, lg));
            g = g_in;
        }
        for (i, lg) in head_grads {
            grads
                .tensors
                .insert(format!("head.fc{}.weight", i + 1), lg.weight.into_dyn());
            grads
                .tensors
                .insert(format!("head.fc{}.bias", i + 1), lg.bias.into_dyn());
        }

        // Split the bundle gradient back into branch slices.
        let a_len = cache.bundle.appearance.len();
        let m_len = cache.bundle.motion.len();
        let n_len = cache.bundle.neighbors.len();
        debug_assert_eq!(g.len(), a_len + m_len + n_len);
        let g_app = g.slice(ndarray::s![0..a_len]).to_owned();
        let g_mot = g.slice(ndarray::s![a_len..a_len + m_len]).to_owned();
        let g_nei = g.slice(ndarray::s![a_len + m_len..]).to_owned();

        // Appearance: both branches share weights, so their gradients sum.
        let per_branch = a_len / 2;
        let mut conv_grads = self.snn.zero_grads();
        let g_t = g_app.slice(ndarray::s![0..per_branch]).to_owned();
        let g_s = g_app.slice(ndarray::s![per_branch..]).to_owned();
        self.snn.backward(&g_t, &cache.snn_target, &mut conv_grads);
        self.snn.backward(&g_s, &cache.snn_search, &mut conv_grads);
        for (i, cg) in conv_grads.into_iter().enumerate() {
            grads
                .tensors
                .insert(format!("snn.conv{}.weight", i + 1), cg.weight.into_dyn());
            grads
                .tensors
                .insert(format!("snn.conv{}.bias", i + 1), cg.bias.into_dyn());
        }

        // Motion.
        if let Some(mc) = &cache.motion {
            let mg = self.motion.backward(&g_mot, mc);
            grads.tensors.insert("lstm.l0.w_ih".into(), mg.l0.w_ih.into_dyn());
            grads.tensors.insert("lstm.l0.w_hh".into(), mg.l0.w_hh.into_dyn());
            grads.tensors.insert("lstm.l0.b_ih".into(), mg.l0.b_ih.into_dyn());
            grads.tensors.insert("lstm.l0.b_hh".into(), mg.l0.b_hh.into_dyn());
            grads.tensors.insert("lstm.l1.w_ih".into(), mg.l1.w_ih.into_dyn());
            grads.tensors.insert("lstm.l1.w_hh".into(), mg.l1.w_hh.into_dyn());
            grads.tensors.insert("lstm.l1.b_ih".into(), mg.l1.b_ih.into_dyn());
            grads.tensors.insert("lstm.l1.b_hh".into(), mg.l1.b_hh.into_dyn());
            grads.tensors.insert("lstm.fc.weight".into(), mg.fc.weight.into_dyn());
            grads.tensors.insert("lstm.fc.bias".into(), mg.fc.bias.into_dyn());
        }
        // Neighbors.
        if let Some(gc) = &cache.graph {
            let gg = self.graph.backward(&g_nei, gc);
            grads.tensors.insert("graph.conv1.weight".into(), gg.w1.into_dyn());
            grads.tensors.insert("graph.conv1.bias".into(), gg.b1.into_dyn());
            grads.tensors.insert("graph.conv2.weight".into(), gg.w2.into_dyn());
            grads.tensors.insert("graph.conv2.bias".into(), gg.b2.into_dyn());
            grads.tensors.insert("graph.conv3.weight".into(), gg.w3.into_dyn());
            grads.tensors.insert("graph.conv3.bias".into(), gg.b3.into_dyn());
        }

        // Ablated branches still report zero tensors so accumulators and
        // optimizers see a fixed key set.
        if cache.motion.is_none() || cache.graph.is_none() {
            for name in self.param_names() {
                let missing_motion = cache.motion.is_none() && name.starts_with("lstm.");
                let missing_graph = cache.graph.is_none() && name.starts_with("graph.");
                if missing_motion || missing_graph {
                    let shape = self.param(&name).expect("known name").raw_dim();
                    grads.tensors.insert(name, ArrayD::zeros(shape));
                }
            }
        }

        let _ = cache.ablation;
        grads
    }

    /// One plain SGD step: `w -= lr_for(name) * grad`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr_for: impl Fn(&str) -> f64) {
        for name in self.param_names() {
            let Some(g) = grads.get(&name) else { continue };
            let lr = lr_for(&name);
            let mut p = self.param_mut(&name).expect("known name");
            p.zip_mut_with(g, |w, gv| *w -= lr * gv);
        }
    }

    /// Every parameter tensor name, in checkpoint order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 1..=self.snn.convs.len() {
            names.push(format!("snn.conv{i}.weight"));
            names.push(format!("snn.conv{i}.bias"));
        }
        for l in 0..2 {
            for part in ["w_ih", "w_hh", "b_ih", "b_hh"] {
                names.push(format!("lstm.l{l}.{part}"));
            }
        }
        names.push("lstm.fc.weight".into());
        names.push("lstm.fc.bias".into());
        for i in 1..=3 {
            names.push(format!("graph.conv{i}.weight"));
            names.push(format!("graph.conv{i}.bias"));
        }
        for i in 1..=self.head.len() {
            names.push(format!("head.fc{i}.weight"));
            names.push(format!("head.fc{i}.bias"));
        }
        names
    }

    pub fn param(&self, name: &str) -> Option<ArrayViewD<'_, f64>> {
        let parts: Vec<&str> = name.split('.').collect();
        match parts.as_slice() {
            ["snn", conv, field] => {
                let idx = conv.strip_prefix("conv")?.parse::<usize>().ok()?;
                let c = self.snn.convs.get(idx.checked_sub(1)?)?;
                match *field {
                    "weight" => Some(c.weight.view().into_dyn()),
                    "bias" => Some(c.bias.view().into_dyn()),
                    _ => None,
                }
            }
            ["lstm", "fc", field] => match *field {
                "weight" => Some(self.motion.fc.weight.view().into_dyn()),
                "bias" => Some(self.motion.fc.bias.view().into_dyn()),
                _ => None,
            },
            ["lstm", layer, field] => {
                let l = match *layer {
                    "l0" => &self.motion.l0,
                    "l1" => &self.motion.l1,
                    _ => return None,
                };
                match *field {
                    "w_ih" => Some(l.w_ih.view().into_dyn()),
                    "w_hh" => Some(l.w_hh.view().into_dyn()),
                    "b_ih" => Some(l.b_ih.view().into_dyn()),
                    "b_hh" => Some(l.b_hh.view().into_dyn()),
                    _ => None,
                }
            }
            ["graph", conv, field] => {
                let (w, b) = match *conv {
                    "conv1" => (&self.graph.w1, &self.graph.b1),
                    "conv2" => (&self.graph.w2, &self.graph.b2),
                    "conv3" => (&self.graph.w3, &self.graph.b3),
                    _ => return None,
                };
                match *field {
                    "weight" => Some(w.view().into_dyn()),
                    "bias" => Some(b.view().into_dyn()),
                    _ => None,
                }
            }
            ["head", fc, field] => {
                let idx = fc.strip_prefix("fc")?.parse::<usize>().ok()?;
                let l = self.head.get(idx.checked_sub(1)?)?;
                match *field {
                    "weight" => Some(l.weight.view().into_dyn()),
                    "bias" => Some(l.bias.view().into_dyn()),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn param_mut(&mut self, name: &str) -> Option<ArrayViewMutD<'_, f64>> {
        let parts: Vec<&str> = name.split('.').collect();
        match parts.as_slice() {
            ["snn", conv, field] => {
                let idx = conv.strip_prefix("conv")?.parse::<usize>().ok()?;
                let c = self.snn.convs.get_mut(idx.checked_sub(1)?)?;
                match *field {
                    "weight" => Some(c.weight.view_mut().into_dyn()),
                    "bias" => Some(c.bias.view_mut().into_dyn()),
                    _ => None,
                }
            }
            ["lstm", "fc", field] => match *field {
                "weight" => Some(self.motion.fc.weight.view_mut().into_dyn()),
                "bias" => Some(self.motion.fc.bias.view_mut().into_dyn()),
                _ => None,
            },
            ["lstm", layer, field] => {
                let l = match *layer {
                    "l0" => &mut self.motion.l0,
                    "l1" => &mut self.motion.l1,
                    _ => return None,
                };
                match *field {
                    "w_ih" => Some(l.w_ih.view_mut().into_dyn()),
                    "w_hh" => Some(l.w_hh.view_mut().into_dyn()),
                    "b_ih" => Some(l.b_ih.view_mut().into_dyn()),
                    "b_hh" => Some(l.b_hh.view_mut().into_dyn()),
                    _ => None,
                }
            }
            ["graph", conv, field] => {
                let (w, b) = match *conv {
                    "conv1" => (&mut self.graph.w1, &mut self.graph.b1),
                    "conv2" => (&mut self.graph.w2, &mut self.graph.b2),
                    "conv3" => (&mut self.graph.w3, &mut self.graph.b3),
                    _ => return None,
                };
                match *field {
                    "weight" => Some(w.view_mut().into_dyn()),
                    "bias" => Some(b.view_mut().into_dyn()),
                    _ => None,
                }
            }
            ["head", fc, field] => {
                let idx = fc.strip_prefix("fc")?.parse::<usize>().ok()?;
                let l = self.head.get_mut(idx.checked_sub(1)?)?;
                match *field {
                    "weight" => Some(l.weight.view_mut().into_dyn()),
                    "bias" => Some(l.bias.view_mut().into_dyn()),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Output coordinate helpers and loss
// ---------------------------------------------------------------------------

/// Map a scaled-space output vector to a crop-pixel box.
pub fn output_to_crop_box(out: &Array1<f64>, crop_size: usize) -> PixelBox {
    let s = crop_size as f64 / OUTPUT_SCALE;
    PixelBox::new(out[0] * s, out[1] * s, out[2] * s, out[3] * s)
}

/// Map a crop-pixel box to the scaled output space.
pub fn crop_box_to_output(b: &PixelBox, crop_size: usize) -> Array1<f64> {
    let s = OUTPUT_SCALE / crop_size as f64;
    Array1::from_vec(vec![b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s])
}

/// Normalize a raw `[3, s, s]` crop of 0..255 intensities for the network.
pub fn normalize_crop(raw: &Array3<f64>) -> Array3<f64> {
    raw.mapv(|v| v / 255.0 - PIXEL_MEAN)
}

/// Sum of absolute coordinate errors in the scaled output space.
pub fn l1_loss(pred: &Array1<f64>, target: &Array1<f64>) -> f64 {
    pred.iter().zip(target.iter()).map(|(p, t)| (p - t).abs()).sum()
}

/// Subgradient of [`l1_loss`] with respect to the prediction (zero at ties).
pub fn l1_loss_grad(pred: &Array1<f64>, target: &Array1<f64>) -> Array1<f64> {
    Array1::from_iter(pred.iter().zip(target.iter()).map(|(p, t)| {
        if p > t {
            1.0
        } else if p < t {
            -1.0
        } else {
            0.0
        }
    }))
}
