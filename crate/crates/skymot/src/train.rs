//! Feedback-loop trainer.
//!
//! Training follows tracks the same way inference does: each batch slot
//! holds one track being followed through its sequence, the search window
//! is laid around the network's own previous prediction, and the motion
//! history and neighbor-matrix target rows are built from predicted
//! positions (neighbor positions come from the annotations, since only the
//! target track is being predicted). Gradients are truncated at the current
//! step: recurrent and graph inputs enter as constants.
//!
//! The loss is the L1 distance between predicted and annotated box corners
//! in the scaled output space, averaged over the batch. Optimization is
//! plain SGD with a step-decayed learning rate and optional per-layer
//! multipliers. A slot is replaced by a freshly drawn track, with a uniform
//! random start frame, when its annotated center escapes the search window,
//! its annotations end, or its sequence ends.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sequence;
use crate::engine::{extract_crop, search_window};
use crate::error::{Error, Result};
use crate::geom::{
    point_to_box, PixelBox, DEFAULT_CONTEXT_FACTOR, DEFAULT_MIN_BOX_SIDE, DEFAULT_OBJECT_EXTENT_M,
};
use crate::model::{
    build_neighbor_graph, checkpoint, crop_box_to_output, l1_loss, l1_loss_grad, normalize_crop,
    output_to_crop_box, AblationMode, Gradients, MotionHistory, Network, StepPositions,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate is multiplied by `lr_decay` every `lr_decay_every`
    /// iterations.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    pub seed: u64,
    pub ablation: AblationMode,
    /// Per-layer learning-rate multipliers, matched by the longest name
    /// prefix (e.g. `"head." = 10.0` or `"snn.conv1" = 0.0`).
    pub lr_multipliers: BTreeMap<String, f64>,
    pub context_factor: f64,
    pub min_side: f64,
    pub object_extent_m: f64,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20000,
            batch_size: 150,
            lr: 1e-6,
            lr_decay: 0.1,
            lr_decay_every: 20000,
            seed: 1,
            ablation: AblationMode::Full,
            lr_multipliers: BTreeMap::new(),
            context_factor: DEFAULT_CONTEXT_FACTOR,
            min_side: DEFAULT_MIN_BOX_SIDE,
            object_extent_m: DEFAULT_OBJECT_EXTENT_M,
            log_every: 50,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr decay must lie in (0, 1]"));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::invalid("lr decay interval must be positive"));
        }
        for (k, v) in &self.lr_multipliers {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::invalid(format!(
                    "lr multiplier for '{k}' must be a finite non-negative number"
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(path.to_path_buf(), None, format!("cannot read: {e}")))?;
        let cfg: TrainConfig = toml::from_str(&text)
            .map_err(|e| Error::format(path.to_path_buf(), None, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The effective learning rate at an iteration (0-based).
    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.lr * self.lr_decay.powi((iteration / self.lr_decay_every) as i32)
    }

    /// Longest-prefix learning-rate multiplier for a parameter name.
    pub fn multiplier_for(&self, name: &str) -> f64 {
        let mut best: Option<(usize, f64)> = None;
        for (prefix, m) in &self.lr_multipliers {
            if name.starts_with(prefix.as_str()) {
                let len = prefix.len();
                if best.map_or(true, |(l, _)| len > l) {
                    best = Some((len, *m));
                }
            }
        }
        best.map_or(1.0, |(_, m)| m)
    }
}

/// One batch slot: a track being followed through its sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrackSample {
    seq_idx: usize,
    track_id: u32,
    /// Frame of `current_box`; the next step predicts `frame + 1`.
    frame: usize,
    current_box: PixelBox,
    /// Predicted centers at recent consecutive frames ending at `frame`.
    centers: Vec<(f64, f64)>,
}

/// Everything measured during one training iteration.
#[derive(Debug, Clone)]
pub struct StepStats {
    pub iteration: u64,
    pub lr: f64,
    /// Batch-mean L1 loss in the scaled output space.
    pub loss: f64,
    /// Slots replaced before this step (escaped or exhausted tracks).
    pub replaced: usize,
    /// Gradient norms per component, keyed snn / lstm / graph / head.
    pub grad_norms: BTreeMap<String, f64>,
}

/// Serialized trainer progress, stored next to the weight archive so a run
/// can resume mid-stream.
#[derive(Debug, Serialize, Deserialize)]
struct TrainerState {
    iteration: u64,
    seed: u64,
    rng_word_pos: u128,
    /// Sequences are matched by name on resume.
    sequence_names: Vec<String>,
    samples: Vec<TrackSample>,
}

pub struct Trainer {
    pub net: Network,
    pub cfg: TrainConfig,
    sequences: Vec<Sequence>,
    rng: ChaCha8Rng,
    iteration: u64,
    samples: Vec<TrackSample>,
}

impl Trainer {
    pub fn new(net: Network, sequences: Vec<Sequence>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Self::check_corpus(&sequences)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut t = Trainer {
            net,
            cfg,
            sequences,
            rng,
            iteration: 0,
            samples: Vec::new(),
        };
        t.samples = (0..t.cfg.batch_size)
            .map(|_| t.draw_sample())
            .collect::<Result<_>>()?;
        Ok(t)
    }

    fn check_corpus(sequences: &[Sequence]) -> Result<()> {
        if sequences.is_empty() {
            return Err(Error::invalid("training corpus is empty"));
        }
        let trackable = sequences
            .iter()
            .flat_map(|s| s.track_spans())
            .any(|sp| sp.last > sp.birth);
        if !trackable {
            return Err(Error::invalid(
                "no track in the corpus spans at least two frames",
            ));
        }
        for s in sequences {
            for f in &s.frames {
                f.require_image()?;
            }
        }
        Ok(())
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Draw a fresh track sample: sequence, track, and start frame all
    /// uniform (the start frame over every position that leaves at least
    /// one step of room).
    fn draw_sample(&mut self) -> Result<TrackSample> {
        for _ in 0..10_000 {
            let seq_idx = self.rng.gen_range(0..self.sequences.len());
            let seq = &self.sequences[seq_idx];
            let spans = seq.track_spans();
            if spans.is_empty() {
                continue;
            }
            let span = &spans[self.rng.gen_range(0..spans.len())];
            if span.last <= span.birth {
                continue;
            }
            let frame = self.rng.gen_range(span.birth..span.last);
            let ann = seq.frames[frame]
                .annotation_for(span.id)
                .expect("span covers the frame");
            let b = point_to_box(
                ann.x,
                ann.y,
                seq.meta.gsd,
                self.cfg.object_extent_m,
                self.cfg.min_side,
            );
            return Ok(TrackSample {
                seq_idx,
                track_id: span.id,
                frame,
                current_box: b,
                centers: vec![b.center()],
            });
        }
        Err(Error::invalid(
            "could not draw a trainable track from the corpus",
        ))
    }

    /// Replace slots whose track escaped its window, ran out of
    /// annotations, or reached the end of its sequence. Returns how many
    /// were replaced.
    fn refresh_samples(&mut self) -> Result<usize> {
        let mut replaced = 0;
        for i in 0..self.samples.len() {
            let mut needs_replacement = true;
            // A slot survives only if its next frame exists, is annotated,
            // and the annotated center is still inside the search window.
            {
                let s = &self.samples[i];
                let seq = &self.sequences[s.seq_idx];
                let next = s.frame + 1;
                if next < seq.frames.len() {
                    if let Some(ann) = seq.frames[next].annotation_for(s.track_id) {
                        let window = search_window(
                            &s.current_box,
                            self.cfg.context_factor,
                            self.cfg.min_side,
                        );
                        if window.contains(ann.x, ann.y) {
                            needs_replacement = false;
                        }
                    }
                }
            }
            if needs_replacement {
                // Up to a few draws to land on a slot that can take a step
                // right away; pathological corpora keep the last draw.
                for attempt in 0..32 {
                    let candidate = self.draw_sample()?;
                    let seq = &self.sequences[candidate.seq_idx];
                    let next = candidate.frame + 1;
                    let ok = seq.frames[next]
                        .annotation_for(candidate.track_id)
                        .map(|ann| {
                            search_window(
                                &candidate.current_box,
                                self.cfg.context_factor,
                                self.cfg.min_side,
                            )
                            .contains(ann.x, ann.y)
                        })
                        .unwrap_or(false);
                    self.samples[i] = candidate;
                    if ok || attempt == 31 {
                        break;
                    }
                }
                replaced += 1;
            }
        }
        Ok(replaced)
    }

    /// One iteration: refresh slots, step every slot one frame with the
    /// current weights, average the gradients, apply SGD.
    pub fn step(&mut self) -> Result<StepStats> {
        let replaced = self.refresh_samples()?;
        let lr = self.cfg.lr_at(self.iteration);

        let mut total_loss = 0.0;
        let mut acc = Gradients::default();
        let history_len = self.net.config.history_len;

        for i in 0..self.samples.len() {
            let s = self.samples[i].clone();
            let seq = &self.sequences[s.seq_idx];
            let next = s.frame + 1;
            let window =
                search_window(&s.current_box, self.cfg.context_factor, self.cfg.min_side);

            let (target_raw, to_image) =
                extract_crop(&seq.frames[s.frame], &window, self.net.config.crop_size)?;
            let (search_raw, _) =
                extract_crop(&seq.frames[next], &window, self.net.config.crop_size)?;
            let target = normalize_crop(&target_raw);
            let search = normalize_crop(&search_raw);

            // Motion: displacements between the predicted centers.
            let displacements: Vec<(f64, f64)> = s
                .centers
                .windows(2)
                .map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1))
                .collect();
            let history = MotionHistory::from_steps(&displacements, history_len);

            // Neighbors: predicted centers for the target, annotations for
            // everyone else, over the frames the centers cover.
            let mut steps = Vec::new();
            let n_steps = s.centers.len().min(history_len);
            let first_center = s.centers.len() - n_steps;
            for (k, &center) in s.centers.iter().enumerate().skip(first_center) {
                let g = s.frame - (s.centers.len() - 1 - k);
                let others: Vec<(u32, (f64, f64))> = seq.frames[g]
                    .annotations
                    .iter()
                    .filter(|a| a.id != s.track_id)
                    .map(|a| (a.id, (a.x, a.y)))
                    .collect();
                steps.push(StepPositions {
                    target: center,
                    others,
                });
            }
            let graph = build_neighbor_graph(
                &steps,
                &to_image,
                seq.meta.gsd,
                self.net.config.graph_neighbors,
                self.net.config.graph_radius_m,
                history_len,
            )?;

            let (out, cache) = self.net.forward(
                &target,
                &search,
                &history,
                &graph,
                self.cfg.ablation,
                Some(&mut self.rng),
            )?;

            let ann = seq.frames[next]
                .annotation_for(s.track_id)
                .expect("refresh kept only annotated slots");
            let gt_img = point_to_box(
                ann.x,
                ann.y,
                seq.meta.gsd,
                self.cfg.object_extent_m,
                self.cfg.min_side,
            );
            let gt_crop = to_image.unapply_box(&gt_img);
            let gt_out = crop_box_to_output(&gt_crop, self.net.config.crop_size);

            total_loss += l1_loss(&out, &gt_out);
            let grad = l1_loss_grad(&out, &gt_out);
            acc.accumulate(&self.net.backward(&grad, &cache));

            // Feed the prediction back as the new track state.
            let pred_img = to_image
                .apply_box(&output_to_crop_box(&out, self.net.config.crop_size))
                .normalized();
            let slot = &mut self.samples[i];
            slot.frame = next;
            slot.current_box = pred_img;
            slot.centers.push(pred_img.center());
            if slot.centers.len() > history_len + 1 {
                slot.centers.remove(0);
            }
        }

        let n = self.samples.len() as f64;
        acc.scale(1.0 / n);
        let loss = total_loss / n;

        let mut grad_norms = BTreeMap::new();
        for (key, prefix) in [
            ("snn", "snn."),
            ("lstm", "lstm."),
            ("graph", "graph."),
            ("head", "head."),
        ] {
            grad_norms.insert(key.to_string(), acc.group_norm(prefix));
        }

        let cfg = &self.cfg;
        self.net
            .sgd_step(&acc, |name| lr * cfg.multiplier_for(name));

        let stats = StepStats {
            iteration: self.iteration,
            lr,
            loss,
            replaced,
            grad_norms,
        };
        self.iteration += 1;
        Ok(stats)
    }

    /// Write the weight archive plus the JSON progress sidecar.
    pub fn save_checkpoint(&self, weights_path: &Path) -> Result<()> {
        checkpoint::save(&self.net, weights_path)?;
        let state = TrainerState {
            iteration: self.iteration,
            seed: self.cfg.seed,
            rng_word_pos: self.rng.get_word_pos(),
            sequence_names: self
                .sequences
                .iter()
                .map(|s| s.meta.name.clone())
                .collect(),
            samples: self.samples.clone(),
        };
        let json = serde_json::to_string_pretty(&state)
            .map_err(|e| Error::checkpoint(format!("trainer state serialization failed: {e}")))?;
        std::fs::write(sidecar_path(weights_path), json)?;
        Ok(())
    }

    /// Rebuild a trainer from a checkpoint written by
    /// [`Trainer::save_checkpoint`]. The corpus must contain the same
    /// sequences (matched by name) the original run trained on.
    pub fn resume(weights_path: &Path, sequences: Vec<Sequence>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Self::check_corpus(&sequences)?;
        let net = checkpoint::load(weights_path)?;
        let text = std::fs::read_to_string(sidecar_path(weights_path))?;
        let state: TrainerState = serde_json::from_str(&text)
            .map_err(|e| Error::checkpoint(format!("trainer state is unreadable: {e}")))?;

        let names: Vec<String> = sequences.iter().map(|s| s.meta.name.clone()).collect();
        if names != state.sequence_names {
            return Err(Error::checkpoint(format!(
                "corpus mismatch: checkpoint trained on {:?}, given {names:?}",
                state.sequence_names
            )));
        }
        if state.seed != cfg.seed {
            return Err(Error::checkpoint(format!(
                "seed mismatch: checkpoint used {}, config says {}",
                state.seed, cfg.seed
            )));
        }
        for s in &state.samples {
            if s.seq_idx >= sequences.len()
                || s.frame >= sequences[s.seq_idx].frames.len()
            {
                return Err(Error::checkpoint("trainer state points outside the corpus"));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
        rng.set_word_pos(state.rng_word_pos);
        Ok(Trainer {
            net,
            cfg,
            sequences,
            rng,
            iteration: state.iteration,
            samples: state.samples,
        })
    }
}

fn sidecar_path(weights_path: &Path) -> PathBuf {
    let mut os = weights_path.as_os_str().to_owned();
    os.push(".state.json");
    PathBuf::from(os)
}

/// Append loss-curve rows (`iteration,lr,loss`) to a CSV, writing the
/// header when the file starts empty.
pub struct LossLog {
    file: std::fs::File,
}

impl LossLog {
    pub fn open(path: &Path) -> Result<Self> {
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        if !exists {
            writeln!(file, "iteration,lr,loss")?;
        }
        Ok(LossLog { file })
    }

    pub fn push(&mut self, stats: &StepStats) -> Result<()> {
        writeln!(self.file, "{},{:e},{}", stats.iteration, stats.lr, stats.loss)?;
        Ok(())
    }
}
