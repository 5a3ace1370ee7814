//! Per-frame tracking engine.
//!
//! Tracks are born on their first ground-truth observation (the only frame
//! where the tracker touches ground truth in prediction mode) and then
//! propagated one frame at a time: a square search window is laid around
//! the previous position, the same window is cropped from the previous and
//! the current frame, and the network regresses the object's box inside
//! that window. A track that escapes its window is lost and never
//! resurrected.
//!
//! Two escape policies exist. `Prediction` inspects the predicted box
//! itself (center outside the window, or a degenerate side) and is the
//! inference default; `GroundTruth` flags a track as soon as the annotated
//! center leaves the window, which requires annotations for every frame and
//! is the policy used during training and in stress tests, where it
//! measures how often true motion outruns the window.

use ndarray::Array3;

use crate::data::{Hypothesis, Sequence};
use crate::error::{Error, Result};
use crate::geom::{
    point_to_box, CropTransform, Frame, PixelBox, DEFAULT_CONTEXT_FACTOR, DEFAULT_MIN_BOX_SIDE,
    DEFAULT_OBJECT_EXTENT_M,
};
use crate::model::{
    build_neighbor_graph, normalize_crop, output_to_crop_box, AblationMode, MotionHistory,
    Network, StepPositions,
};

/// How the engine decides a track has escaped its search window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapePolicy {
    /// Inspect the predicted box: lost when its center leaves the closed
    /// window or a side degenerates below one pixel.
    Prediction,
    /// Lost when the annotated center leaves the window. Needs ground truth
    /// on every frame.
    GroundTruth,
}

#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub context_factor: f64,
    pub min_side: f64,
    /// Metric object extent used to expand point annotations at birth.
    pub object_extent_m: f64,
    pub escape: EscapePolicy,
    pub ablation: AblationMode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            context_factor: DEFAULT_CONTEXT_FACTOR,
            min_side: DEFAULT_MIN_BOX_SIDE,
            object_extent_m: DEFAULT_OBJECT_EXTENT_M,
            escape: EscapePolicy::Prediction,
            ablation: AblationMode::Full,
        }
    }
}

/// The square search window around a previous box: centered on the box
/// center, side `context_factor * max(box side, min_side)`.
pub fn search_window(prev: &PixelBox, context_factor: f64, min_side: f64) -> PixelBox {
    let side = prev.width().max(prev.height()).max(min_side) * context_factor;
    let (cx, cy) = prev.center();
    PixelBox::centered(cx, cy, side)
}

/// Lost-track test against a window in the same coordinate system: the
/// box's center must stay inside the closed window and both sides must be
/// at least one pixel.
pub fn detect_lost(predicted: &PixelBox, window: &PixelBox) -> bool {
    let (cx, cy) = predicted.center();
    !window.contains(cx, cy) || predicted.width() < 1.0 || predicted.height() < 1.0
}

/// Cut `window` out of `frame` and resample it to a `crop_size` square with
/// bilinear interpolation. Regions outside the image are filled with the
/// frame's mean color. Returns the raw crop (`[3, s, s]`, 0..255 range) and
/// the transform from crop coordinates back to image coordinates.
pub fn extract_crop(
    frame: &Frame,
    window: &PixelBox,
    crop_size: usize,
) -> Result<(Array3<f64>, CropTransform)> {
    let img = frame.require_image()?;
    let (iw, ih) = (img.width() as f64, img.height() as f64);
    if window.x2 <= 0.0 || window.y2 <= 0.0 || window.x1 >= iw || window.y1 >= ih {
        return Err(Error::invalid(format!(
            "search window ({:.1},{:.1})-({:.1},{:.1}) lies outside the {iw}x{ih} image",
            window.x1, window.y1, window.x2, window.y2
        )));
    }
    if !window.is_well_formed() {
        return Err(Error::invalid("search window is degenerate"));
    }
    let mean = frame.mean_rgb()?;
    let scale = window.width().max(window.height()) / crop_size as f64;
    let transform = CropTransform::new(scale, (window.x1, window.y1))?;

    let mut crop = Array3::zeros((3, crop_size, crop_size));
    // Pixel (r, c) of an image has its center at (c + 0.5, r + 0.5).
    let sample = |x: f64, y: f64, ch: usize| -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let wx = fx - x0;
        let wy = fy - y0;
        let tap = |ix: f64, iy: f64| -> f64 {
            if ix < 0.0 || iy < 0.0 || ix >= iw || iy >= ih {
                mean[ch]
            } else {
                img.get_pixel(ix as u32, iy as u32).0[ch] as f64
            }
        };
        let v00 = tap(x0, y0);
        let v10 = tap(x0 + 1.0, y0);
        let v01 = tap(x0, y0 + 1.0);
        let v11 = tap(x0 + 1.0, y0 + 1.0);
        v00 * (1.0 - wx) * (1.0 - wy)
            + v10 * wx * (1.0 - wy)
            + v01 * (1.0 - wx) * wy
            + v11 * wx * wy
    };
    for cy in 0..crop_size {
        let y = window.y1 + (cy as f64 + 0.5) * scale;
        for cx in 0..crop_size {
            let x = window.x1 + (cx as f64 + 0.5) * scale;
            for ch in 0..3 {
                crop[(ch, cy, cx)] = sample(x, y, ch);
            }
        }
    }
    Ok((crop, transform))
}

/// Why a track stopped producing hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackEnd {
    /// Still active when the sequence ended.
    SequenceEnd,
    /// Escaped its search window at the recorded frame.
    Lost(usize),
    /// Its annotations ended (ground-truth escape policy only).
    GroundTruthEnd(usize),
}

/// One tracked object and its per-frame boxes.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub birth_frame: usize,
    /// One box per frame starting at `birth_frame`, in image coordinates.
    boxes: Vec<PixelBox>,
    pub end: TrackEnd,
}

impl Track {
    pub fn box_at(&self, frame: usize) -> Option<&PixelBox> {
        if frame < self.birth_frame {
            return None;
        }
        self.boxes.get(frame - self.birth_frame)
    }

    pub fn last_frame(&self) -> usize {
        self.birth_frame + self.boxes.len() - 1
    }

    pub fn is_lost(&self) -> bool {
        matches!(self.end, TrackEnd::Lost(_))
    }
}

#[derive(Debug, Clone)]
pub struct TrackingOutput {
    pub tracks: Vec<Track>,
    pub hypotheses: Vec<Hypothesis>,
}

impl TrackingOutput {
    pub fn lost_fraction(&self) -> f64 {
        if self.tracks.is_empty() {
            return 0.0;
        }
        let lost = self.tracks.iter().filter(|t| t.is_lost()).count();
        lost as f64 / self.tracks.len() as f64
    }
}

struct LiveTrack {
    id: u32,
    birth_frame: usize,
    boxes: Vec<PixelBox>,
    end: Option<TrackEnd>,
}

impl LiveTrack {
    fn center_at(&self, frame: usize) -> Option<(f64, f64)> {
        if frame < self.birth_frame {
            return None;
        }
        self.boxes.get(frame - self.birth_frame).map(PixelBox::center)
    }
}

/// Run the tracker over a fully loaded sequence.
pub fn track_sequence(
    net: &Network,
    seq: &Sequence,
    cfg: &TrackerConfig,
) -> Result<TrackingOutput> {
    let gsd = seq.meta.gsd;
    let spans = seq.track_spans();
    let history_len = net.config.history_len;
    let mut live: Vec<LiveTrack> = Vec::new();

    for frame_idx in 0..seq.frames.len() {
        let frame = &seq.frames[frame_idx];

        // Advance existing tracks first, all against the state of the
        // previous frame, then record this frame's births.
        if frame_idx > 0 {
            let prev_frame = &seq.frames[frame_idx - 1];
            // Positions every track held at recent frames, collected up
            // front for the neighbor matrices.
            let graph_start = frame_idx.saturating_sub(history_len);
            let step_cache: Vec<Vec<(u32, (f64, f64))>> = (graph_start..frame_idx)
                .map(|g| {
                    live.iter()
                        .filter_map(|t| t.center_at(g).map(|c| (t.id, c)))
                        .collect()
                })
                .collect();

            for t in live.iter_mut() {
                if t.end.is_some() {
                    continue;
                }
                let prev_box = *t.boxes.last().expect("live tracks hold a box");
                let window = search_window(&prev_box, cfg.context_factor, cfg.min_side);

                if cfg.escape == EscapePolicy::GroundTruth {
                    match frame.annotation_for(t.id) {
                        Some(ann) => {
                            if !window.contains(ann.x, ann.y) {
                                t.end = Some(TrackEnd::Lost(frame_idx));
                                continue;
                            }
                        }
                        None => {
                            t.end = Some(TrackEnd::GroundTruthEnd(frame_idx));
                            continue;
                        }
                    }
                }

                let crops = extract_crop(prev_frame, &window, net.config.crop_size)
                    .and_then(|(target, to_image)| {
                        let (search, _) = extract_crop(frame, &window, net.config.crop_size)?;
                        Ok((target, search, to_image))
                    });
                let (target_raw, search_raw, to_image) = match crops {
                    Ok(c) => c,
                    Err(_) => {
                        // The window has drifted off the image entirely;
                        // that is a lost track, not a hard failure.
                        t.end = Some(TrackEnd::Lost(frame_idx));
                        continue;
                    }
                };

                // Motion: displacements between consecutive recent centers,
                // the most recent `history_len` of them ending at the
                // previous frame.
                let mut displacements = Vec::new();
                let hist_start = frame_idx
                    .saturating_sub(history_len + 1)
                    .max(t.birth_frame);
                for g in hist_start..frame_idx - 1 {
                    if let (Some(a), Some(b)) = (t.center_at(g), t.center_at(g + 1)) {
                        displacements.push((b.0 - a.0, b.1 - a.1));
                    }
                }
                let history = MotionHistory::from_steps(&displacements, history_len);

                // Neighbors: this track against everyone else, per step.
                let mut steps = Vec::new();
                for (off, g) in (graph_start..frame_idx).enumerate() {
                    let Some(target) = t.center_at(g) else { continue };
                    let others: Vec<(u32, (f64, f64))> = step_cache[off]
                        .iter()
                        .filter(|(id, _)| *id != t.id)
                        .cloned()
                        .collect();
                    steps.push(StepPositions { target, others });
                }
                let graph = build_neighbor_graph(
                    &steps,
                    &to_image,
                    gsd,
                    net.config.graph_neighbors,
                    net.config.graph_radius_m,
                    history_len,
                )?;

                let target = normalize_crop(&target_raw);
                let search = normalize_crop(&search_raw);
                let (out, _) =
                    net.forward(&target, &search, &history, &graph, cfg.ablation, None)?;
                let pred_crop = output_to_crop_box(&out, net.config.crop_size);
                let pred_img = to_image.apply_box(&pred_crop).normalized();

                if cfg.escape == EscapePolicy::Prediction && detect_lost(&pred_img, &window) {
                    t.end = Some(TrackEnd::Lost(frame_idx));
                    continue;
                }
                t.boxes.push(pred_img);
            }
        }

        // Births: every span that starts here seeds a track from its
        // annotation, expanded to a box by the metric object extent.
        for span in &spans {
            if span.birth == frame_idx {
                let ann = frame
                    .annotation_for(span.id)
                    .expect("span birth frame has the annotation");
                let b = point_to_box(ann.x, ann.y, gsd, cfg.object_extent_m, cfg.min_side);
                live.push(LiveTrack {
                    id: span.id,
                    birth_frame: frame_idx,
                    boxes: vec![b],
                    end: None,
                });
            }
        }
    }

    let mut hypotheses = Vec::new();
    let mut tracks = Vec::new();
    for t in live {
        let end = t.end.unwrap_or(TrackEnd::SequenceEnd);
        let track = Track {
            id: t.id,
            birth_frame: t.birth_frame,
            boxes: t.boxes,
            end,
        };
        for (off, b) in track.boxes.iter().enumerate() {
            hypotheses.push(Hypothesis {
                frame: track.birth_frame + off,
                id: track.id,
                bbox: *b,
            });
        }
        tracks.push(track);
    }
    hypotheses.sort_by_key(|h| (h.frame, h.id));
    Ok(TrackingOutput { tracks, hypotheses })
}
