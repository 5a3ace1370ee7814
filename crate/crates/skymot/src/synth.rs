//! Synthetic sequence generation.
//!
//! Renders point-like agents as anti-aliased colored dots over a static
//! textured background and writes a complete sequence directory (frames,
//! annotations, metadata sidecar). Everything is driven by one seed: the same
//! config produces byte-identical annotation files and frame rasters on every
//! run.
//!
//! Motion models:
//! - `linear`: constant per-agent velocity, reflected at the image border.
//! - `group`: one shared base velocity plus small per-agent perturbation,
//!   mimicking pedestrian groups that move coherently.
//! - `crossing`: agents are set up in pairs whose straight paths intersect
//!   mid-sequence, provoking close encounters and identity pressure.
//! - `adversarial-fast`: per-frame displacement is made larger than the
//!   search window of a tracker parameterized with the default context
//!   factor, so every track provably escapes its window. This reproduces the
//!   failure mode of sequences whose inter-frame motion exceeds the tracker's
//!   field of view.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::geom::{
    PointAnnotation, SequenceMeta, DEFAULT_CONTEXT_FACTOR, DEFAULT_MIN_BOX_SIDE,
    DEFAULT_OBJECT_EXTENT_M,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionModel {
    Linear,
    Group,
    Crossing,
    AdversarialFast,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub n_agents: usize,
    pub motion: MotionModel,
    /// Per-frame speed range in pixels. Ignored by `adversarial-fast`, which
    /// derives its (much larger) speed from the window geometry.
    pub speed_min: f64,
    pub speed_max: f64,
    pub dot_radius: f64,
    /// Uniform per-agent, per-channel color jitter amplitude (0..=127).
    pub color_jitter: f64,
    /// Background base brightness and white-noise amplitude.
    pub background_level: u8,
    pub background_noise: u8,
    pub gsd: f64,
    pub fps: f64,
    pub n_frames: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "synth".into(),
            width: 192,
            height: 192,
            n_agents: 10,
            motion: MotionModel::Linear,
            speed_min: 0.5,
            speed_max: 2.0,
            dot_radius: 2.5,
            color_jitter: 25.0,
            background_level: 170,
            background_noise: 18,
            gsd: 0.10,
            fps: 2.0,
            n_frames: 30,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(Error::invalid("n_frames must be at least 2"));
        }
        if self.n_agents == 0 {
            return Err(Error::invalid("n_agents must be at least 1"));
        }
        let radius_ok = self.dot_radius.is_finite() && self.dot_radius > 0.0;
        if !radius_ok {
            return Err(Error::invalid("dot_radius must be positive"));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return Err(Error::invalid(format!(
                "speed range [{}, {}] must be positive and ordered",
                self.speed_min, self.speed_max
            )));
        }
        if !(self.color_jitter >= 0.0 && self.color_jitter <= 127.0) {
            return Err(Error::invalid("color_jitter must be in [0, 127]"));
        }
        let margin = self.margin();
        if (self.width as f64) <= 2.0 * margin + 2.0 || (self.height as f64) <= 2.0 * margin + 2.0 {
            return Err(Error::invalid(format!(
                "image {}x{} too small for dot radius {}",
                self.width, self.height, self.dot_radius
            )));
        }
        if self.motion == MotionModel::AdversarialFast {
            // Every jump keeps its full length by flipping direction
            // components at the walls, which needs room to land.
            let speed = self.adversarial_speed();
            let span = (self.width.min(self.height) as f64) - 1.0 - 2.0 * margin;
            if span <= speed + 1.0 {
                return Err(Error::invalid(format!(
                    "image {}x{} too small for adversarial jumps of {speed:.1} px",
                    self.width, self.height
                )));
            }
        }
        // gsd and fps validated through the sequence metadata they become.
        self.meta().validate()
    }

    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta {
            name: self.name.clone(),
            gsd: self.gsd,
            fps: self.fps,
            frame_count: self.n_frames,
        }
    }

    /// Wall margin that keeps dot centers comfortably inside the frame.
    fn margin(&self) -> f64 {
        self.dot_radius + 1.0
    }

    /// Per-frame displacement of `adversarial-fast` agents: larger than both
    /// the context-scaled dot diameter and the full default search window, so
    /// an object always leaves the window built around its previous position.
    pub fn adversarial_speed(&self) -> f64 {
        let box_side = (DEFAULT_OBJECT_EXTENT_M / self.gsd)
            .round()
            .max(DEFAULT_MIN_BOX_SIDE);
        let window_side = DEFAULT_CONTEXT_FACTOR * box_side.max(2.0 * self.dot_radius);
        2.0 * window_side + 2.0
    }
}

/// A generated sequence: where it was written, its metadata, and the exact
/// agent trajectories (handy for tests and for deriving training corpora).
#[derive(Debug)]
pub struct GeneratedSequence {
    pub dir: PathBuf,
    pub meta: SequenceMeta,
    /// Per agent: center position per frame.
    pub tracks: Vec<Vec<(f64, f64)>>,
}

// ---------------------------------------------------------------------------
// Agent simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Agent {
    pos: (f64, f64),
    vel: (f64, f64),
    color: [u8; 3],
}

fn unit_from_angle(theta: f64) -> (f64, f64) {
    (theta.cos(), theta.sin())
}

/// Reflect a coordinate into `[lo, hi]`, flipping the velocity component for
/// every bounce. Handles displacements larger than the interval.
fn reflect(mut x: f64, mut v: f64, lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(hi > lo);
    let span = hi - lo;
    loop {
        if x < lo {
            x = lo + (lo - x);
            v = -v;
        } else if x > hi {
            x = hi - (x - hi);
            v = -v;
        } else {
            return (x, v);
        }
        // Numerical guard: fold extreme overshoots toward the interval.
        if x < lo - 2.0 * span || x > hi + 2.0 * span {
            x = lo + (x - lo).rem_euclid(2.0 * span);
        }
    }
}

fn spawn_agents(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Agent> {
    let margin = cfg.margin();
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let color = |rng: &mut ChaCha8Rng| -> [u8; 3] {
        // Dark dots against a light background; jitter separates agents.
        let base = [70.0, 60.0, 55.0];
        let mut c = [0u8; 3];
        for (ci, b) in c.iter_mut().zip(base) {
            let j = rng.gen_range(-cfg.color_jitter..=cfg.color_jitter);
            *ci = (b + j).clamp(0.0, 255.0) as u8;
        }
        c
    };
    let rand_pos = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        (
            rng.gen_range(margin..w - 1.0 - margin),
            rng.gen_range(margin..h - 1.0 - margin),
        )
    };

    match cfg.motion {
        MotionModel::Linear => (0..cfg.n_agents)
            .map(|_| {
                let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
                let dir = unit_from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
                Agent {
                    pos: rand_pos(rng),
                    vel: (dir.0 * speed, dir.1 * speed),
                    color: color(rng),
                }
            })
            .collect(),
        MotionModel::Group => {
            let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
            let dir = unit_from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
            let base_vel = (dir.0 * speed, dir.1 * speed);
            (0..cfg.n_agents)
                .map(|_| {
                    // Small individual drift on top of the shared heading.
                    let jitter = 0.15 * speed;
                    Agent {
                        pos: rand_pos(rng),
                        vel: (
                            base_vel.0 + rng.gen_range(-jitter..=jitter),
                            base_vel.1 + rng.gen_range(-jitter..=jitter),
                        ),
                        color: color(rng),
                    }
                })
                .collect()
        }
        MotionModel::Crossing => {
            // Pairs aimed at a shared crossing point reached mid-sequence.
            let t_cross = (cfg.n_frames / 2).max(1) as f64;
            let mut agents = Vec::with_capacity(cfg.n_agents);
            while agents.len() < cfg.n_agents {
                let cx = rng.gen_range(w * 0.35..w * 0.65);
                let cy = rng.gen_range(h * 0.35..h * 0.65);
                for _ in 0..2 {
                    if agents.len() == cfg.n_agents {
                        break;
                    }
                    let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
                    let dir = unit_from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
                    let vel = (dir.0 * speed, dir.1 * speed);
                    let start = (cx - vel.0 * t_cross, cy - vel.1 * t_cross);
                    // Fold the start point into bounds; the exact crossing
                    // then bends, but encounters stay frequent.
                    let (px, vx) = reflect(start.0, vel.0, margin, w - 1.0 - margin);
                    let (py, vy) = reflect(start.1, vel.1, margin, h - 1.0 - margin);
                    agents.push(Agent {
                        pos: (px, py),
                        vel: (vx, vy),
                        color: color(rng),
                    });
                }
            }
            agents
        }
        MotionModel::AdversarialFast => {
            let speed = cfg.adversarial_speed();
            (0..cfg.n_agents)
                .map(|_| {
                    let dir = unit_from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
                    Agent {
                        pos: rand_pos(rng),
                        vel: (dir.0 * speed, dir.1 * speed),
                        color: color(rng),
                    }
                })
                .collect()
        }
    }
}

fn advance(agent: &mut Agent, cfg: &SynthConfig, rng: &mut ChaCha8Rng) {
    let margin = cfg.margin();
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let (lo_x, hi_x) = (margin, w - 1.0 - margin);
    let (lo_y, hi_y) = (margin, h - 1.0 - margin);
    match cfg.motion {
        MotionModel::AdversarialFast => {
            // Fresh heading every frame, full jump length preserved: a step
            // that would cross a wall flips that direction component instead
            // of reflecting the path, so the displacement never shrinks.
            let speed = cfg.adversarial_speed();
            let dir = unit_from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
            let mut dx = dir.0 * speed;
            let mut dy = dir.1 * speed;
            if agent.pos.0 + dx < lo_x || agent.pos.0 + dx > hi_x {
                dx = -dx;
            }
            if agent.pos.1 + dy < lo_y || agent.pos.1 + dy > hi_y {
                dy = -dy;
            }
            agent.pos = (agent.pos.0 + dx, agent.pos.1 + dy);
            agent.vel = (dx, dy);
        }
        _ => {
            let nx = agent.pos.0 + agent.vel.0;
            let ny = agent.pos.1 + agent.vel.1;
            let (px, vx) = reflect(nx, agent.vel.0, lo_x, hi_x);
            let (py, vy) = reflect(ny, agent.vel.1, lo_y, hi_y);
            agent.pos = (px, py);
            agent.vel = (vx, vy);
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Small integer hash for the background texture: deterministic, platform
/// independent, no trig.
fn pixel_hash(x: u32, y: u32, seed: u64) -> u64 {
    let mut v = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    v ^= v >> 33;
    v = v.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    v ^= v >> 33;
    v
}

fn render_background(cfg: &SynthConfig) -> image::RgbImage {
    let (level, amp) = (cfg.background_level as f64, cfg.background_noise as f64);
    image::RgbImage::from_fn(cfg.width, cfg.height, |x, y| {
        let n = (pixel_hash(x, y, cfg.seed) % 2048) as f64 / 2048.0 * 2.0 - 1.0;
        let v = (level + n * amp).clamp(0.0, 255.0);
        // Slight warm cast so the three channels are not identical.
        image::Rgb([
            v.clamp(0.0, 255.0) as u8,
            (v * 0.97).clamp(0.0, 255.0) as u8,
            (v * 0.92).clamp(0.0, 255.0) as u8,
        ])
    })
}

/// Draw an anti-aliased disc: coverage ramps linearly across the rim pixel.
fn draw_dot(img: &mut image::RgbImage, cx: f64, cy: f64, r: f64, color: [u8; 3]) {
    let x_lo = (cx - r - 1.0).floor().max(0.0) as u32;
    let x_hi = (cx + r + 1.0).ceil().min(img.width() as f64 - 1.0) as u32;
    let y_lo = (cy - r - 1.0).floor().max(0.0) as u32;
    let y_hi = (cy + r + 1.0).ceil().min(img.height() as f64 - 1.0) as u32;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let coverage = (r + 0.5 - d).clamp(0.0, 1.0);
            if coverage > 0.0 {
                let px = img.get_pixel_mut(x, y);
                for c in 0..3 {
                    let bg = px.0[c] as f64;
                    px.0[c] = (bg + (color[c] as f64 - bg) * coverage).round() as u8;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Generate a sequence into `dir` (created if needed): frames, annotations,
/// and sidecar. Returns the metadata and the exact simulated trajectories.
pub fn generate(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<GeneratedSequence> {
    cfg.validate()?;
    let dir = dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agents = spawn_agents(cfg, &mut rng);
    let background = render_background(cfg);

    let mut annotations: Vec<PointAnnotation> = Vec::with_capacity(cfg.n_agents * cfg.n_frames);
    let mut tracks: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(cfg.n_frames); cfg.n_agents];

    for frame in 0..cfg.n_frames {
        if frame > 0 {
            for agent in agents.iter_mut() {
                advance(agent, cfg, &mut rng);
            }
        }
        let mut img = background.clone();
        for (i, agent) in agents.iter().enumerate() {
            draw_dot(&mut img, agent.pos.0, agent.pos.1, cfg.dot_radius, agent.color);
            annotations.push(PointAnnotation {
                frame,
                id: i as u32 + 1,
                x: agent.pos.0,
                y: agent.pos.1,
            });
            tracks[i].push(agent.pos);
        }
        data::write_frame_image(&dir, frame, &img)?;
    }

    let meta = cfg.meta();
    data::write_meta(&dir.join("meta.txt"), &meta)?;
    data::write_annotations_csv(&dir.join("annotations.csv"), &annotations)?;

    Ok(GeneratedSequence { dir, meta, tracks })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LoadOptions, Sequence};
    use tempfile::TempDir;

    fn small_config(motion: MotionModel) -> SynthConfig {
        SynthConfig {
            name: "unit".into(),
            width: 96,
            height: 96,
            n_agents: 4,
            motion,
            n_frames: 8,
            ..Default::default()
        }
    }

    #[test]
    fn generated_sequence_loads_cleanly() {
        let tmp = TempDir::new().unwrap();
        let cfg = small_config(MotionModel::Linear);
        let generated = generate(&cfg, tmp.path().join("unit")).unwrap();
        let seq = Sequence::load(&generated.dir, LoadOptions::default()).unwrap();
        assert_eq!(seq.meta, generated.meta);
        assert_eq!(seq.frames.len(), 8);
        for frame in &seq.frames {
            assert_eq!(frame.annotations.len(), 4, "all agents live on every frame");
        }
        assert_eq!(generated.tracks.len(), 4);
        assert!(generated.tracks.iter().all(|t| t.len() == 8));
    }

    #[test]
    fn fixed_seed_reproduces_annotations_byte_for_byte() {
        let tmp = TempDir::new().unwrap();
        let cfg = small_config(MotionModel::Crossing);
        generate(&cfg, tmp.path().join("a")).unwrap();
        generate(&cfg, tmp.path().join("b")).unwrap();
        let a = std::fs::read(tmp.path().join("a/annotations.csv")).unwrap();
        let b = std::fs::read(tmp.path().join("b/annotations.csv")).unwrap();
        assert_eq!(a, b);
        let fa = std::fs::read(tmp.path().join("a/frames/000003.png")).unwrap();
        let fb = std::fs::read(tmp.path().join("b/frames/000003.png")).unwrap();
        assert_eq!(fa, fb, "rasters are deterministic too");
    }

    #[test]
    fn different_seeds_differ() {
        let tmp = TempDir::new().unwrap();
        let cfg = small_config(MotionModel::Linear);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 1234;
        generate(&cfg, tmp.path().join("a")).unwrap();
        generate(&cfg2, tmp.path().join("b")).unwrap();
        let a = std::fs::read(tmp.path().join("a/annotations.csv")).unwrap();
        let b = std::fs::read(tmp.path().join("b/annotations.csv")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn adversarial_fast_outpaces_the_search_window() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = small_config(MotionModel::AdversarialFast);
        cfg.width = 256;
        cfg.height = 256;
        let generated = generate(&cfg, tmp.path().join("adv")).unwrap();
        let min_required = DEFAULT_CONTEXT_FACTOR * 2.0 * cfg.dot_radius;
        let speed = cfg.adversarial_speed();
        for track in &generated.tracks {
            for pair in track.windows(2) {
                let d = ((pair[1].0 - pair[0].0).powi(2) + (pair[1].1 - pair[0].1).powi(2)).sqrt();
                assert!(
                    d > min_required,
                    "step {d:.2} px must exceed context x diameter {min_required:.2}"
                );
                assert!((d - speed).abs() < 1e-9, "jumps keep their full length");
            }
        }
    }

    #[test]
    fn linear_agents_respect_speed_range() {
        let tmp = TempDir::new().unwrap();
        let cfg = small_config(MotionModel::Linear);
        let generated = generate(&cfg, tmp.path().join("lin")).unwrap();
        let mut full_speed_steps = 0;
        let mut total_steps = 0;
        for track in &generated.tracks {
            for pair in track.windows(2) {
                let d = ((pair[1].0 - pair[0].0).powi(2) + (pair[1].1 - pair[0].1).powi(2)).sqrt();
                // A wall bounce folds the path, which can only shorten the
                // chord between consecutive positions.
                assert!(d <= cfg.speed_max + 1e-9, "step {d} above {}", cfg.speed_max);
                total_steps += 1;
                if d >= cfg.speed_min - 1e-9 {
                    full_speed_steps += 1;
                }
            }
        }
        assert!(
            full_speed_steps * 2 > total_steps,
            "bounces should be the exception: {full_speed_steps}/{total_steps}"
        );
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(generate(
            &SynthConfig {
                n_frames: 1,
                ..Default::default()
            },
            "/nonexistent-unused"
        )
        .is_err());
        assert!(SynthConfig {
            dot_radius: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            gsd: 5.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
