//! Overlay rendering: draw tracked boxes, identity labels, and motion
//! trails onto sequence frames so a run can be inspected visually.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::data::Hypothesis;
use crate::data::Sequence;
use crate::error::Result;
use crate::geom::PixelBox;

#[derive(Debug, Clone)]
pub struct OverlayOptions {
    /// Box border thickness in pixels.
    pub thickness: u32,
    /// How many previous frames of each track's center to draw as a trail.
    /// Zero disables trails.
    pub trail: usize,
    /// Draw the numeric id above each box.
    pub labels: bool,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        OverlayOptions {
            thickness: 1,
            trail: 8,
            labels: true,
        }
    }
}

/// Deterministic, well-spread color for a track id. Hue walks the circle
/// by the golden-ratio step so nearby ids land far apart.
pub fn id_color(id: u32) -> [u8; 3] {
    let hue = (id as f64 * 0.618_033_988_749_895).fract() * 360.0;
    hsv_to_rgb(hue, 0.85, 1.0)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, image::Rgb(color));
    }
}

/// Axis-aligned rectangle outline, clipped to the image.
pub fn draw_rect(img: &mut RgbImage, b: &PixelBox, color: [u8; 3], thickness: u32) {
    let x1 = b.x1.round() as i64;
    let y1 = b.y1.round() as i64;
    let x2 = b.x2.round() as i64;
    let y2 = b.y2.round() as i64;
    if x2 < x1 || y2 < y1 {
        return;
    }
    let t = thickness.max(1) as i64;
    for k in 0..t {
        for x in x1 - k..=x2 + k {
            put(img, x, y1 - k, color);
            put(img, x, y2 + k, color);
        }
        for y in y1 - k..=y2 + k {
            put(img, x1 - k, y, color);
            put(img, x2 + k, y, color);
        }
    }
}

/// Straight segment between two points, clipped to the image.
pub fn draw_line(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), color: [u8; 3]) {
    let (x0, y0) = from;
    let (x1, y1) = to;
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (x0 + (x1 - x0) * t).round() as i64;
        let y = (y0 + (y1 - y0) * t).round() as i64;
        put(img, x, y, color);
    }
}

/// Filled disc, clipped to the image.
pub fn draw_disc(img: &mut RgbImage, center: (f64, f64), radius: f64, color: [u8; 3]) {
    let r = radius.max(0.0);
    let cx = center.0;
    let cy = center.1;
    let x_lo = (cx - r).floor() as i64;
    let x_hi = (cx + r).ceil() as i64;
    let y_lo = (cy - r).floor() as i64;
    let y_hi = (cy + r).ceil() as i64;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                put(img, x, y, color);
            }
        }
    }
}

// 3x5 bitmap digits, one row per byte, low three bits used.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111], // 0
    [0b010, 0b110, 0b010, 0b010, 0b111], // 1
    [0b111, 0b001, 0b111, 0b100, 0b111], // 2
    [0b111, 0b001, 0b111, 0b001, 0b111], // 3
    [0b101, 0b101, 0b111, 0b001, 0b001], // 4
    [0b111, 0b100, 0b111, 0b001, 0b111], // 5
    [0b111, 0b100, 0b111, 0b101, 0b111], // 6
    [0b111, 0b001, 0b010, 0b010, 0b010], // 7
    [0b111, 0b101, 0b111, 0b101, 0b111], // 8
    [0b111, 0b101, 0b111, 0b001, 0b111], // 9
];

/// Draw a decimal number with the tiny built-in 3x5 font, anchored at the
/// top-left corner of the first digit.
pub fn draw_number(img: &mut RgbImage, anchor: (f64, f64), value: u32, color: [u8; 3]) {
    let text = value.to_string();
    let x0 = anchor.0.round() as i64;
    let y0 = anchor.1.round() as i64;
    for (i, ch) in text.bytes().enumerate() {
        let glyph = &DIGITS[(ch - b'0') as usize];
        let gx = x0 + i as i64 * 4;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    put(img, gx + col as i64, y0 + row as i64, color);
                }
            }
        }
    }
}

/// Draw one frame's hypotheses (plus trailing centers from earlier frames)
/// onto `img`.
pub fn draw_frame_overlay(
    img: &mut RgbImage,
    frame: usize,
    hypotheses: &[Hypothesis],
    opts: &OverlayOptions,
) {
    // Trails first so boxes draw on top of them.
    if opts.trail > 0 {
        let mut trails: BTreeMap<u32, Vec<(usize, (f64, f64))>> = BTreeMap::new();
        let lo = frame.saturating_sub(opts.trail);
        for h in hypotheses {
            if h.frame >= lo && h.frame <= frame {
                trails
                    .entry(h.id)
                    .or_default()
                    .push((h.frame, h.bbox.center()));
            }
        }
        for (id, mut pts) in trails {
            pts.sort_by_key(|(f, _)| *f);
            let color = id_color(id);
            for w in pts.windows(2) {
                // Only join consecutive frames; a gap means the track was
                // not reported there.
                if w[1].0 == w[0].0 + 1 {
                    draw_line(img, w[0].1, w[1].1, color);
                }
            }
            for (_, c) in &pts {
                draw_disc(img, *c, 0.8, color);
            }
        }
    }
    for h in hypotheses.iter().filter(|h| h.frame == frame) {
        let color = id_color(h.id);
        draw_rect(img, &h.bbox, color, opts.thickness);
        if opts.labels {
            draw_number(img, (h.bbox.x1, h.bbox.y1 - 7.0), h.id, color);
        }
    }
}

/// Render every frame of a sequence with its hypotheses drawn in, writing
/// `overlay_NNNNNN.png` files into `out_dir`. Returns the written paths in
/// frame order.
pub fn render_overlays(
    seq: &Sequence,
    hypotheses: &[Hypothesis],
    out_dir: &Path,
    opts: &OverlayOptions,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        let mut img = frame.require_image()?.clone();
        draw_frame_overlay(&mut img, frame.index, hypotheses, opts);
        let path = out_dir.join(format!("overlay_{:06}.png", frame.index));
        img.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
