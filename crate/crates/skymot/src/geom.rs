//! Core geometric types shared by every stage of the pipeline.
//!
//! Conventions used throughout the crate:
//!
//! - Image coordinates are real-valued pixels with the origin at the top-left
//!   corner of the frame; x grows rightward, y grows downward.
//! - Boxes are axis-aligned corner pairs `(x1, y1, x2, y2)` with `x1 <= x2`
//!   and `y1 <= y2` when well-formed. Fractional coordinates are meaningful:
//!   annotations come from point centers and ground sampling distances, not
//!   from integer pixel grids.
//! - Ground sampling distance (gsd) is meters per pixel and converts metric
//!   object extents into pixel extents.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Assumed physical extent of a pedestrian, in meters. At aerial ground
/// sampling distances (0.08 to 0.13 m/px) this maps to a handful of pixels.
pub const DEFAULT_OBJECT_EXTENT_M: f64 = 0.4;

/// Smallest box side, in pixels, that `point_to_box` will produce. Keeps
/// targets from collapsing below the scale the network can represent.
pub const DEFAULT_MIN_BOX_SIDE: f64 = 4.0;

/// Search-window side as a multiple of the target box side: the window shows
/// the tracker twice the object extent of context around the last position.
pub const DEFAULT_CONTEXT_FACTOR: f64 = 2.0;

// ---------------------------------------------------------------------------
// PixelBox
// ---------------------------------------------------------------------------

/// Axis-aligned box in image coordinates, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        PixelBox { x1, y1, x2, y2 }
    }

    /// Square box of the given side centered on a point.
    pub fn centered(cx: f64, cy: f64, side: f64) -> Self {
        let h = side / 2.0;
        PixelBox::new(cx - h, cy - h, cx + h, cy + h)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Area, clamped to zero for inverted corners so malformed network
    /// output cannot produce negative overlap terms downstream.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_well_formed(&self) -> bool {
        self.x1.is_finite()
            && self.y1.is_finite()
            && self.x2.is_finite()
            && self.y2.is_finite()
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    /// Whether a point lies inside the box, boundary included.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    /// The same region with corners put in canonical order. Free-form
    /// regression output can invert an axis; downstream geometry expects
    /// `x1 <= x2, y1 <= y2`.
    pub fn normalized(&self) -> PixelBox {
        PixelBox {
            x1: self.x1.min(self.x2),
            y1: self.y1.min(self.y2),
            x2: self.x1.max(self.x2),
            y2: self.y1.max(self.y2),
        }
    }
}

/// Intersection-over-union of two boxes.
///
/// Returns a value in `[0, 1]`. When the union has zero area (two degenerate
/// boxes) the overlap is defined as 0.
///
/// ```
/// use skymot::geom::{iou, PixelBox};
/// let a = PixelBox::new(0.0, 0.0, 10.0, 10.0);
/// let b = PixelBox::new(5.0, 0.0, 15.0, 10.0);
/// assert_eq!(iou(&a, &b), 1.0 / 3.0);
/// ```
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Expand a point annotation into a square box sized from the ground
/// sampling distance.
///
/// The side is `round(extent_m / gsd)` pixels, floored at `min_side`. The box
/// is centered on the point and deliberately not clamped to image bounds:
/// objects at the frame edge keep their true extent and the crop machinery
/// handles out-of-image regions.
pub fn point_to_box(x: f64, y: f64, gsd: f64, extent_m: f64, min_side: f64) -> PixelBox {
    let side = (extent_m / gsd).round().max(min_side);
    PixelBox::centered(x, y, side)
}

// ---------------------------------------------------------------------------
// CropTransform
// ---------------------------------------------------------------------------

/// Affine map from crop coordinates to image coordinates: scale first, then
/// offset. `scale` is isotropic because crops are square windows resized to a
/// square raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub scale: f64,
    pub offset: (f64, f64),
}

impl CropTransform {
    pub fn new(scale: f64, offset: (f64, f64)) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) || !offset.0.is_finite() || !offset.1.is_finite() {
            return Err(Error::invalid(format!(
                "crop transform must have finite positive scale, got scale {scale}, offset {offset:?}"
            )));
        }
        Ok(CropTransform { scale, offset })
    }

    /// Map a point from crop coordinates into image coordinates.
    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale + self.offset.0, y * self.scale + self.offset.1)
    }

    /// Map a box from crop coordinates into image coordinates.
    pub fn apply_box(&self, b: &PixelBox) -> PixelBox {
        let (x1, y1) = self.apply_point(b.x1, b.y1);
        let (x2, y2) = self.apply_point(b.x2, b.y2);
        PixelBox::new(x1, y1, x2, y2)
    }

    /// Map a point from image coordinates back into crop coordinates.
    pub fn unapply_point(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.offset.0) / self.scale, (y - self.offset.1) / self.scale)
    }

    /// Map a box from image coordinates back into crop coordinates.
    pub fn unapply_box(&self, b: &PixelBox) -> PixelBox {
        let (x1, y1) = self.unapply_point(b.x1, b.y1);
        let (x2, y2) = self.unapply_point(b.x2, b.y2);
        PixelBox::new(x1, y1, x2, y2)
    }

    /// The inverse transform (image coordinates to crop coordinates).
    pub fn invert(&self) -> CropTransform {
        CropTransform {
            scale: 1.0 / self.scale,
            offset: (-self.offset.0 / self.scale, -self.offset.1 / self.scale),
        }
    }
}

// ---------------------------------------------------------------------------
// Annotations, frames, sequence metadata
// ---------------------------------------------------------------------------

/// One ground-truth observation: object `id` is centered at `(x, y)` in
/// frame `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub frame: usize,
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// Sequence-level metadata carried in the dataset sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub name: String,
    /// Ground sampling distance in meters per pixel.
    pub gsd: f64,
    /// Capture rate in frames per second. Aerial sequences sit around 2 fps,
    /// which is what makes frame-to-frame displacement large.
    pub fps: f64,
    pub frame_count: usize,
}

/// Plausible ground sampling band for aerial imagery, meters per pixel.
pub const GSD_RANGE: (f64, f64) = (0.01, 1.0);

impl SequenceMeta {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("sequence name must not be empty"));
        }
        if !(self.gsd.is_finite() && self.gsd >= GSD_RANGE.0 && self.gsd <= GSD_RANGE.1) {
            return Err(Error::invalid(format!(
                "gsd {} m/px outside plausible aerial band [{}, {}]",
                self.gsd, GSD_RANGE.0, GSD_RANGE.1
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if self.frame_count == 0 {
            return Err(Error::invalid("sequence must contain at least one frame"));
        }
        Ok(())
    }
}

/// One frame of a sequence: raster (possibly not yet decoded when the
/// sequence was opened lazily) plus the annotations that fall on it.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub width: u32,
    pub height: u32,
    /// Decoded 8-bit RGB raster. `None` until loaded when the sequence was
    /// opened lazily; dimensions above are always known.
    pub image: Option<image::RgbImage>,
    pub annotations: Vec<PointAnnotation>,
    mean_rgb: OnceLock<[f64; 3]>,
}

impl Frame {
    pub fn new(
        index: usize,
        width: u32,
        height: u32,
        image: Option<image::RgbImage>,
        annotations: Vec<PointAnnotation>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "frame {index} has empty raster ({width}x{height})"
            )));
        }
        if let Some(img) = &image {
            if img.width() != width || img.height() != height {
                return Err(Error::invalid(format!(
                    "frame {index} raster is {}x{} but was declared {width}x{height}",
                    img.width(),
                    img.height()
                )));
            }
        }
        for a in &annotations {
            if a.frame != index {
                return Err(Error::invalid(format!(
                    "annotation for frame {} attached to frame {index}",
                    a.frame
                )));
            }
            if !(a.x >= 0.0 && a.x < width as f64 && a.y >= 0.0 && a.y < height as f64) {
                return Err(Error::invalid(format!(
                    "annotation id {} at ({}, {}) outside frame {index} bounds {width}x{height}",
                    a.id, a.x, a.y
                )));
            }
        }
        Ok(Frame {
            index,
            width,
            height,
            image,
            annotations,
            mean_rgb: OnceLock::new(),
        })
    }

    /// The decoded raster, or an error naming the frame if it was opened
    /// lazily and never loaded.
    pub fn require_image(&self) -> Result<&image::RgbImage> {
        self.image
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("frame {} raster not loaded", self.index)))
    }

    /// Mean pixel value per channel, cached after first use. This is the
    /// fill value for crop regions that fall outside the image.
    pub fn mean_rgb(&self) -> Result<[f64; 3]> {
        if let Some(m) = self.mean_rgb.get() {
            return Ok(*m);
        }
        let img = self.require_image()?;
        let mut sums = [0.0f64; 3];
        for p in img.pixels() {
            sums[0] += p.0[0] as f64;
            sums[1] += p.0[1] as f64;
            sums[2] += p.0[2] as f64;
        }
        let n = (img.width() as f64) * (img.height() as f64);
        let mean = [sums[0] / n, sums[1] / n, sums[2] / n];
        Ok(*self.mean_rgb.get_or_init(|| mean))
    }

    /// Annotation for a given object id on this frame, if present.
    pub fn annotation_for(&self, id: u32) -> Option<&PointAnnotation> {
        self.annotations.iter().find(|a| a.id == id)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
