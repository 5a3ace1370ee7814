//! Dataset input/output.
//!
//! A sequence lives in one directory:
//!
//! ```text
//! <name>/
//!   meta.txt          key=value sidecar: name, gsd, fps, frame_count
//!   annotations.csv   header `frame,id,x,y`, one point annotation per row
//!   frames/
//!     000000.png      8-bit RGB, one file per frame, contiguous from 0
//!     000001.png
//!     ...
//! ```
//!
//! Tracker output uses a separate hypothesis file with header
//! `frame,id,x1,y1,x2,y2`; box coordinates are written with fixed 4-decimal
//! precision, which is the declared round-trip precision of the format.
//!
//! Validation is strict and errors are specific: duplicate `(frame, id)`
//! pairs, coordinates outside the raster, annotations referencing missing
//! frames, missing or unknown sidecar keys, and object ids that disappear and
//! come back after more than `id_gap_tolerance` frames are all rejected with
//! the offending file and line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geom::{Frame, PixelBox, PointAnnotation, SequenceMeta};

/// How to open a sequence.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Decode frame rasters up front. When false only the image dimensions
    /// are read and rasters can be decoded later with
    /// [`Sequence::load_frame_image`]; annotation-only consumers such as the
    /// evaluator never pay for pixel data.
    pub eager: bool,
    /// Largest number of consecutive missing frames after which an object id
    /// may still reappear. Larger gaps are treated as id reuse and rejected.
    pub id_gap_tolerance: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            eager: true,
            id_gap_tolerance: 5,
        }
    }
}

/// A sequence loaded from disk.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub dir: PathBuf,
    pub meta: SequenceMeta,
    pub frames: Vec<Frame>,
}

/// First and last annotated frame of one object id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackSpan {
    pub id: u32,
    pub birth: usize,
    pub last: usize,
}

impl Sequence {
    /// Load a sequence directory, validating metadata, frame layout, and
    /// annotations.
    pub fn load(dir: impl AsRef<Path>, options: LoadOptions) -> Result<Sequence> {
        let dir = dir.as_ref().to_path_buf();
        let meta = read_meta(&dir.join("meta.txt"))?;
        meta.validate()?;

        let frames_dir = dir.join("frames");
        let mut sizes = Vec::with_capacity(meta.frame_count);
        for index in 0..meta.frame_count {
            let path = frame_image_path(&frames_dir, index);
            if !path.exists() {
                return Err(Error::format(
                    &frames_dir,
                    None,
                    format!(
                        "missing frame file {:06}.png (frames must be contiguous from 0)",
                        index
                    ),
                ));
            }
            let (w, h) = image::image_dimensions(&path)?;
            sizes.push((w, h));
        }
        // A stray frame file past the declared count means the sidecar and
        // the directory disagree; refuse to guess which one is right.
        let extra = frame_image_path(&frames_dir, meta.frame_count);
        if extra.exists() {
            return Err(Error::format(
                &frames_dir,
                None,
                format!(
                    "found frame file {:06}.png beyond declared frame_count {}",
                    meta.frame_count, meta.frame_count
                ),
            ));
        }

        let ann_path = dir.join("annotations.csv");
        let annotations = read_annotations_csv(&ann_path)?;
        validate_annotations(&ann_path, &annotations, &sizes, options.id_gap_tolerance)?;

        let mut per_frame: Vec<Vec<PointAnnotation>> = vec![Vec::new(); meta.frame_count];
        for a in annotations {
            per_frame[a.frame].push(a);
        }

        let mut frames = Vec::with_capacity(meta.frame_count);
        for (index, anns) in per_frame.into_iter().enumerate() {
            let (w, h) = sizes[index];
            let img = if options.eager {
                Some(decode_frame(&frames_dir, index)?)
            } else {
                None
            };
            frames.push(Frame::new(index, w, h, img, anns)?);
        }

        Ok(Sequence { dir, meta, frames })
    }

    /// Decode one frame raster in place (no-op if already decoded).
    pub fn load_frame_image(&mut self, index: usize) -> Result<()> {
        let frame = self
            .frames
            .get_mut(index)
            .ok_or_else(|| Error::invalid(format!("frame index {index} out of range")))?;
        if frame.image.is_none() {
            frame.image = Some(decode_frame(&self.dir.join("frames"), index)?);
        }
        Ok(())
    }

    /// Decode every frame raster that is still pending.
    pub fn load_all_images(&mut self) -> Result<()> {
        for i in 0..self.frames.len() {
            self.load_frame_image(i)?;
        }
        Ok(())
    }

    /// All annotations in frame order.
    pub fn all_annotations(&self) -> impl Iterator<Item = &PointAnnotation> {
        self.frames.iter().flat_map(|f| f.annotations.iter())
    }

    /// Per-id first/last annotated frame, ordered by id.
    pub fn track_spans(&self) -> Vec<TrackSpan> {
        let mut spans: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for a in self.all_annotations() {
            spans
                .entry(a.id)
                .and_modify(|(b, l)| {
                    *b = (*b).min(a.frame);
                    *l = (*l).max(a.frame);
                })
                .or_insert((a.frame, a.frame));
        }
        spans
            .into_iter()
            .map(|(id, (birth, last))| TrackSpan { id, birth, last })
            .collect()
    }
}

fn frame_image_path(frames_dir: &Path, index: usize) -> PathBuf {
    frames_dir.join(format!("{index:06}.png"))
}

fn decode_frame(frames_dir: &Path, index: usize) -> Result<image::RgbImage> {
    let path = frame_image_path(frames_dir, index);
    Ok(image::open(&path)?.to_rgb8())
}

// ---------------------------------------------------------------------------
// Metadata sidecar
// ---------------------------------------------------------------------------

/// Parse a `key=value` sidecar. All four keys (name, gsd, fps, frame_count)
/// are required; unknown keys are rejected to catch typos early.
pub fn read_meta(path: &Path) -> Result<SequenceMeta> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::format(path, None, format!("cannot read sidecar: {e}")))?;
    let mut name = None;
    let mut gsd = None;
    let mut fps = None;
    let mut frame_count = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, lineno + 1, "expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "name" => name = Some(value.to_string()),
            "gsd" => gsd = Some(parse_field::<f64>(path, lineno + 1, "gsd", value)?),
            "fps" => fps = Some(parse_field::<f64>(path, lineno + 1, "fps", value)?),
            "frame_count" => {
                frame_count = Some(parse_field::<usize>(path, lineno + 1, "frame_count", value)?)
            }
            other => {
                return Err(Error::format(
                    path,
                    lineno + 1,
                    format!("unknown sidecar key `{other}`"),
                ))
            }
        }
    }
    let missing = |k: &str| Error::format(path, None, format!("missing meta field `{k}`"));
    Ok(SequenceMeta {
        name: name.ok_or_else(|| missing("name"))?,
        gsd: gsd.ok_or_else(|| missing("gsd"))?,
        fps: fps.ok_or_else(|| missing("fps"))?,
        frame_count: frame_count.ok_or_else(|| missing("frame_count"))?,
    })
}

pub fn write_meta(path: &Path, meta: &SequenceMeta) -> Result<()> {
    meta.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "name={}", meta.name);
    let _ = writeln!(out, "gsd={}", meta.gsd);
    let _ = writeln!(out, "fps={}", meta.fps);
    let _ = writeln!(out, "frame_count={}", meta.frame_count);
    fs::write(path, out)?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::format(path, line, format!("cannot parse {key} value `{value}`")))
}

// ---------------------------------------------------------------------------
// Annotation CSV
// ---------------------------------------------------------------------------

pub const ANNOTATION_HEADER: &str = "frame,id,x,y";

pub fn read_annotations_csv(path: &Path) -> Result<Vec<PointAnnotation>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::format(path, None, format!("cannot read annotations: {e}")))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == ANNOTATION_HEADER => {}
        Some((_, header)) => {
            return Err(Error::format(
                path,
                1,
                format!("expected header `{ANNOTATION_HEADER}`, found `{header}`"),
            ))
        }
        None => return Err(Error::format(path, None, "empty annotation file")),
    }
    let mut out = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::format(
                path,
                lineno + 1,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        out.push(PointAnnotation {
            frame: parse_field(path, lineno + 1, "frame", fields[0])?,
            id: parse_field(path, lineno + 1, "id", fields[1])?,
            x: parse_field(path, lineno + 1, "x", fields[2])?,
            y: parse_field(path, lineno + 1, "y", fields[3])?,
        });
    }
    Ok(out)
}

/// Write annotations with fixed 4-decimal coordinates. Output is
/// byte-deterministic for identical input.
pub fn write_annotations_csv(path: &Path, annotations: &[PointAnnotation]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{ANNOTATION_HEADER}")?;
    for a in annotations {
        writeln!(w, "{},{},{:.4},{:.4}", a.frame, a.id, a.x, a.y)?;
    }
    w.flush()?;
    Ok(())
}

fn validate_annotations(
    path: &Path,
    annotations: &[PointAnnotation],
    frame_sizes: &[(u32, u32)],
    id_gap_tolerance: usize,
) -> Result<()> {
    let mut seen: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    let mut last_frame: BTreeMap<u32, usize> = BTreeMap::new();
    // Rows were parsed in file order; reconstruct line numbers for messages
    // (header is line 1, first data row line 2).
    for (row, a) in annotations.iter().enumerate() {
        let line = row + 2;
        if a.frame >= frame_sizes.len() {
            return Err(Error::format(
                path,
                line,
                format!(
                    "annotation references missing frame {} (sequence has {})",
                    a.frame,
                    frame_sizes.len()
                ),
            ));
        }
        if let Some(prev) = seen.insert((a.frame, a.id), line) {
            return Err(Error::format(
                path,
                line,
                format!(
                    "duplicate annotation for id {} in frame {} (first on line {prev})",
                    a.id, a.frame
                ),
            ));
        }
        let (w, h) = frame_sizes[a.frame];
        if !(a.x >= 0.0 && a.x < w as f64 && a.y >= 0.0 && a.y < h as f64) {
            return Err(Error::format(
                path,
                line,
                format!(
                    "annotation id {} at ({}, {}) outside frame {} bounds {w}x{h}",
                    a.id, a.x, a.y, a.frame
                ),
            ));
        }
    }
    // Gap check runs over frames in ascending order per id, independent of
    // row order in the file.
    let mut by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for a in annotations {
        by_id.entry(a.id).or_default().push(a.frame);
    }
    for (id, mut frames) in by_id {
        frames.sort_unstable();
        for pair in frames.windows(2) {
            let gap = pair[1] - pair[0] - 1;
            if gap > id_gap_tolerance {
                return Err(Error::format(
                    path,
                    None,
                    format!(
                        "id {id} reappears in frame {} after a {gap}-frame gap (tolerance {id_gap_tolerance}); looks like id reuse",
                        pair[1]
                    ),
                ));
            }
        }
        let _ = last_frame.insert(id, *frames.last().unwrap());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hypothesis CSV
// ---------------------------------------------------------------------------

pub const HYPOTHESIS_HEADER: &str = "frame,id,x1,y1,x2,y2";

/// One tracker output box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub frame: usize,
    pub id: u32,
    pub bbox: PixelBox,
}

pub fn read_hypotheses_csv(path: &Path) -> Result<Vec<Hypothesis>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::format(path, None, format!("cannot read hypotheses: {e}")))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == HYPOTHESIS_HEADER => {}
        Some((_, header)) => {
            return Err(Error::format(
                path,
                1,
                format!("expected header `{HYPOTHESIS_HEADER}`, found `{header}`"),
            ))
        }
        None => return Err(Error::format(path, None, "empty hypothesis file")),
    }
    let mut out = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::format(
                path,
                lineno + 1,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let bbox = PixelBox::new(
            parse_field(path, lineno + 1, "x1", fields[2])?,
            parse_field(path, lineno + 1, "y1", fields[3])?,
            parse_field(path, lineno + 1, "x2", fields[4])?,
            parse_field(path, lineno + 1, "y2", fields[5])?,
        );
        if !bbox.is_well_formed() {
            return Err(Error::format(
                path,
                lineno + 1,
                format!("malformed box {bbox:?} (need finite corners with x1<=x2, y1<=y2)"),
            ));
        }
        out.push(Hypothesis {
            frame: parse_field(path, lineno + 1, "frame", fields[0])?,
            id: parse_field(path, lineno + 1, "id", fields[1])?,
            bbox,
        });
    }
    Ok(out)
}

/// Write hypotheses with fixed 4-decimal corners. An empty result set
/// produces a header-only file. Boxes must satisfy the same validity rules
/// the reader enforces; rounding cannot reorder corners, so everything
/// written here survives a read back.
pub fn write_hypotheses_csv(path: &Path, hypotheses: &[Hypothesis]) -> Result<()> {
    for h in hypotheses {
        if !h.bbox.is_well_formed() {
            return Err(Error::invalid(format!(
                "refusing to write malformed box {:?} (frame {}, id {})",
                h.bbox, h.frame, h.id
            )));
        }
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{HYPOTHESIS_HEADER}")?;
    for h in hypotheses {
        writeln!(
            w,
            "{},{},{:.4},{:.4},{:.4},{:.4}",
            h.frame, h.id, h.bbox.x1, h.bbox.y1, h.bbox.x2, h.bbox.y2
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Frame rasters
// ---------------------------------------------------------------------------

/// Write one frame raster into `<dir>/frames/` with the standard name.
pub fn write_frame_image(dir: &Path, index: usize, img: &image::RgbImage) -> Result<()> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir)?;
    img.save(frame_image_path(&frames_dir, index))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Split manifest
// ---------------------------------------------------------------------------

/// Train/test split declared explicitly by sequence name. There is no random
/// splitting: reproducibility of a run must not depend on directory order.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Resolved split: sequence directories ready to load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSplit {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

impl ResolvedSplit {
    /// An empty test list is legal (pure training datasets) but worth a
    /// warning at the call site; this flags it.
    pub fn test_is_empty(&self) -> bool {
        self.test.is_empty()
    }
}

/// Read a TOML split manifest and resolve every name against `root`.
/// Unknown sequence names are an error.
pub fn load_split(root: &Path, manifest_path: &Path) -> Result<ResolvedSplit> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::format(manifest_path, None, format!("cannot read manifest: {e}")))?;
    let manifest: SplitManifest = toml::from_str(&text)
        .map_err(|e| Error::format(manifest_path, None, format!("bad manifest: {e}")))?;
    let resolve = |names: &[String]| -> Result<Vec<PathBuf>> {
        names
            .iter()
            .map(|name| {
                let dir = root.join(name);
                if dir.join("meta.txt").is_file() {
                    Ok(dir)
                } else {
                    Err(Error::format(
                        manifest_path,
                        None,
                        format!("manifest names unknown sequence `{name}` (no {name}/meta.txt under {})", root.display()),
                    ))
                }
            })
            .collect()
    };
    Ok(ResolvedSplit {
        train: resolve(&manifest.train)?,
        test: resolve(&manifest.test)?,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
