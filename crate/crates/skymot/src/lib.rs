//! Multi-object tracking for low-frame-rate aerial imagery.
//!
//! Objects seen from above are a few pixels wide, look nearly identical,
//! and move several pixels between consecutive frames at typical capture
//! rates. This crate implements a regression tracker built around that
//! regime: a siamese convolutional branch compares an object's previous
//! appearance against a search window, a recurrent branch encodes its own
//! displacement history, a graph branch encodes the motion of its
//! neighbors, and a fully connected head fuses all three into the next
//! box.
//!
//! The pieces line up with the module layout:
//!
//! - [`model`]: the fused network, its layers, and weight archives
//! - [`engine`]: per-frame tracking with search-window geometry and track
//!   lifecycle
//! - [`train`]: the feedback-loop trainer that follows its own predictions
//! - [`metrics`]: event-based evaluation with identity measures
//! - [`data`] and [`geom`]: dataset layout and pixel/crop coordinates
//! - [`synth`]: a deterministic generator for annotated test sequences
//! - [`viz`]: box-and-trail overlays for visual inspection
//!
//! The `examples/` directory walks through every capability end to end;
//! the `skymot` binary wraps the same calls as subcommands.

pub mod data;
pub mod engine;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
