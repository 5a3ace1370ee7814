//! Render tracking output onto the frames for visual inspection.
//!
//! Every track gets a stable color derived from its id, a box per frame,
//! an id label, and a motion trail over its recent positions. The overlaid
//! frames are written as PNGs next to the originals.
//!
//! ```bash
//! cargo run --release --example overlay_sequence
//! ```

use skymot::data::{LoadOptions, Sequence};
use skymot::engine::{track_sequence, EscapePolicy, TrackerConfig};
use skymot::model::{Network, NetworkConfig};
use skymot::synth::{generate, SynthConfig};
use skymot::viz::{render_overlays, OverlayOptions};

fn main() -> skymot::Result<()> {
    let out = std::path::Path::new("target/example-out/overlay_sequence");
    let synth = SynthConfig {
        name: "overlay".into(),
        n_agents: 10,
        n_frames: 15,
        seed: 13,
        ..SynthConfig::default()
    };
    generate(&synth, out.join("sequence"))?;
    let seq = Sequence::load(out.join("sequence"), LoadOptions::default())?;

    let net = Network::new(NetworkConfig::reduced(), 2)?;
    let cfg = TrackerConfig {
        escape: EscapePolicy::GroundTruth,
        ..TrackerConfig::default()
    };
    let output = track_sequence(&net, &seq, &cfg)?;

    let overlay_dir = out.join("overlays");
    let written = render_overlays(&seq, &output.hypotheses, &overlay_dir, &OverlayOptions::default())?;
    println!("wrote {} overlay frames to {}", written.len(), overlay_dir.display());
    Ok(())
}
