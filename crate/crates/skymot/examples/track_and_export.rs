//! Track every annotated object through a sequence and export the result.
//!
//! Tracks are born on their first ground-truth annotation; from there the
//! network regresses the object's box frame to frame inside a search window
//! centered on the previous position. The hypotheses land in a CSV with one
//! box per line, ready for evaluation.
//!
//! An untrained network is used here so the example runs standalone. Its
//! predictions drift immediately, so the escape policy below, which
//! declares a track lost the moment the annotated center leaves its search
//! window, ends most tracks within a few frames. That is the lifecycle
//! working as designed. Train a model first (see `train_on_synthetic`) and
//! load it with `checkpoint::load` for tracks that hold on.
//!
//! ```bash
//! cargo run --release --example track_and_export
//! ```

use skymot::data::{self, LoadOptions, Sequence};
use skymot::engine::{track_sequence, EscapePolicy, TrackerConfig};
use skymot::model::{Network, NetworkConfig};
use skymot::synth::{generate, SynthConfig};

fn main() -> skymot::Result<()> {
    let out = std::path::Path::new("target/example-out/track_and_export");

    let synth = SynthConfig {
        name: "tracked".into(),
        n_agents: 8,
        n_frames: 10,
        seed: 3,
        ..SynthConfig::default()
    };
    generate(&synth, out.join("sequence"))?;
    let seq = Sequence::load(out.join("sequence"), LoadOptions::default())?;

    let net = Network::new(NetworkConfig::reduced(), 1)?;
    let cfg = TrackerConfig {
        escape: EscapePolicy::GroundTruth,
        ..TrackerConfig::default()
    };
    let output = track_sequence(&net, &seq, &cfg)?;

    for track in &output.tracks {
        println!(
            "track {:>2}: born frame {}, ended {:?}",
            track.id, track.birth_frame, track.end
        );
    }

    let csv = out.join("hypotheses.csv");
    data::write_hypotheses_csv(&csv, &output.hypotheses)?;
    println!("wrote {} boxes to {}", output.hypotheses.len(), csv.display());
    Ok(())
}
