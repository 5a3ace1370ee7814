//! Compare the four fusion modes on one sequence.
//!
//! The network fuses three feature branches: siamese appearance from the
//! crops, a recurrent encoding of the object's own displacement history,
//! and a graph encoding of its neighborhood. Each ablation silences a
//! branch combination at the fusion point; everything else (engine, search
//! windows, evaluation) is byte-for-byte the same code path, so the table
//! isolates what each branch contributes.
//!
//! With the untrained network used here the rows differ only a little; the
//! point of the example is the harness, not the numbers.
//!
//! ```bash
//! cargo run --release --example ablation_comparison
//! ```

use skymot::data::{LoadOptions, Sequence};
use skymot::engine::{track_sequence, EscapePolicy, TrackerConfig};
use skymot::metrics::{evaluate_sequence, render_table, DEFAULT_IOU_GATE};
use skymot::model::{AblationMode, Network, NetworkConfig};
use skymot::synth::{generate, SynthConfig};

fn main() -> skymot::Result<()> {
    let out = std::path::Path::new("target/example-out/ablation_comparison");
    let synth = SynthConfig {
        name: "ablate".into(),
        n_agents: 8,
        n_frames: 10,
        seed: 9,
        ..SynthConfig::default()
    };
    generate(&synth, out)?;
    let seq = Sequence::load(out, LoadOptions::default())?;
    let net = Network::new(NetworkConfig::reduced(), 4)?;

    let mut reports = Vec::new();
    for mode in AblationMode::ALL {
        let cfg = TrackerConfig {
            ablation: mode,
            // End a track the moment the true target leaves its window;
            // every mode is judged on how long it keeps the target inside.
            escape: EscapePolicy::GroundTruth,
            ..TrackerConfig::default()
        };
        let output = track_sequence(&net, &seq, &cfg)?;
        let mut report = evaluate_sequence(
            &seq,
            &output.hypotheses,
            DEFAULT_IOU_GATE,
            cfg.object_extent_m,
            cfg.min_side,
        )?;
        report.name = mode.to_string();
        reports.push(report);
    }
    println!("{}", render_table(&reports));
    Ok(())
}
