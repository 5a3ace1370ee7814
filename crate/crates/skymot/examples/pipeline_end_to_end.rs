//! The whole pipeline in one run: generate, train, track, evaluate.
//!
//! This is the programmatic equivalent of the CLI chain
//! `skymot synth && skymot train && skymot track && skymot evaluate`,
//! shrunk until it finishes in about a minute on one core. Every stage is
//! seeded, so two runs of this example produce identical numbers.
//!
//! ```bash
//! cargo run --release --example pipeline_end_to_end
//! ```

use skymot::data::{self, LoadOptions, Sequence};
use skymot::engine::{track_sequence, EscapePolicy, TrackerConfig};
use skymot::metrics::{evaluate_sequence, render_table, DEFAULT_IOU_GATE};
use skymot::model::{checkpoint, Network, NetworkConfig};
use skymot::synth::{generate, SynthConfig};
use skymot::train::{TrainConfig, Trainer};

fn main() -> skymot::Result<()> {
    let out = std::path::Path::new("target/example-out/pipeline_end_to_end");

    // Stage 1: a small annotated sequence.
    let synth = SynthConfig {
        name: "pipeline".into(),
        width: 96,
        height: 96,
        n_agents: 6,
        n_frames: 10,
        speed_max: 1.5,
        seed: 42,
        ..SynthConfig::default()
    };
    generate(&synth, out.join("sequence"))?;
    let seq = Sequence::load(out.join("sequence"), LoadOptions::default())?;
    println!("generated `{}` with {} tracks", seq.meta.name, seq.track_spans().len());

    // Stage 2: a short feedback-loop training run on a scaled-down network.
    let mut net_cfg = NetworkConfig::reduced();
    net_cfg.crop_size = 32;
    for (spec, w) in net_cfg.conv_plan.iter_mut().zip([8, 12, 16, 16, 12]) {
        spec.out_channels = w;
    }
    net_cfg.fc_plan = vec![64, 64, 64, 4];
    net_cfg.lstm_hidden = 8;
    net_cfg.motion_out = 16;
    net_cfg.graph_channels = [8, 12, 16];

    let mut train_cfg = TrainConfig {
        iterations: 200,
        batch_size: 8,
        lr: 1e-3,
        seed: 7,
        ..TrainConfig::default()
    };
    train_cfg.lr_multipliers.insert("head.".into(), 10.0);
    let net = Network::new(net_cfg, train_cfg.seed)?;
    let mut trainer = Trainer::new(net, vec![seq.clone()], train_cfg)?;
    while trainer.iteration() < 200 {
        let stats = trainer.step()?;
        if stats.iteration % 50 == 0 {
            println!("iter {:>3}  loss {:.3}", stats.iteration, stats.loss);
        }
    }
    let weights = out.join("model.skw");
    checkpoint::save(&trainer.net, &weights)?;

    // Stage 3: track the sequence with the trained weights.
    let net = checkpoint::load(&weights)?;
    let cfg = TrackerConfig {
        escape: EscapePolicy::GroundTruth,
        ..TrackerConfig::default()
    };
    let output = track_sequence(&net, &seq, &cfg)?;
    data::write_hypotheses_csv(&out.join("hypotheses.csv"), &output.hypotheses)?;

    // Stage 4: score the hypotheses against the annotations.
    let report = evaluate_sequence(
        &seq,
        &output.hypotheses,
        DEFAULT_IOU_GATE,
        cfg.object_extent_m,
        cfg.min_side,
    )?;
    println!("\n{}", render_table(std::slice::from_ref(&report)));
    Ok(())
}
