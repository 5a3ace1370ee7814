//! Train the tracker on synthetic sequences with the feedback loop.
//!
//! Each training sample follows one object through one sequence. The search
//! window is centered on the network's previous prediction rather than the
//! ground truth, so the network learns to recover from its own drift, which
//! is exactly what it faces at tracking time. Samples whose target escaped
//! the window are detected at the start of every iteration and replaced
//! with fresh draws.
//!
//! A scaled-down network is used so the loss visibly falls within a minute
//! of CPU time. The full-size configuration trains the same way, just
//! slower.
//!
//! ```bash
//! cargo run --release --example train_on_synthetic
//! ```

use skymot::data::{LoadOptions, Sequence};
use skymot::model::{checkpoint, Network, NetworkConfig};
use skymot::synth::{generate, SynthConfig};
use skymot::train::{TrainConfig, Trainer};

fn small_network() -> NetworkConfig {
    let mut cfg = NetworkConfig::reduced();
    cfg.crop_size = 32;
    for (spec, w) in cfg.conv_plan.iter_mut().zip([8, 12, 16, 16, 12]) {
        spec.out_channels = w;
    }
    cfg.fc_plan = vec![64, 64, 64, 4];
    cfg.lstm_hidden = 8;
    cfg.motion_out = 16;
    cfg.graph_channels = [8, 12, 16];
    cfg
}

fn main() -> skymot::Result<()> {
    let out = std::path::Path::new("target/example-out/train_on_synthetic");

    // A small corpus of two sequences; the trainer samples uniformly over
    // (sequence, track, start frame).
    let mut corpus = Vec::new();
    for (i, seed) in [11u64, 12].iter().enumerate() {
        let dir = out.join(format!("seq{i}"));
        let synth = SynthConfig {
            name: format!("train{i}"),
            n_agents: 10,
            n_frames: 12,
            seed: *seed,
            ..SynthConfig::default()
        };
        generate(&synth, &dir)?;
        corpus.push(Sequence::load(&dir, LoadOptions::default())?);
    }

    let mut cfg = TrainConfig {
        iterations: 300,
        batch_size: 8,
        lr: 1e-3,
        lr_decay: 0.5,
        lr_decay_every: 150,
        seed: 2,
        ..TrainConfig::default()
    };
    // Regression-head layers run hot, the standard recipe for converging
    // the output bias in a reasonable number of iterations.
    cfg.lr_multipliers.insert("head.".into(), 10.0);

    let net = Network::new(small_network(), cfg.seed)?;
    let mut trainer = Trainer::new(net, corpus, cfg)?;
    while trainer.iteration() < 300 {
        let stats = trainer.step()?;
        if stats.iteration % 25 == 0 {
            println!(
                "iter {:>4}  lr {:.1e}  loss {:>7.3}  replaced {}",
                stats.iteration, stats.lr, stats.loss, stats.replaced
            );
        }
    }

    let weights = out.join("model.skw");
    checkpoint::save(&trainer.net, &weights)?;
    println!("\nsaved weights to {}", weights.display());
    Ok(())
}
