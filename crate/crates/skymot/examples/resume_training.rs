//! Stop a training run and pick it up again from a checkpoint.
//!
//! A checkpoint saved during training carries the weights plus a sidecar
//! with the optimizer position: iteration count, RNG cursor, and the live
//! sample slots. Resuming restores all of it, so a run interrupted at
//! iteration 60 and resumed matches the trajectory it would have taken
//! uninterrupted.
//!
//! ```bash
//! cargo run --release --example resume_training
//! ```

use skymot::data::{LoadOptions, Sequence};
use skymot::model::{Network, NetworkConfig};
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
    let out = std::path::Path::new("target/example-out/resume_training");
    std::fs::create_dir_all(out)?;

    let synth = SynthConfig {
        name: "resume".into(),
        n_agents: 8,
        n_frames: 10,
        seed: 21,
        ..SynthConfig::default()
    };
    generate(&synth, out.join("sequence"))?;
    let seq = Sequence::load(out.join("sequence"), LoadOptions::default())?;

    let cfg = TrainConfig {
        iterations: 120,
        batch_size: 6,
        lr: 1e-3,
        seed: 9,
        ..TrainConfig::default()
    };

    // First 60 iterations, then a checkpoint.
    let net = Network::new(small_network(), cfg.seed)?;
    let mut first = Trainer::new(net, vec![seq.clone()], cfg.clone())?;
    for _ in 0..60 {
        first.step()?;
    }
    let ckpt = out.join("halfway.skw");
    first.save_checkpoint(&ckpt)?;
    println!("checkpointed at iteration {}", first.iteration());

    // Resume in a fresh trainer and finish the run.
    let mut resumed = Trainer::resume(&ckpt, vec![seq.clone()], cfg.clone())?;
    let mut last = 0.0;
    while resumed.iteration() < 120 {
        last = resumed.step()?.loss;
    }
    println!("resumed run finished at iteration {} with loss {last:.3}", resumed.iteration());

    // The uninterrupted run lands in the same place (up to the f32
    // round-trip the weight archive applies).
    let net = Network::new(small_network(), cfg.seed)?;
    let mut straight = Trainer::new(net, vec![seq], cfg)?;
    let mut straight_last = 0.0;
    while straight.iteration() < 120 {
        straight_last = straight.step()?.loss;
    }
    println!("uninterrupted run finished with loss {straight_last:.3}");
    println!("difference: {:.2e}", (straight_last - last).abs());
    Ok(())
}
