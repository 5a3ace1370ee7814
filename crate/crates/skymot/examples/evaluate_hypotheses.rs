//! Score a hypothesis file against ground truth.
//!
//! The evaluator matches hypothesis boxes to ground-truth objects per frame
//! (carrying over last frame's pairing when it still holds, assigning the
//! rest by minimum total distance), accumulates the error counts, and
//! reports the standard summary: identity scores, recall/precision, track
//! coverage, and the combined accuracy numbers.
//!
//! Two runs are scored here: a faithful copy of the ground truth with a few
//! boxes dropped, and a sloppy run with jittered boxes and an identity
//! switch. Compare their rows in the printed table.
//!
//! ```bash
//! cargo run --release --example evaluate_hypotheses
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skymot::data::{Hypothesis, LoadOptions, Sequence};
use skymot::geom::point_to_box;
use skymot::metrics::{evaluate_sequence, render_table, DEFAULT_IOU_GATE};
use skymot::synth::{generate, SynthConfig};

const EXTENT_M: f64 = 0.4;
const MIN_SIDE: f64 = 4.0;

fn main() -> skymot::Result<()> {
    let out = std::path::Path::new("target/example-out/evaluate_hypotheses");
    let synth = SynthConfig {
        name: "scored".into(),
        n_agents: 10,
        n_frames: 12,
        seed: 5,
        ..SynthConfig::default()
    };
    generate(&synth, out)?;
    let seq = Sequence::load(out, LoadOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Run 1: ground truth minus every seventh box, ids kept.
    let mut careful = Vec::new();
    // Run 2: every box jittered, one track relabeled halfway through.
    let mut sloppy = Vec::new();
    let mut n = 0usize;
    for frame in &seq.frames {
        for a in &frame.annotations {
            let gt = point_to_box(a.x, a.y, seq.meta.gsd, EXTENT_M, MIN_SIDE);
            n += 1;
            if n % 7 != 0 {
                careful.push(Hypothesis { frame: frame.index, id: a.id, bbox: gt });
            }
            let dx = rng.gen_range(-1.5..1.5);
            let dy = rng.gen_range(-1.5..1.5);
            let id = if a.id == 1 && frame.index >= 6 { 99 } else { a.id };
            let bbox = skymot::geom::PixelBox::new(gt.x1 + dx, gt.y1 + dy, gt.x2 + dx, gt.y2 + dy);
            sloppy.push(Hypothesis { frame: frame.index, id, bbox });
        }
    }

    let reports = vec![
        evaluate_sequence(&seq, &careful, DEFAULT_IOU_GATE, EXTENT_M, MIN_SIDE)?,
        evaluate_sequence(&seq, &sloppy, DEFAULT_IOU_GATE, EXTENT_M, MIN_SIDE)?,
    ];
    let mut reports = reports;
    reports[0].name = "careful".into();
    reports[1].name = "sloppy".into();
    println!("{}", render_table(&reports));
    Ok(())
}
