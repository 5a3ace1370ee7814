use std::collections::BTreeMap;

use skymot::data::{LoadOptions, Sequence};
use skymot::engine::{track_sequence, EscapePolicy, TrackerConfig};
use skymot::geom::point_to_box;
use skymot::metrics;
use skymot::model::checkpoint;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let weights = &args[1];
    let data = &args[2];
    let net = checkpoint::load(std::path::Path::new(weights)).unwrap();
    let seq = Sequence::load(data, LoadOptions::default()).unwrap();
    let cfg = TrackerConfig {
        escape: EscapePolicy::GroundTruth,
        ..TrackerConfig::default()
    };
    let output = track_sequence(&net, &seq, &cfg).unwrap();
    let births: BTreeMap<u32, usize> = seq.track_spans().iter().map(|s| (s.id, s.birth)).collect();
    let by_key: BTreeMap<(usize, u32), skymot::geom::PixelBox> = output
        .hypotheses
        .iter()
        .map(|h| ((h.frame, h.id), h.bbox))
        .collect();
    let mut expected = 0usize;
    let mut covered = 0usize;
    let mut abs_sum = 0.0;
    let mut coords = 0usize;
    let mut per_frame: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for frame in &seq.frames {
        for a in &frame.annotations {
            if frame.index == births[&a.id] {
                continue;
            }
            expected += 1;
            let Some(pred) = by_key.get(&(frame.index, a.id)) else { continue };
            covered += 1;
            let gt = point_to_box(a.x, a.y, seq.meta.gsd, cfg.object_extent_m, cfg.min_side);
            for (p, g) in [(pred.x1, gt.x1), (pred.y1, gt.y1), (pred.x2, gt.x2), (pred.y2, gt.y2)] {
                abs_sum += (p - g).abs();
                coords += 1;
                let e = per_frame.entry(frame.index).or_insert((0.0, 0));
                e.0 += (p - g).abs();
                e.1 += 1;
            }
        }
    }
    println!(
        "coverage {covered}/{expected} ({:.1}%)  mean per-coord err {:.4}px",
        100.0 * covered as f64 / expected as f64,
        abs_sum / coords as f64
    );
    for (f, (s, n)) in &per_frame {
        println!("  frame {f}: {:.4}px over {} coords", s / *n as f64, n);
    }
    let report = metrics::evaluate_sequence(&seq, &output.hypotheses, metrics::DEFAULT_IOU_GATE, cfg.object_extent_m, cfg.min_side).unwrap();
    println!("MOTA {:.2} MOTP {:.2} ID {} FP {} FN {}", report.mota, report.motp, report.id_switches, report.false_positives, report.misses);
}
