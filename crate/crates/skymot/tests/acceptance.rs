//! Acceptance gate: every release-blocking property, one test each, each
//! printing a single PASS line with its measured numbers (visible under
//! `cargo test --test acceptance -- --nocapture`).

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skymot::data::{self, LoadOptions, Sequence};
use skymot::engine::{track_sequence, EscapePolicy, TrackerConfig};
use skymot::geom::{point_to_box, PixelBox, SequenceMeta};
use skymot::metrics::{self, MetricAccumulator};
use skymot::model::{
    build_neighbor_graph, checkpoint, l1_loss, l1_loss_grad, AblationMode, MotionHistory,
    Network, NetworkConfig, StepPositions,
};
use skymot::synth::{generate, MotionModel, SynthConfig};
use skymot::train::{TrainConfig, Trainer};

// The documented overfit recipe: the plain training schedule cannot close
// the output-bias gap in a desk-scale budget, so the head runs at ten times
// the base rate and the whole schedule is step-decayed. These values were
// tuned once on the fixture corpus and then frozen.
const OVERFIT_LR: f64 = 2e-3;
const OVERFIT_HEAD_MULT: f64 = 10.0;
const OVERFIT_DECAY: f64 = 0.3;
const OVERFIT_DECAY_EVERY: u64 = 250;
const OVERFIT_ITERS: u64 = 1000;
const OVERFIT_BATCH: usize = 20;

// ---------------------------------------------------------------------------
// 1. Metric pipeline vs reference evaluator
// ---------------------------------------------------------------------------

#[test]
fn metrics_match_reference_evaluator_on_random_scenarios() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let gate = metrics::DEFAULT_IOU_GATE;
    let n_scenarios = 1000;

    for case in 0..n_scenarios {
        let scenario = common::random_scenario(&mut rng, 6, 8);
        let mut acc = MetricAccumulator::new(gate);
        for (gt, hyp) in &scenario {
            acc.push_frame(gt, hyp).expect("valid scenario frame");
        }
        let got = acc.finalize(format!("case{case}")).expect("has ground truth");
        let want = common::oracle_evaluate(&scenario, gate);

        let ctx = |what: &str| format!("scenario {case}: {what} disagrees with the reference");
        assert_eq!(got.matches, want.matches, "{}", ctx("match count"));
        assert_eq!(got.misses, want.misses, "{}", ctx("FN"));
        assert_eq!(got.false_positives, want.false_positives, "{}", ctx("FP"));
        assert_eq!(got.id_switches, want.id_switches, "{}", ctx("ID"));
        assert_eq!(got.fragmentations, want.fragmentations, "{}", ctx("FM"));
        assert_eq!(got.gt_total, want.gt_total, "{}", ctx("GT detections"));
        assert_eq!(got.gt_tracks, want.gt_tracks, "{}", ctx("GT tracks"));
        assert_eq!(got.mostly_tracked, want.mostly_tracked, "{}", ctx("MT"));
        assert_eq!(got.partially_tracked, want.partially_tracked, "{}", ctx("PT"));
        assert_eq!(got.mostly_lost, want.mostly_lost, "{}", ctx("ML"));
        assert_eq!(got.idtp, want.idtp, "{}", ctx("IDTP"));

        let close = |a: f64, b: f64| common::close_or_both_nan(a, b, 1e-9);
        assert!(close(got.mota, want.mota()), "{}: {} vs {}", ctx("MOTA"), got.mota, want.mota());
        assert!(close(got.motp, want.motp()), "{}: {} vs {}", ctx("MOTP"), got.motp, want.motp());
        assert!(close(got.motal, want.motal()), "{}", ctx("MOTAL"));
        assert!(close(got.recall, want.recall()), "{}", ctx("Rcll"));
        assert!(close(got.precision, want.precision()), "{}", ctx("Prcn"));
        assert!(close(got.far, want.far()), "{}", ctx("FAR"));
        assert!(close(got.idf1, want.idf1()), "{}", ctx("IDF1"));
        assert!(close(got.idp, want.idp()), "{}", ctx("IDP"));
        assert!(close(got.idr, want.idr()), "{}", ctx("IDR"));
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed <= 60.0, "reference comparison took {elapsed:.1}s, budget 60s");
    println!("PASS metrics match the reference evaluator on {n_scenarios} scenarios ({elapsed:.1}s)");
}

// ---------------------------------------------------------------------------
// 2. Summary formulas at fixed points
// ---------------------------------------------------------------------------

#[test]
fn summary_formulas_hit_their_fixed_points() {
    assert_eq!(metrics::mota(20, 10, 2, 100), 68.0);

    for (misses, fp, gt) in [(0usize, 0usize, 10usize), (3, 4, 25), (80, 40, 100)] {
        assert_eq!(
            metrics::motal(misses, fp, 0, gt),
            metrics::mota(misses, fp, 0, gt),
            "MOTAL must equal MOTA without identity switches"
        );
    }

    // Track-quality boundaries: exactly 80% and exactly 20% coverage both
    // classify as partially tracked; strictly beyond moves the class.
    let square = |cx: f64| PixelBox::new(cx, 0.0, cx + 10.0, 10.0);
    let run_ratio = |matched_frames: usize, total: usize| -> (usize, usize, usize) {
        let mut acc = MetricAccumulator::new(0.5);
        for f in 0..total {
            let gt = vec![(1u32, square(0.0))];
            let hyp = if f < matched_frames {
                vec![(7u32, square(0.0))]
            } else {
                Vec::new()
            };
            acc.push_frame(&gt, &hyp).unwrap();
        }
        let r = acc.finalize("boundary").unwrap();
        (r.mostly_tracked, r.partially_tracked, r.mostly_lost)
    };
    assert_eq!(run_ratio(4, 5), (0, 1, 0), "4/5 = 0.8 must be PT");
    assert_eq!(run_ratio(1, 5), (0, 1, 0), "1/5 = 0.2 must be PT");
    assert_eq!(run_ratio(5, 5), (1, 0, 0), "full coverage must be MT");
    assert_eq!(run_ratio(9, 10), (1, 0, 0), "0.9 must be MT");
    assert_eq!(run_ratio(1, 10), (0, 0, 1), "0.1 must be ML");
    assert_eq!(run_ratio(0, 5), (0, 0, 1), "never matched must be ML");

    println!("PASS summary formulas hold (MOTA fixed point, MOTAL identity, coverage boundaries)");
}

// ---------------------------------------------------------------------------
// 3. Gradient check on the fused network
// ---------------------------------------------------------------------------

#[test]
fn analytic_gradients_match_finite_differences() {
    let started = Instant::now();
    let cfg = NetworkConfig::reduced();
    let crop = cfg.crop_size;
    let history_len = cfg.history_len;
    let mut net = Network::new(cfg, 91).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(92);

    // Fresh networks hold every bias at zero, which parks pre-activations
    // exactly on relu corners where a two-sided difference straddles the
    // kink. Shift them off the corner first.
    for name in net.param_names() {
        if name.ends_with("bias") || name.contains(".b_") {
            for v in net.param_mut(&name).unwrap().iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
    }

    let target = Array3::from_shape_fn((3, crop, crop), |_| rng.gen_range(-0.5..0.5));
    let search = Array3::from_shape_fn((3, crop, crop), |_| rng.gen_range(-0.5..0.5));
    let history = MotionHistory::from_steps(&[(1.3, -0.4), (0.9, 0.2), (1.1, -0.1)], history_len);
    let steps: Vec<StepPositions> = (0..3)
        .map(|k| StepPositions {
            target: (40.0 + k as f64, 38.0 - k as f64),
            others: vec![(5, (44.0, 40.0)), (9, (35.0, 36.0))],
        })
        .collect();
    let to_image = skymot::geom::CropTransform {
        scale: 0.25,
        offset: (32.0, 30.0),
    };
    let graph = build_neighbor_graph(&steps, &to_image, 0.1, net.config.graph_neighbors,
        net.config.graph_radius_m, history_len).unwrap();
    let gt_out = ndarray::Array1::from_vec(vec![3.2, 3.0, 6.9, 7.1]);

    let (out, cache) = net
        .forward(&target, &search, &history, &graph, AblationMode::Full, None)
        .unwrap();
    let base_sig = cache.decision_signature(&net);
    let base_loss_signs: Vec<f64> = out.iter().zip(gt_out.iter()).map(|(o, g)| (o - g).signum()).collect();
    let grads = net.backward(&l1_loss_grad(&out, &gt_out), &cache);

    let names = net.param_names();
    let h = 1e-3;
    let total = 200usize;
    let mut tested = 0usize;
    let mut passed = 0usize;
    let mut skipped = 0usize;
    let mut worst: f64 = 0.0;
    let mut draws = 0usize;

    while tested < total && draws < 3 * total {
        // Stratified: cycle the tensors so every parameter group is probed.
        // A draw that lands next to a ReLU or pooling flip is unverifiable
        // by a two-sided difference, so it is redrawn rather than counted.
        let name = &names[draws % names.len()];
        draws += 1;
        let len = net.param(name).unwrap().len();
        let idx = rng.gen_range(0..len);
        let orig = *net.param(name).unwrap().iter().nth(idx).unwrap();

        let eval = |net: &mut Network, v: f64| -> (f64, u64, Vec<f64>) {
            *net.param_mut(name).unwrap().iter_mut().nth(idx).unwrap() = v;
            let (o, c) = net
                .forward(&target, &search, &history, &graph, AblationMode::Full, None)
                .unwrap();
            let signs = o.iter().zip(gt_out.iter()).map(|(a, g)| (a - g).signum()).collect();
            (l1_loss(&o, &gt_out), c.decision_signature(net), signs)
        };
        let (lp, sig_p, signs_p) = eval(&mut net, orig + h);
        let (lm, sig_m, signs_m) = eval(&mut net, orig - h);
        *net.param_mut(name).unwrap().iter_mut().nth(idx).unwrap() = orig;

        // A nonlinearity changed state inside the difference interval: the
        // two-sided quotient is meaningless there, not wrong.
        if sig_p != base_sig || sig_m != base_sig || signs_p != base_loss_signs || signs_m != base_loss_signs {
            skipped += 1;
            continue;
        }
        tested += 1;
        let numeric = (lp - lm) / (2.0 * h);
        let analytic = *grads.tensors.get(name.as_str()).unwrap().iter().nth(idx).unwrap();
        let abs = (numeric - analytic).abs();
        let rel = abs / numeric.abs().max(analytic.abs()).max(1e-12);
        if abs <= 1e-8 || rel <= 1e-3 {
            passed += 1;
        } else {
            eprintln!("grad mismatch {name}[{idx}]: analytic {analytic:.6e} numeric {numeric:.6e}");
        }
        worst = worst.max(rel.min(abs));
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        tested == total,
        "only {tested} of {total} coordinates were clean after {draws} draws ({skipped} kink-adjacent)"
    );
    let rate = passed as f64 / tested as f64;
    assert!(
        rate >= 0.99,
        "gradient agreement {passed}/{tested} = {:.1}% (need 99%)",
        rate * 100.0
    );
    assert!(elapsed <= 600.0, "gradient check took {elapsed:.0}s, budget 600s");
    println!(
        "PASS analytic gradients match finite differences ({passed}/{tested} coords, {skipped} kink-adjacent redrawn, {elapsed:.0}s)"
    );
}

// ---------------------------------------------------------------------------
// 4. Feature shapes and branch fusion
// ---------------------------------------------------------------------------

#[test]
fn fused_features_have_their_declared_shapes() {
    for cfg in [NetworkConfig::reduced(), NetworkConfig::production()] {
        assert_eq!(cfg.motion_out, 128, "motion feature must be 128-dim");
        assert_eq!(cfg.graph_channels[2], 128, "neighbor feature must be 128-dim");
        assert_eq!(
            cfg.graph_rows(),
            2 + 2 * cfg.graph_neighbors,
            "neighbor matrix rows follow 2 + 2k"
        );
        assert_eq!(cfg.graph_rows(), 18);
        assert_eq!(cfg.history_len, 5);
    }

    let cfg = NetworkConfig::reduced();
    let crop = cfg.crop_size;
    let net = Network::new(cfg, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let target = Array3::from_shape_fn((3, crop, crop), |_| rng.gen_range(-0.5..0.5));
    let search = Array3::from_shape_fn((3, crop, crop), |_| rng.gen_range(-0.5..0.5));
    let history = MotionHistory::from_steps(&[(0.5, -0.5)], net.config.history_len);
    let graph = skymot::model::NeighborGraph::empty(net.config.graph_neighbors, net.config.history_len);
    assert_eq!(graph.data.dim(), (18, 5), "default neighbor matrix is 18x5");

    let (_, cache) = net
        .forward(&target, &search, &history, &graph, AblationMode::Full, None)
        .unwrap();
    assert_eq!(cache.bundle.motion.len(), 128);
    assert_eq!(cache.bundle.neighbors.len(), 128);
    assert_eq!(cache.bundle.appearance.len(), net.appearance_dim());

    // Appearance-only ablation must be bit-for-bit the fused path with the
    // recurrent and graph features silenced.
    let (out_snn, _) = net
        .forward(&target, &search, &history, &graph, AblationMode::SnnOnly, None)
        .unwrap();
    let mut silenced = cache.bundle.clone();
    silenced.motion.fill(0.0);
    silenced.neighbors.fill(0.0);
    let (out_manual, _) = net.regress(&silenced);
    for (a, b) in out_snn.iter().zip(out_manual.iter()) {
        assert_eq!(a.to_bits(), b.to_bits(), "ablation path diverged from zeroed fusion");
    }

    println!("PASS fused features have the declared shapes (128 / 128 / 18x5, ablation bit-exact)");
}

// ---------------------------------------------------------------------------
// 5 & 6. Overfit convergence and held-out tracking (shared fixture)
// ---------------------------------------------------------------------------

struct OverfitFixture {
    net: Network,
    train_seq: Sequence,
    heldout_seq: Sequence,
    train_seconds: f64,
    final_loss: f64,
    // TempDirs live as long as the fixture so the sequences stay readable.
    _train_dir: tempfile::TempDir,
    _heldout_dir: tempfile::TempDir,
}

static OVERFIT: OnceLock<OverfitFixture> = OnceLock::new();

fn overfit_fixture() -> &'static OverfitFixture {
    OVERFIT.get_or_init(|| {
        let train_dir = tempfile::tempdir().unwrap();
        let heldout_dir = tempfile::tempdir().unwrap();

        let mut synth = SynthConfig::default();
        synth.name = "overfit-train".into();
        synth.n_agents = 20;
        synth.n_frames = 15;
        synth.seed = 101;
        generate(&synth, train_dir.path()).unwrap();

        let mut held = synth.clone();
        held.name = "heldout".into();
        held.n_frames = 10;
        held.seed = 202;
        generate(&held, heldout_dir.path()).unwrap();

        let train_seq = Sequence::load(train_dir.path(), LoadOptions::default()).unwrap();
        let heldout_seq = Sequence::load(heldout_dir.path(), LoadOptions::default()).unwrap();

        let mut cfg = TrainConfig {
            iterations: OVERFIT_ITERS,
            batch_size: OVERFIT_BATCH,
            lr: OVERFIT_LR,
            lr_decay: OVERFIT_DECAY,
            lr_decay_every: OVERFIT_DECAY_EVERY,
            seed: 11,
            ..TrainConfig::default()
        };
        cfg.lr_multipliers.insert("head.".into(), OVERFIT_HEAD_MULT);

        let started = Instant::now();
        let net = Network::new(NetworkConfig::reduced(), cfg.seed).unwrap();
        let mut trainer = Trainer::new(net, vec![train_seq.clone()], cfg).unwrap();
        let mut final_loss = f64::NAN;
        for _ in 0..OVERFIT_ITERS {
            final_loss = trainer.step().unwrap().loss;
        }
        let train_seconds = started.elapsed().as_secs_f64();

        OverfitFixture {
            net: trainer.net,
            train_seq,
            heldout_seq,
            train_seconds,
            final_loss,
            _train_dir: train_dir,
            _heldout_dir: heldout_dir,
        }
    })
}

#[test]
fn overfit_training_converges_below_one_pixel() {
    let f = overfit_fixture();
    assert!(
        f.train_seconds <= 1800.0,
        "overfit training took {:.0}s, budget 1800s",
        f.train_seconds
    );

    // Follow every training track the way the trainer does (window around
    // the previous prediction, annotation only consulted for the escape
    // check) and compare each predicted corner with the annotated box.
    let cfg = TrackerConfig {
        escape: EscapePolicy::GroundTruth,
        ..TrackerConfig::default()
    };
    let output = track_sequence(&f.net, &f.train_seq, &cfg).unwrap();

    let births: BTreeMap<u32, usize> = f
        .train_seq
        .track_spans()
        .iter()
        .map(|s| (s.id, s.birth))
        .collect();
    let by_key: BTreeMap<(usize, u32), PixelBox> = output
        .hypotheses
        .iter()
        .map(|h| ((h.frame, h.id), h.bbox))
        .collect();

    let gsd = f.train_seq.meta.gsd;
    let mut expected = 0usize;
    let mut covered = 0usize;
    let mut abs_sum = 0.0;
    let mut coords = 0usize;
    for frame in &f.train_seq.frames {
        for a in &frame.annotations {
            if frame.index == births[&a.id] {
                continue; // the birth box is seeded from the annotation
            }
            expected += 1;
            let Some(pred) = by_key.get(&(frame.index, a.id)) else {
                continue;
            };
            covered += 1;
            let gt = point_to_box(a.x, a.y, gsd, cfg.object_extent_m, cfg.min_side);
            for (p, g) in [
                (pred.x1, gt.x1),
                (pred.y1, gt.y1),
                (pred.x2, gt.x2),
                (pred.y2, gt.y2),
            ] {
                abs_sum += (p - g).abs();
                coords += 1;
            }
        }
    }

    let coverage = covered as f64 / expected as f64;
    let mean_err = abs_sum / coords as f64;
    assert!(
        coverage >= 0.95,
        "only {covered}/{expected} training steps survived the window ({:.1}%)",
        coverage * 100.0
    );
    assert!(
        mean_err < 1.0,
        "mean per-coordinate error {mean_err:.3}px (need < 1.0), final loss {:.3}",
        f.final_loss
    );
    println!(
        "PASS overfit converged: {mean_err:.3}px mean per-coordinate error over {covered} boxes ({:.0}s training, final loss {:.3})",
        f.train_seconds, f.final_loss
    );
}

#[test]
fn overfit_model_tracks_a_heldout_sequence() {
    let f = overfit_fixture();
    let cfg = TrackerConfig::default(); // prediction-based escape, full fusion
    let output = track_sequence(&f.net, &f.heldout_seq, &cfg).unwrap();
    let report = metrics::evaluate_sequence(
        &f.heldout_seq,
        &output.hypotheses,
        metrics::DEFAULT_IOU_GATE,
        cfg.object_extent_m,
        cfg.min_side,
    )
    .unwrap();

    assert!(
        report.mota >= 50.0,
        "held-out MOTA {:.1} (need >= 50): Rcll {:.1} Prcn {:.1} FP {} FN {} ID {}",
        report.mota,
        report.recall,
        report.precision,
        report.false_positives,
        report.misses,
        report.id_switches
    );
    assert_eq!(report.id_switches, 0, "identity switches on the held-out run");
    println!(
        "PASS held-out tracking: MOTA {:.1}, MOTP {:.1}, 0 identity switches",
        report.mota, report.motp
    );
}

// ---------------------------------------------------------------------------
// 7. Window-escape failure mode
// ---------------------------------------------------------------------------

#[test]
fn adversarial_fast_motion_escapes_every_window() {
    let dir = tempfile::tempdir().unwrap();
    let mut synth = SynthConfig::default();
    synth.name = "adversarial".into();
    synth.width = 160;
    synth.height = 160;
    synth.n_agents = 8;
    synth.n_frames = 8;
    synth.motion = MotionModel::AdversarialFast;
    synth.seed = 77;
    generate(&synth, dir.path()).unwrap();
    let seq = Sequence::load(dir.path(), LoadOptions::default()).unwrap();

    let net = Network::new(NetworkConfig::reduced(), 5).unwrap();
    let cfg = TrackerConfig {
        escape: EscapePolicy::GroundTruth,
        ..TrackerConfig::default()
    };
    let output = track_sequence(&net, &seq, &cfg).unwrap();

    assert!(!output.tracks.is_empty());
    for t in &output.tracks {
        assert!(
            t.is_lost(),
            "track {} should have escaped, ended {:?}",
            t.id,
            t.end
        );
    }
    assert_eq!(output.lost_fraction(), 1.0);
    println!(
        "PASS adversarial-fast motion: {}/{} tracks lost to window escape",
        output.tracks.len(),
        output.tracks.len()
    );
}

// ---------------------------------------------------------------------------
// 8. Ablation harness parity and column order
// ---------------------------------------------------------------------------

#[test]
fn ablations_share_the_harness_and_the_report_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut synth = SynthConfig::default();
    synth.name = "ablate".into();
    synth.width = 96;
    synth.height = 96;
    synth.n_agents = 4;
    synth.n_frames = 5;
    synth.seed = 21;
    generate(&synth, dir.path()).unwrap();
    let seq = Sequence::load(dir.path(), LoadOptions::default()).unwrap();
    let net = Network::new(NetworkConfig::reduced(), 3).unwrap();

    let expected_header = "Sequence,IDF1,IDP,IDR,Rcll,Prcn,FAR,GT,MT,PT,ML,FP,FN,ID,FM,MOTA,MOTP,MOTAL";
    assert_eq!(
        metrics::COLUMNS,
        [
            "IDF1", "IDP", "IDR", "Rcll", "Prcn", "FAR", "GT", "MT", "PT", "ML", "FP", "FN",
            "ID", "FM", "MOTA", "MOTP", "MOTAL"
        ]
    );

    for mode in AblationMode::ALL {
        // One engine, one network entry point: the mode is the only thing
        // that changes between ablation rows.
        let cfg = TrackerConfig {
            ablation: mode,
            escape: EscapePolicy::GroundTruth,
            ..TrackerConfig::default()
        };
        let output = track_sequence(&net, &seq, &cfg).unwrap();
        let report = metrics::evaluate_sequence(
            &seq,
            &output.hypotheses,
            metrics::DEFAULT_IOU_GATE,
            cfg.object_extent_m,
            cfg.min_side,
        )
        .unwrap();
        let csv = metrics::render_csv(std::slice::from_ref(&report));
        let header = csv.lines().next().unwrap();
        assert_eq!(header, expected_header, "column order drifted for {mode}");
        assert_eq!(csv.lines().count(), 2, "one data row for {mode}");
    }
    println!("PASS all four ablations ran the shared harness and report the fixed column order");
}

// ---------------------------------------------------------------------------
// 9. End-to-end determinism
// ---------------------------------------------------------------------------

#[test]
fn seeded_pipelines_are_identical_end_to_end() {
    fn small_net_config() -> NetworkConfig {
        let mut cfg = NetworkConfig::reduced();
        cfg.crop_size = 32;
        let widths = [8, 12, 16, 16, 12];
        for (spec, w) in cfg.conv_plan.iter_mut().zip(widths) {
            spec.out_channels = w;
        }
        cfg.fc_plan = vec![64, 64, 64, 4];
        cfg.lstm_hidden = 8;
        cfg.motion_out = 16;
        cfg.graph_channels = [8, 12, 16];
        cfg
    }

    fn run_once() -> (String, Vec<u8>) {
        let dir = tempfile::tempdir().unwrap();
        let mut synth = SynthConfig::default();
        synth.name = "pipeline".into();
        synth.width = 64;
        synth.height = 64;
        synth.n_agents = 4;
        synth.n_frames = 8;
        synth.seed = 31;
        generate(&synth, dir.path().join("seq").as_path()).unwrap();
        let seq = Sequence::load(dir.path().join("seq"), LoadOptions::default()).unwrap();

        let cfg = TrainConfig {
            iterations: 100,
            batch_size: 8,
            lr: 1e-3,
            seed: 13,
            ..TrainConfig::default()
        };
        let net = Network::new(small_net_config(), cfg.seed).unwrap();
        let mut trainer = Trainer::new(net, vec![seq.clone()], cfg).unwrap();
        for _ in 0..100 {
            trainer.step().unwrap();
        }
        let weights_path = dir.path().join("model.skw");
        checkpoint::save(&trainer.net, &weights_path).unwrap();
        let weights = std::fs::read(&weights_path).unwrap();

        let tcfg = TrackerConfig {
            escape: EscapePolicy::GroundTruth,
            ..TrackerConfig::default()
        };
        let output = track_sequence(&trainer.net, &seq, &tcfg).unwrap();
        let report = metrics::evaluate_sequence(
            &seq,
            &output.hypotheses,
            metrics::DEFAULT_IOU_GATE,
            tcfg.object_extent_m,
            tcfg.min_side,
        )
        .unwrap();
        (metrics::render_csv(std::slice::from_ref(&report)), weights)
    }

    let (report_a, weights_a) = run_once();
    let (report_b, weights_b) = run_once();
    assert_eq!(report_a, report_b, "metric reports differ between seeded runs");
    assert_eq!(weights_a, weights_b, "weight archives differ between seeded runs");
    println!("PASS two seeded synth->train->track->evaluate runs are byte-identical");
}

// ---------------------------------------------------------------------------
// 10. File-format round trips and malformed-input rejection
// ---------------------------------------------------------------------------

#[test]
fn formats_round_trip_and_malformed_fixtures_are_rejected() {
    use skymot::error::Error;

    let dir = tempfile::tempdir().unwrap();

    // Metadata survives exactly (f64 shortest round-trip formatting).
    let meta = SequenceMeta {
        name: "roundtrip".into(),
        gsd: 0.127,
        fps: 1.5,
        frame_count: 3,
    };
    let meta_path = dir.path().join("meta.txt");
    data::write_meta(&meta_path, &meta).unwrap();
    assert_eq!(data::read_meta(&meta_path).unwrap(), meta);

    // Annotations and hypotheses survive at their declared 4-decimal
    // precision.
    let anns = vec![
        skymot::geom::PointAnnotation { frame: 0, id: 1, x: 10.12345, y: 3.9999 },
        skymot::geom::PointAnnotation { frame: 2, id: 9, x: 0.0, y: 63.5 },
    ];
    let ann_path = dir.path().join("ann.csv");
    data::write_annotations_csv(&ann_path, &anns).unwrap();
    let anns_back = data::read_annotations_csv(&ann_path).unwrap();
    assert_eq!(anns_back.len(), anns.len());
    for (a, b) in anns.iter().zip(&anns_back) {
        assert_eq!((a.frame, a.id), (b.frame, b.id));
        assert!((a.x - b.x).abs() < 5e-5 && (a.y - b.y).abs() < 5e-5);
    }

    let hyps = vec![data::Hypothesis {
        frame: 1,
        id: 4,
        bbox: PixelBox::new(1.00004, 2.0, 9.12344, 8.5),
    }];
    let hyp_path = dir.path().join("hyp.csv");
    data::write_hypotheses_csv(&hyp_path, &hyps).unwrap();
    let hyps_back = data::read_hypotheses_csv(&hyp_path).unwrap();
    assert_eq!((hyps_back[0].frame, hyps_back[0].id), (1, 4));
    assert!((hyps_back[0].bbox.x1 - 1.0).abs() < 5e-5);
    assert!((hyps_back[0].bbox.x2 - 9.1234).abs() < 5e-5);
    // Writing back what was read is byte-stable (already at 4 decimals).
    let hyp_path2 = dir.path().join("hyp2.csv");
    data::write_hypotheses_csv(&hyp_path2, &hyps_back).unwrap();
    assert_eq!(
        std::fs::read(&hyp_path).unwrap(),
        std::fs::read(&hyp_path2).unwrap()
    );

    // A generated sequence reloads identically (meta and annotations).
    let seq_dir = dir.path().join("seq");
    let mut synth = SynthConfig::default();
    synth.name = "io-seq".into();
    synth.width = 64;
    synth.height = 64;
    synth.n_agents = 3;
    synth.n_frames = 4;
    synth.seed = 55;
    generate(&synth, &seq_dir).unwrap();
    let seq = Sequence::load(&seq_dir, LoadOptions::default()).unwrap();
    assert_eq!(seq.meta.name, "io-seq");
    assert_eq!(seq.frames.len(), 4);
    let reread = data::read_annotations_csv(&seq_dir.join("annotations.csv")).unwrap();
    let from_frames: usize = seq.frames.iter().map(|f| f.annotations.len()).sum();
    assert_eq!(reread.len(), from_frames);

    // Malformed fixtures: every corruption is rejected with its specific
    // diagnostic.
    let write = |name: &str, content: &str| -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p
    };
    let format_err = |r: Result<Vec<skymot::geom::PointAnnotation>, Error>, needle: &str| {
        let e = r.err().expect("malformed fixture must be rejected");
        assert!(matches!(e, Error::Format { .. }), "wrong error kind: {e}");
        let msg = e.to_string();
        assert!(msg.contains(needle), "diagnostic `{msg}` missing `{needle}`");
    };

    format_err(
        data::read_annotations_csv(&write("bad_header.csv", "frame,id,y,x\n0,1,2,3\n")),
        "expected header",
    );
    format_err(
        data::read_annotations_csv(&write("short_row.csv", "frame,id,x,y\n0,1,2\n")),
        "expected 4 fields",
    );
    format_err(
        data::read_annotations_csv(&write("bad_number.csv", "frame,id,x,y\n0,1,abc,3\n")),
        "cannot parse x",
    );

    let hyp_err = |content: &str, needle: &str| {
        let p = dir.path().join("bad_hyp.csv");
        std::fs::write(&p, content).unwrap();
        let e = data::read_hypotheses_csv(&p).err().expect("must reject");
        assert!(e.to_string().contains(needle), "got `{e}`, wanted `{needle}`");
    };
    hyp_err("frame,id,x1,y1\n", "expected header");
    hyp_err("frame,id,x1,y1,x2,y2\n0,1,5,5,4,9\n", "malformed box");
    hyp_err("frame,id,x1,y1,x2,y2\n0,1,5,5,9\n", "expected 6 fields");
    hyp_err("frame,id,x1,y1,x2,y2\n0,1,5,5,9,nan\n", "malformed box");

    let meta_err = |content: &str, needle: &str| {
        let p = dir.path().join("bad_meta.txt");
        std::fs::write(&p, content).unwrap();
        let e = data::read_meta(&p).err().expect("must reject");
        assert!(e.to_string().contains(needle), "got `{e}`, wanted `{needle}`");
    };
    meta_err("name=x\ngsd=0.1\nfps=2\nframes=9\n", "unknown sidecar key");
    meta_err("name=x\nfps=2\nframe_count=9\n", "missing meta field `gsd`");
    meta_err("name=x\ngsd=zero\nfps=2\nframe_count=9\n", "cannot parse gsd");
    meta_err("just some text\n", "expected key=value");

    // Sequence-level corruption: start from a valid generated sequence and
    // break one thing at a time.
    let load_err = |dir: &std::path::Path, needle: &str| {
        let e = Sequence::load(dir, LoadOptions::default()).err().expect("must reject");
        let msg = e.to_string();
        assert!(msg.contains(needle), "got `{msg}`, wanted `{needle}`");
    };
    let clone_seq = |name: &str| -> std::path::PathBuf {
        let dst = dir.path().join(name);
        std::fs::create_dir_all(dst.join("frames")).unwrap();
        std::fs::copy(seq_dir.join("meta.txt"), dst.join("meta.txt")).unwrap();
        std::fs::copy(seq_dir.join("annotations.csv"), dst.join("annotations.csv")).unwrap();
        for i in 0..4 {
            let f = format!("{i:06}.png");
            std::fs::copy(seq_dir.join("frames").join(&f), dst.join("frames").join(&f)).unwrap();
        }
        dst
    };

    let missing_frame = clone_seq("missing_frame");
    std::fs::remove_file(missing_frame.join("frames/000002.png")).unwrap();
    load_err(&missing_frame, "missing frame file");

    let extra_frame = clone_seq("extra_frame");
    std::fs::copy(
        extra_frame.join("frames/000000.png"),
        extra_frame.join("frames/000004.png"),
    )
    .unwrap();
    load_err(&extra_frame, "beyond declared frame_count");

    let dup_ann = clone_seq("dup_ann");
    let mut text = std::fs::read_to_string(dup_ann.join("annotations.csv")).unwrap();
    let first_row = text.lines().nth(1).unwrap().to_string();
    text.push_str(&first_row);
    text.push('\n');
    std::fs::write(dup_ann.join("annotations.csv"), text).unwrap();
    load_err(&dup_ann, "duplicate annotation");

    let oob_ann = clone_seq("oob_ann");
    let mut text = std::fs::read_to_string(oob_ann.join("annotations.csv")).unwrap();
    text.push_str("0,99,5000,5000\n");
    std::fs::write(oob_ann.join("annotations.csv"), text).unwrap();
    load_err(&oob_ann, "outside frame");

    let ghost_ann = clone_seq("ghost_ann");
    let mut text = std::fs::read_to_string(ghost_ann.join("annotations.csv")).unwrap();
    text.push_str("9,99,5,5\n");
    std::fs::write(ghost_ann.join("annotations.csv"), text).unwrap();
    load_err(&ghost_ann, "references missing frame");

    // Weight archives: corrupted magic, truncation, and trailing garbage.
    let net = Network::new(
        {
            let mut c = NetworkConfig::reduced();
            c.crop_size = 32;
            c.fc_plan = vec![32, 32, 32, 4];
            for spec in c.conv_plan.iter_mut() {
                spec.out_channels = 4;
            }
            c.lstm_hidden = 4;
            c.motion_out = 8;
            c.graph_channels = [4, 4, 8];
            c
        },
        1,
    )
    .unwrap();
    let ck = dir.path().join("net.skw");
    checkpoint::save(&net, &ck).unwrap();
    assert!(checkpoint::load(&ck).is_ok());

    let bytes = std::fs::read(&ck).unwrap();
    let ck_err = |name: &str, bytes: Vec<u8>| {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        let e = checkpoint::load(&p).err().expect("must reject");
        assert!(matches!(e, Error::Checkpoint(_)), "wrong error kind: {e}");
    };
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    ck_err("bad_magic.skw", bad_magic);
    ck_err("truncated.skw", bytes[..bytes.len() - 9].to_vec());
    let mut trailing = bytes.clone();
    trailing.extend_from_slice(b"junk");
    ck_err("trailing.skw", trailing);

    println!("PASS formats round-trip at declared precision and 18 malformed fixtures were rejected");
}
