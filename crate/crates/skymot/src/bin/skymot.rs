//! Command-line front end: dataset synthesis, training, tracking,
//! evaluation, and overlay rendering.
//!
//! Option precedence everywhere: explicit CLI flag > config file > built-in
//! default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use skymot::data::{self, LoadOptions, Sequence};
use skymot::engine::{self, EscapePolicy, TrackerConfig};
use skymot::error::{Error, Result};
use skymot::geom::{DEFAULT_CONTEXT_FACTOR, DEFAULT_MIN_BOX_SIDE, DEFAULT_OBJECT_EXTENT_M};
use skymot::metrics::{self, DEFAULT_IOU_GATE};
use skymot::model::{checkpoint, AblationMode, Network, NetworkConfig};
use skymot::synth::{MotionModel, SynthConfig};
use skymot::train::{LossLog, TrainConfig, Trainer};
use skymot::viz::{render_overlays, OverlayOptions};

#[derive(Parser)]
#[command(
    name = "skymot",
    version,
    about = "Regression-based multi-object tracking for low-frame-rate aerial imagery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated sequence
    Synth(SynthArgs),
    /// Train a network on annotated sequences
    Train(TrainArgs),
    /// Follow every annotated track through a sequence and write hypotheses
    Track(TrackArgs),
    /// Score hypotheses against ground truth and print the metric table
    Evaluate(EvaluateArgs),
    /// Render per-frame overlay images with boxes, ids, and trails
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with generator settings (flags below override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory the sequence is written into
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    agents: Option<usize>,
    /// Motion model: linear | group | crossing | adversarial-fast
    #[arg(long, value_parser = parse_motion)]
    motion: Option<MotionModel>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Args)]
struct TrainArgs {
    /// Sequence directory (or a directory of sequence subdirectories);
    /// repeatable
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// TOML file with trainer settings (flags below override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for weights, trainer state, and the loss curve
    #[arg(long)]
    out: PathBuf,
    /// Resume from a weight archive written by an earlier run
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many total iterations (overrides the config file)
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation trained: snn | snn+lstm | snn+gcnn | full
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<AblationMode>,
    /// Network preset for fresh runs: reduced | production
    #[arg(long, default_value = "reduced", value_parser = parse_preset)]
    network: NetworkConfig,
    /// TOML file with a full network description (overrides --network)
    #[arg(long)]
    network_config: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory (or a directory of sequence subdirectories)
    #[arg(long)]
    data: PathBuf,
    /// Directory hypothesis files are written into
    #[arg(long)]
    out: PathBuf,
    /// Weight archive; omitted, a seeded randomly initialized reduced
    /// network is used (untrained: for plumbing tests only)
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Branch set: snn | snn+lstm | snn+gcnn | full
    #[arg(long, default_value = "full", value_parser = parse_ablation)]
    ablation: AblationMode,
    /// Seed for the random network when --weights is omitted
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Lost-track policy: prediction | ground-truth
    #[arg(long, default_value = "prediction", value_parser = parse_escape)]
    escape: EscapePolicy,
    #[arg(long, default_value_t = DEFAULT_CONTEXT_FACTOR)]
    context_factor: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_BOX_SIDE)]
    min_side: f64,
    /// Metric object extent used to seed boxes from point annotations
    #[arg(long, default_value_t = DEFAULT_OBJECT_EXTENT_M)]
    extent: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth sequence directory
    #[arg(long)]
    gt: PathBuf,
    /// Hypothesis CSV produced by `track`
    #[arg(long)]
    hyp: PathBuf,
    /// Also write the table as CSV to this path
    #[arg(long)]
    report: Option<PathBuf>,
    /// IoU acceptance gate for matches
    #[arg(long, default_value_t = DEFAULT_IOU_GATE)]
    gate: f64,
    #[arg(long, default_value_t = DEFAULT_OBJECT_EXTENT_M)]
    extent: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_BOX_SIDE)]
    min_side: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Sequence directory the hypotheses refer to
    #[arg(long)]
    data: PathBuf,
    /// Hypothesis CSV produced by `track`
    #[arg(long)]
    hyp: PathBuf,
    /// Directory overlay images are written into
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of past frames joined into each track trail (0 disables)
    #[arg(long, default_value_t = 8)]
    trail: usize,
    #[arg(long, default_value_t = 1)]
    thickness: u32,
    /// Leave out the numeric id labels
    #[arg(long)]
    no_labels: bool,
}

fn parse_motion(s: &str) -> std::result::Result<MotionModel, String> {
    match s {
        "linear" => Ok(MotionModel::Linear),
        "group" => Ok(MotionModel::Group),
        "crossing" => Ok(MotionModel::Crossing),
        "adversarial-fast" => Ok(MotionModel::AdversarialFast),
        other => Err(format!(
            "unknown motion model `{other}` (expected linear, group, crossing, or adversarial-fast)"
        )),
    }
}

fn parse_ablation(s: &str) -> std::result::Result<AblationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_escape(s: &str) -> std::result::Result<EscapePolicy, String> {
    match s {
        "prediction" => Ok(EscapePolicy::Prediction),
        "ground-truth" => Ok(EscapePolicy::GroundTruth),
        other => Err(format!(
            "unknown escape policy `{other}` (expected prediction or ground-truth)"
        )),
    }
}

fn parse_preset(s: &str) -> std::result::Result<NetworkConfig, String> {
    match s {
        "reduced" => Ok(NetworkConfig::reduced()),
        "production" => Ok(NetworkConfig::production()),
        other => Err(format!(
            "unknown network preset `{other}` (expected reduced or production)"
        )),
    }
}

/// A path is a sequence when it carries `meta.txt`; otherwise its immediate
/// subdirectories that do are taken, sorted by name.
fn discover_sequences(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("meta.txt").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && path.join("meta.txt").is_file() {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::invalid(format!(
            "no sequence found under {} (expected meta.txt in it or in a subdirectory)",
            root.display()
        )));
    }
    Ok(found)
}

fn load_sequences(roots: &[PathBuf], eager: bool) -> Result<Vec<Sequence>> {
    let mut seqs = Vec::new();
    for root in roots {
        for dir in discover_sequences(root)? {
            let opts = LoadOptions {
                eager,
                ..LoadOptions::default()
            };
            seqs.push(Sequence::load(&dir, opts)?);
        }
    }
    Ok(seqs)
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<SynthConfig>(&text)
                .map_err(|e| Error::format(path.clone(), None, e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.name {
        cfg.name = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.frames {
        cfg.n_frames = v;
    }
    if let Some(v) = args.agents {
        cfg.n_agents = v;
    }
    if let Some(v) = args.motion {
        cfg.motion = v;
    }
    if let Some(v) = args.width {
        cfg.width = v;
    }
    if let Some(v) = args.height {
        cfg.height = v;
    }
    let generated = skymot::synth::generate(&cfg, &args.out)?;
    println!(
        "wrote sequence `{}`: {} frames, {} tracks -> {}",
        generated.meta.name,
        generated.meta.frame_count,
        generated.tracks.len(),
        args.out.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::from_toml_path(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.max_iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.ablation {
        cfg.ablation = v;
    }

    let sequences = load_sequences(&args.data, true)?;
    std::fs::create_dir_all(&args.out)?;

    let mut trainer = match &args.resume {
        Some(path) => Trainer::resume(path, sequences, cfg.clone())?,
        None => {
            let net_cfg = match &args.network_config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    let parsed: NetworkConfig = toml::from_str(&text)
                        .map_err(|e| Error::format(path.clone(), None, e.to_string()))?;
                    parsed.validate()?;
                    parsed
                }
                None => args.network,
            };
            Trainer::new(Network::new(net_cfg, cfg.seed)?, sequences, cfg.clone())?
        }
    };

    let mut log = LossLog::open(&args.out.join("loss.csv"))?;
    let latest = args.out.join("latest.skw");
    while trainer.iteration() < cfg.iterations {
        let stats = trainer.step()?;
        if cfg.log_every > 0 && stats.iteration % cfg.log_every == 0 {
            log.push(&stats)?;
            eprintln!(
                "iter {:>6}  lr {:.2e}  loss {:.4}  replaced {}",
                stats.iteration, stats.lr, stats.loss, stats.replaced
            );
        }
        if cfg.checkpoint_every > 0 && trainer.iteration() % cfg.checkpoint_every == 0 {
            trainer.save_checkpoint(&latest)?;
        }
    }

    let final_path = args.out.join("model.skw");
    trainer.save_checkpoint(&final_path)?;
    println!(
        "saved {} at iteration {}",
        final_path.display(),
        trainer.iteration()
    );
    Ok(())
}

fn run_track(args: TrackArgs) -> Result<()> {
    let net = match &args.weights {
        Some(path) => checkpoint::load(path)?,
        None => {
            eprintln!(
                "note: no --weights given, tracking with a randomly initialized reduced network (seed {})",
                args.seed
            );
            Network::new(NetworkConfig::reduced(), args.seed)?
        }
    };
    let cfg = TrackerConfig {
        context_factor: args.context_factor,
        min_side: args.min_side,
        object_extent_m: args.extent,
        escape: args.escape,
        ablation: args.ablation,
    };
    std::fs::create_dir_all(&args.out)?;
    for dir in discover_sequences(&args.data)? {
        let seq = Sequence::load(&dir, LoadOptions::default())?;
        let output = engine::track_sequence(&net, &seq, &cfg)?;
        let path = args.out.join(format!("{}_hypotheses.csv", seq.meta.name));
        data::write_hypotheses_csv(&path, &output.hypotheses)?;
        println!(
            "{}: {} tracks, {} boxes, {:.0}% lost -> {}",
            seq.meta.name,
            output.tracks.len(),
            output.hypotheses.len(),
            output.lost_fraction() * 100.0,
            path.display()
        );
    }
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let opts = LoadOptions {
        eager: false,
        ..LoadOptions::default()
    };
    let seq = Sequence::load(&args.gt, opts)?;
    let hypotheses = data::read_hypotheses_csv(&args.hyp)?;
    let report =
        metrics::evaluate_sequence(&seq, &hypotheses, args.gate, args.extent, args.min_side)?;
    print!("{}", metrics::render_table(std::slice::from_ref(&report)));
    if let Some(path) = &args.report {
        std::fs::write(path, metrics::render_csv(std::slice::from_ref(&report)))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    let seq = Sequence::load(&args.data, LoadOptions::default())?;
    let hypotheses = data::read_hypotheses_csv(&args.hyp)?;
    let opts = OverlayOptions {
        thickness: args.thickness,
        trail: args.trail,
        labels: !args.no_labels,
    };
    let written = render_overlays(&seq, &hypotheses, &args.out_dir, &opts)?;
    println!(
        "rendered {} overlay frames into {}",
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args),
        Command::Track(args) => run_track(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Report(args) => run_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
