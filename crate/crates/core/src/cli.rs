//! Command-line interface. One subcommand per pipeline stage plus
//! `pipeline` to run them all and `synth` for fixture data.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 validation /
//! configuration error, 3 I/O error, 4 numerical abort.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::dataset::{load_corpus, save_corpus, Corpus, NormalizationSpec};
use crate::error::{Error, Result};
use crate::gan::{self, GanConfig};
use crate::neuralnet::{load_model, save_model, ModelMeta};
use crate::pipeline::{classify_hands, run_pipeline, PipelineOptions};
use crate::retarget::{retarget_recording, save_pose_stream, RobotPose};
use crate::sequence::{
    assemble, export_sequence, load_sequence, render_timeline, ums_needed, DEFAULT_BLEND,
    DEFAULT_FRAME_PERIOD,
};
use crate::skeleton::load_recording;
use crate::synth::write_synth_bundle;

#[derive(Parser)]
#[command(
    name = "gesturegen",
    version,
    about = "Retarget human motion to a 14-DoF humanoid and synthesize gestures with a small GAN"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic capture bundle (recording, glove
    /// crops and hands sidecar) for tests and demos.
    Synth(SynthArgs),
    /// Convert a skeleton recording into a robot pose stream.
    Retarget(RetargetArgs),
    /// Dataset operations on pose streams.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train the gesture GAN on a corpus.
    Train(TrainArgs),
    /// Sample the trained generator into a gesture sequence.
    Generate(GenerateArgs),
    /// Show a sequence as an ASCII timeline, or stream it in real time.
    Play(PlayArgs),
    /// Run ingest → retarget → dataset → train → generate end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of skeleton frames to generate.
    #[arg(long)]
    frames: usize,
    /// Capture rate in Hz.
    #[arg(long, default_value_t = 4.0)]
    fps: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Glove crop edge length in pixels.
    #[arg(long, default_value_t = 30)]
    window: usize,
    /// Output directory for recording.jsonl, hands.jsonl and gloves/.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetargetArgs {
    /// Skeleton recording (JSONL).
    #[arg(long)]
    recording: PathBuf,
    /// Glove sidecar; defaults to hands.jsonl next to the recording when
    /// present.
    #[arg(long)]
    hands: Option<PathBuf>,
    /// Joint-limit / gain configuration (TOML); built-in defaults when
    /// omitted.
    #[arg(long)]
    limits: Option<PathBuf>,
    /// Overrides the seed from the limits file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the glove normalizing constant N from the limits file.
    #[arg(long)]
    glove_n: Option<f64>,
    /// Output pose stream (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Window pose streams into Units of Movement and write a corpus.
    Build(DatasetBuildArgs),
}

#[derive(Args)]
struct DatasetBuildArgs {
    /// Pose stream files (JSONL), windowed separately.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Window stride in poses (4 = non-overlapping, 1 = dense).
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Joint-limit configuration used for normalization bounds.
    #[arg(long)]
    limits: Option<PathBuf>,
    /// Fraction of UMs held out into a sibling *_holdout file.
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    /// Output corpus file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus file from `dataset build`.
    #[arg(long)]
    corpus: PathBuf,
    /// Model output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    z_dim: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write numbered checkpoints every this many epochs (0 = off).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Args)]
struct GenerateArgs {
    /// Model directory containing generator.bin.
    #[arg(long)]
    model: PathBuf,
    /// Requested sequence duration in seconds.
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Seconds between poses in the assembled sequence.
    #[arg(long, default_value_t = DEFAULT_FRAME_PERIOD)]
    frame_period: f64,
    /// Interpolated poses inserted between consecutive UMs.
    #[arg(long, default_value_t = DEFAULT_BLEND)]
    blend: usize,
    /// Output sequence file (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlayArgs {
    /// Sequence file from `generate`.
    #[arg(long)]
    seq: PathBuf,
    /// Timeline width in columns.
    #[arg(long, default_value_t = 72)]
    width: usize,
    /// Stream the pose lines to stdout at wall-clock rate instead of
    /// printing the timeline.
    #[arg(long)]
    realtime: bool,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    recording: PathBuf,
    #[arg(long)]
    hands: Option<PathBuf>,
    #[arg(long)]
    limits: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    glove_n: Option<f64>,
    /// Output directory for all pipeline artifacts.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    stride: usize,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Requested sequence duration in seconds.
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = DEFAULT_FRAME_PERIOD)]
    frame_period: f64,
    #[arg(long, default_value_t = DEFAULT_BLEND)]
    blend: usize,
}

/// Loads the limits file (or defaults) and applies command-line
/// overrides, which take precedence over the file.
fn effective_config(
    limits: &Option<PathBuf>,
    seed: Option<u64>,
    glove_n: Option<f64>,
) -> Result<Config> {
    let mut cfg = match limits {
        Some(path) => crate::config::load_config(path)?,
        None => Config::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = glove_n {
        if !(n > 0.0) {
            return Err(Error::Config(format!(
                "glove normalizing constant must be positive, got {n}"
            )));
        }
        cfg.limits.glove_n = n;
    }
    Ok(cfg)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let bundle = write_synth_bundle(&args.out, args.frames, args.fps, args.seed, args.window)?;
    println!(
        "wrote {} frames to {}",
        bundle.recording.len(),
        bundle.recording_path.display()
    );
    Ok(())
}

fn cmd_retarget(args: RetargetArgs) -> Result<()> {
    let cfg = effective_config(&args.limits, args.seed, args.glove_n)?;
    let rec = load_recording(&args.recording)?;
    let sidecar = args.hands.clone().or_else(|| {
        let candidate = args.recording.parent()?.join("hands.jsonl");
        candidate.is_file().then_some(candidate)
    });
    let gloves = match &sidecar {
        Some(path) => classify_hands(rec.len(), path)?,
        None => Default::default(),
    };
    let (poses, holds) = retarget_recording(&rec, &gloves, &cfg.limits, cfg.seed);
    save_pose_stream(&poses, &args.out)?;
    println!(
        "retargeted {} frames ({} degenerate-geometry holds) to {}",
        poses.len(),
        holds,
        args.out.display()
    );
    Ok(())
}

fn holdout_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus");
    match out.extension().and_then(|s| s.to_str()) {
        Some(ext) => out.with_file_name(format!("{stem}_holdout.{ext}")),
        None => out.with_file_name(format!("{stem}_holdout")),
    }
}

fn cmd_dataset_build(args: DatasetBuildArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(Error::Validation(format!(
            "holdout fraction must be in [0, 1), got {}",
            args.holdout
        )));
    }
    let cfg = effective_config(&args.limits, None, None)?;
    let mut streams = Vec::new();
    for path in &args.files {
        let poses: Vec<RobotPose> = crate::retarget::load_pose_stream(path)?
            .iter()
            .map(|p| p.pose)
            .collect();
        streams.push((path.display().to_string(), poses));
    }
    let norm = NormalizationSpec::from_limits(&cfg.limits);
    let mut corpus = Corpus::build(&streams, args.stride, norm)?;

    if args.holdout > 0.0 {
        let total = corpus.len();
        if total < 2 {
            return Err(Error::Validation(format!(
                "cannot hold out from a corpus of {total} UM(s)"
            )));
        }
        // Tail split: deterministic and stride-agnostic.
        let k = ((total as f64 * args.holdout).round() as usize).clamp(1, total - 1);
        let held = Corpus {
            ums: corpus.ums.split_off(total - k),
            norm: corpus.norm.clone(),
            provenance: corpus.provenance.clone(),
        };
        let hpath = holdout_path(&args.out);
        save_corpus(&held, &hpath)?;
        println!("held out {} UMs to {}", held.len(), hpath.display());
    }

    save_corpus(&corpus, &args.out)?;
    println!(
        "built corpus of {} UMs from {} stream(s) to {}",
        corpus.len(),
        streams.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let cfg = GanConfig {
        batch: args.batch,
        lr: args.lr,
        epochs: args.epochs,
        z_dim: args.z_dim,
        seed: args.seed,
        checkpoint_every: args.checkpoint_every,
        checkpoint_dir: (args.checkpoint_every > 0).then(|| args.out.join("checkpoints")),
        ..GanConfig::default()
    };
    let (generator, discriminator, log) = gan::train(&corpus, &cfg)?;
    let meta = ModelMeta {
        seed: cfg.seed,
        epoch: cfg.epochs,
        norm: corpus.norm.clone(),
    };
    save_model(&generator, &meta, &args.out.join("generator.bin"))?;
    save_model(&discriminator, &meta, &args.out.join("discriminator.bin"))?;
    log.save_csv(&args.out.join("trainlog.csv"))?;
    let last = log.entries.last().expect("log always has entry 0");
    println!(
        "trained {} epochs on {} UMs (final d_loss {:.4}, g_loss {:.4}) to {}",
        cfg.epochs,
        corpus.len(),
        last.d_loss,
        last.g_loss,
        args.out.display()
    );
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let (generator, meta) = load_model(&args.model.join("generator.bin"))?;
    let n = ums_needed(args.duration, args.frame_period)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let ums = gan::generate_ums(&generator, n, &mut rng, &meta.norm)?;
    let seq = assemble(&ums, args.frame_period, args.blend)?;
    export_sequence(&seq, &args.out)?;
    println!(
        "generated {} UMs ({} poses, {:.2} s) to {}",
        n,
        seq.poses.len(),
        seq.duration(),
        args.out.display()
    );
    Ok(())
}

fn cmd_play(args: PlayArgs) -> Result<()> {
    let seq = load_sequence(&args.seq)?;
    if !args.realtime {
        print!("{}", render_timeline(&seq, args.width));
        return Ok(());
    }
    // Re-emit the original pose lines at wall-clock rate so the output
    // can be piped into a visualizer or robot bridge.
    let text = std::fs::read_to_string(&args.seq).map_err(|e| Error::io(&args.seq, e))?;
    let period = std::time::Duration::from_secs_f64(seq.frame_period);
    let mut stdout = std::io::stdout();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        if i > 0 {
            std::thread::sleep(period);
        }
        writeln!(stdout, "{line}").map_err(|e| Error::io(&args.seq, e))?;
        stdout.flush().map_err(|e| Error::io(&args.seq, e))?;
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let cfg = effective_config(&args.limits, args.seed, args.glove_n)?;
    let gan_cfg = GanConfig {
        batch: args.batch,
        lr: args.lr,
        epochs: args.epochs,
        seed: cfg.seed,
        checkpoint_every: args.checkpoint_every,
        ..GanConfig::default()
    };
    let opts = PipelineOptions {
        recording: args.recording,
        hands: args.hands,
        out_dir: args.out,
        config: cfg,
        stride: args.stride,
        gan: gan_cfg,
        duration: args.duration,
        frame_period: args.frame_period,
        blend: args.blend,
    };
    let report = run_pipeline(&opts)?;
    println!(
        "pipeline complete: {} frames ({} holds) -> {} UMs -> {} generated -> {} poses at {}",
        report.frames,
        report.holds,
        report.corpus_ums,
        report.generated_ums,
        report.sequence_poses,
        report.sequence_path.display()
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Retarget(args) => cmd_retarget(args),
        Command::Dataset(DatasetCmd::Build(args)) => cmd_dataset_build(args),
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Play(args) => cmd_play(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn holdout_path_keeps_extension() {
        assert_eq!(
            holdout_path(Path::new("/tmp/corpus.bin")),
            Path::new("/tmp/corpus_holdout.bin")
        );
        assert_eq!(
            holdout_path(Path::new("corpus")),
            Path::new("corpus_holdout")
        );
    }
}
