use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use launchpad_core::eval::{BaselineConfig, BaselineKind};
use launchpad_core::pipeline::{
    baseline_cmd, build_corpus_cmd, evaluate_cmd, generate_cmd, ingest, load_video, train_cmd,
    write_synth_dataset, PipelineError, RunConfig, SynthConfig, VideoSet,
};

#[derive(Parser)]
#[command(name = "launchpad", version, about = "Audio-conditioned light show generation for 8x8 button grids")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

/// Accepted both before and after the subcommand; overrides given later win.
#[derive(Args, Default)]
struct Settings {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.max_iters=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    RandomRgb,
    RandomRgbx,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        settings: Settings,
    },
    /// Sample frame images and align them with an audio file.
    Ingest {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clip_id: Option<String>,
    },
    /// Build the character corpus from ingested clips.
    BuildCorpus {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        clips: Vec<PathBuf>,
    },
    /// Train the model on a corpus directory.
    Train {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `last.ckpt` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Generate frames for an audio file.
    Generate {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of frames; defaults to duration times fps.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Score candidate video sets against a reference set.
    Evaluate {
        #[command(flatten)]
        settings: Settings,
        /// Directory whose subdirectories are the reference videos.
        #[arg(long)]
        reference: PathBuf,
        /// `LABEL=DIR`, where DIR holds one subdirectory per video.
        #[arg(long, value_name = "LABEL=DIR")]
        candidate: Vec<String>,
        /// Also score both random baselines.
        #[arg(long)]
        baselines: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a random baseline sequence.
    Baseline {
        #[command(flatten)]
        settings: Settings,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset with a known audio-to-light mapping.
    Synth {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().clips)]
        clips: usize,
        #[arg(long, default_value_t = SynthConfig::default().frames_per_clip)]
        frames: usize,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn video_set(label: &str, dir: &Path, fps: f64) -> Result<VideoSet, PipelineError> {
    let videos = subdirs(dir)?.iter().map(|d| load_video(d, fps)).collect::<Result<_, _>>()?;
    Ok(VideoSet {
        label: label.to_string(),
        videos,
    })
}

impl Command {
    fn settings(&self) -> &Settings {
        match self {
            Command::Config { settings }
            | Command::Ingest { settings, .. }
            | Command::BuildCorpus { settings, .. }
            | Command::Train { settings, .. }
            | Command::Generate { settings, .. }
            | Command::Evaluate { settings, .. }
            | Command::Baseline { settings, .. }
            | Command::Synth { settings, .. } => settings,
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let sub = cli.command.settings();
    let path = sub.config.as_deref().or(cli.settings.config.as_deref());
    let overrides: Vec<String> = cli.settings.overrides.iter().chain(&sub.overrides).cloned().collect();
    let cfg = RunConfig::load(path, &overrides)?;
    match cli.command {
        Command::Config { .. } => print!("{}", cfg.to_toml()),
        Command::Ingest {
            frames,
            audio,
            out,
            clip_id,
            ..
        } => {
            let id = clip_id.unwrap_or_else(|| out.file_name().map_or("clip".into(), |n| n.to_string_lossy().into()));
            let m = ingest(&frames, &audio, cfg.fps, &id, &out)?;
            println!("{}: {} frames, hop {} window {}", m.clip_id, m.frame_count, m.hop, m.window);
        }
        Command::BuildCorpus { out, clips, .. } => {
            let m = build_corpus_cmd(&clips, &out, &cfg)?;
            println!(
                "{} pairs, {} characters, vocabulary {}",
                m.pairs,
                m.characters,
                m.vocab.chars().count()
            );
        }
        Command::Train { corpus, out, resume, .. } => {
            let m = train_cmd(&corpus, &out, &cfg, resume)?;
            println!(
                "{} iterations, best val loss {}",
                m.iterations,
                m.best_val_loss.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
        }
        Command::Generate {
            audio,
            checkpoint,
            out,
            frames,
            ..
        } => {
            let m = generate_cmd(&audio, &checkpoint, &out, &cfg, frames)?;
            println!("{} frames written to {}", m.frame_count, out.display());
        }
        Command::Evaluate {
            reference,
            candidate,
            baselines,
            out,
            ..
        } => {
            let reference = video_set("reference", &reference, cfg.fps)?;
            let mut sets = Vec::new();
            for c in &candidate {
                let (label, dir) = c
                    .split_once('=')
                    .ok_or_else(|| PipelineError::Config(format!("candidate {c:?} is not LABEL=DIR")))?;
                sets.push(video_set(label, Path::new(dir), cfg.fps)?);
            }
            let report = evaluate_cmd(&reference, &sets, baselines, &cfg, out.as_deref())?;
            print!("{}", report.to_text());
        }
        Command::Baseline { kind, frames, out, .. } => {
            let kind = match kind {
                Kind::RandomRgb => BaselineKind::RandomRgb,
                Kind::RandomRgbx => BaselineKind::RandomRgbx,
            };
            baseline_cmd(
                &BaselineConfig {
                    kind,
                    n_frames: frames,
                    fps: cfg.fps,
                    activation_prob: cfg.baseline.activation_prob,
                    seed: cfg.baseline.seed,
                },
                &out,
            )?;
            println!("{} frames written to {}", frames, out.display());
        }
        Command::Synth {
            out,
            clips,
            frames,
            seed,
            ..
        } => {
            let sc = SynthConfig {
                clips,
                frames_per_clip: frames,
                fps: cfg.fps,
                seed,
                ..SynthConfig::default()
            };
            let dirs = write_synth_dataset(&sc, &out)?;
            println!("{} clips written to {}", dirs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
