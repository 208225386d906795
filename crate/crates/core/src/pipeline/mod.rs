//! Command layer: ingest clips, build the corpus, train, generate frames
//! and evaluate, persisting every artifact under a run directory.

mod config;
mod evaluate;
mod generate;
mod ingest;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::audio::AudioError;
use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::grid::{load_frame_image, FrameSequence, GridError};
use crate::model::ModelError;

pub use config::{BaselineSettings, CorpusConfig, RunConfig, StopConfig};
pub use evaluate::{
    baseline_cmd, evaluate_cmd, load_video, CorrelationSummary, EvalReport, LoadedVideo, MethodReport, VideoSet,
};
pub use generate::{generate_cmd, FrameDiagnostic, GenerationManifest};
pub use ingest::{build_corpus_cmd, ingest, ClipManifest, CorpusManifest};
pub use synth::{synth_clip, write_synth_dataset, SynthClip, SynthConfig};
pub use train::{read_loss_csv, train_cmd, TrainManifest};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Process exit status: 2 usage/configuration, 3 input data,
    /// 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Model(ModelError::Config(_)) => 2,
            PipelineError::Model(
                ModelError::NonFiniteGradient { .. } | ModelError::NonFiniteLoss { .. },
            )
            | PipelineError::Eval(EvalError::NonFinite(_) | EvalError::Eigen { .. }) => 4,
            PipelineError::Io { .. } => 1,
            PipelineError::Model(ModelError::Io { .. }) => 1,
            _ => 3,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

/// PNG files of a directory in lexicographic order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_frames_dir(dir: &Path, fps: f64) -> Result<FrameSequence, PipelineError> {
    let files = list_frame_files(dir)?;
    let frames = files.iter().map(|f| load_frame_image(f)).collect::<Result<Vec<_>, _>>()?;
    if frames.is_empty() {
        return Err(PipelineError::Data(format!("{}: no frame images", dir.display())));
    }
    Ok(FrameSequence::new(frames, fps)?)
}
