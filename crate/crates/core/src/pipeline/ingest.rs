use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CorpusConfig, RunConfig};
use super::{create_dir, list_frame_files, read_json, read_text, write_json, write_text, PipelineError, MANIFEST_FILE};
use crate::audio::{compute_alignment, frame_signal, load_audio, mfcc, MfccConfig};
use crate::corpus::{build_pair, Corpus};
use crate::grid::{
    frame_from_tuples, load_frame_image, parse_rgbx_text, serialize_frame, LaunchpadFrame, SerializeMode,
};

pub const GRID_FILE: &str = "grid.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: String,
    pub frames_dir: String,
    pub audio_file: String,
    pub fps: f64,
    pub frame_count: usize,
    pub duration_secs: f64,
    pub audio_duration_secs: f64,
    pub sample_rate: u32,
    pub n_samples: usize,
    pub hop: usize,
    pub window: usize,
    /// Dense RGB-X text of every frame, one line per frame.
    pub grid_file: String,
}

impl ClipManifest {
    pub fn load_frames(&self, clip_dir: &Path) -> Result<Vec<LaunchpadFrame>, PipelineError> {
        let text = read_text(&clip_dir.join(&self.grid_file))?;
        let frames: Vec<LaunchpadFrame> = text.lines().map(|l| frame_from_tuples(&parse_rgbx_text(l).tuples)).collect();
        if frames.len() != self.frame_count {
            return Err(PipelineError::Data(format!(
                "{}: {} grid lines, manifest says {}",
                clip_dir.display(),
                frames.len(),
                self.frame_count
            )));
        }
        Ok(frames)
    }
}

/// Sample every frame image, check audio alignment, and persist the grid
/// data and manifest into `out_dir`.
pub fn ingest(
    frames_dir: &Path,
    audio_file: &Path,
    fps: f64,
    clip_id: &str,
    out_dir: &Path,
) -> Result<ClipManifest, PipelineError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(PipelineError::Config(format!("fps {fps} must be positive")));
    }
    let files = list_frame_files(frames_dir)?;
    if files.len() < 2 {
        return Err(PipelineError::Data(format!(
            "{}: {} frame image(s); alignment needs at least 2",
            frames_dir.display(),
            files.len()
        )));
    }
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let frame = load_frame_image(f).map_err(|e| PipelineError::Data(format!("{}: {e}", f.display())))?;
        frames.push(frame);
    }
    let audio = load_audio(audio_file)?;
    let align = compute_alignment(audio.len(), frames.len())?;

    create_dir(out_dir)?;
    let mut grid = String::new();
    for f in &frames {
        grid.push_str(&serialize_frame(f, SerializeMode::Dense));
        grid.push('\n');
    }
    write_text(&out_dir.join(GRID_FILE), &grid)?;
    let manifest = ClipManifest {
        clip_id: clip_id.to_string(),
        frames_dir: frames_dir.display().to_string(),
        audio_file: audio_file.display().to_string(),
        fps,
        frame_count: frames.len(),
        duration_secs: frames.len() as f64 / fps,
        audio_duration_secs: audio.duration_secs(),
        sample_rate: audio.sample_rate(),
        n_samples: audio.len(),
        hop: align.hop,
        window: align.window,
        grid_file: GRID_FILE.to_string(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub clips: Vec<String>,
    pub pairs_per_clip: Vec<usize>,
    pub pairs: usize,
    pub characters: usize,
    pub vocab: String,
    pub split_index: usize,
    pub train_tokens: usize,
    pub val_tokens: usize,
    pub mfcc: MfccConfig,
    pub corpus: CorpusConfig,
}

/// One prompt/completion pair per frame of every ingested clip, in the
/// given clip order.
pub fn build_corpus_cmd(clip_dirs: &[PathBuf], out_dir: &Path, cfg: &RunConfig) -> Result<CorpusManifest, PipelineError> {
    if clip_dirs.is_empty() {
        return Err(PipelineError::Data("no ingested clips given".into()));
    }
    let mut pairs = Vec::new();
    let mut per_clip = Vec::new();
    let mut ids = Vec::new();
    for dir in clip_dirs {
        let manifest: ClipManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let frames = manifest.load_frames(dir)?;
        let audio = load_audio(Path::new(&manifest.audio_file))?;
        let align = compute_alignment(audio.len(), frames.len())?;
        let features = mfcc(&frame_signal(&audio, &align), audio.sample_rate(), &cfg.mfcc)?;
        for (row, frame) in features.rows().iter().zip(&frames) {
            pairs.push(build_pair(row, frame, cfg.corpus.mode, cfg.corpus.precision)?);
        }
        per_clip.push(frames.len());
        ids.push(manifest.clip_id);
    }
    let corpus = Corpus::build(&pairs)?;
    create_dir(out_dir)?;
    corpus.save(out_dir)?;
    let manifest = CorpusManifest {
        clips: ids,
        pairs_per_clip: per_clip,
        pairs: pairs.len(),
        characters: corpus.tokens().len(),
        vocab: corpus.vocab().chars().iter().collect(),
        split_index: corpus.split_index(),
        train_tokens: corpus.split_index(),
        val_tokens: corpus.tokens().len() - corpus.split_index(),
        mfcc: cfg.mfcc,
        corpus: cfg.corpus,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
