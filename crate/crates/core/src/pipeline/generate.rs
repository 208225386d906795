use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{create_dir, write_json, PipelineError, FRAMES_DIR, MANIFEST_FILE};
use crate::audio::{compute_alignment, frame_signal, load_audio, mfcc};
use crate::corpus::{format_mfcc_prompt, TokenId, COMPLETION_PREFIX};
use crate::grid::{frame_file_name, frame_from_tuples, parse_rgbx_text, save_frame_image};
use crate::model::{derive_seed, generate_batch, Checkpoint, CheckpointHeader, Precision, Scalar, StopCriteria, StopReason};

const STREAM_FRAME: u64 = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostic {
    pub frame: usize,
    pub file: String,
    pub tuples: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub generated_tokens: usize,
    pub dropped_prompt_chars: usize,
    pub stop: StopReason,
    /// Raw sampled text, stop sequence included.
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub audio_file: String,
    pub checkpoint: String,
    pub fps: f64,
    pub frame_count: usize,
    pub seed: u64,
    pub frames: Vec<FrameDiagnostic>,
}

/// Generate one frame per video frame of `audio_file` and render them into
/// `out_dir/frames`. `n_frames` defaults to the audio duration times fps.
pub fn generate_cmd(
    audio_file: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    n_frames: Option<usize>,
) -> Result<GenerationManifest, PipelineError> {
    let header = CheckpointHeader::read(checkpoint)?;
    match header.dtype {
        Precision::F32 => run::<f32>(audio_file, checkpoint, out_dir, cfg, n_frames),
        Precision::F64 => run::<f64>(audio_file, checkpoint, out_dir, cfg, n_frames),
    }
}

fn run<T: Scalar>(
    audio_file: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    n_frames: Option<usize>,
) -> Result<GenerationManifest, PipelineError> {
    let ck = Checkpoint::<T>::load(checkpoint)?;
    let vocab = ck.vocab()?;
    if !vocab.contains_all(COMPLETION_PREFIX) {
        return Err(PipelineError::Data(format!(
            "{}: vocabulary lacks the characters of {COMPLETION_PREFIX:?}",
            checkpoint.display()
        )));
    }
    let audio = load_audio(audio_file)?;
    let n = n_frames.unwrap_or_else(|| (audio.duration_secs() * cfg.fps).round() as usize);
    let align = compute_alignment(audio.len(), n)?;
    let rows = mfcc(&frame_signal(&audio, &align), audio.sample_rate(), &cfg.mfcc)?;

    let mut prompts: Vec<Vec<TokenId>> = Vec::with_capacity(n);
    let mut dropped = Vec::with_capacity(n);
    for row in rows.rows() {
        let text = format_mfcc_prompt(row, cfg.corpus.precision)? + COMPLETION_PREFIX;
        let (ids, lost) = vocab.encode_lossy(&text);
        prompts.push(ids);
        dropped.push(lost);
    }
    let lost_total: usize = dropped.iter().sum();
    if lost_total > 0 {
        log::warn!("{lost_total} prompt characters are not in the checkpoint vocabulary and were dropped");
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| derive_seed(cfg.sample.seed, STREAM_FRAME, i)).collect();
    let stop = StopCriteria::new(
        &vocab,
        (!cfg.stop.text.is_empty()).then_some(cfg.stop.text.as_str()),
        (cfg.stop.max_tuples > 0).then_some(cfg.stop.max_tuples),
    );
    let outputs = generate_batch(&ck.params, &prompts, &seeds, &cfg.sample, &stop)?;

    let frames_dir = out_dir.join(FRAMES_DIR);
    create_dir(&frames_dir)?;
    let mut diagnostics = Vec::with_capacity(n);
    for (i, out) in outputs.iter().enumerate() {
        // A completion is one line; anything after its newline belongs to
        // the next pair.
        let text = vocab.decode(&out.tokens)?;
        let report = parse_rgbx_text(text.split('\n').next().unwrap_or(""));
        let frame = frame_from_tuples(&report.tuples);
        let name = frame_file_name(i);
        save_frame_image(&frame, &frames_dir.join(&name))?;
        diagnostics.push(FrameDiagnostic {
            frame: i,
            file: format!("{FRAMES_DIR}/{name}"),
            tuples: report.tuples.len(),
            malformed: report.malformed_count,
            duplicates: report.duplicate_count,
            generated_tokens: out.tokens.len(),
            dropped_prompt_chars: dropped[i],
            stop: out.stop,
            completion: text,
        });
    }
    let manifest = GenerationManifest {
        audio_file: audio_file.display().to_string(),
        checkpoint: checkpoint.display().to_string(),
        fps: cfg.fps,
        frame_count: n,
        seed: cfg.sample.seed,
        frames: diagnostics,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
