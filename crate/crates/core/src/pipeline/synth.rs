//! Synthetic clips with a known audio-to-light mapping: a stepped tone
//! whose level sets both pitch and loudness, and a meter that lights one
//! button per sixteenth of full-scale RMS.

use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{create_dir, write_json, PipelineError, FRAMES_DIR, MANIFEST_FILE};
use crate::audio::{amplitude_per_frame, compute_alignment, write_wav_i16, AudioClip};
use crate::grid::{frame_file_name, save_frame_image, ButtonColor, Coord, LaunchpadFrame, BUTTONS};
use crate::model::derive_seed;

pub const SYNTH_AUDIO: &str = "audio.wav";
const MAX_LEVEL: u32 = 8;
const METER_BUTTONS: usize = 16;
const FULL_SCALE_RMS: f64 = 0.8 / SQRT_2;
const RAMP_SECS: f64 = 0.004;
const STREAM_CLIP: u64 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub clips: usize,
    pub frames_per_clip: usize,
    pub fps: f64,
    pub sample_rate: u32,
    pub min_note_frames: usize,
    pub max_note_frames: usize,
    pub silence_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 24,
            frames_per_clip: 250,
            fps: 25.0,
            sample_rate: 8000,
            min_note_frames: 3,
            max_note_frames: 10,
            silence_prob: 0.3,
            seed: 2024,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.frames_per_clip < 2 {
            return bad(format!("frames_per_clip {} must be at least 2", self.frames_per_clip));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if (self.sample_rate as f64) < 4.0 * self.fps {
            return bad(format!("sample_rate {} is too low for fps {}", self.sample_rate, self.fps));
        }
        if self.min_note_frames == 0 || self.min_note_frames > self.max_note_frames {
            return bad(format!(
                "note length range {}..={} is empty",
                self.min_note_frames, self.max_note_frames
            ));
        }
        if !(0.0..=1.0).contains(&self.silence_prob) {
            return bad(format!("silence_prob {} must be in [0, 1]", self.silence_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub audio: AudioClip,
    pub frames: Vec<LaunchpadFrame>,
    /// Note level per video frame, 0 for silence.
    pub levels: Vec<u32>,
}

pub fn level_frequency(level: u32) -> f64 {
    220.0 * 2f64.powf((level as f64 - 1.0) / 2.0)
}

pub fn level_amplitude(level: u32) -> f64 {
    0.1 * level as f64
}

/// Meter frame for a window RMS: the last `k` buttons lit, green near the
/// end, then yellow, then red.
pub fn meter_frame(rms: f64) -> LaunchpadFrame {
    let k = ((METER_BUTTONS as f64 * rms / FULL_SCALE_RMS).round() as usize).min(METER_BUTTONS);
    let mut frame = LaunchpadFrame::black();
    for x in BUTTONS - k..BUTTONS {
        let d = BUTTONS - 1 - x;
        let color = match d {
            0..=7 => ButtonColor::new(0, 255, 0),
            8..=11 => ButtonColor::new(255, 255, 0),
            _ => ButtonColor::new(255, 0, 0),
        };
        frame.set(Coord::new(x).expect("index below BUTTONS"), color);
    }
    frame
}

/// Clip `index` of the dataset described by `cfg`.
pub fn synth_clip(cfg: &SynthConfig, index: usize) -> Result<SynthClip, PipelineError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_CLIP, index as u64));
    let sr = cfg.sample_rate as f64;
    let n_samples = (cfg.frames_per_clip as f64 / cfg.fps * sr).round() as usize;
    let samples_at = |frame: usize| ((frame as f64 / cfg.fps * sr).round() as usize).min(n_samples);
    let ramp = ((RAMP_SECS * sr).round() as usize).max(1);

    let mut samples = vec![0.0; n_samples];
    let mut levels = Vec::with_capacity(cfg.frames_per_clip);
    let mut phase = 0.0f64;
    let mut start = 0;
    while start < cfg.frames_per_clip {
        let len = rng.gen_range(cfg.min_note_frames..=cfg.max_note_frames);
        let end = (start + len).min(cfg.frames_per_clip);
        let level = if rng.gen_bool(cfg.silence_prob) { 0 } else { rng.gen_range(1..=MAX_LEVEL) };
        levels.extend(std::iter::repeat_n(level, end - start));
        let (a, b) = (samples_at(start), samples_at(end));
        let step = 2.0 * PI * level_frequency(level) / sr;
        for (i, s) in samples[a..b].iter_mut().enumerate() {
            let env = ((i + 1).min(b - a - i) as f64 / ramp as f64).min(1.0);
            if level > 0 {
                *s = level_amplitude(level) * env * phase.sin();
            }
            phase = (phase + step) % (2.0 * PI);
        }
        start = end;
    }

    let audio = AudioClip::new(samples, cfg.sample_rate)?;
    let align = compute_alignment(audio.len(), cfg.frames_per_clip)?;
    let frames = amplitude_per_frame(&audio, &align).into_iter().map(meter_frame).collect();
    Ok(SynthClip { audio, frames, levels })
}

/// Write `cfg.clips` clips as `clip_NNN/frames/*.png` plus
/// `clip_NNN/audio.wav` and return the clip directories.
pub fn write_synth_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.validate()?;
    let mut dirs = Vec::with_capacity(cfg.clips);
    for i in 0..cfg.clips {
        let clip = synth_clip(cfg, i)?;
        let dir = out_dir.join(format!("clip_{i:03}"));
        let frames_dir = dir.join(FRAMES_DIR);
        create_dir(&frames_dir)?;
        for (j, f) in clip.frames.iter().enumerate() {
            save_frame_image(f, &frames_dir.join(frame_file_name(j)))?;
        }
        write_wav_i16(&dir.join(SYNTH_AUDIO), clip.audio.samples(), cfg.sample_rate)?;
        dirs.push(dir);
    }
    write_json(&out_dir.join(MANIFEST_FILE), cfg)?;
    Ok(dirs)
}
