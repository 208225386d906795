//! Audio loading, audio/video alignment and per-video-frame features.
//!
//! Alignment makes the audio hop equal to the sample count divided by the
//! number of video-frame gaps, with an analysis window of two hops:
//!
//! ```text
//! hop    = floor(n_samples / (n_video_frames - 1))
//! window = 2 * hop
//! ```
//!
//! Window `k` starts at `k * hop`, so exactly one feature row is produced per
//! video frame. Windows running past the end of the clip are zero-padded.

mod mfcc;
mod wav;

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

pub use mfcc::{mfcc, mfcc_row, MelFilterbank, MfccConfig, MfccMatrix};
pub use wav::{load_audio, write_wav_i16};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: unsupported audio encoding ({reason})")]
    Unsupported { path: String, reason: String },
    #[error("{path}: file is truncated")]
    Truncated { path: String },
    #[error("{path}: audio contains no samples")]
    Empty { path: String },
    #[error("{path}: malformed WAV ({reason})")]
    Malformed { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("audio clip must be non-empty with a positive sample rate")]
    InvalidClip,
    #[error("alignment infeasible: {n_samples} samples cannot cover {n_video_frames} video frames")]
    AlignmentInfeasible { n_samples: usize, n_video_frames: usize },
    #[error("invalid MFCC configuration: {0}")]
    Config(String),
    #[error("MFCC file: {0}")]
    MfccFile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() || sample_rate == 0 {
            return Err(AudioError::InvalidClip);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Keep at most the first `n` samples.
    pub fn truncated(mut self, n: usize) -> Result<Self, AudioError> {
        self.samples.truncate(n);
        Self::new(self.samples, self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentParams {
    pub n_samples: usize,
    pub n_video_frames: usize,
    pub hop: usize,
    pub window: usize,
}

pub fn compute_alignment(n_samples: usize, n_video_frames: usize) -> Result<AlignmentParams, AudioError> {
    let infeasible = AudioError::AlignmentInfeasible {
        n_samples,
        n_video_frames,
    };
    if n_video_frames < 2 {
        return Err(infeasible);
    }
    let hop = n_samples / (n_video_frames - 1);
    if hop == 0 {
        return Err(infeasible);
    }
    Ok(AlignmentParams {
        n_samples,
        n_video_frames,
        hop,
        window: 2 * hop,
    })
}

/// Slice the clip into `n_video_frames` windows of `window` samples.
pub fn frame_signal(clip: &AudioClip, params: &AlignmentParams) -> Vec<Vec<f64>> {
    (0..params.n_video_frames)
        .map(|k| window_at(clip.samples(), k * params.hop, params.window))
        .collect()
}

fn window_at(samples: &[f64], start: usize, len: usize) -> Vec<f64> {
    let mut w = vec![0.0; len];
    if start < samples.len() {
        let end = (start + len).min(samples.len());
        w[..end - start].copy_from_slice(&samples[start..end]);
    }
    w
}

/// RMS of every aligned window (zero padding included).
pub fn amplitude_per_frame(clip: &AudioClip, params: &AlignmentParams) -> Vec<f64> {
    frame_signal(clip, params)
        .iter()
        .map(|w| (w.iter().map(|s| s * s).sum::<f64>() / w.len() as f64).sqrt())
        .collect()
}

/// Write an MFCC matrix as delimited text.
///
/// Line 1 is `mfcc <rows> <cols>`, then one line per row with the values
/// separated by single spaces in shortest round-trip decimal form.
pub fn write_mfcc_text(matrix: &MfccMatrix, path: &Path) -> Result<(), AudioError> {
    let mut out = format!("mfcc {} {}\n", matrix.n_rows(), matrix.n_coeffs());
    for row in matrix.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v:?}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_mfcc_text(path: &Path) -> Result<MfccMatrix, AudioError> {
    let text = std::fs::read_to_string(path).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |m: &str| AudioError::MfccFile(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header"))?.split(' ').collect();
    let (rows, cols) = match header.as_slice() {
        ["mfcc", r, c] => (
            r.parse::<usize>().map_err(|_| bad("bad row count"))?,
            c.parse::<usize>().map_err(|_| bad("bad column count"))?,
        ),
        _ => return Err(bad("bad header")),
    };
    let parsed = lines
        .map(|l| {
            l.split(' ')
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    if parsed.len() != rows || parsed.iter().any(|r| r.len() != cols) {
        return Err(bad("shape does not match header"));
    }
    Ok(MfccMatrix::from_rows(parsed))
}
