//! Fréchet Video Distance over hand-crafted frame-sequence features, the
//! two random baselines, and the activity/amplitude correlation.

mod baseline;
mod features;
mod fvd;
mod linalg;

use thiserror::Error;

use crate::audio::{amplitude_per_frame, compute_alignment, AudioClip, AudioError};
use crate::grid::FrameSequence;

pub use baseline::{random_baseline, random_rgb_baseline, random_rgbx_baseline, BaselineConfig, BaselineKind};
pub use features::{
    extract_features, read_features_text, write_features_text, DefaultExtractor, FeatureExtractor, VideoFeature,
    FEATURE_DIM, HUE_BINS, RHYTHM_BINS,
};
pub use fvd::{fvd, fvd_from_stats, fvd_videos, sqrt_trace_term, stats, FeatureSetStats, FvdScore};
pub use linalg::{sym_eigen, SymEigen};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("need at least 2 feature vectors, got {0}")]
    TooFewVectors(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("eigendecomposition failed: {reason} (n = {n}, off-diagonal norm {off_norm:e}, diagonal range [{diag_min:e}, {diag_max:e}])")]
    Eigen {
        reason: String,
        n: usize,
        off_norm: f64,
        diag_min: f64,
        diag_max: f64,
    },
    #[error("invalid baseline configuration: {0}")]
    Baseline(String),
    #[error("{0} frames but {1} amplitude values")]
    LengthMismatch(usize, usize),
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Pearson correlation; `None` when either series is constant or shorter
/// than two values.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "series lengths differ");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-frame activity of the video against per-frame RMS of the aligned
/// audio windows.
pub fn activity_amplitude_correlation(video: &FrameSequence, audio: &AudioClip) -> Result<Option<f64>, EvalError> {
    let params = compute_alignment(audio.len(), video.len())?;
    let amplitude = amplitude_per_frame(audio, &params);
    if amplitude.len() != video.len() {
        return Err(EvalError::LengthMismatch(video.len(), amplitude.len()));
    }
    let activity: Vec<f64> = video.frames().iter().map(|f| f.activity()).collect();
    Ok(pearson(&activity, &amplitude))
}
