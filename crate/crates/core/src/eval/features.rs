//! Deterministic per-video feature vectors.
//!
//! Layout of the default 208 values:
//!
//! | range     | content                                                |
//! |-----------|--------------------------------------------------------|
//! | 0..64     | mean luminance of each button over time                |
//! | 64..128   | standard deviation of each button's luminance          |
//! | 128..144  | hue histogram over all lit buttons, summing to 1       |
//! | 144..146  | mean and std of per-frame activity                     |
//! | 146..148  | mean and std of per-transition mean absolute change    |
//! | 148..208  | DFT magnitudes of the activity series, bins 0..60, / N |
//!
//! Luminance and colour changes are scaled to `[0, 1]`. Standard
//! deviations are population values.

use std::fmt::Write as _;

use super::EvalError;
use crate::grid::{FrameSequence, BUTTONS};

pub const HUE_BINS: usize = 16;
pub const RHYTHM_BINS: usize = 60;
pub const FEATURE_DIM: usize = 2 * BUTTONS + HUE_BINS + 2 + 2 + RHYTHM_BINS;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeature(pub Vec<f64>);

impl VideoFeature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, video: &FrameSequence) -> Result<VideoFeature, EvalError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultExtractor;

impl FeatureExtractor for DefaultExtractor {
    fn dim(&self) -> usize {
        FEATURE_DIM
    }

    fn extract(&self, video: &FrameSequence) -> Result<VideoFeature, EvalError> {
        extract_features(video)
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn extract_features(video: &FrameSequence) -> Result<VideoFeature, EvalError> {
    let frames = video.frames();
    let t = frames.len();
    if t < 2 {
        return Err(EvalError::TooFewFrames(t));
    }
    let mut out = Vec::with_capacity(FEATURE_DIM);

    let lum: Vec<[f64; BUTTONS]> = frames.iter().map(|f| f.buttons().map(|b| b.luminance())).collect();
    let per_button: Vec<(f64, f64)> = (0..BUTTONS).map(|i| mean_std(lum.iter().map(move |l| l[i]))).collect();
    out.extend(per_button.iter().map(|p| p.0));
    out.extend(per_button.iter().map(|p| p.1));

    let mut hist = [0.0; HUE_BINS];
    let mut lit = 0usize;
    for b in frames.iter().flat_map(|f| f.buttons()).filter(|b| b.is_lit()) {
        let bin = ((b.hue() / 360.0 * HUE_BINS as f64) as usize).min(HUE_BINS - 1);
        hist[bin] += 1.0;
        lit += 1;
    }
    if lit > 0 {
        hist.iter_mut().for_each(|h| *h /= lit as f64);
    }
    out.extend(hist);

    let activity: Vec<f64> = frames.iter().map(|f| f.activity()).collect();
    let (m, s) = mean_std(activity.iter().copied());
    out.extend([m, s]);

    let changes: Vec<f64> = frames
        .windows(2)
        .map(|w| {
            let total: u32 = w[0]
                .buttons()
                .iter()
                .zip(w[1].buttons())
                .map(|(a, b)| u32::from(a.r.abs_diff(b.r)) + u32::from(a.g.abs_diff(b.g)) + u32::from(a.b.abs_diff(b.b)))
                .sum();
            f64::from(total) / (3.0 * BUTTONS as f64 * 255.0)
        })
        .collect();
    let (m, s) = mean_std(changes.iter().copied());
    out.extend([m, s]);

    for k in 0..RHYTHM_BINS {
        if k >= t {
            out.push(0.0);
            continue;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (n, a) in activity.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * ((k * n) % t) as f64 / t as f64;
            re += a * phase.cos();
            im += a * phase.sin();
        }
        out.push(re.hypot(im) / t as f64);
    }
    debug_assert_eq!(out.len(), FEATURE_DIM);
    Ok(VideoFeature(out))
}

/// `features <n> <d>` header, then one whitespace-separated vector per line.
pub fn write_features_text(features: &[VideoFeature]) -> String {
    let d = features.first().map_or(0, VideoFeature::dim);
    let mut s = format!("features {} {}\n", features.len(), d);
    for f in features {
        let line: Vec<String> = f.0.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn read_features_text(text: &str) -> Result<Vec<VideoFeature>, EvalError> {
    let bad = |m: String| EvalError::Format(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (n, d) = match parts.as_slice() {
        ["features", n, d] => (
            n.parse::<usize>().map_err(|e| bad(format!("row count: {e}")))?,
            d.parse::<usize>().map_err(|e| bad(format!("dimension: {e}")))?,
        ),
        _ => return Err(bad(format!("bad header {header:?}"))),
    };
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("row {i}: {e}"))))
            .collect::<Result<_, _>>()?;
        if row.len() != d {
            return Err(EvalError::Dimension {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite("feature file"));
        }
        out.push(VideoFeature(row));
    }
    if out.len() != n {
        return Err(bad(format!("header says {n} rows, found {}", out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ButtonColor, Coord, LaunchpadFrame};

    fn seq(frames: Vec<LaunchpadFrame>) -> FrameSequence {
        FrameSequence::new(frames, 25.0).unwrap()
    }

    #[test]
    fn black_static_video() {
        let f = extract_features(&seq(vec![LaunchpadFrame::black(); 30])).unwrap();
        assert_eq!(f.dim(), 208);
        assert!(f.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            extract_features(&seq(vec![LaunchpadFrame::black()])),
            Err(EvalError::TooFewFrames(1))
        ));
    }

    #[test]
    fn toggled_button_recomputed_directly() {
        // Frames alternate between black and one white button at x = 5.
        let mut on = LaunchpadFrame::black();
        on.set(Coord::new(5).unwrap(), ButtonColor::new(255, 255, 255));
        let frames: Vec<LaunchpadFrame> = (0..10).map(|i| if i % 2 == 0 { on.clone() } else { LaunchpadFrame::black() }).collect();
        let f = extract_features(&seq(frames.clone())).unwrap().0;
        let base = extract_features(&seq(vec![LaunchpadFrame::black(); 10])).unwrap().0;
        assert!((f[5] - 0.5).abs() < 1e-12);
        assert!((f[64 + 5] - 0.5).abs() < 1e-12);
        // White has hue 0, so the first bin carries everything.
        assert_eq!(f[128], 1.0);
        let a = 1.0 / 64.0;
        assert!((f[144] - a / 2.0).abs() < 1e-15);
        assert!((f[145] - a / 2.0).abs() < 1e-15);
        let change = 3.0 * 255.0 / (3.0 * 64.0 * 255.0);
        assert!((f[146] - change).abs() < 1e-15);
        assert!(f[147].abs() < 1e-15);
        // DC bin is the mean activity; bin 5 (period 2 over 10 frames) is a/2.
        assert!((f[148] - a / 2.0).abs() < 1e-15);
        assert!((f[148 + 5] - a / 2.0).abs() < 1e-15);
        assert!(f[149].abs() < 1e-15);
        // Bins past the series length are zero padding.
        assert!(f[148 + 10..].iter().all(|&v| v == 0.0));
        assert_ne!(&f[144..146], &base[144..146]);
    }

    #[test]
    fn text_round_trip() {
        let v = vec![VideoFeature(vec![0.1, -2.5, 1e-300]), VideoFeature(vec![3.0, 0.0, 7.25])];
        let text = write_features_text(&v);
        assert!(text.starts_with("features 2 3\n"));
        assert_eq!(read_features_text(&text).unwrap(), v);
        assert!(read_features_text("features 2 3\n1 2 3\n").is_err());
        assert!(read_features_text("features 1 3\n1 2\n").is_err());
    }
}
