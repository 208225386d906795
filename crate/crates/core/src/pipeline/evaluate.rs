use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::ingest::{ClipManifest, GRID_FILE};
use super::{
    create_dir, load_frames_dir, read_json, write_json, write_text, PipelineError, FRAMES_DIR, MANIFEST_FILE,
};
use crate::audio::{load_audio, AudioClip};
use crate::eval::{
    activity_amplitude_correlation, extract_features, fvd_from_stats, random_baseline, stats, BaselineConfig,
    BaselineKind, FvdScore, VideoFeature, FEATURE_DIM,
};
use crate::grid::{frame_file_name, save_frame_image, FrameSequence};
use crate::model::derive_seed;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

/// A frame sequence plus the audio it was made for, when known.
#[derive(Debug, Clone)]
pub struct LoadedVideo {
    pub name: String,
    pub frames: FrameSequence,
    pub audio: Option<AudioClip>,
}

#[derive(Debug, Clone)]
pub struct VideoSet {
    pub label: String,
    pub videos: Vec<LoadedVideo>,
}

#[derive(Debug, Deserialize)]
struct LooseManifest {
    fps: Option<f64>,
    audio_file: Option<String>,
}

/// Load a video directory: an ingested clip (`grid.txt`), a generation
/// output (`frames/`), or a bare directory of frame images with an
/// optional `audio.wav`.
pub fn load_video(dir: &Path, default_fps: f64) -> Result<LoadedVideo, PipelineError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let loose: Option<LooseManifest> = manifest_path.exists().then(|| read_json(&manifest_path)).transpose()?;
    let fps = loose.as_ref().and_then(|m| m.fps).unwrap_or(default_fps);
    let frames = if dir.join(GRID_FILE).exists() {
        let clip: ClipManifest = read_json(&manifest_path)?;
        FrameSequence::new(clip.load_frames(dir)?, fps)?
    } else if dir.join(FRAMES_DIR).is_dir() {
        load_frames_dir(&dir.join(FRAMES_DIR), fps)?
    } else {
        load_frames_dir(dir, fps)?
    };
    let audio_path = loose
        .and_then(|m| m.audio_file)
        .map(PathBuf::from)
        .or_else(|| Some(dir.join("audio.wav")).filter(|p| p.exists()));
    let audio = audio_path.map(|p| load_audio(&p)).transpose()?;
    Ok(LoadedVideo {
        name: dir.display().to_string(),
        frames,
        audio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// Mean over videos whose correlation is defined.
    pub mean_r: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
    pub per_video: Vec<Option<f64>>,
}

impl CorrelationSummary {
    fn from_values(per_video: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_video.iter().flatten().copied().collect();
        Self {
            mean_r: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            defined: defined.len(),
            undefined: per_video.len() - defined.len(),
            per_video,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub videos: usize,
    pub fvd: FvdScore,
    pub correlation: CorrelationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feature_dim: usize,
    pub reference_videos: usize,
    pub reference_correlation: CorrelationSummary,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_text(&self) -> String {
        let r = |v: Option<f64>| v.map_or("undefined".to_string(), |r| format!("{r:+.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "reference videos: {}", self.reference_videos);
        let _ = writeln!(s, "feature dimension: {}", self.feature_dim);
        let _ = writeln!(s, "reference activity-amplitude r: {}", r(self.reference_correlation.mean_r));
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>14} {:>14} {:>14} {:>10}",
            "method", "videos", "fvd", "mean_term", "trace_term", "r"
        );
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>14.6} {:>14.6} {:>14.6} {:>10}",
                m.method,
                m.videos,
                m.fvd.value,
                m.fvd.mean_term,
                m.fvd.trace_term,
                r(m.correlation.mean_r)
            );
        }
        s
    }
}

fn correlations(pairs: &[(&FrameSequence, Option<&AudioClip>)]) -> Result<CorrelationSummary, PipelineError> {
    let mut out = Vec::with_capacity(pairs.len());
    for (video, audio) in pairs {
        out.push(match audio {
            Some(a) => activity_amplitude_correlation(video, a)?,
            None => None,
        });
    }
    Ok(CorrelationSummary::from_values(out))
}

fn features(videos: &[&FrameSequence]) -> Result<Vec<VideoFeature>, PipelineError> {
    Ok(videos.iter().map(|v| extract_features(v)).collect::<Result<_, _>>()?)
}

fn baseline_stream(kind: BaselineKind) -> u64 {
    match kind {
        BaselineKind::RandomRgb => 21,
        BaselineKind::RandomRgbx => 22,
    }
}

/// Compare every candidate set, and optionally both random baselines,
/// against the reference set. Writes `report.json` and `report.txt` into
/// `out_dir` when given.
pub fn evaluate_cmd(
    reference: &VideoSet,
    candidates: &[VideoSet],
    with_baselines: bool,
    cfg: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<EvalReport, PipelineError> {
    let n_ref = reference.videos.len();
    if n_ref < 2 {
        return Err(PipelineError::Data(format!("need at least 2 reference videos, got {n_ref}")));
    }
    let ref_frames: Vec<&FrameSequence> = reference.videos.iter().map(|v| &v.frames).collect();
    let ref_stats = stats(&features(&ref_frames)?)?;
    let ref_pairs: Vec<_> = reference.videos.iter().map(|v| (&v.frames, v.audio.as_ref())).collect();
    let reference_correlation = correlations(&ref_pairs)?;

    let mut methods = Vec::new();
    if with_baselines {
        for kind in [BaselineKind::RandomRgb, BaselineKind::RandomRgbx] {
            let mut videos = Vec::with_capacity(n_ref);
            for (i, v) in reference.videos.iter().enumerate() {
                videos.push(random_baseline(&BaselineConfig {
                    kind,
                    n_frames: v.frames.len(),
                    fps: v.frames.fps(),
                    activation_prob: cfg.baseline.activation_prob,
                    seed: derive_seed(cfg.baseline.seed, baseline_stream(kind), i as u64),
                })?);
            }
            let refs: Vec<&FrameSequence> = videos.iter().collect();
            let score = fvd_from_stats(&ref_stats, &stats(&features(&refs)?)?)?;
            let pairs: Vec<_> = videos.iter().zip(&reference.videos).map(|(b, r)| (b, r.audio.as_ref())).collect();
            methods.push(MethodReport {
                method: kind.label().to_string(),
                videos: videos.len(),
                fvd: score,
                correlation: correlations(&pairs)?,
            });
        }
    }
    for set in candidates {
        if set.videos.len() < 2 {
            return Err(PipelineError::Data(format!(
                "{}: need at least 2 videos, got {}",
                set.label,
                set.videos.len()
            )));
        }
        let frames: Vec<&FrameSequence> = set.videos.iter().map(|v| &v.frames).collect();
        let score = fvd_from_stats(&ref_stats, &stats(&features(&frames)?)?)?;
        let pairs: Vec<_> = set.videos.iter().map(|v| (&v.frames, v.audio.as_ref())).collect();
        methods.push(MethodReport {
            method: set.label.clone(),
            videos: set.videos.len(),
            fvd: score,
            correlation: correlations(&pairs)?,
        });
    }
    let report = EvalReport {
        feature_dim: FEATURE_DIM,
        reference_videos: n_ref,
        reference_correlation,
        methods,
    };
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_json(&dir.join(REPORT_JSON), &report)?;
        write_text(&dir.join(REPORT_TXT), &report.to_text())?;
    }
    Ok(report)
}

/// Render one baseline sequence into `out_dir/frames`.
pub fn baseline_cmd(config: &BaselineConfig, out_dir: &Path) -> Result<FrameSequence, PipelineError> {
    let seq = random_baseline(config)?;
    let frames_dir = out_dir.join(FRAMES_DIR);
    create_dir(&frames_dir)?;
    for (i, f) in seq.frames().iter().enumerate() {
        save_frame_image(f, &frames_dir.join(frame_file_name(i)))?;
    }
    write_json(&out_dir.join(MANIFEST_FILE), config)?;
    Ok(seq)
}
