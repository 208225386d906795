use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::grid::{ButtonColor, FrameSequence, LaunchpadFrame, BUTTONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Every channel of every button uniform in `[0, 255]`.
    RandomRgb,
    /// Each button lit independently with probability `p` in a uniform
    /// random colour.
    RandomRgbx,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::RandomRgb => "Random-RGB",
            BaselineKind::RandomRgbx => "Random-RGBX",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub n_frames: usize,
    pub fps: f64,
    pub activation_prob: f64,
    pub seed: u64,
}

impl BaselineConfig {
    fn validate(&self) -> Result<(), EvalError> {
        if !(self.activation_prob > 0.0 && self.activation_prob <= 1.0) {
            return Err(EvalError::Baseline(format!(
                "activation probability {} outside (0, 1]",
                self.activation_prob
            )));
        }
        if self.n_frames == 0 || !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(EvalError::Baseline("need at least one frame and a positive fps".into()));
        }
        Ok(())
    }
}

fn random_color<R: Rng>(rng: &mut R) -> ButtonColor {
    ButtonColor::new(rng.gen(), rng.gen(), rng.gen())
}

fn sequence(frames: Vec<LaunchpadFrame>, fps: f64) -> Result<FrameSequence, EvalError> {
    FrameSequence::new(frames, fps).map_err(|e| EvalError::Baseline(e.to_string()))
}

pub fn random_rgb_baseline(cfg: &BaselineConfig) -> Result<FrameSequence, EvalError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frames = (0..cfg.n_frames)
        .map(|_| LaunchpadFrame::from_buttons(std::array::from_fn(|_| random_color(&mut rng))))
        .collect();
    sequence(frames, cfg.fps)
}

pub fn random_rgbx_baseline(cfg: &BaselineConfig) -> Result<FrameSequence, EvalError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut frames = Vec::with_capacity(cfg.n_frames);
    for _ in 0..cfg.n_frames {
        let mut buttons = [ButtonColor::BLACK; BUTTONS];
        for b in buttons.iter_mut() {
            if rng.gen::<f64>() < cfg.activation_prob {
                let mut c = random_color(&mut rng);
                if !c.is_lit() {
                    c = random_color(&mut rng);
                }
                *b = c;
            }
        }
        frames.push(LaunchpadFrame::from_buttons(buttons));
    }
    sequence(frames, cfg.fps)
}

pub fn random_baseline(cfg: &BaselineConfig) -> Result<FrameSequence, EvalError> {
    match cfg.kind {
        BaselineKind::RandomRgb => random_rgb_baseline(cfg),
        BaselineKind::RandomRgbx => random_rgbx_baseline(cfg),
    }
}
