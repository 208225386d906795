//! Run configuration: one TOML file, every field defaulted, unknown keys
//! rejected. Individual fields can be overridden with dotted
//! `section.key=value` assignments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::audio::MfccConfig;
use crate::grid::SerializeMode;
use crate::model::{ModelConfig, Precision, SampleConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub mode: SerializeMode,
    /// Decimal places of prompt values.
    pub precision: u8,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            mode: SerializeMode::Sparse,
            precision: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopConfig {
    /// Literal text that ends a completion; empty disables it.
    pub text: String,
    /// Well-formed tuples after which a completion ends; `0` disables it.
    pub max_tuples: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            text: crate::corpus::PROMPT_PREFIX.to_string(),
            max_tuples: crate::grid::BUTTONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSettings {
    pub activation_prob: f64,
    pub seed: u64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            activation_prob: 0.25,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fps: f64,
    pub precision: Precision,
    pub mfcc: MfccConfig,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub stop: StopConfig,
    pub baseline: BaselineSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fps: 25.0,
            precision: Precision::F32,
            mfcc: MfccConfig::default(),
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            stop: StopConfig::default(),
            baseline: BaselineSettings::default(),
        }
    }
}

impl RunConfig {
    /// Parse TOML text, apply overrides and validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if self.corpus.precision > 2 {
            return bad(format!("corpus.precision {} outside 0..=2", self.corpus.precision));
        }
        self.mfcc.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        // vocab_size is taken from the corpus; check the rest with a stand-in.
        self.model
            .with_vocab(self.model.vocab_size.max(1))
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.sample.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.baseline.activation_prob > 0.0 && self.baseline.activation_prob <= 1.0) {
            return bad(format!("baseline.activation_prob {} outside (0, 1]", self.baseline.activation_prob));
        }
        Ok(())
    }
}

/// Apply one `a.b.c=value` assignment. The value is read as a TOML
/// literal, falling back to a plain string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(PipelineError::Config(format!("bad override key {path:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut table = root;
    for k in parents {
        let entry = table
            .entry((*k).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("override {path:?}: {k} is not a table")))?;
    }
    table.insert((*last).to_string(), value);
    Ok(())
}
