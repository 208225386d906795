//! Model configuration and the flat parameter store.
//!
//! All tensors live in one contiguous buffer so the optimizer, gradient
//! clipping and checkpointing can treat parameters as a single vector.
//! Linear weights are stored `in × out`, row-major.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::Scalar;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub n_embd: usize,
    pub block_size: usize,
    /// Filled from the corpus vocabulary when training starts.
    pub vocab_size: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layer: 6,
            n_head: 6,
            n_embd: 384,
            block_size: 256,
            vocab_size: 0,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.n_embd / self.n_head
    }

    pub fn with_vocab(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.n_layer == 0 || self.n_head == 0 || self.n_embd == 0 || self.block_size == 0 {
            return bad("layer, head, embedding and block sizes must be positive".into());
        }
        if !self.n_embd.is_multiple_of(self.n_head) {
            return bad(format!("n_embd {} not divisible by n_head {}", self.n_embd, self.n_head));
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Closed-form parameter count:
    /// `V·C + T·C + L·(12·C² + 13·C) + 2·C` (output head tied to `wte`).
    pub fn param_count(&self) -> usize {
        let c = self.n_embd;
        self.vocab_size * c + self.block_size * c + self.n_layer * (12 * c * c + 13 * c) + 2 * c
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub qkv_w: Range<usize>,
    pub qkv_b: Range<usize>,
    pub proj_w: Range<usize>,
    pub proj_b: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    pub fc2_w: Range<usize>,
    pub fc2_b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub wte: Range<usize>,
    pub wpe: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let c = cfg.n_embd;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut take = |name: String, shape: Vec<usize>| {
            let info = TensorInfo { name, shape, offset };
            let r = info.range();
            offset = r.end;
            tensors.push(info);
            r
        };
        let wte = take("wte".into(), vec![cfg.vocab_size, c]);
        let wpe = take("wpe".into(), vec![cfg.block_size, c]);
        let layers = (0..cfg.n_layer)
            .map(|l| {
                let mut t = |n: &str, s: Vec<usize>| take(format!("h{l}.{n}"), s);
                LayerLayout {
                    ln1_g: t("ln1.weight", vec![c]),
                    ln1_b: t("ln1.bias", vec![c]),
                    qkv_w: t("attn.qkv.weight", vec![c, 3 * c]),
                    qkv_b: t("attn.qkv.bias", vec![3 * c]),
                    proj_w: t("attn.proj.weight", vec![c, c]),
                    proj_b: t("attn.proj.bias", vec![c]),
                    ln2_g: t("ln2.weight", vec![c]),
                    ln2_b: t("ln2.bias", vec![c]),
                    fc_w: t("mlp.fc.weight", vec![c, 4 * c]),
                    fc_b: t("mlp.fc.bias", vec![4 * c]),
                    fc2_w: t("mlp.proj.weight", vec![4 * c, c]),
                    fc2_b: t("mlp.proj.bias", vec![c]),
                }
            })
            .collect();
        let lnf_g = take("ln_f.weight".into(), vec![c]);
        let lnf_b = take("ln_f.bias".into(), vec![c]);
        Self {
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
            tensors,
            total: offset,
        }
    }
}

/// Weights of the causal transformer.
#[derive(Debug, Clone)]
pub struct ModelParameters<T: Scalar> {
    pub(crate) config: ModelConfig,
    pub(crate) layout: Layout,
    pub(crate) data: Vec<T>,
}

impl<T: Scalar> ModelParameters<T> {
    /// Gaussian(0, 0.02) weights; residual output projections use
    /// std `0.02 / sqrt(2·n_layer)`; biases zero; norms scale 1, shift 0.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut data = vec![T::ZERO; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 0.02;
        let resid_std = std / (2.0 * config.n_layer as f64).sqrt();
        let mut fill = |data: &mut [T], std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in data {
                *v = T::from_f64(normal.sample(&mut rng));
            }
        };
        fill(&mut data[layout.wte.clone()], std);
        fill(&mut data[layout.wpe.clone()], std);
        for l in &layout.layers {
            data[l.ln1_g.clone()].fill(T::ONE);
            data[l.ln2_g.clone()].fill(T::ONE);
            fill(&mut data[l.qkv_w.clone()], std);
            fill(&mut data[l.proj_w.clone()], resid_std);
            fill(&mut data[l.fc_w.clone()], std);
            fill(&mut data[l.fc2_w.clone()], resid_std);
        }
        data[layout.lnf_g.clone()].fill(T::ONE);
        Ok(Self { config, layout, data })
    }

    pub fn from_flat(config: ModelConfig, data: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if data.len() != layout.total {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                data.len()
            )));
        }
        Ok(Self { config, layout, data })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.data[t.range()])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.to_f64().is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        ModelParameters {
            config: self.config,
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub(crate) fn zeros_like(&self) -> Vec<T> {
        vec![T::ZERO; self.data.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            n_layer: 2,
            n_head: 2,
            n_embd: 16,
            block_size: 8,
            vocab_size: 10,
            dropout: 0.0,
        }
    }

    #[test]
    fn param_count_closed_form() {
        let cfg = ModelConfig::default().with_vocab(30);
        // 30·384 + 256·384 + 6·(12·384² + 13·384) + 2·384
        let expected = 11_520 + 98_304 + 6 * (1_769_472 + 4_992) + 768;
        assert_eq!(cfg.param_count(), expected);
        assert_eq!(Layout::new(&cfg).total, expected);
        let p = ModelParameters::<f32>::init(cfg, 0).unwrap();
        assert_eq!(p.len(), expected);
        assert_eq!(p.tensors().iter().map(TensorInfo::len).sum::<usize>(), expected);
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParameters::<f32>::init(small(), 7).unwrap();
        let b = ModelParameters::<f32>::init(small(), 7).unwrap();
        let c = ModelParameters::<f32>::init(small(), 8).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn norms_start_at_identity() {
        let p = ModelParameters::<f64>::init(small(), 1).unwrap();
        for name in ["h0.ln1.weight", "h1.ln2.weight", "ln_f.weight"] {
            assert!(p.tensor(name).unwrap().iter().all(|&v| v == 1.0), "{name}");
        }
        for name in ["h0.ln1.bias", "h1.attn.qkv.bias", "ln_f.bias"] {
            assert!(p.tensor(name).unwrap().iter().all(|&v| v == 0.0), "{name}");
        }
        let w = p.tensor("h0.mlp.fc.weight").unwrap();
        let std = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!((std - 0.02).abs() < 0.003, "{std}");
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.n_head = 3;
        assert!(c.validate().is_err());
        let mut c = small();
        c.vocab_size = 0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
