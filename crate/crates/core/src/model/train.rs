use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::gpt::{backward, forward_train};
use super::loss::{cross_entropy, cross_entropy_with_grad};
use super::ops::Scalar;
use super::params::ModelParameters;
use super::ModelError;
use crate::corpus::{sample_batch_with, Corpus, Split, TokenId};

const STREAM_BATCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_EVAL: u64 = 3;

/// Deterministic seed for one `(stream, index)` draw under a base seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(stream.wrapping_mul(0x1000_0000_01b3) ^ mix(index)))
}

/// Logits for one sequence without dropout, `seq × vocab`.
pub fn forward<T: Scalar>(params: &ModelParameters<T>, tokens: &[TokenId]) -> Result<Vec<T>, ModelError> {
    let cache = forward_train::<T, ChaCha8Rng>(params, tokens, 1, tokens.len(), None)?;
    Ok(cache.logits().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Linear warmup, then cosine decay to `min_lr` at `max_iters`.
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_iters: u64,
    pub eval_interval: u64,
    pub eval_iters: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup_iters: u64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 8,
            max_iters: 800,
            eval_interval: 100,
            eval_iters: 8,
            lr: adam.lr,
            min_lr: 1e-4,
            warmup_iters: 40,
            schedule: LrSchedule::Cosine,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            grad_clip: adam.grad_clip,
            seed: 1337,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            grad_clip: self.grad_clip,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.batch_size == 0 || self.eval_iters == 0 || self.eval_interval == 0 {
            return bad("batch_size, eval_iters and eval_interval must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.min_lr < 0.0 || self.min_lr > self.lr {
            return bad("need 0 <= min_lr <= lr and lr > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn lr_at(&self, iter: u64) -> f64 {
        if iter < self.warmup_iters {
            return self.lr * (iter + 1) as f64 / self.warmup_iters as f64;
        }
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let span = self.max_iters.saturating_sub(self.warmup_iters).max(1);
                let p = ((iter - self.warmup_iters) as f64 / span as f64).min(1.0);
                self.min_lr + 0.5 * (1.0 + (std::f64::consts::PI * p).cos()) * (self.lr - self.min_lr)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: u64,
    pub train_loss: f64,
    /// `None` when the validation split is shorter than one context.
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Optimizer state plus the bookkeeping needed to resume exactly.
pub struct Trainer<T: Scalar> {
    pub params: ModelParameters<T>,
    pub adam: AdamState<T>,
    pub config: TrainConfig,
    pub iter: u64,
    pub best_val_loss: Option<f64>,
    pub history: Vec<LossRecord>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(params: ModelParameters<T>, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let adam = AdamState::new(params.len());
        Ok(Self {
            params,
            adam,
            config,
            iter: 0,
            best_val_loss: None,
            history: Vec::new(),
        })
    }

    fn context(&self) -> usize {
        self.params.config().block_size
    }

    /// One optimizer step on a random training batch; returns its loss.
    pub fn step(&mut self, corpus: &Corpus) -> Result<f64, ModelError> {
        let cfg = self.config;
        let ctx = self.context();
        let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_BATCH, self.iter));
        let batch = sample_batch_with(corpus.split_tokens(Split::Train), Split::Train, cfg.batch_size, ctx, &mut batch_rng)?;
        let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_DROPOUT, self.iter));
        let cache = forward_train(&self.params, &batch.inputs, cfg.batch_size, ctx, Some(&mut drop_rng))?;
        let vocab = self.params.config().vocab_size;
        let (loss, dlogits) = cross_entropy_with_grad(cache.logits(), &batch.targets, vocab, 1.0);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { iter: self.iter });
        }
        let grads = backward(&self.params, &cache, &dlogits);
        drop(cache);
        let lr = cfg.lr_at(self.iter);
        adam_step(self.params.as_mut_slice(), &grads, &mut self.adam, &cfg.adam(), lr)?;
        self.iter += 1;
        Ok(loss)
    }

    /// Mean loss over `eval_iters` fixed batches without dropout.
    pub fn estimate_loss(&self, corpus: &Corpus, split: Split) -> Result<Option<f64>, ModelError> {
        let cfg = self.config;
        let ctx = self.context();
        let data = corpus.split_tokens(split);
        if data.len() < ctx + 1 {
            return Ok(None);
        }
        let vocab = self.params.config().vocab_size;
        let mut total = 0.0;
        for k in 0..cfg.eval_iters {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_EVAL, k as u64));
            let batch = sample_batch_with(data, split, cfg.batch_size, ctx, &mut rng)?;
            let cache = forward_train::<T, ChaCha8Rng>(&self.params, &batch.inputs, cfg.batch_size, ctx, None)?;
            total += cross_entropy(cache.logits(), &batch.targets, vocab);
        }
        let loss = total / cfg.eval_iters as f64;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { iter: self.iter });
        }
        Ok(Some(loss))
    }

    /// Evaluate both splits, append to the history and report whether the
    /// validation loss improved.
    pub fn evaluate(&mut self, corpus: &Corpus) -> Result<(LossRecord, bool), ModelError> {
        let train_loss = self
            .estimate_loss(corpus, Split::Train)?
            .ok_or_else(|| ModelError::Config("training split shorter than one context".into()))?;
        let val_loss = self.estimate_loss(corpus, Split::Val)?;
        let record = LossRecord {
            iter: self.iter,
            train_loss,
            val_loss,
            lr: self.config.lr_at(self.iter),
        };
        let score = val_loss.unwrap_or(train_loss);
        let improved = self.best_val_loss.is_none_or(|b| score < b);
        if improved {
            self.best_val_loss = Some(score);
        }
        self.history.push(record);
        Ok((record, improved))
    }

    /// Train until `max_iters`, evaluating every `eval_interval` steps and
    /// at the end. `on_eval` receives each record and whether it improved.
    pub fn run<E>(
        &mut self,
        corpus: &Corpus,
        mut on_eval: impl FnMut(&Self, &LossRecord, bool) -> Result<(), E>,
    ) -> Result<(), E>
    where
        E: From<ModelError>,
    {
        while self.iter < self.config.max_iters {
            self.step(corpus)?;
            if self.iter.is_multiple_of(self.config.eval_interval) || self.iter == self.config.max_iters {
                let (rec, improved) = self.evaluate(corpus)?;
                on_eval(self, &rec, improved)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;

    #[test]
    fn derived_seeds_differ_by_stream_and_index() {
        let a = derive_seed(1, STREAM_BATCH, 0);
        assert_eq!(a, derive_seed(1, STREAM_BATCH, 0));
        assert_ne!(a, derive_seed(1, STREAM_DROPOUT, 0));
        assert_ne!(a, derive_seed(1, STREAM_BATCH, 1));
        assert_ne!(a, derive_seed(2, STREAM_BATCH, 0));
    }

    #[test]
    fn schedule_shape() {
        let cfg = TrainConfig {
            lr: 1e-3,
            min_lr: 1e-4,
            warmup_iters: 10,
            max_iters: 110,
            ..TrainConfig::default()
        };
        assert!((cfg.lr_at(0) - 1e-4).abs() < 1e-15);
        assert!((cfg.lr_at(9) - 1e-3).abs() < 1e-15);
        assert!((cfg.lr_at(10) - 1e-3).abs() < 1e-15);
        assert!((cfg.lr_at(60) - 5.5e-4).abs() < 1e-12);
        assert!((cfg.lr_at(110) - 1e-4).abs() < 1e-15);
        assert!((cfg.lr_at(500) - 1e-4).abs() < 1e-15);
        let flat = TrainConfig {
            schedule: LrSchedule::Constant,
            warmup_iters: 0,
            ..cfg
        };
        assert_eq!(flat.lr_at(77), 1e-3);
    }

    fn tiny_corpus() -> Corpus {
        let text: String = "abcab\n".repeat(40);
        Corpus::from_text(text).unwrap()
    }

    fn tiny_trainer(seed: u64) -> Trainer<f64> {
        let corpus = tiny_corpus();
        let mc = ModelConfig {
            n_layer: 1,
            n_head: 2,
            n_embd: 16,
            block_size: 8,
            vocab_size: corpus.vocab().len(),
            dropout: 0.1,
        };
        let tc = TrainConfig {
            batch_size: 4,
            max_iters: 6,
            eval_interval: 3,
            eval_iters: 2,
            seed,
            ..TrainConfig::default()
        };
        Trainer::new(ModelParameters::init(mc, seed).unwrap(), tc).unwrap()
    }

    #[test]
    fn training_is_reproducible() {
        let corpus = tiny_corpus();
        let mut a = tiny_trainer(3);
        let mut b = tiny_trainer(3);
        a.run::<ModelError>(&corpus, |_, _, _| Ok(())).unwrap();
        b.run::<ModelError>(&corpus, |_, _, _| Ok(())).unwrap();
        assert_eq!(a.params.as_slice(), b.params.as_slice());
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 2);
        assert_eq!(a.history[1].iter, 6);
    }

    #[test]
    fn short_validation_split_has_no_loss() {
        let corpus = Corpus::from_text("abcab\n".repeat(10)).unwrap();
        let mut t = tiny_trainer(1);
        let rec = t.evaluate(&corpus).unwrap().0;
        assert!(rec.val_loss.is_none());
        assert!(rec.train_loss.is_finite());
    }
}
