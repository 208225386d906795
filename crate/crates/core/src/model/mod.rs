//! Character-level causal transformer: parameters, training, checkpoints
//! and sampling.

mod adam;
mod checkpoint;
mod gpt;
mod loss;
mod ops;
mod params;
mod sample;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, TokenId};

pub use adam::{adam_step, AdamConfig, AdamState, StepStats};
pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use gpt::{backward, forward_train, ForwardCache};
pub use loss::{cross_entropy, cross_entropy_with_grad, softmax_rows};
pub use ops::Scalar;
pub use params::{ModelConfig, ModelParameters, TensorInfo};
pub use sample::{
    forward_cached, generate, generate_batch, sample_token, Generation, KvCache, SampleConfig, StopCriteria,
    StopReason,
};
pub use train::{derive_seed, forward, LossRecord, LrSchedule, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence length {len} outside 1..={block_size}")]
    SequenceLength { len: usize, block_size: usize },
    #[error("token id {0} outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss { iter: u64 },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Floating-point type used for weights and arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}
