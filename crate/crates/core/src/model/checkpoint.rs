//! Binary checkpoint format.
//!
//! ```text
//! magic "LPCKPT01" | u64 LE header length | JSON header
//! | parameters | Adam m | Adam v      (little-endian, header dtype)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::ops::Scalar;
use super::params::{ModelConfig, ModelParameters, TensorInfo};
use super::{ModelError, Precision};
use crate::corpus::CharVocab;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LPCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dtype: Precision,
    pub model: ModelConfig,
    /// Vocabulary characters in id order.
    pub vocab: String,
    pub iteration: u64,
    pub adam_step: u64,
    pub has_optimizer: bool,
    pub best_val_loss: Option<f64>,
    pub tensors: Vec<TensorInfo>,
    /// Caller-defined metadata such as the training configuration.
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl CheckpointHeader {
    /// Read only the header of a checkpoint file.
    pub fn read(path: &Path) -> Result<Self, ModelError> {
        Ok(Self::open(path)?.0)
    }

    fn open(path: &Path) -> Result<(Self, BufReader<File>), ModelError> {
        let name = path.display().to_string();
        let bad = |reason: String| ModelError::Checkpoint {
            path: name.clone(),
            reason,
        };
        let file = File::open(path).map_err(|source| ModelError::Io {
            path: name.clone(),
            source,
        })?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| bad("truncated header".into()))?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 30 {
            return Err(bad(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len as usize];
        r.read_exact(&mut header).map_err(|_| bad("truncated header".into()))?;
        let header = serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;
        Ok((header, r))
    }
}

pub struct Checkpoint<T: Scalar> {
    pub header: CheckpointHeader,
    pub params: ModelParameters<T>,
    pub adam: Option<AdamState<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn vocab(&self) -> Result<CharVocab, ModelError> {
        CharVocab::from_chars(self.header.vocab.chars().collect()).map_err(ModelError::from)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        // Write to a sibling file first so an interrupted save never
        // clobbers the previous checkpoint.
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
            w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
            w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&header).map_err(io)?;
            let dtype = self.header.dtype;
            write_values(&mut w, self.params.as_slice(), dtype).map_err(io)?;
            if let Some(a) = &self.adam {
                write_values(&mut w, &a.m, dtype).map_err(io)?;
                write_values(&mut w, &a.v, dtype).map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let name = path.display().to_string();
        let bad = |reason: String| ModelError::Checkpoint {
            path: name.clone(),
            reason,
        };
        let (header, mut r) = CheckpointHeader::open(path)?;
        let expected = header.model.param_count();
        let mut read = |what: &str| {
            read_values::<T>(&mut r, expected, header.dtype).map_err(|e| bad(format!("{what}: {e}")))
        };
        let data = read("parameters")?;
        let adam = if header.has_optimizer {
            let m = read("adam m")?;
            let v = read("adam v")?;
            Some(AdamState {
                m,
                v,
                step: header.adam_step,
            })
        } else {
            None
        };
        let params = ModelParameters::from_flat(header.model, data)?;
        if params.tensors() != header.tensors.as_slice() {
            return Err(bad("tensor table does not match the model configuration".into()));
        }
        Ok(Self { header, params, adam })
    }
}

fn write_values<T: Scalar>(w: &mut impl Write, values: &[T], dtype: Precision) -> std::io::Result<()> {
    for v in values {
        match dtype {
            Precision::F32 => w.write_all(&(v.to_f64() as f32).to_le_bytes())?,
            Precision::F64 => w.write_all(&v.to_f64().to_le_bytes())?,
        }
    }
    Ok(())
}

fn read_values<T: Scalar>(r: &mut impl Read, n: usize, dtype: Precision) -> std::io::Result<Vec<T>> {
    let width = match dtype {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    let mut bytes = vec![0u8; n * width];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(width)
        .map(|b| match dtype {
            Precision::F32 => T::from_f64(f32::from_le_bytes(b.try_into().unwrap()) as f64),
            Precision::F64 => T::from_f64(f64::from_le_bytes(b.try_into().unwrap())),
        })
        .collect())
}
