use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{create_dir, read_text, write_json, write_text, PipelineError, MANIFEST_FILE};
use crate::corpus::Corpus;
use crate::model::{
    Checkpoint, CheckpointHeader, LossRecord, ModelParameters, Precision, Scalar, Trainer,
};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub iterations: u64,
    pub resumed_from: Option<u64>,
    pub param_count: usize,
    pub vocab_size: usize,
    pub precision: Precision,
    pub best_val_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub best_checkpoint: String,
    pub last_checkpoint: String,
    pub loss_file: String,
}

fn loss_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("iter,train_loss,val_loss,lr\n");
    for r in history {
        let val = r.val_loss.map(|v| format!("{v:?}")).unwrap_or_default();
        s.push_str(&format!("{},{:?},{},{:?}\n", r.iter, r.train_loss, val, r.lr));
    }
    s
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>, PipelineError> {
    let bad = |line: usize| PipelineError::Data(format!("{}: malformed line {line}", path.display()));
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i + 1));
        }
        out.push(LossRecord {
            iter: f[0].parse().map_err(|_| bad(i + 1))?,
            train_loss: f[1].parse().map_err(|_| bad(i + 1))?,
            val_loss: if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| bad(i + 1))?) },
            lr: f[3].parse().map_err(|_| bad(i + 1))?,
        });
    }
    Ok(out)
}

/// Train on the corpus in `corpus_dir`, writing checkpoints, the loss
/// history and a manifest into `out_dir`. With `resume`, training
/// continues from `out_dir/last.ckpt` when it exists.
pub fn train_cmd(corpus_dir: &Path, out_dir: &Path, cfg: &RunConfig, resume: bool) -> Result<TrainManifest, PipelineError> {
    let corpus = Corpus::load(corpus_dir)?;
    create_dir(out_dir)?;
    match cfg.precision {
        Precision::F32 => run::<f32>(&corpus, out_dir, cfg, resume),
        Precision::F64 => run::<f64>(&corpus, out_dir, cfg, resume),
    }
}

fn checkpoint<T: Scalar>(trainer: &Trainer<T>, corpus: &Corpus, cfg: &RunConfig, with_optimizer: bool) -> Checkpoint<T> {
    let header = CheckpointHeader {
        dtype: cfg.precision,
        model: *trainer.params.config(),
        vocab: corpus.vocab().chars().iter().collect(),
        iteration: trainer.iter,
        adam_step: trainer.adam.step,
        has_optimizer: with_optimizer,
        best_val_loss: trainer.best_val_loss,
        tensors: trainer.params.tensors().to_vec(),
        extra: serde_json::json!({
            "run_config": cfg,
            "history": trainer.history,
        }),
    };
    Checkpoint {
        header,
        params: trainer.params.clone(),
        adam: with_optimizer.then(|| trainer.adam.clone()),
    }
}

fn resume_trainer<T: Scalar>(path: &Path, corpus: &Corpus, cfg: &RunConfig) -> Result<Trainer<T>, PipelineError> {
    let ck = Checkpoint::<T>::load(path)?;
    let vocab: String = corpus.vocab().chars().iter().collect();
    if ck.header.vocab != vocab {
        return Err(PipelineError::Data(format!("{}: vocabulary differs from the corpus", path.display())));
    }
    let want = cfg.model.with_vocab(corpus.vocab().len());
    if ck.header.model != want {
        return Err(PipelineError::Config(format!(
            "{}: checkpoint model {:?} differs from configured {:?}",
            path.display(),
            ck.header.model,
            want
        )));
    }
    let adam = ck
        .adam
        .ok_or_else(|| PipelineError::Data(format!("{}: no optimizer state to resume from", path.display())))?;
    let history: Vec<LossRecord> = serde_json::from_value(ck.header.extra["history"].clone()).unwrap_or_default();
    let mut trainer = Trainer::new(ck.params, cfg.train)?;
    trainer.adam = adam;
    trainer.iter = ck.header.iteration;
    trainer.best_val_loss = ck.header.best_val_loss;
    trainer.history = history;
    Ok(trainer)
}

fn run<T: Scalar>(corpus: &Corpus, out_dir: &Path, cfg: &RunConfig, resume: bool) -> Result<TrainManifest, PipelineError> {
    let last = out_dir.join(LAST_CHECKPOINT);
    let best = out_dir.join(BEST_CHECKPOINT);
    let loss_path = out_dir.join(LOSS_FILE);
    let mut trainer = if resume && last.exists() {
        resume_trainer::<T>(&last, corpus, cfg)?
    } else {
        let mc = cfg.model.with_vocab(corpus.vocab().len());
        Trainer::new(ModelParameters::<T>::init(mc, cfg.train.seed)?, cfg.train)?
    };
    let resumed_from = (trainer.iter > 0).then_some(trainer.iter);
    log::info!(
        "training {} parameters from iteration {} to {}",
        trainer.params.len(),
        trainer.iter,
        cfg.train.max_iters
    );

    let save = |t: &Trainer<T>, improved: bool| -> Result<(), PipelineError> {
        checkpoint(t, corpus, cfg, true).save(&last)?;
        if improved {
            checkpoint(t, corpus, cfg, false).save(&best)?;
        }
        write_text(&loss_path, &loss_csv(&t.history))
    };
    if trainer.history.is_empty() {
        let (rec, improved) = trainer.evaluate(corpus)?;
        log::info!("iter {} train {:.4} val {:?}", rec.iter, rec.train_loss, rec.val_loss);
        save(&trainer, improved)?;
    }
    trainer.run(corpus, |t, rec, improved| {
        log::info!("iter {} train {:.4} val {:?} lr {:.2e}", rec.iter, rec.train_loss, rec.val_loss, rec.lr);
        save(t, improved)
    })?;
    if !best.exists() {
        checkpoint(&trainer, corpus, cfg, false).save(&best)?;
    }

    let final_rec = trainer.history.last().copied();
    let manifest = TrainManifest {
        iterations: trainer.iter,
        resumed_from,
        param_count: trainer.params.len(),
        vocab_size: corpus.vocab().len(),
        precision: cfg.precision,
        best_val_loss: trainer.best_val_loss,
        final_train_loss: final_rec.map(|r| r.train_loss),
        final_val_loss: final_rec.and_then(|r| r.val_loss),
        best_checkpoint: BEST_CHECKPOINT.into(),
        last_checkpoint: LAST_CHECKPOINT.into(),
        loss_file: LOSS_FILE.into(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
