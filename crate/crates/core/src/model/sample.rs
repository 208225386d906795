//! Key/value-cached inference and autoregressive sampling.
//!
//! Generation keeps one cache per sequence. When a cache holds
//! `block_size` positions the sequence is re-encoded from its most recent
//! `window_retain` tokens, so the model always conditions on the latest
//! tokens and never on more than `block_size` of them. With
//! `window_retain == block_size` this is an exact one-token sliding window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{add_bias, gelu_forward, gemm, layernorm_forward, softmax_prefix, Mat, MatMut, Scalar};
use super::params::ModelParameters;
use super::ModelError;
use crate::corpus::{CharVocab, TokenId, PROMPT_PREFIX};
use crate::grid::parse_rgbx_text;

/// Per-sequence key/value cache for every layer.
#[derive(Debug, Clone)]
pub struct KvCache<T> {
    k: Vec<T>,
    v: Vec<T>,
    len: usize,
    block: usize,
    width: usize,
}

impl<T: Scalar> KvCache<T> {
    pub fn new(params: &ModelParameters<T>) -> Self {
        let cfg = params.config();
        let n = cfg.n_layer * cfg.block_size * cfg.n_embd;
        Self {
            k: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
            len: 0,
            block: cfg.block_size,
            width: cfg.n_embd,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.block
    }

    pub fn clear(&mut self) {
        self.len = 0;
    }

    fn layer_offset(&self, layer: usize) -> usize {
        layer * self.block * self.width
    }
}

/// Append `tokens` to each sequence's cache and return the logits of the
/// last appended position of every sequence (`n × vocab`).
pub fn forward_cached<T: Scalar>(
    params: &ModelParameters<T>,
    caches: &mut [&mut KvCache<T>],
    tokens: &[&[TokenId]],
) -> Result<Vec<T>, ModelError> {
    assert_eq!(caches.len(), tokens.len(), "one token slice per cache");
    let cfg = *params.config();
    let lay = &params.layout;
    let w = &params.data;
    let (c, nh, hd, v) = (cfg.n_embd, cfg.n_head, cfg.head_dim(), cfg.vocab_size);
    for (cache, toks) in caches.iter().zip(tokens) {
        if toks.is_empty() || cache.len + toks.len() > cfg.block_size {
            return Err(ModelError::SequenceLength {
                len: cache.len + toks.len(),
                block_size: cfg.block_size,
            });
        }
        if let Some(&bad) = toks.iter().find(|&&t| t as usize >= v) {
            return Err(ModelError::UnknownToken(bad));
        }
    }
    let starts: Vec<usize> = tokens
        .iter()
        .scan(0, |acc, t| {
            let s = *acc;
            *acc += t.len();
            Some(s)
        })
        .collect();
    let n: usize = tokens.iter().map(|t| t.len()).sum();

    let wte = &w[lay.wte.clone()];
    let wpe = &w[lay.wpe.clone()];
    let mut x = vec![T::ZERO; n * c];
    for ((cache, toks), &s) in caches.iter().zip(tokens).zip(&starts) {
        for (i, &tok) in toks.iter().enumerate() {
            let pos = cache.len + i;
            let row = &mut x[(s + i) * c..(s + i + 1) * c];
            for ((o, &a), &b) in row.iter_mut().zip(&wte[tok as usize * c..]).zip(&wpe[pos * c..(pos + 1) * c]) {
                *o = a + b;
            }
        }
    }

    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let mut h = vec![T::ZERO; n * c];
    let mut mean = vec![T::ZERO; n];
    let mut rstd = vec![T::ZERO; n];
    let mut qkv = vec![T::ZERO; n * 3 * c];
    let mut atty = vec![T::ZERO; n * c];
    let mut tmp = vec![T::ZERO; n * c];
    let mut fc = vec![T::ZERO; n * 4 * c];
    let mut act = vec![T::ZERO; n * 4 * c];
    let mut th = vec![T::ZERO; n * 4 * c];
    let mut scores = Vec::new();
    for (li, l) in lay.layers.iter().enumerate() {
        layernorm_forward(&mut h, &mut mean, &mut rstd, &x, &w[l.ln1_g.clone()], &w[l.ln1_b.clone()]);
        gemm(MatMut::new(&mut qkv, n, 3 * c), Mat::new(&h, n, c), Mat::new(&w[l.qkv_w.clone()], c, 3 * c), T::ONE, false);
        add_bias(&mut qkv, &w[l.qkv_b.clone()]);

        for ((cache, toks), &s) in caches.iter_mut().zip(tokens).zip(&starts) {
            let len = toks.len();
            let past = cache.len;
            let total = past + len;
            let lo = cache.layer_offset(li);
            for i in 0..len {
                let src = (s + i) * 3 * c;
                let dst = lo + (past + i) * c;
                cache.k[dst..dst + c].copy_from_slice(&qkv[src + c..src + 2 * c]);
                cache.v[dst..dst + c].copy_from_slice(&qkv[src + 2 * c..src + 3 * c]);
            }
            scores.resize(len * total, T::ZERO);
            for hh in 0..nh {
                let q_off = s * 3 * c + hh * hd;
                gemm(
                    MatMut::new(&mut scores, len, total),
                    Mat::strided(&qkv[q_off..], len, hd, 3 * c),
                    Mat::strided(&cache.k[lo + hh * hd..], total, hd, c).t(),
                    scale,
                    false,
                );
                for i in 0..len {
                    softmax_prefix(&mut scores[i * total..(i + 1) * total], past + i + 1);
                }
                gemm(
                    MatMut::strided(&mut atty[s * c + hh * hd..], len, hd, c),
                    Mat::new(&scores, len, total),
                    Mat::strided(&cache.v[lo + hh * hd..], total, hd, c),
                    T::ONE,
                    false,
                );
            }
        }

        gemm(MatMut::new(&mut tmp, n, c), Mat::new(&atty, n, c), Mat::new(&w[l.proj_w.clone()], c, c), T::ONE, false);
        add_bias(&mut tmp, &w[l.proj_b.clone()]);
        for (a, &b) in x.iter_mut().zip(&tmp) {
            *a += b;
        }
        layernorm_forward(&mut h, &mut mean, &mut rstd, &x, &w[l.ln2_g.clone()], &w[l.ln2_b.clone()]);
        gemm(MatMut::new(&mut fc, n, 4 * c), Mat::new(&h, n, c), Mat::new(&w[l.fc_w.clone()], c, 4 * c), T::ONE, false);
        add_bias(&mut fc, &w[l.fc_b.clone()]);
        gelu_forward(&mut act, &mut th, &fc);
        gemm(MatMut::new(&mut tmp, n, c), Mat::new(&act, n, 4 * c), Mat::new(&w[l.fc2_w.clone()], 4 * c, c), T::ONE, false);
        add_bias(&mut tmp, &w[l.fc2_b.clone()]);
        for (a, &b) in x.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    for (cache, toks) in caches.iter_mut().zip(tokens) {
        cache.len += toks.len();
    }

    let m = tokens.len();
    let mut last = vec![T::ZERO; m * c];
    for (i, (toks, &s)) in tokens.iter().zip(&starts).enumerate() {
        let r = s + toks.len() - 1;
        last[i * c..(i + 1) * c].copy_from_slice(&x[r * c..(r + 1) * c]);
    }
    let mut normed = vec![T::ZERO; m * c];
    let mut mean = vec![T::ZERO; m];
    let mut rstd = vec![T::ZERO; m];
    layernorm_forward(&mut normed, &mut mean, &mut rstd, &last, &w[lay.lnf_g.clone()], &w[lay.lnf_b.clone()]);
    let mut logits = vec![T::ZERO; m * v];
    gemm(MatMut::new(&mut logits, m, v), Mat::new(&normed, m, c), Mat::new(wte, v, c).t(), T::ONE, false);
    Ok(logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// `0` selects the most likely token.
    pub temperature: f64,
    /// Keep only the `k` highest logits; `0` disables the filter.
    pub top_k: usize,
    pub max_new_tokens: usize,
    /// Tokens kept when a full context window is re-encoded.
    pub window_retain: usize,
    /// Sequences decoded together.
    pub batch_rows: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            top_k: 20,
            max_new_tokens: 1400,
            window_retain: 128,
            batch_rows: 32,
            seed: 1337,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ModelError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.window_retain == 0 || self.batch_rows == 0 {
            return Err(ModelError::Config("window_retain and batch_rows must be positive".into()));
        }
        Ok(())
    }
}

/// When to end a completion early.
#[derive(Debug, Clone, Default)]
pub struct StopCriteria {
    stop_sequence: Vec<TokenId>,
    max_tuples: Option<usize>,
    close_paren: Option<TokenId>,
    chars: Vec<char>,
}

impl StopCriteria {
    pub fn none() -> Self {
        Self::default()
    }

    /// Stop once `stop_text` is emitted or `max_tuples` well-formed RGB-X
    /// tuples have been generated.
    pub fn new(vocab: &CharVocab, stop_text: Option<&str>, max_tuples: Option<usize>) -> Self {
        let stop_sequence = match stop_text {
            Some(t) if vocab.contains_all(t) => vocab.encode(t).unwrap_or_default(),
            _ => Vec::new(),
        };
        Self {
            stop_sequence,
            max_tuples,
            close_paren: vocab.id(')'),
            chars: vocab.chars().to_vec(),
        }
    }

    /// The completion default: next `prompt:` or 64 tuples.
    pub fn completion(vocab: &CharVocab) -> Self {
        Self::new(vocab, Some(PROMPT_PREFIX), Some(crate::grid::BUTTONS))
    }

    fn check(&self, generated: &[TokenId]) -> Option<StopReason> {
        if !self.stop_sequence.is_empty() && generated.ends_with(&self.stop_sequence) {
            return Some(StopReason::StopText);
        }
        if let (Some(limit), Some(close)) = (self.max_tuples, self.close_paren) {
            if generated.last() == Some(&close) {
                let text: String = generated.iter().filter_map(|&t| self.chars.get(t as usize)).collect();
                if parse_rgbx_text(&text).tuples.len() >= limit {
                    return Some(StopReason::TupleLimit);
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTokens,
    StopText,
    TupleLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    pub stop: StopReason,
}

/// Draw one token id from a logits row.
pub fn sample_token<T: Scalar, R: Rng>(logits: &[T], temperature: f64, top_k: usize, rng: &mut R) -> TokenId {
    let argmax = || {
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        best as TokenId
    };
    if temperature == 0.0 {
        return argmax();
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    if top_k > 0 && top_k < logits.len() {
        order.sort_by(|&a, &b| {
            logits[b]
                .partial_cmp(&logits[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(top_k);
    }
    let scaled: Vec<f64> = order.iter().map(|&i| logits[i].to_f64() / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&i, w) in order.iter().zip(&weights) {
        if u < *w {
            return i as TokenId;
        }
        u -= w;
    }
    *order.last().expect("non-empty vocabulary") as TokenId
}

/// Sample a continuation of a single prompt.
pub fn generate<T: Scalar>(
    params: &ModelParameters<T>,
    prompt: &[TokenId],
    cfg: &SampleConfig,
    stop: &StopCriteria,
) -> Result<Generation, ModelError> {
    let mut out = generate_batch(params, &[prompt.to_vec()], &[cfg.seed], cfg, stop)?;
    Ok(out.remove(0))
}

struct Row<T> {
    cache: KvCache<T>,
    history: Vec<TokenId>,
    generated: Vec<TokenId>,
    rng: ChaCha8Rng,
    stop: Option<StopReason>,
}

/// Sample continuations of several prompts, each with its own seed.
///
/// Results depend only on each prompt and its seed, not on how prompts
/// are grouped.
pub fn generate_batch<T: Scalar>(
    params: &ModelParameters<T>,
    prompts: &[Vec<TokenId>],
    seeds: &[u64],
    cfg: &SampleConfig,
    stop: &StopCriteria,
) -> Result<Vec<Generation>, ModelError> {
    cfg.validate()?;
    assert_eq!(prompts.len(), seeds.len(), "one seed per prompt");
    let block = params.config().block_size;
    let retain = cfg.window_retain.min(block);
    let mut results = Vec::with_capacity(prompts.len());
    for (chunk, chunk_seeds) in prompts.chunks(cfg.batch_rows).zip(seeds.chunks(cfg.batch_rows)) {
        let mut rows = Vec::with_capacity(chunk.len());
        for (p, &seed) in chunk.iter().zip(chunk_seeds) {
            if p.is_empty() {
                return Err(ModelError::EmptyPrompt);
            }
            let keep = p.len().min(block.saturating_sub(1).max(1));
            rows.push(Row {
                cache: KvCache::new(params),
                history: p[p.len() - keep..].to_vec(),
                generated: Vec::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                stop: (cfg.max_new_tokens == 0).then_some(StopReason::MaxTokens),
            });
        }

        let mut pending: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].stop.is_none()).collect();
        let mut feeds: Vec<Vec<TokenId>> = rows.iter().map(|r| r.history.clone()).collect();
        while !pending.is_empty() {
            let logits = {
                let mut caches: Vec<&mut KvCache<T>> = Vec::with_capacity(pending.len());
                let mut toks: Vec<&[TokenId]> = Vec::with_capacity(pending.len());
                let mut it = rows.iter_mut().enumerate();
                for &want in &pending {
                    let (_, row) = it.by_ref().find(|(i, _)| *i == want).expect("pending rows are ordered");
                    caches.push(&mut row.cache);
                    toks.push(&feeds[want]);
                }
                forward_cached(params, &mut caches, &toks)?
            };
            let v = params.config().vocab_size;
            let mut next = Vec::with_capacity(pending.len());
            for (k, &i) in pending.iter().enumerate() {
                let row = &mut rows[i];
                let tok = sample_token(&logits[k * v..(k + 1) * v], cfg.temperature, cfg.top_k, &mut row.rng);
                row.generated.push(tok);
                row.history.push(tok);
                row.stop = stop.check(&row.generated).or_else(|| {
                    (row.generated.len() >= cfg.max_new_tokens).then_some(StopReason::MaxTokens)
                });
                if row.stop.is_some() {
                    continue;
                }
                feeds[i] = if row.cache.is_full() {
                    row.cache.clear();
                    row.history[row.history.len().saturating_sub(retain)..].to_vec()
                } else {
                    vec![tok]
                };
                next.push(i);
            }
            pending = next;
        }
        results.extend(rows.into_iter().map(|r| Generation {
            tokens: r.generated,
            stop: r.stop.expect("every row stops"),
        }));
    }
    Ok(results)
}
