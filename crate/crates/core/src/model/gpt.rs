//! Batched training forward pass with cached activations, and the matching
//! hand-written backward pass.
//!
//! Per layer (pre-norm):
//!
//! ```text
//! x = x + drop(proj(attn(ln1(x))))
//! x = x + drop(fc2(gelu(fc(ln2(x)))))
//! ```
//!
//! followed by a final layer norm and the output head tied to `wte`.

use rand::Rng;

use super::ops::{
    accumulate_col_sums, add_bias, gelu_backward, gelu_forward, gemm, layernorm_backward,
    layernorm_forward, softmax_prefix, Mat, MatMut, Scalar,
};
use super::params::ModelParameters;
use super::ModelError;
use crate::corpus::TokenId;

struct LayerCache<T> {
    x_in: Vec<T>,
    ln1: Vec<T>,
    ln1_mean: Vec<T>,
    ln1_rstd: Vec<T>,
    qkv: Vec<T>,
    /// Attention probabilities before dropout, `B·H·T·T`.
    att: Vec<T>,
    att_mask: Option<Vec<T>>,
    atty: Vec<T>,
    proj_mask: Option<Vec<T>>,
    x_mid: Vec<T>,
    ln2: Vec<T>,
    ln2_mean: Vec<T>,
    ln2_rstd: Vec<T>,
    fc: Vec<T>,
    fc_tanh: Vec<T>,
    gelu: Vec<T>,
    fc2_mask: Option<Vec<T>>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<T> {
    batch: usize,
    seq: usize,
    tokens: Vec<TokenId>,
    emb_mask: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    x_final: Vec<T>,
    lnf: Vec<T>,
    lnf_mean: Vec<T>,
    lnf_rstd: Vec<T>,
    logits: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Row-major `(batch·seq) × vocab` logits.
    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn rows(&self) -> usize {
        self.batch * self.seq
    }
}

fn dropout_mask<T: Scalar, R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { T::ZERO } else { keep })
        .collect()
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

pub(crate) fn check_tokens<T: Scalar>(params: &ModelParameters<T>, tokens: &[TokenId], seq: usize) -> Result<(), ModelError> {
    let cfg = params.config();
    if seq == 0 || seq > cfg.block_size {
        return Err(ModelError::SequenceLength {
            len: seq,
            block_size: cfg.block_size,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::UnknownToken(bad));
    }
    Ok(())
}

/// Forward pass over `batch` sequences of `seq` tokens each.
///
/// Dropout is applied only when `rng` is given and the configured rate is
/// positive.
pub fn forward_train<T: Scalar, R: Rng>(
    params: &ModelParameters<T>,
    tokens: &[TokenId],
    batch: usize,
    seq: usize,
    mut rng: Option<&mut R>,
) -> Result<ForwardCache<T>, ModelError> {
    assert_eq!(tokens.len(), batch * seq, "token count must be batch·seq");
    check_tokens(params, tokens, seq)?;
    let cfg = *params.config();
    let lay = &params.layout;
    let w = &params.data;
    let (c, nh, hd, v) = (cfg.n_embd, cfg.n_head, cfg.head_dim(), cfg.vocab_size);
    let n = batch * seq;
    let p = cfg.dropout;
    let mut mask = |len: usize| -> Option<Vec<T>> {
        match rng.as_deref_mut() {
            Some(r) if p > 0.0 => Some(dropout_mask(len, p, r)),
            _ => None,
        }
    };

    let wte = &w[lay.wte.clone()];
    let wpe = &w[lay.wpe.clone()];
    let mut x = vec![T::ZERO; n * c];
    for (row, &tok) in tokens.iter().enumerate() {
        let pos = row % seq;
        let e = &wte[tok as usize * c..(tok as usize + 1) * c];
        let pe = &wpe[pos * c..(pos + 1) * c];
        for ((o, &a), &b) in x[row * c..(row + 1) * c].iter_mut().zip(e).zip(pe) {
            *o = a + b;
        }
    }
    let emb_mask = mask(n * c);
    apply_mask(&mut x, &emb_mask);

    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let mut layers = Vec::with_capacity(cfg.n_layer);
    let mut pd = vec![T::ZERO; seq * seq];
    for l in &lay.layers {
        let x_in = x;
        let mut ln1 = vec![T::ZERO; n * c];
        let mut ln1_mean = vec![T::ZERO; n];
        let mut ln1_rstd = vec![T::ZERO; n];
        layernorm_forward(&mut ln1, &mut ln1_mean, &mut ln1_rstd, &x_in, &w[l.ln1_g.clone()], &w[l.ln1_b.clone()]);

        let mut qkv = vec![T::ZERO; n * 3 * c];
        gemm(MatMut::new(&mut qkv, n, 3 * c), Mat::new(&ln1, n, c), Mat::new(&w[l.qkv_w.clone()], c, 3 * c), T::ONE, false);
        add_bias(&mut qkv, &w[l.qkv_b.clone()]);

        let mut att = vec![T::ZERO; batch * nh * seq * seq];
        let att_mask = mask(att.len());
        let mut atty = vec![T::ZERO; n * c];
        for b in 0..batch {
            for h in 0..nh {
                let base = b * seq * 3 * c + h * hd;
                let a_off = (b * nh + h) * seq * seq;
                let probs = &mut att[a_off..a_off + seq * seq];
                gemm(
                    MatMut::new(probs, seq, seq),
                    Mat::strided(&qkv[base..], seq, hd, 3 * c),
                    Mat::strided(&qkv[base + c..], seq, hd, 3 * c).t(),
                    scale,
                    false,
                );
                for i in 0..seq {
                    softmax_prefix(&mut probs[i * seq..(i + 1) * seq], i + 1);
                }
                let used: &[T] = match &att_mask {
                    Some(m) => {
                        for ((d, &pv), &mv) in pd.iter_mut().zip(probs.iter()).zip(&m[a_off..a_off + seq * seq]) {
                            *d = pv * mv;
                        }
                        &pd
                    }
                    None => probs,
                };
                gemm(
                    MatMut::strided(&mut atty[b * seq * c + h * hd..], seq, hd, c),
                    Mat::new(used, seq, seq),
                    Mat::strided(&qkv[base + 2 * c..], seq, hd, 3 * c),
                    T::ONE,
                    false,
                );
            }
        }

        let mut x_mid = vec![T::ZERO; n * c];
        gemm(MatMut::new(&mut x_mid, n, c), Mat::new(&atty, n, c), Mat::new(&w[l.proj_w.clone()], c, c), T::ONE, false);
        add_bias(&mut x_mid, &w[l.proj_b.clone()]);
        let proj_mask = mask(n * c);
        apply_mask(&mut x_mid, &proj_mask);
        for (m, &r) in x_mid.iter_mut().zip(&x_in) {
            *m += r;
        }

        let mut ln2 = vec![T::ZERO; n * c];
        let mut ln2_mean = vec![T::ZERO; n];
        let mut ln2_rstd = vec![T::ZERO; n];
        layernorm_forward(&mut ln2, &mut ln2_mean, &mut ln2_rstd, &x_mid, &w[l.ln2_g.clone()], &w[l.ln2_b.clone()]);

        let mut fc = vec![T::ZERO; n * 4 * c];
        gemm(MatMut::new(&mut fc, n, 4 * c), Mat::new(&ln2, n, c), Mat::new(&w[l.fc_w.clone()], c, 4 * c), T::ONE, false);
        add_bias(&mut fc, &w[l.fc_b.clone()]);
        let mut gelu = vec![T::ZERO; n * 4 * c];
        let mut fc_tanh = vec![T::ZERO; n * 4 * c];
        gelu_forward(&mut gelu, &mut fc_tanh, &fc);

        let mut out = vec![T::ZERO; n * c];
        gemm(MatMut::new(&mut out, n, c), Mat::new(&gelu, n, 4 * c), Mat::new(&w[l.fc2_w.clone()], 4 * c, c), T::ONE, false);
        add_bias(&mut out, &w[l.fc2_b.clone()]);
        let fc2_mask = mask(n * c);
        apply_mask(&mut out, &fc2_mask);
        for (o, &r) in out.iter_mut().zip(&x_mid) {
            *o += r;
        }
        x = out;

        layers.push(LayerCache {
            x_in,
            ln1,
            ln1_mean,
            ln1_rstd,
            qkv,
            att,
            att_mask,
            atty,
            proj_mask,
            x_mid,
            ln2,
            ln2_mean,
            ln2_rstd,
            fc,
            fc_tanh,
            gelu,
            fc2_mask,
        });
    }

    let mut lnf = vec![T::ZERO; n * c];
    let mut lnf_mean = vec![T::ZERO; n];
    let mut lnf_rstd = vec![T::ZERO; n];
    layernorm_forward(&mut lnf, &mut lnf_mean, &mut lnf_rstd, &x, &w[lay.lnf_g.clone()], &w[lay.lnf_b.clone()]);
    let mut logits = vec![T::ZERO; n * v];
    gemm(MatMut::new(&mut logits, n, v), Mat::new(&lnf, n, c), Mat::new(wte, v, c).t(), T::ONE, false);

    Ok(ForwardCache {
        batch,
        seq,
        tokens: tokens.to_vec(),
        emb_mask,
        layers,
        x_final: x,
        lnf,
        lnf_mean,
        lnf_rstd,
        logits,
    })
}

/// Gradients of every parameter given the gradient of the loss with
/// respect to the logits.
pub fn backward<T: Scalar>(params: &ModelParameters<T>, cache: &ForwardCache<T>, dlogits: &[T]) -> Vec<T> {
    let cfg = *params.config();
    let lay = &params.layout;
    let w = &params.data;
    let (c, nh, hd, v) = (cfg.n_embd, cfg.n_head, cfg.head_dim(), cfg.vocab_size);
    let (batch, seq) = (cache.batch, cache.seq);
    let n = batch * seq;
    assert_eq!(dlogits.len(), n * v);
    let mut grads = params.zeros_like();

    // Output head (tied to wte).
    gemm(
        MatMut::new(&mut grads[lay.wte.clone()], v, c),
        Mat::new(dlogits, n, v).t(),
        Mat::new(&cache.lnf, n, c),
        T::ONE,
        true,
    );
    let mut dlnf = vec![T::ZERO; n * c];
    gemm(MatMut::new(&mut dlnf, n, c), Mat::new(dlogits, n, v), Mat::new(&w[lay.wte.clone()], v, c), T::ONE, false);
    let mut dx = vec![T::ZERO; n * c];
    {
        let (dg, db) = split_pair(&mut grads, lay.lnf_g.clone(), lay.lnf_b.clone());
        layernorm_backward(&mut dx, dg, db, &dlnf, &cache.x_final, &cache.lnf_mean, &cache.lnf_rstd, &w[lay.lnf_g.clone()]);
    }

    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let mut dtmp = vec![T::ZERO; n * c];
    let mut dh = vec![T::ZERO; n * 4 * c];
    let mut dpd = vec![T::ZERO; seq * seq];
    let mut pd = vec![T::ZERO; seq * seq];
    for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        // MLP branch: dx is the gradient at the layer output.
        let mut dm = dx.clone();
        apply_mask(&mut dm, &lc.fc2_mask);
        gemm(MatMut::new(&mut grads[l.fc2_w.clone()], 4 * c, c), Mat::new(&lc.gelu, n, 4 * c).t(), Mat::new(&dm, n, c), T::ONE, true);
        accumulate_col_sums(&mut grads[l.fc2_b.clone()], &dm);
        gemm(MatMut::new(&mut dh, n, 4 * c), Mat::new(&dm, n, c), Mat::new(&w[l.fc2_w.clone()], 4 * c, c).t(), T::ONE, false);
        let mut dfc = vec![T::ZERO; n * 4 * c];
        gelu_backward(&mut dfc, &dh, &lc.fc, &lc.fc_tanh);
        gemm(MatMut::new(&mut grads[l.fc_w.clone()], c, 4 * c), Mat::new(&lc.ln2, n, c).t(), Mat::new(&dfc, n, 4 * c), T::ONE, true);
        accumulate_col_sums(&mut grads[l.fc_b.clone()], &dfc);
        gemm(MatMut::new(&mut dtmp, n, c), Mat::new(&dfc, n, 4 * c), Mat::new(&w[l.fc_w.clone()], c, 4 * c).t(), T::ONE, false);
        {
            let (dg, db) = split_pair(&mut grads, l.ln2_g.clone(), l.ln2_b.clone());
            // Residual: dx already holds the skip gradient; add the norm path.
            layernorm_backward(&mut dx, dg, db, &dtmp, &lc.x_mid, &lc.ln2_mean, &lc.ln2_rstd, &w[l.ln2_g.clone()]);
        }

        // Attention branch: dx is now the gradient at x_mid.
        let mut dp = dx.clone();
        apply_mask(&mut dp, &lc.proj_mask);
        gemm(MatMut::new(&mut grads[l.proj_w.clone()], c, c), Mat::new(&lc.atty, n, c).t(), Mat::new(&dp, n, c), T::ONE, true);
        accumulate_col_sums(&mut grads[l.proj_b.clone()], &dp);
        let mut datty = vec![T::ZERO; n * c];
        gemm(MatMut::new(&mut datty, n, c), Mat::new(&dp, n, c), Mat::new(&w[l.proj_w.clone()], c, c).t(), T::ONE, false);

        let mut dqkv = vec![T::ZERO; n * 3 * c];
        for b in 0..batch {
            for h in 0..nh {
                let base = b * seq * 3 * c + h * hd;
                let y_off = b * seq * c + h * hd;
                let a_off = (b * nh + h) * seq * seq;
                let probs = &lc.att[a_off..a_off + seq * seq];
                let m = lc.att_mask.as_ref().map(|m| &m[a_off..a_off + seq * seq]);
                let used: &[T] = match m {
                    Some(m) => {
                        for ((d, &pv), &mv) in pd.iter_mut().zip(probs).zip(m) {
                            *d = pv * mv;
                        }
                        &pd
                    }
                    None => probs,
                };
                // dPd = dy · v^T ; dv = Pd^T · dy
                gemm(
                    MatMut::new(&mut dpd, seq, seq),
                    Mat::strided(&datty[y_off..], seq, hd, c),
                    Mat::strided(&lc.qkv[base + 2 * c..], seq, hd, 3 * c).t(),
                    T::ONE,
                    false,
                );
                gemm(
                    MatMut::strided(&mut dqkv[base + 2 * c..], seq, hd, 3 * c),
                    Mat::new(used, seq, seq).t(),
                    Mat::strided(&datty[y_off..], seq, hd, c),
                    T::ONE,
                    false,
                );
                // Through dropout and the causal softmax, in place.
                for i in 0..seq {
                    let row = &mut dpd[i * seq..(i + 1) * seq];
                    let pr = &probs[i * seq..(i + 1) * seq];
                    if let Some(m) = m {
                        for (d, &mv) in row[..=i].iter_mut().zip(&m[i * seq..]) {
                            *d *= mv;
                        }
                    }
                    let mut dot = T::ZERO;
                    for j in 0..=i {
                        dot += row[j] * pr[j];
                    }
                    for j in 0..=i {
                        row[j] = pr[j] * (row[j] - dot);
                    }
                    for r in &mut row[i + 1..] {
                        *r = T::ZERO;
                    }
                }
                // dq = scale · dS · k ; dk = scale · dS^T · q
                gemm(
                    MatMut::strided(&mut dqkv[base..], seq, hd, 3 * c),
                    Mat::new(&dpd, seq, seq),
                    Mat::strided(&lc.qkv[base + c..], seq, hd, 3 * c),
                    scale,
                    false,
                );
                gemm(
                    MatMut::strided(&mut dqkv[base + c..], seq, hd, 3 * c),
                    Mat::new(&dpd, seq, seq).t(),
                    Mat::strided(&lc.qkv[base..], seq, hd, 3 * c),
                    scale,
                    false,
                );
            }
        }
        gemm(MatMut::new(&mut grads[l.qkv_w.clone()], c, 3 * c), Mat::new(&lc.ln1, n, c).t(), Mat::new(&dqkv, n, 3 * c), T::ONE, true);
        accumulate_col_sums(&mut grads[l.qkv_b.clone()], &dqkv);
        gemm(MatMut::new(&mut dtmp, n, c), Mat::new(&dqkv, n, 3 * c), Mat::new(&w[l.qkv_w.clone()], c, 3 * c).t(), T::ONE, false);
        {
            let (dg, db) = split_pair(&mut grads, l.ln1_g.clone(), l.ln1_b.clone());
            layernorm_backward(&mut dx, dg, db, &dtmp, &lc.x_in, &lc.ln1_mean, &lc.ln1_rstd, &w[l.ln1_g.clone()]);
        }
    }

    apply_mask(&mut dx, &cache.emb_mask);
    for (row, &tok) in cache.tokens.iter().enumerate() {
        let pos = row % seq;
        let d = &dx[row * c..(row + 1) * c];
        let te = lay.wte.start + tok as usize * c;
        for (g, &v) in grads[te..te + c].iter_mut().zip(d) {
            *g += v;
        }
        let pe = lay.wpe.start + pos * c;
        for (g, &v) in grads[pe..pe + c].iter_mut().zip(d) {
            *g += v;
        }
    }
    grads
}

/// Two disjoint, ordered ranges of one buffer.
fn split_pair<T>(buf: &mut [T], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [T], &mut [T]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}
