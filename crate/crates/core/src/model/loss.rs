//! Mean next-token cross-entropy, accumulated in `f64`.

use super::ops::Scalar;
use crate::corpus::TokenId;

/// `-(1/N) Σ log softmax(logits_i)[target_i]` using max-subtracted
/// log-sum-exp per row.
pub fn cross_entropy<T: Scalar>(logits: &[T], targets: &[TokenId], vocab: usize) -> f64 {
    assert_eq!(logits.len(), targets.len() * vocab, "logits/targets shape mismatch");
    let total: f64 = logits
        .chunks_exact(vocab)
        .zip(targets)
        .map(|(row, &t)| log_sum_exp(row) - row[t as usize].to_f64())
        .sum();
    total / targets.len() as f64
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> f64 {
    let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln()
}

/// Loss and its gradient with respect to the logits, multiplied by `scale`.
pub fn cross_entropy_with_grad<T: Scalar>(
    logits: &[T],
    targets: &[TokenId],
    vocab: usize,
    scale: f64,
) -> (f64, Vec<T>) {
    assert_eq!(logits.len(), targets.len() * vocab, "logits/targets shape mismatch");
    let n = targets.len() as f64;
    let mut grad = vec![T::ZERO; logits.len()];
    let mut total = 0.0;
    for ((row, g), &t) in logits.chunks_exact(vocab).zip(grad.chunks_exact_mut(vocab)).zip(targets) {
        let lse = log_sum_exp(row);
        total += lse - row[t as usize].to_f64();
        for (j, (gv, v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v.to_f64() - lse).exp();
            let y = if j == t as usize { 1.0 } else { 0.0 };
            *gv = T::from_f64(scale * (p - y) / n);
        }
    }
    (total / n, grad)
}

/// Row-wise softmax in `f64`.
pub fn softmax_rows<T: Scalar>(logits: &[T], vocab: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(vocab) {
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|v| (v.to_f64() - lse).exp()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct summation: p = exp(z_t) / Σ exp(z_j), no shifting.
    fn oracle(logits: &[f64], targets: &[TokenId], v: usize) -> f64 {
        let mut s = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = &logits[i * v..(i + 1) * v];
            let denom: f64 = row.iter().map(|z| z.exp()).sum();
            s += -(row[t as usize].exp() / denom).ln();
        }
        s / targets.len() as f64
    }

    #[test]
    fn uniform_logits_give_ln_v() {
        let logits = vec![0.37f64; 4 * 30];
        let loss = cross_entropy(&logits, &[0, 5, 29, 3], 30);
        assert!((loss - 30f64.ln()).abs() < 1e-12);
        assert!((loss - 3.4012).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 60.0] {
            let mut logits = vec![0.0f64; 3 * 5];
            for (i, t) in [1usize, 4, 0].iter().enumerate() {
                logits[i * 5 + t] = margin;
            }
            let loss = cross_entropy(&logits, &[1, 4, 0], 5);
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn matches_direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let logits: Vec<f64> = (0..8 * 5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let targets: Vec<TokenId> = (0..8).map(|_| rng.gen_range(0..5)).collect();
            let loss = cross_entropy(&logits, &targets, 5);
            assert!((loss - oracle(&logits, &targets, 5)).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut logits: Vec<f64> = (0..6 * 4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let targets = [0, 1, 2, 3, 1, 0];
        let (_, grad) = cross_entropy_with_grad(&logits, &targets, 4, 1.0);
        for i in 0..logits.len() {
            let orig = logits[i];
            logits[i] = orig + 1e-6;
            let up = cross_entropy(&logits, &targets, 4);
            logits[i] = orig - 1e-6;
            let down = cross_entropy(&logits, &targets, 4);
            logits[i] = orig;
            assert!(((up - down) / 2e-6 - grad[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = [1000.0f32, 0.0, -1000.0, 1.0, 2.0, 3.0];
        let p = softmax_rows(&logits, 3);
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
