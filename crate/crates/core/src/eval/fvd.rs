use super::features::{FeatureExtractor, VideoFeature};
use super::linalg::sym_eigen;
use super::EvalError;
use crate::grid::FrameSequence;

/// Regularization added to each covariance diagonal, relative to its mean
/// diagonal entry.
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSetStats {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub cov: Vec<f64>,
    pub count: usize,
}

impl FeatureSetStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FvdScore {
    pub value: f64,
    pub mean_term: f64,
    pub trace_term: f64,
}

/// Sample mean and unbiased, symmetrized covariance.
pub fn stats(features: &[VideoFeature]) -> Result<FeatureSetStats, EvalError> {
    let n = features.len();
    if n < 2 {
        return Err(EvalError::TooFewVectors(n));
    }
    let d = features[0].dim();
    for f in features {
        if f.dim() != d {
            return Err(EvalError::Dimension { expected: d, got: f.dim() });
        }
        if f.0.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite("feature vector"));
        }
    }
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(&f.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for f in features {
        let c: Vec<f64> = f.0.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(FeatureSetStats { mean, cov, count: n })
}

fn trace(m: &[f64], n: usize) -> f64 {
    (0..n).map(|i| m[i * n + i]).sum()
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let row = &b[k * n..(k + 1) * n];
            for (o, &bkj) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `Tr(Σx) + Tr(Σy) − 2·Tr((Σx Σy)^½)` for symmetric PSD `d × d` inputs.
///
/// The square-root trace is taken as the sum of square roots of the
/// eigenvalues of `S Σy S`, with `S = Σx^½`; both are symmetric, and
/// negative eigenvalues from round-off are clamped to zero.
pub fn sqrt_trace_term(cov_x: &[f64], cov_y: &[f64], d: usize) -> Result<f64, EvalError> {
    for m in [cov_x, cov_y] {
        if m.len() != d * d {
            return Err(EvalError::Dimension {
                expected: d * d,
                got: m.len(),
            });
        }
    }
    let s = sym_eigen(cov_x, d)?.reconstruct(|l| l.max(0.0).sqrt());
    let mut m = matmul(&matmul(&s, cov_y, d), &s, d);
    for i in 0..d {
        for j in i + 1..d {
            let avg = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = avg;
            m[j * d + i] = avg;
        }
    }
    let root_trace: f64 = sym_eigen(&m, d)?.values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok(trace(cov_x, d) + trace(cov_y, d) - 2.0 * root_trace)
}

fn regularized(cov: &[f64], d: usize) -> Vec<f64> {
    let eps = RIDGE * trace(cov, d) / d as f64;
    let mut out = cov.to_vec();
    for i in 0..d {
        out[i * d + i] += eps;
    }
    out
}

pub fn fvd_from_stats(x: &FeatureSetStats, y: &FeatureSetStats) -> Result<FvdScore, EvalError> {
    let d = x.dim();
    if y.dim() != d {
        return Err(EvalError::Dimension { expected: d, got: y.dim() });
    }
    let mean_term: f64 = x.mean.iter().zip(&y.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let trace_term = sqrt_trace_term(&regularized(&x.cov, d), &regularized(&y.cov, d), d)?;
    let value = mean_term + trace_term;
    if !value.is_finite() {
        return Err(EvalError::NonFinite("FVD"));
    }
    Ok(FvdScore {
        value: value.max(0.0),
        mean_term,
        trace_term,
    })
}

pub fn fvd(real: &[VideoFeature], generated: &[VideoFeature]) -> Result<FvdScore, EvalError> {
    fvd_from_stats(&stats(real)?, &stats(generated)?)
}

pub fn fvd_videos(
    real: &[FrameSequence],
    generated: &[FrameSequence],
    extractor: &dyn FeatureExtractor,
) -> Result<FvdScore, EvalError> {
    let extract = |set: &[FrameSequence]| set.iter().map(|v| extractor.extract(v)).collect::<Result<Vec<_>, _>>();
    fvd(&extract(real)?, &extract(generated)?)
}
