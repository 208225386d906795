//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.

use super::EvalError;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues and row-major eigenvectors (column `j` pairs with
/// `values[j]`).
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.n;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| self.vectors[i * n + k] * fl[k] * self.vectors[j * n + k]).sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        out
    }
}

fn off_diagonal_sq(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += 2.0 * a[i * n + j] * a[i * n + j];
        }
    }
    s
}

/// Eigendecomposition of a symmetric `n × n` row-major matrix.
pub fn sym_eigen(matrix: &[f64], n: usize) -> Result<SymEigen, EvalError> {
    if matrix.len() != n * n {
        return Err(EvalError::Dimension {
            expected: n * n,
            got: matrix.len(),
        });
    }
    let mut a = matrix.to_vec();
    let diag_range = |a: &[f64]| {
        (0..n).map(|i| a[i * n + i]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
    };
    if a.iter().any(|v| !v.is_finite()) {
        let (diag_min, diag_max) = diag_range(&a);
        return Err(EvalError::Eigen {
            reason: "non-finite input".into(),
            n,
            off_norm: f64::NAN,
            diag_min,
            diag_max,
        });
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_sq(&a, n);
        if off <= 1e-30 * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let (diag_min, diag_max) = diag_range(&a);
        return Err(EvalError::Eigen {
            reason: format!("no convergence after {MAX_SWEEPS} sweeps"),
            n,
            off_norm: off_diagonal_sq(&a, n).sqrt(),
            diag_min,
            diag_max,
        });
    }
    Ok(SymEigen {
        n,
        values: (0..n).map(|i| a[i * n + i]).collect(),
        vectors: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_closed_form() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let e = sym_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        let mut vals = e.values.clone();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 3, 10, 40] {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    m[i * n + j] = x;
                    m[j * n + i] = x;
                }
            }
            let e = sym_eigen(&m, n).unwrap();
            let back = e.reconstruct(|l| l);
            for (a, b) in back.iter().zip(&m) {
                assert!((a - b).abs() < 1e-12, "n = {n}");
            }
            // Vᵀ V = I
            for i in 0..n {
                for j in 0..n {
                    let d: f64 = (0..n).map(|k| e.vectors[k * n + i] * e.vectors[k * n + j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(sym_eigen(&[f64::NAN, 0.0, 0.0, 1.0], 2), Err(EvalError::Eigen { .. })));
        assert!(matches!(sym_eigen(&[1.0, 0.0, 0.0], 2), Err(EvalError::Dimension { .. })));
    }
}
