use serde::{Deserialize, Serialize};

use super::ops::Scalar;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub grad_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            grad_clip: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
            step: 0,
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Bias-corrected Adam with global-norm clipping.
///
/// Non-finite gradients abort the step and leave parameters and state
/// untouched.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<StepStats, ModelError> {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "parameter/moment length mismatch");
    let norm = grads.iter().map(|g| g.to_f64().powi(2)).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(ModelError::NonFiniteGradient { step: state.step + 1 });
    }
    let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
        cfg.grad_clip / norm
    } else {
        1.0
    };

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let clip_t = T::from_f64(clip);
    let step_size = T::from_f64(lr / bc1);
    let inv_bc2 = T::from_f64(1.0 / bc2);
    let eps = T::from_f64(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i] * clip_t;
        let m = b1 * state.m[i] + ob1 * g;
        let v = b2 * state.v[i] + ob2 * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= step_size * m / ((v * inv_bc2).sqrt() + eps);
    }
    Ok(StepStats {
        grad_norm: norm,
        clipped: clip < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params() {
        let mut p = vec![1.0f64, -2.0, 3.0];
        let mut s = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut s, &AdamConfig::default(), 1e-3).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn degenerate_betas_give_sign_step() {
        let cfg = AdamConfig {
            beta1: 0.0,
            beta2: 0.0,
            grad_clip: 0.0,
            ..AdamConfig::default()
        };
        let g = [0.3f64, -0.02, 0.0, 5.0];
        let mut p = vec![0.0f64; 4];
        let mut s = AdamState::new(4);
        adam_step(&mut p, &g, &mut s, &cfg, 1e-3).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -1e-3 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn clipping_scales_global_norm() {
        let cfg = AdamConfig {
            beta1: 0.0,
            beta2: 0.0,
            ..AdamConfig::default()
        };
        let mut p = vec![0.0f64; 2];
        let mut s = AdamState::new(2);
        let stats = adam_step(&mut p, &[3.0, 4.0], &mut s, &cfg, 1e-3).unwrap();
        assert_eq!(stats.grad_norm, 5.0);
        assert!(stats.clipped);
        // Clipped m = g/5, v = g²/25; the ratio is unchanged apart from eps.
        assert!((s.m[0] - 0.6).abs() < 1e-12 && (s.m[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = vec![1.0f32, 2.0];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[f32::NAN, 0.0], &mut s, &AdamConfig::default(), 1e-3);
        assert!(matches!(err, Err(ModelError::NonFiniteGradient { step: 1 })));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = w², gradient 2w.
        let mut w = vec![3.0f64];
        let mut s = AdamState::new(1);
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut reached = None;
        for it in 0..2000 {
            let g = [2.0 * w[0]];
            adam_step(&mut w, &g, &mut s, &cfg, cfg.lr).unwrap();
            if w[0].abs() < 1e-3 && reached.is_none() {
                reached = Some(it);
            }
        }
        assert!(reached.is_some(), "w = {}", w[0]);
        assert!(w[0].abs() < 1e-3, "w = {}", w[0]);
    }
}
