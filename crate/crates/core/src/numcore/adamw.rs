//! AdamW with decoupled weight decay.

use super::params::Params;
use super::scalar::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamWState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(params: &Params<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `w <- w - lr (m_hat / (sqrt(v_hat) + eps) + wd w)`.
///
/// Nothing is modified when an error is returned.
pub fn adamw_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &[Vec<T>],
    state: &mut AdamWState<T>,
    cfg: &AdamWConfig,
) -> Result<()> {
    if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
        return Err(Error::InvalidArgument(format!(
            "betas must lie in [0, 1): {} {}",
            cfg.beta1, cfg.beta2
        )));
    }
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((name, p), (g, m)) in params.iter().zip(grads.iter().zip(&state.m)) {
        if g.len() != p.len() || m.len() != p.len() {
            return Err(Error::ShapeMismatch(format!(
                "parameter `{name}` has {} elements, gradient {}",
                p.len(),
                g.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let c1 = T::one() - T::from_f64(cfg.beta1.powi(t));
    let c2 = T::one() - T::from_f64(cfg.beta2.powi(t));
    let (lr, eps, wd) = (T::from_f64(cfg.lr), T::from_f64(cfg.eps), T::from_f64(cfg.weight_decay));
    let one = T::one();
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
        for (((w, mi), vi), &gi) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w = *w - lr * (m_hat / (v_hat.sqrt() + eps) + wd * *w);
        }
    }
    Ok(())
}
