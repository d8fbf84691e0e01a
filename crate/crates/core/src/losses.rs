//! Focal classification loss over the 10-logit head, supervised contrastive
//! loss over embeddings, and their weighted sum. Both losses compute their
//! gradients in closed form and enter the tape as fused scalar nodes.

use crate::error::{Error, Result};
use crate::expr::ExprType;
use crate::model::{softmax, ForwardVars, APEX, EXP, HEAD_DIM, LOGITS_PER_TYPE, NORM, OFFSET, ONSET};
use crate::numcore::{Scalar, Tape, Var};
use serde::{Deserialize, Serialize};

/// Lower clamp on probabilities inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    Onset,
    Apex,
    Offset,
}

impl Boundary {
    /// Class index within the onset/apex/offset triple.
    pub fn class(self) -> usize {
        match self {
            Boundary::Onset => ONSET,
            Boundary::Apex => APEX,
            Boundary::Offset => OFFSET,
        }
    }
}

/// Frame class used by the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum FrameType {
    #[default]
    Normal,
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeLabel {
    pub exp: bool,
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameLabels {
    pub types: [TypeLabel; 2],
    pub frame_type: FrameType,
}

impl FrameLabels {
    pub fn get(&self, t: ExprType) -> &TypeLabel {
        &self.types[t.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            tau: 0.5,
            lambda: 0.05,
        }
    }
}

/// `-alpha (1 - p)^gamma log p` for the probability of the true class.
pub fn focal_term(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0);
    -alpha * (1.0 - p).powf(gamma) * p.ln()
}

/// Focal loss of one softmax distribution against a target class.
pub fn focal_loss(probs: &[f64], target: usize, alpha: f64, gamma: f64) -> f64 {
    focal_term(probs[target], alpha, gamma)
}

/// `p * d/dp [-(1-p)^gamma log p]`, with the `p -> 1` limit taken explicitly.
fn focal_slope(p: f64, gamma: f64) -> f64 {
    let q = 1.0 - p;
    let first = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * p * p.ln()
    };
    first - q.powf(gamma)
}

/// Focal loss of `softmax(logits)` against `target`, adding its logit
/// gradient scaled by `weight` into `grad`. Returns the loss and whether
/// the probability was clamped.
fn focal_softmax(logits: &[f64], target: usize, alpha: f64, gamma: f64, weight: f64, grad: &mut [f64]) -> (f64, bool) {
    let mut p = vec![0.0; logits.len()];
    softmax(logits, &mut p);
    let py = p[target];
    let loss = focal_term(py, alpha, gamma);
    if py < PROB_FLOOR {
        return (loss, true);
    }
    let c = weight * alpha * focal_slope(py, gamma);
    for (k, (g, &pk)) in grad.iter_mut().zip(&p).enumerate() {
        let delta = if k == target { 1.0 } else { 0.0 };
        *g += c * (delta - pk);
    }
    (loss, false)
}

/// Loss value, gradient with respect to its input, and a branch signature.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub signature: u64,
}

/// Mean over frames of the per-frame focal losses: one binary task per type
/// on every frame plus one boundary task per type on boundary frames.
pub fn classification_loss(logits: &[f64], labels: &[FrameLabels], alpha: f64, gamma: f64) -> Result<LossEval> {
    if logits.len() != labels.len() * HEAD_DIM || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} logits for {} frames",
            logits.len(),
            labels.len()
        )));
    }
    let n = labels.len();
    let w = 1.0 / n as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    let mut sig = 0u64;
    for (i, lab) in labels.iter().enumerate() {
        for t in ExprType::ALL {
            let off = i * HEAD_DIM + t.index() * LOGITS_PER_TYPE;
            let tl = lab.get(t);
            let target = if tl.exp { 0 } else { 1 };
            let (l, clamped) = focal_softmax(
                &logits[off + EXP..=off + NORM],
                target,
                alpha,
                gamma,
                w,
                &mut grad[off + EXP..=off + NORM],
            );
            total += l;
            sig = sig.wrapping_mul(31).wrapping_add(clamped as u64);
            if let Some(b) = tl.boundary {
                let (l, clamped) = focal_softmax(
                    &logits[off..off + 3],
                    b.class(),
                    alpha,
                    gamma,
                    w,
                    &mut grad[off..off + 3],
                );
                total += l;
                sig = sig.wrapping_mul(31).wrapping_add(clamped as u64);
            }
        }
    }
    Ok(LossEval {
        value: total * w,
        grad,
        signature: sig,
    })
}

/// How per-anchor contrastive terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Reduction {
    /// Plain sum over anchors.
    Sum,
    /// Sum divided by the number of anchors that have a positive.
    #[default]
    MeanOverAnchors,
}

/// Supervised contrastive loss of `n` embeddings of dimension `d` (row-major).
///
/// Anchors without a same-label partner contribute nothing; the anchor itself
/// is excluded from its own denominator.
pub fn supcon_loss<L: PartialEq>(
    z: &[f64],
    d: usize,
    labels: &[L],
    tau: f64,
    reduction: Reduction,
) -> Result<LossEval> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if z.len() != n * d {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {n} embeddings of size {d}",
            z.len()
        )));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!("temperature {tau}")));
    }
    let gram = crate::numcore::scalar::matmul_transposed(z, n, d);
    let mut g = vec![0.0; n * n];
    let mut total = 0.0;
    let mut anchors = 0usize;
    let mut row = vec![0.0; n];
    for i in 0..n {
        let positives = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if positives == 0 {
            continue;
        }
        anchors += 1;
        let s = |j: usize| gram[i * n + j] / tau;
        let m = (0..n).filter(|&j| j != i).map(s).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (j, r) in row.iter_mut().enumerate() {
            *r = if j == i { 0.0 } else { (s(j) - m).exp() };
            denom += *r;
        }
        let lse = m + denom.ln();
        let mut pos_sum = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let pos = labels[j] == labels[i];
            if pos {
                pos_sum += s(j);
            }
            g[i * n + j] = row[j] / denom - if pos { 1.0 / positives as f64 } else { 0.0 };
        }
        total += lse - pos_sum / positives as f64;
    }
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::MeanOverAnchors if anchors > 0 => 1.0 / anchors as f64,
        Reduction::MeanOverAnchors => 0.0,
    };
    // dL/dz_i = sum_j (g_ij + g_ji) z_j / tau
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = (g[i * n + j] + g[j * n + i]) * scale / tau;
        }
    }
    let grad = crate::numcore::scalar::matmul(&sym, z, n, n, d);
    Ok(LossEval {
        value: total * scale,
        grad,
        signature: 0,
    })
}

/// `L_cls + lambda * L_con`.
pub fn total_loss(cls: f64, con: f64, lambda: f64) -> f64 {
    cls + lambda * con
}

pub struct LossVars {
    pub cls: Var,
    pub con: Var,
    pub total: Var,
}

/// Attach both losses and their weighted sum to a recorded forward pass.
pub fn losses_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    out: &ForwardVars,
    labels: &[FrameLabels],
    cfg: &LossConfig,
) -> Result<LossVars> {
    let logits: Vec<f64> = tape.value(out.logits).data().iter().map(|v| v.as_f64()).collect();
    let z: Vec<f64> = tape.value(out.z).data().iter().map(|v| v.as_f64()).collect();
    let d = z.len() / labels.len().max(1);
    let cls = classification_loss(&logits, labels, cfg.alpha, cfg.gamma)?;
    let types: Vec<FrameType> = labels.iter().map(|l| l.frame_type).collect();
    let con = if cfg.lambda > 0.0 {
        supcon_loss(&z, d, &types, cfg.tau, Reduction::MeanOverAnchors)?
    } else {
        LossEval {
            value: 0.0,
            grad: vec![0.0; z.len()],
            signature: 0,
        }
    };
    let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
    let cls_v = tape.scalar_fn(
        vec![out.logits],
        T::from_f64(cls.value),
        vec![cast(cls.grad)],
        cls.signature,
    )?;
    let con_v = tape.scalar_fn(vec![out.z], T::from_f64(con.value), vec![cast(con.grad)], con.signature)?;
    let weighted = tape.scale(con_v, T::from_f64(cfg.lambda));
    let total = tape.add(cls_v, weighted)?;
    Ok(LossVars {
        cls: cls_v,
        con: con_v,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_examples() {
        assert_eq!(focal_term(1.0, 0.25, 2.0), 0.0);
        let expect = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((focal_term(0.5, 0.25, 2.0) - expect).abs() < 1e-15);
        assert!((focal_term(0.5, 0.25, 2.0) - 0.043321).abs() < 1e-6);
        for p in [0.01, 0.3, 0.9] {
            assert!((focal_term(p, 1.0, 0.0) + f64::ln(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn supcon_examples() {
        let z = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(supcon_loss(&z, 2, &[0, 1], 0.5, Reduction::Sum).unwrap().value, 0.0);
        for n in [2usize, 3, 7] {
            let z: Vec<f64> = (0..n).flat_map(|_| [0.6, 0.8]).collect();
            let l = supcon_loss(&z, 2, &vec![1; n], 0.5, Reduction::Sum).unwrap().value;
            let expect = n as f64 * ((n - 1) as f64).ln();
            assert!((l - expect).abs() < 1e-9, "{l} vs {expect}");
        }
        assert!(matches!(
            supcon_loss(&[1.0], 1, &[0], 0.5, Reduction::Sum),
            Err(Error::BatchTooSmall(1))
        ));
    }

    #[test]
    fn total_is_weighted_sum() {
        assert_eq!(total_loss(1.0, 2.0, 0.0), 1.0);
        assert!((total_loss(1.0, 2.0, 0.05) - 1.1).abs() < 1e-15);
    }
}
