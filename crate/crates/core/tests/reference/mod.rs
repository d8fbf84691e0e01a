//! Direct, loop-by-loop reference implementations used as test oracles.

#![allow(dead_code)]

use spotgcn::expr::ExprType;
use spotgcn::losses::{Boundary, FrameLabels};
use spotgcn::model::HEAD_DIM;
use spotgcn::spotting::ExpressionProposal;

pub fn supcon_reference(z: &[Vec<f64>], labels: &[u8], tau: f64, mean: bool) -> f64 {
    let n = z.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..n {
        let pos: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if pos.is_empty() {
            continue;
        }
        anchors += 1;
        let denom: f64 = (0..n)
            .filter(|&a| a != i)
            .map(|a| (dot(&z[i], &z[a]) / tau).exp())
            .sum();
        let mut li = 0.0;
        for &p in &pos {
            li += ((dot(&z[i], &z[p]) / tau).exp() / denom).ln();
        }
        total += -li / pos.len() as f64;
    }
    if mean {
        if anchors == 0 {
            0.0
        } else {
            total / anchors as f64
        }
    } else {
        total
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn focal(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.max(1e-7);
    -alpha * (1.0 - p).powf(gamma) * p.ln()
}

pub fn classification_reference(logits: &[f64], labels: &[FrameLabels], alpha: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for (i, lab) in labels.iter().enumerate() {
        for t in ExprType::ALL {
            let o = &logits[i * HEAD_DIM + 5 * t.index()..i * HEAD_DIM + 5 * t.index() + 5];
            let tl = lab.get(t);
            let binary = softmax(&o[3..5]);
            total += focal(if tl.exp { binary[0] } else { binary[1] }, alpha, gamma);
            if let Some(b) = tl.boundary {
                let tri = softmax(&o[0..3]);
                let k = match b {
                    Boundary::Onset => 0,
                    Boundary::Apex => 1,
                    Boundary::Offset => 2,
                };
                total += focal(tri[k], alpha, gamma);
            }
        }
    }
    total / labels.len() as f64
}

#[allow(clippy::too_many_arguments)]
pub fn stgcn_reference(
    x: &[f64],
    s: usize,
    t: usize,
    cin: usize,
    adj: &[f64],
    w: &[f64],
    b: &[f64],
    k: usize,
) -> Vec<f64> {
    let cout = b.len();
    let to = t - k + 1;
    let mut out = vec![0.0; s * to * cout];
    for node in 0..s {
        for ti in 0..to {
            for o in 0..cout {
                let mut acc = b[o];
                for r in 0..s {
                    for dk in 0..k {
                        for c in 0..cin {
                            acc += adj[node * s + r] * x[(r * t + ti + dk) * cin + c] * w[(dk * cin + c) * cout + o];
                        }
                    }
                }
                out[(node * to + ti) * cout + o] = acc.max(0.0);
            }
        }
    }
    out
}

pub fn nms_reference(mut props: Vec<ExpressionProposal>, theta: f64) -> Vec<ExpressionProposal> {
    let iou = |a: &ExpressionProposal, b: &ExpressionProposal| {
        let lo = a.onset.max(b.onset);
        let hi = a.offset.min(b.offset);
        let inter = if hi >= lo { hi - lo + 1 } else { 0 };
        let union = (a.offset - a.onset + 1) + (b.offset - b.onset + 1) - inter;
        inter as f64 / union as f64
    };
    let mut kept = Vec::new();
    while !props.is_empty() {
        let mut best = 0;
        for i in 1..props.len() {
            let (a, b) = (&props[i], &props[best]);
            let better = a.score > b.score || (a.score == b.score && (a.onset, a.offset) < (b.onset, b.offset));
            if better {
                best = i;
            }
        }
        let top = props.swap_remove(best);
        props.retain(|p| iou(p, &top) <= theta);
        kept.push(top);
    }
    kept
}

pub fn inclusive_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for f in a.0.min(b.0)..=a.1.max(b.1) {
        let ia = (a.0..=a.1).contains(&f);
        let ib = (b.0..=b.1).contains(&f);
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    inter as f64 / union as f64
}

/// Exhaustive maximum matching over every subset assignment.
pub fn max_matching_reference(gts: &[(usize, usize)], props: &[(usize, usize)], theta: f64) -> usize {
    fn go(g: usize, used: u32, gts: &[(usize, usize)], props: &[(usize, usize)], theta: f64) -> usize {
        if g == gts.len() {
            return 0;
        }
        let mut best = go(g + 1, used, gts, props, theta);
        for (p, &b) in props.iter().enumerate() {
            if used & (1 << p) == 0 && inclusive_iou(gts[g], b) >= theta {
                best = best.max(1 + go(g + 1, used | (1 << p), gts, props, theta));
            }
        }
        best
    }
    go(0, 0, gts, props, theta)
}

/// `out[g, t, c]` as the maximum over the group's nodes, one element at a time.
pub fn flgp_reference(x: &[f64], t: usize, c: usize, groups: &[Vec<usize>]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in groups {
        for ti in 0..t {
            for ci in 0..c {
                let mut m = f64::NEG_INFINITY;
                for &node in g {
                    let v = x[(node * t + ti) * c + ci];
                    if v > m {
                        m = v;
                    }
                }
                out.push(m);
            }
        }
    }
    out
}
