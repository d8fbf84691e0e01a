//! Proposal generation from per-frame probabilities: apex candidates,
//! onset/offset search, scoring and non-maximum suppression.

use crate::error::{Error, Result};
use crate::expr::ExprType;
use crate::model::ProbabilityMap;
use crate::trainer::AnnotationClip;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionProposal {
    pub video: String,
    #[serde(rename = "type")]
    pub expr: ExprType,
    pub onset: usize,
    pub offset: usize,
    pub score: f64,
}

/// Search window for one expression type, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationPrior {
    /// Average duration `k`.
    pub mean: f64,
    /// Minimum duration `j`.
    pub min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpottingConfig {
    pub theta_apex: f64,
    pub theta_overlap: f64,
    /// Require `p_apex * p_exp` rather than `p_apex` alone above the threshold.
    pub gate_by_exp: bool,
    pub micro: DurationPrior,
    pub macro_: DurationPrior,
}

impl Default for SpottingConfig {
    fn default() -> Self {
        Self {
            theta_apex: 0.5,
            theta_overlap: 0.5,
            gate_by_exp: true,
            micro: DurationPrior { mean: 15.0, min: 3.0 },
            macro_: DurationPrior { mean: 45.0, min: 16.0 },
        }
    }
}

impl SpottingConfig {
    pub fn prior(&self, t: ExprType) -> DurationPrior {
        match t {
            ExprType::Micro => self.micro,
            ExprType::Macro => self.macro_,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta_apex", self.theta_apex), ("theta_overlap", self.theta_overlap)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} outside (0, 1)")));
            }
        }
        for t in ExprType::ALL {
            let p = self.prior(t);
            if !(p.min > 0.0 && p.min < p.mean) {
                return Err(Error::Config(format!(
                    "{t}: need 0 < j < k, got j={} k={}",
                    p.min, p.mean
                )));
            }
        }
        Ok(())
    }

    /// Mean and minimum annotated duration per type (`offset - onset`), keeping
    /// the current values for types without annotations.
    pub fn with_durations_from(mut self, clips: &[AnnotationClip]) -> Self {
        for t in ExprType::ALL {
            let d: Vec<f64> = clips
                .iter()
                .filter(|c| c.expr == t)
                .map(|c| (c.offset - c.onset) as f64)
                .collect();
            if d.is_empty() {
                continue;
            }
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            if min > 0.0 && min < mean {
                let p = DurationPrior { mean, min };
                match t {
                    ExprType::Micro => self.micro = p,
                    ExprType::Macro => self.macro_ = p,
                }
            }
        }
        self
    }
}

fn apex_score(p: &ProbabilityMap, t: ExprType, gate: bool) -> f64 {
    let q = p.get(t);
    if gate {
        q.apex * q.exp
    } else {
        q.apex
    }
}

/// Frames whose (gated) apex probability exceeds `theta`, ascending.
pub fn apex_candidates(probs: &[ProbabilityMap], t: ExprType, theta: f64, gate: bool) -> Vec<usize> {
    (0..probs.len())
        .filter(|&l| apex_score(&probs[l], t, gate) > theta)
        .collect()
}

/// Index of the largest value over `lo..=hi`; the earliest wins ties.
fn argmax_by(lo: usize, hi: usize, f: impl Fn(usize) -> f64) -> usize {
    let mut best = lo;
    for i in lo + 1..=hi {
        if f(i) > f(best) {
            best = i;
        }
    }
    best
}

/// Inclusive integer frame range `[ceil(a), floor(b)]` clipped to `[0, n)`.
fn frame_range(a: f64, b: f64, n: usize) -> Option<(usize, usize)> {
    let lo = a.ceil().max(0.0);
    let hi = b.floor().min(n as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Proposal anchored at apex `l`: best onset in `[l - k/2, l - j/2]`, best
/// offset in `[l + j/2, l + k/2]`, score = onset * apex * offset probability.
pub fn make_proposal(
    video: &str,
    l: usize,
    probs: &[ProbabilityMap],
    t: ExprType,
    prior: DurationPrior,
) -> Option<ExpressionProposal> {
    let n = probs.len();
    let lf = l as f64;
    let (k, j) = (prior.mean, prior.min);
    let (b0, b1) = frame_range(lf - k / 2.0, lf - j / 2.0, n)?;
    let (d0, d1) = frame_range(lf + j / 2.0, lf + k / 2.0, n)?;
    let b = argmax_by(b0, b1, |i| probs[i].get(t).onset);
    let d = argmax_by(d0, d1, |i| probs[i].get(t).offset);
    if b >= d {
        return None;
    }
    let score = probs[b].get(t).onset * probs[l].get(t).apex * probs[d].get(t).offset;
    Some(ExpressionProposal {
        video: video.to_string(),
        expr: t,
        onset: b,
        offset: d,
        score,
    })
}

/// Inclusive-frame IoU of two intervals given as `(onset, offset)`.
pub fn frame_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = (a.1.min(b.1) + 1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

/// Greedy suppression by descending score (earlier onset first on ties).
pub fn nms(mut proposals: Vec<ExpressionProposal>, theta: f64) -> Vec<ExpressionProposal> {
    proposals.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.onset.cmp(&b.onset))
            .then(a.offset.cmp(&b.offset))
    });
    let mut kept: Vec<ExpressionProposal> = Vec::new();
    for p in proposals {
        if kept
            .iter()
            .all(|k| frame_iou((k.onset, k.offset), (p.onset, p.offset)) <= theta)
        {
            kept.push(p);
        }
    }
    kept
}

/// All proposals of one video, both types, sorted by (type, onset).
pub fn spot_video(video: &str, probs: &[ProbabilityMap], cfg: &SpottingConfig) -> Vec<ExpressionProposal> {
    let mut out = Vec::new();
    for t in ExprType::ALL {
        let prior = cfg.prior(t);
        let cands: Vec<ExpressionProposal> = apex_candidates(probs, t, cfg.theta_apex, cfg.gate_by_exp)
            .into_iter()
            .filter_map(|l| make_proposal(video, l, probs, t, prior))
            .collect();
        out.extend(nms(cands, cfg.theta_overlap));
    }
    out.sort_by_key(|p| (p.expr, p.onset, p.offset));
    out
}

pub fn write_proposals(path: &Path, proposals: &[ExpressionProposal]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["video", "type", "onset", "offset", "score"])?;
    for p in proposals {
        w.write_record([
            p.video.clone(),
            p.expr.to_string(),
            p.onset.to_string(),
            p.offset.to_string(),
            format!("{:.6}", p.score),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_proposals(path: &Path) -> Result<Vec<ExpressionProposal>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse(format!("{}: expected 5 columns", path.display())));
        }
        let num = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("{}: bad frame `{}`", path.display(), &rec[i])))
        };
        let p = ExpressionProposal {
            video: rec[0].to_string(),
            expr: rec[1].parse()?,
            onset: num(2)?,
            offset: num(3)?,
            score: rec[4]
                .parse()
                .map_err(|_| Error::Parse(format!("{}: bad score `{}`", path.display(), &rec[4])))?,
        };
        if p.onset > p.offset {
            return Err(Error::Parse(format!("{}: inverted proposal", path.display())));
        }
        out.push(p);
    }
    Ok(out)
}
