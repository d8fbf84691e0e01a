//! Interval matching and precision / recall / F1 reporting.

use crate::error::{Error, Result};
use crate::expr::ExprType;
use crate::spotting::ExpressionProposal;
use crate::trainer::AnnotationClip;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const DEFAULT_IOU: f64 = 0.5;

/// Inclusive frame interval.
pub type Interval = (usize, usize);

/// `|a ∩ b| / |a ∪ b|` over frame index sets.
pub fn interval_iou(a: Interval, b: Interval) -> Result<f64> {
    for (name, iv) in [("first", a), ("second", b)] {
        if iv.0 > iv.1 {
            return Err(Error::InvalidArgument(format!(
                "{name} interval [{}, {}] is inverted",
                iv.0, iv.1
            )));
        }
    }
    Ok(crate::spotting::frame_iou(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn from_tp(total: usize, proposals: usize, tp: usize) -> Self {
        Self {
            total,
            tp,
            fp: proposals - tp,
            fn_: total - tp,
        }
    }

    pub fn add(&self, o: &Counts) -> Counts {
        Counts {
            total: self.total + o.total,
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn prf1(c: &Counts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics { precision, recall, f1 }
}

/// A matched ground-truth / proposal pair with its IoU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub gt: usize,
    pub proposal: usize,
    pub iou: f64,
}

/// One-to-one greedy matching over pairs with IoU ≥ `theta`, highest IoU
/// first. Equal IoUs are ordered by the intervals themselves, so the result
/// does not depend on input order.
pub fn greedy_match(gts: &[Interval], props: &[Interval], theta: f64) -> Vec<MatchedPair> {
    let mut pairs = Vec::new();
    for (g, &a) in gts.iter().enumerate() {
        for (p, &b) in props.iter().enumerate() {
            let iou = crate::spotting::frame_iou(a, b);
            if iou >= theta {
                pairs.push(MatchedPair {
                    gt: g,
                    proposal: p,
                    iou,
                });
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.iou
            .total_cmp(&x.iou)
            .then(gts[x.gt].cmp(&gts[y.gt]))
            .then(props[x.proposal].cmp(&props[y.proposal]))
    });
    let mut gt_used = vec![false; gts.len()];
    let mut p_used = vec![false; props.len()];
    let mut out = Vec::new();
    for m in pairs {
        if !gt_used[m.gt] && !p_used[m.proposal] {
            gt_used[m.gt] = true;
            p_used[m.proposal] = true;
            out.push(m);
        }
    }
    out
}

/// Maximum-cardinality matching on the IoU ≥ `theta` graph (augmenting paths).
pub fn optimal_match_count(gts: &[Interval], props: &[Interval], theta: f64) -> usize {
    let adj: Vec<Vec<usize>> = gts
        .iter()
        .map(|&a| {
            (0..props.len())
                .filter(|&p| crate::spotting::frame_iou(a, props[p]) >= theta)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; props.len()];
    fn augment(g: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &p in &adj[g] {
            if seen[p] {
                continue;
            }
            seen[p] = true;
            if owner[p].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[p] = Some(g);
                return true;
            }
        }
        false
    }
    (0..gts.len())
        .filter(|&g| augment(g, &adj, &mut vec![false; props.len()], &mut owner))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Matching {
    #[default]
    Greedy,
    Optimal,
}

/// Counts for one (video, type) group.
pub fn match_proposals(gts: &[Interval], props: &[Interval], theta: f64, mode: Matching) -> Counts {
    let tp = match mode {
        Matching::Greedy => greedy_match(gts, props, theta).len(),
        Matching::Optimal => optimal_match_count(gts, props, theta),
    };
    Counts::from_tp(gts.len(), props.len(), tp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    MaE,
    ME,
    Overall,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::MaE => "MaE",
            Category::ME => "ME",
            Category::Overall => "Overall",
        }
    }

    pub fn of(t: ExprType) -> Self {
        match t {
            ExprType::Macro => Category::MaE,
            ExprType::Micro => Category::ME,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub category: Category,
    pub counts: Counts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Every matched pair: video, type, ground truth, proposal, IoU.
    pub audit: Vec<(String, ExprType, Interval, Interval, f64)>,
}

impl Report {
    pub fn from_counts(mae: Counts, me: Counts) -> Self {
        let rows = [
            (Category::MaE, mae),
            (Category::ME, me),
            (Category::Overall, mae.add(&me)),
        ]
        .into_iter()
        .map(|(category, counts)| ReportRow {
            category,
            counts,
            metrics: prf1(&counts),
        })
        .collect();
        Self {
            rows,
            audit: Vec::new(),
        }
    }

    pub fn row(&self, c: Category) -> &ReportRow {
        self.rows
            .iter()
            .find(|r| r.category == c)
            .expect("all categories present")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,total,tp,fp,fn,precision,recall,f1\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.4},{:.4},{:.4}",
                r.category.as_str(),
                r.counts.total,
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parse a report CSV back into rows; metrics are recomputed from the counts.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut m = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let n = |i: usize| {
                rec[i]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("{}: bad count `{}`", path.display(), &rec[i])))
            };
            let c = Counts {
                total: n(1)?,
                tp: n(2)?,
                fp: n(3)?,
                fn_: n(4)?,
            };
            m.insert(rec[0].trim().to_string(), c);
        }
        let get = |k: &str| {
            m.get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("{}: missing row {k}", path.display())))
        };
        Ok(Self::from_counts(get("MaE")?, get("ME")?))
    }

    pub fn pretty(&self) -> String {
        let mut s = format!(
            "{:<8} {:>6} {:>6} {:>6} {:>6} {:>9} {:>7} {:>7}\n",
            "", "total", "TP", "FP", "FN", "precision", "recall", "F1"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>7.4} {:>7.4}",
                r.category.as_str(),
                r.counts.total,
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1
            );
        }
        s
    }
}

/// Match proposals against annotations per (video, type) and total the counts.
/// Annotations are keyed by [`video_key`]; proposal `video` fields must use
/// the same `subject/video` form.
pub fn report(gts: &[AnnotationClip], proposals: &[ExpressionProposal], theta: f64, mode: Matching) -> Report {
    type Key = (String, ExprType);
    let mut groups: BTreeMap<Key, (Vec<Interval>, Vec<Interval>)> = BTreeMap::new();
    for g in gts {
        groups
            .entry((video_key(g), g.expr))
            .or_default()
            .0
            .push((g.onset, g.offset));
    }
    for p in proposals {
        groups
            .entry((p.video.clone(), p.expr))
            .or_default()
            .1
            .push((p.onset, p.offset));
    }
    let mut by_type = [Counts::default(); 2];
    let mut audit = Vec::new();
    for ((video, t), (g, p)) in &groups {
        let c = match_proposals(g, p, theta, mode);
        let acc = &mut by_type[t.index()];
        *acc = acc.add(&c);
        for m in greedy_match(g, p, theta) {
            audit.push((video.clone(), *t, g[m.gt], p[m.proposal], m.iou));
        }
    }
    let mut r = Report::from_counts(by_type[ExprType::Macro.index()], by_type[ExprType::Micro.index()]);
    r.audit = audit;
    r
}

/// Identifier shared by annotations and proposals: `subject/video`.
pub fn video_key(c: &AnnotationClip) -> String {
    format!("{}/{}", c.subject, c.video)
}
