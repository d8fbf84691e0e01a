//! Annotations, per-frame labels, leave-one-subject-out folds and the training loop.

use crate::error::{Error, Result};
use crate::expr::ExprType;
use crate::losses::{
    classification_loss, supcon_loss, Boundary, FrameLabels, FrameType, LossConfig, LossEval, Reduction,
};
use crate::model::{bind_params, clips_to_input, forward_tape, init_params, SpotGcnConfig};
use crate::motion::features::FeatureTensor;
use crate::numcore::rng::label;
use crate::numcore::{adamw_step, checkpoint, AdamWConfig, AdamWState, Params, Scalar, SplitMix64, Tape};
use crate::par::{self, Exec};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

/// One ground-truth expression interval, inclusive frame indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationClip {
    pub subject: String,
    pub video: String,
    #[serde(rename = "type")]
    pub expr: ExprType,
    pub onset: usize,
    /// `None` when the apex was not annotated (written as -1).
    pub apex: Option<usize>,
    pub offset: usize,
}

impl AnnotationClip {
    pub fn validate(&self) -> Result<()> {
        let ok = self.onset <= self.offset && self.apex.is_none_or(|a| self.onset <= a && a <= self.offset);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidAnnotation(format!(
                "{}/{}: onset {} apex {:?} offset {}",
                self.subject, self.video, self.onset, self.apex, self.offset
            )))
        }
    }

    /// Annotated apex, or the interval midpoint when missing.
    pub fn apex_or_mid(&self) -> usize {
        self.apex.unwrap_or((self.onset + self.offset) / 2)
    }

    /// Frames covered, both ends included.
    pub fn duration(&self) -> usize {
        self.offset - self.onset + 1
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct AnnotationRow {
    subject: String,
    video: String,
    #[serde(rename = "type")]
    expr: String,
    onset: i64,
    apex: i64,
    offset: i64,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationClip>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<AnnotationRow>() {
        let row = row?;
        let frame = |v: i64, what: &str| {
            usize::try_from(v)
                .map_err(|_| Error::InvalidAnnotation(format!("{}/{}: {what} {v}", row.subject, row.video)))
        };
        let clip = AnnotationClip {
            expr: row.expr.parse()?,
            onset: frame(row.onset, "onset")?,
            apex: if row.apex == -1 {
                None
            } else {
                Some(frame(row.apex, "apex")?)
            },
            offset: frame(row.offset, "offset")?,
            subject: row.subject,
            video: row.video,
        };
        clip.validate()?;
        out.push(clip);
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, clips: &[AnnotationClip]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in clips {
        w.serialize(AnnotationRow {
            subject: c.subject.clone(),
            video: c.video.clone(),
            expr: c.expr.to_string(),
            onset: c.onset as i64,
            apex: c.apex.map_or(-1, |a| a as i64),
            offset: c.offset as i64,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-frame labels of one video with `n` frames.
///
/// Boundary bands of +-1 frame around onset, apex and offset are clipped to
/// the interval itself, so every boundary frame is also an expression frame.
pub fn make_labels(clips: &[AnnotationClip], n: usize) -> Result<Vec<FrameLabels>> {
    let mut labels = vec![FrameLabels::default(); n];
    for t in ExprType::ALL {
        let mut of_type: Vec<&AnnotationClip> = clips.iter().filter(|c| c.expr == t).collect();
        of_type.sort_by_key(|c| (c.onset, c.offset));
        for pair in of_type.windows(2) {
            if pair[1].onset <= pair[0].offset {
                return Err(Error::ConflictingAnnotation(format!(
                    "{} intervals [{}, {}] and [{}, {}] overlap in {}",
                    t, pair[0].onset, pair[0].offset, pair[1].onset, pair[1].offset, pair[0].video
                )));
            }
        }
        for c in of_type {
            c.validate()?;
            if c.offset >= n {
                return Err(Error::InvalidAnnotation(format!(
                    "{}: offset {} beyond {n} frames",
                    c.video, c.offset
                )));
            }
            let apex = c.apex_or_mid();
            for (f, lab) in labels.iter_mut().enumerate().take(c.offset + 1).skip(c.onset) {
                let near = |k: usize| f.abs_diff(k) <= 1;
                let tl = &mut lab.types[t.index()];
                tl.exp = true;
                tl.boundary = if near(apex) {
                    Some(Boundary::Apex)
                } else if near(c.onset) {
                    Some(Boundary::Onset)
                } else if near(c.offset) {
                    Some(Boundary::Offset)
                } else {
                    None
                };
            }
        }
    }
    for lab in &mut labels {
        lab.frame_type = if lab.get(ExprType::Micro).exp {
            FrameType::Micro
        } else if lab.get(ExprType::Macro).exp {
            FrameType::Macro
        } else {
            FrameType::Normal
        };
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test: String,
    pub train: Vec<String>,
}

/// One fold per subject, in sorted subject order.
pub fn loso_split<S: AsRef<str>>(subjects: &[S]) -> Result<Vec<Fold>> {
    let set: BTreeSet<&str> = subjects.iter().map(AsRef::as_ref).collect();
    if set.len() < 2 {
        return Err(Error::TooFewSubjects(set.len()));
    }
    Ok(set
        .iter()
        .map(|&test| Fold {
            test: test.to_string(),
            train: set.iter().filter(|&&s| s != test).map(|s| s.to_string()).collect(),
        })
        .collect())
}

/// Features and labels of one video.
#[derive(Debug, Clone)]
pub struct VideoData {
    pub subject: String,
    pub video: String,
    pub features: FeatureTensor,
    pub labels: Vec<FrameLabels>,
}

impl VideoData {
    pub fn new(subject: &str, video: &str, features: FeatureTensor, annotations: &[AnnotationClip]) -> Result<Self> {
        let own: Vec<AnnotationClip> = annotations
            .iter()
            .filter(|a| a.subject == subject && a.video == video)
            .cloned()
            .collect();
        let labels = make_labels(&own, features.n_frames())?;
        Ok(Self {
            subject: subject.to_string(),
            video: video.to_string(),
            features,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub loss: LossConfig,
    /// Checkpoint period in epochs (0 disables intermediate checkpoints).
    pub checkpoint_every: usize,
    /// Frames drawn per epoch (after shuffling); `None` uses every frame.
    pub samples_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 512,
            seed: 0,
            optimizer: AdamWConfig::default(),
            loss: LossConfig::default(),
            checkpoint_every: 10,
            samples_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("epochs and batch must be positive".into()));
        }
        let l = &self.loss;
        if l.tau.is_nan() || l.tau <= 0.0 || l.lambda < 0.0 || l.alpha <= 0.0 || l.gamma < 0.0 {
            return Err(Error::Config(format!("invalid loss settings {l:?}")));
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub cls: f64,
    pub con: f64,
    pub total: f64,
}

pub fn write_loss_trace(path: &Path, trace: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mean_cls_loss", "mean_con_loss", "mean_total"])?;
    for e in trace {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.8}", e.cls),
            format!("{:.8}", e.con),
            format!("{:.8}", e.total),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loss values of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub cls: f64,
    pub con: f64,
    pub total: f64,
    pub signature: u64,
}

/// Samples per forward chunk inside a batch. Fixed so that the gradient
/// reduction order, and hence every bit of the result, is independent of the
/// thread count.
const CHUNK: usize = 64;

type Recorded<T> = Vec<(Tape<T>, crate::model::ModelVars, crate::model::ForwardVars)>;

struct Scored<T> {
    recorded: Recorded<T>,
    cls: LossEval,
    con: LossEval,
    loss: BatchLoss,
}

fn record_and_score<T: Scalar>(
    cfg: &SpotGcnConfig,
    params: &Params<T>,
    clips: &[&[f32]],
    labels: &[FrameLabels],
    loss: &LossConfig,
    exec: Exec,
) -> Result<Scored<T>> {
    if clips.len() != labels.len() || clips.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} clips with {} labels",
            clips.len(),
            labels.len()
        )));
    }
    let chunks = clips.len().div_ceil(CHUNK);
    let recorded = par::try_map_indexed(exec, chunks, |c| {
        let part = &clips[c * CHUNK..((c + 1) * CHUNK).min(clips.len())];
        let mut tape = Tape::<T>::new();
        let vars = bind_params(&mut tape, cfg, params, true)?;
        let x = tape.constant(clips_to_input(part, cfg.window)?);
        let out = forward_tape(&mut tape, cfg, &vars, x)?;
        Ok::<_, Error>((tape, vars, out))
    })?;
    let mut logits = Vec::new();
    let mut z = Vec::new();
    let mut signature = 0u64;
    for (tape, _, out) in &recorded {
        logits.extend(tape.value(out.logits).data().iter().map(|v| v.as_f64()));
        z.extend(tape.value(out.z).data().iter().map(|v| v.as_f64()));
        signature = signature.wrapping_mul(0x100000001b3) ^ tape.branch_signature();
    }
    let cls = classification_loss(&logits, labels, loss.alpha, loss.gamma)?;
    let con = if loss.lambda > 0.0 {
        let types: Vec<FrameType> = labels.iter().map(|l| l.frame_type).collect();
        supcon_loss(&z, cfg.embedding_dim(), &types, loss.tau, Reduction::MeanOverAnchors)?
    } else {
        LossEval {
            value: 0.0,
            grad: vec![0.0; z.len()],
            signature: 0,
        }
    };
    signature = signature.wrapping_mul(0x100000001b3) ^ cls.signature;
    let loss = BatchLoss {
        cls: cls.value,
        con: con.value,
        total: crate::losses::total_loss(cls.value, con.value, loss.lambda),
        signature,
    };
    Ok(Scored {
        recorded,
        cls,
        con,
        loss,
    })
}

/// Loss of one batch without gradients.
pub fn batch_loss<T: Scalar>(
    cfg: &SpotGcnConfig,
    params: &Params<T>,
    clips: &[&[f32]],
    labels: &[FrameLabels],
    loss: &LossConfig,
    exec: Exec,
) -> Result<BatchLoss> {
    Ok(record_and_score(cfg, params, clips, labels, loss, exec)?.loss)
}

/// Loss and parameter gradients of one batch.
///
/// Forward passes run per chunk (possibly in parallel), the losses are
/// evaluated over the whole batch, and the chunk gradients are summed in
/// chunk order.
pub fn batch_loss_and_grads<T: Scalar>(
    cfg: &SpotGcnConfig,
    params: &Params<T>,
    clips: &[&[f32]],
    labels: &[FrameLabels],
    loss: &LossConfig,
    exec: Exec,
) -> Result<(BatchLoss, Vec<Vec<T>>)> {
    let Scored {
        recorded,
        cls,
        con,
        loss: value,
    } = record_and_score(cfg, params, clips, labels, loss, exec)?;
    let head = crate::model::HEAD_DIM;
    let d = cfg.embedding_dim();
    let mut starts = Vec::with_capacity(recorded.len());
    let mut acc = 0;
    for (tape, _, out) in &recorded {
        starts.push(acc);
        acc += tape.value(out.logits).len() / head;
    }
    let jobs: Vec<_> = recorded.into_iter().zip(starts).collect();
    let n_params = params.len();
    let grads = par::map_owned(exec, jobs, |((mut tape, vars, out), start)| {
        let rows = tape.value(out.logits).len() / head;
        let gl: Vec<T> = cls.grad[start * head..(start + rows) * head]
            .iter()
            .map(|&g| T::from_f64(g))
            .collect();
        let gz: Vec<T> = con.grad[start * d..(start + rows) * d]
            .iter()
            .map(|&g| T::from_f64(g * loss.lambda))
            .collect();
        let node = tape.scalar_fn(vec![out.logits, out.z], T::zero(), vec![gl, gz], 0)?;
        let mut g = tape.backward(node)?;
        Ok::<_, Error>(
            vars.by_position
                .iter()
                .map(|&v| g.take(v).unwrap_or_default())
                .collect::<Vec<Vec<T>>>(),
        )
    });
    let mut total_grads: Vec<Vec<T>> = params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
    for chunk in grads {
        let chunk = chunk?;
        debug_assert_eq!(chunk.len(), n_params);
        for (acc, g) in total_grads.iter_mut().zip(chunk) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a = *a + v;
            }
        }
    }
    Ok((value, total_grads))
}

/// Which frames of which videos enter training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Sample {
    video: usize,
    frame: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params<f32>,
    pub trace: Vec<EpochLoss>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Subject held out of this fold; any training video from it is an error.
    pub test_subject: Option<String>,
    /// Directory for periodic checkpoints `epoch_XXX.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
    pub exec: Exec,
}

/// Split shuffled sample indices into batches of at most `batch`; a trailing
/// single sample joins the previous batch so every batch can form pairs.
fn batches(n: usize, batch: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n.div_ceil(batch))
        .map(|b| b * batch..((b + 1) * batch).min(n))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

pub fn train(
    cfg: &SpotGcnConfig,
    tc: &TrainConfig,
    videos: &[&VideoData],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    if let Some(test) = &opts.test_subject {
        if let Some(v) = videos.iter().find(|v| &v.subject == test) {
            return Err(Error::SubjectLeakage(v.subject.clone()));
        }
    }
    for v in videos {
        if v.features.window() != cfg.window {
            return Err(Error::ShapeMismatch(format!(
                "{}: window {} for a window-{} model",
                v.video,
                v.features.window(),
                cfg.window
            )));
        }
        if v.labels.len() != v.features.n_frames() {
            return Err(Error::FrameCountMismatch(format!(
                "{}: {} labels for {} frames",
                v.video,
                v.labels.len(),
                v.features.n_frames()
            )));
        }
    }
    let samples: Vec<Sample> = videos
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| (0..v.features.n_frames()).map(move |f| Sample { video: vi, frame: f }))
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut params = init_params::<f32>(cfg, SplitMix64::derive(tc.seed, &[label("init")]).next_u64())?;
    let mut state = AdamWState::new(&params);
    let mut trace = Vec::with_capacity(tc.epochs);
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for epoch in 0..tc.epochs {
        let mut order = samples.clone();
        SplitMix64::derive(tc.seed, &[label("epoch"), epoch as u64]).shuffle(&mut order);
        if let Some(cap) = tc.samples_per_epoch {
            order.truncate(cap.max(1));
        }
        let (mut cls, mut con, mut total) = (0.0, 0.0, 0.0);
        for (bi, range) in batches(order.len(), tc.batch).into_iter().enumerate() {
            let batch = &order[range];
            let clips: Vec<&[f32]> = batch.iter().map(|s| videos[s.video].features.clip(s.frame)).collect();
            let labels: Vec<FrameLabels> = batch.iter().map(|s| videos[s.video].labels[s.frame]).collect();
            let (loss, grads) = batch_loss_and_grads(cfg, &params, &clips, &labels, &tc.loss, opts.exec)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    norms: params.norms_summary(),
                });
            }
            adamw_step(&mut params, &grads, &mut state, &tc.optimizer)?;
            let w = batch.len() as f64;
            cls += loss.cls * w;
            con += loss.con * w;
            total += loss.total * w;
        }
        let n = order.len() as f64;
        let e = EpochLoss {
            epoch: epoch + 1,
            cls: cls / n,
            con: con / n,
            total: total / n,
        };
        log::debug!(
            "epoch {} cls {:.5} con {:.5} total {:.5}",
            e.epoch,
            e.cls,
            e.con,
            e.total
        );
        trace.push(e);
        if let Some(dir) = &opts.checkpoint_dir {
            if tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 {
                checkpoint::save(&dir.join(format!("epoch_{:03}.ckpt", epoch + 1)), &params)?;
            }
        }
    }
    Ok(TrainOutcome { params, trace })
}

/// Subjects with at least one video, in sorted order.
pub fn subjects(videos: &[VideoData]) -> Vec<String> {
    videos
        .iter()
        .map(|v| v.subject.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Annotation counts per (subject, video), for sanity reporting.
pub fn annotation_index(clips: &[AnnotationClip]) -> BTreeMap<(String, String), Vec<AnnotationClip>> {
    let mut m: BTreeMap<(String, String), Vec<AnnotationClip>> = BTreeMap::new();
    for c in clips {
        m.entry((c.subject.clone(), c.video.clone()))
            .or_default()
            .push(c.clone());
    }
    m
}

/// Random batch with every frame type and boundary class represented, for
/// gradient checks.
pub fn random_batch(cfg: &SpotGcnConfig, batch: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<FrameLabels>) {
    let mut rng = SplitMix64::derive(seed, &[label("batch")]);
    let len = cfg.window * crate::graph::NUM_ROIS * crate::motion::features::FLOW_DIMS;
    let clips = (0..batch)
        .map(|_| (0..len).map(|_| rng.normal() as f32).collect())
        .collect();
    let bounds = [
        None,
        Some(Boundary::Onset),
        Some(Boundary::Apex),
        Some(Boundary::Offset),
    ];
    let labels = (0..batch)
        .map(|i| {
            let mut l = FrameLabels::default();
            let t = match i % 3 {
                0 => return l,
                1 => ExprType::Micro,
                _ => ExprType::Macro,
            };
            l.frame_type = if t == ExprType::Micro {
                FrameType::Micro
            } else {
                FrameType::Macro
            };
            l.types[t.index()].exp = true;
            l.types[t.index()].boundary = bounds[(i / 3) % bounds.len()];
            l
        })
        .collect();
    (clips, labels)
}

/// Finite-difference check of the full training loss (classification plus
/// weighted contrastive term) in 64-bit, at Glorot weights with random biases.
pub fn model_grad_check(
    cfg: &SpotGcnConfig,
    loss: &LossConfig,
    batch: usize,
    seed: u64,
    h: f64,
    tol: f64,
    exec: Exec,
) -> Result<crate::numcore::GradCheckReport> {
    cfg.validate()?;
    let mut params = init_params::<f64>(cfg, seed)?;
    let mut rng = SplitMix64::derive(seed, &[label("bias")]);
    for (name, t) in params.names().to_vec().iter().zip(params.tensors_mut()) {
        if name.ends_with(".bias") {
            for v in t.data_mut() {
                *v = 0.1 * rng.normal();
            }
        }
    }
    let (clips, labels) = random_batch(cfg, batch, seed);
    let views: Vec<&[f32]> = clips.iter().map(|c| c.as_slice()).collect();
    let (_, analytic) = batch_loss_and_grads(cfg, &params, &views, &labels, loss, exec)?;
    let mut failure = None;
    let f = |p: &Params<f64>| match batch_loss(cfg, p, &views, &labels, loss, exec) {
        Ok(b) => (b.total, b.signature),
        Err(e) => {
            failure.get_or_insert(e);
            (f64::NAN, 0)
        }
    };
    let report = crate::numcore::grad_check(f, &params, &analytic, h, tol, seed);
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(t: ExprType, on: usize, apex: i64, off: usize) -> AnnotationClip {
        AnnotationClip {
            subject: "s".into(),
            video: "v".into(),
            expr: t,
            onset: on,
            apex: usize::try_from(apex).ok(),
            offset: off,
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn labels_for_single_micro_clip() {
        let l = make_labels(&[clip(ExprType::Micro, 10, 13, 16)], 30).unwrap();
        let b = |f: usize| l[f].get(ExprType::Micro).boundary;
        for f in 10..=16 {
            assert!(l[f].get(ExprType::Micro).exp);
            assert_eq!(l[f].frame_type, FrameType::Micro);
        }
        for f in (0..10).chain(17..30) {
            assert_eq!(l[f].frame_type, FrameType::Normal);
            assert_eq!(b(f), None);
        }
        assert_eq!([b(10), b(11)], [Some(Boundary::Onset); 2]);
        assert_eq!([b(12), b(13), b(14)], [Some(Boundary::Apex); 3]);
        assert_eq!([b(15), b(16)], [Some(Boundary::Offset); 2]);
    }

    #[test]
    fn labels_priority_and_conflicts() {
        // Short clip: apex band wins over onset and offset.
        let l = make_labels(&[clip(ExprType::Macro, 5, -1, 7)], 10).unwrap();
        assert_eq!(l[6].get(ExprType::Macro).boundary, Some(Boundary::Apex));
        assert_eq!(l[5].get(ExprType::Macro).boundary, Some(Boundary::Apex));
        let both = make_labels(&[clip(ExprType::Macro, 5, 10, 20), clip(ExprType::Micro, 8, 9, 12)], 30).unwrap();
        assert_eq!(both[9].frame_type, FrameType::Micro);
        assert_eq!(both[15].frame_type, FrameType::Macro);
        let err = make_labels(&[clip(ExprType::Micro, 1, 2, 5), clip(ExprType::Micro, 5, 6, 8)], 10);
        assert!(matches!(err, Err(Error::ConflictingAnnotation(_))));
        assert!(make_labels(&[], 4)
            .unwrap()
            .iter()
            .all(|f| f.frame_type == FrameType::Normal));
    }

    #[test]
    fn folds() {
        let f = loso_split(&["c", "a", "b", "a"]).unwrap();
        assert_eq!(f.iter().map(|f| f.test.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(f[1].train, ["a", "c"]);
        assert!(matches!(loso_split(&["a"]), Err(Error::TooFewSubjects(1))));
    }

    #[test]
    fn batching_keeps_pairs() {
        assert_eq!(batches(1025, 512), vec![0..512, 512..1025]);
        assert_eq!(batches(10, 4), vec![0..4, 4..8, 8..10]);
        assert_eq!(batches(1, 4), vec![0..1]);
    }

    #[test]
    fn annotation_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("annotations.csv");
        let clips = vec![clip(ExprType::Micro, 1, 3, 5), clip(ExprType::Macro, 10, -1, 30)];
        write_annotations(&p, &clips).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("subject,video,type,onset,apex,offset\n"));
        assert!(text.contains("s,v,macro,10,-1,30"));
        assert_eq!(read_annotations(&p).unwrap(), clips);
    }
}
