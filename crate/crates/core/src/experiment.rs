//! Leave-one-subject-out runs: train per fold, infer on the held-out subject,
//! spot with duration priors from the training annotations, then score.

use crate::error::{Error, Result};
use crate::evalkit::{self, Matching, Report};
use crate::model::{infer_video, FrameOutput, SpotGcnConfig};
use crate::numcore::Params;
use crate::par::Exec;
use crate::spotting::{spot_video, ExpressionProposal, SpottingConfig};
use crate::trainer::{self, AnnotationClip, EpochLoss, TrainConfig, TrainOptions, VideoData};
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: SpotGcnConfig,
    pub train: TrainConfig,
    pub spotting: SpottingConfig,
    pub iou: f64,
    pub matching: Matching,
    /// Replace `k` and `j` with the training fold's annotated durations.
    pub learn_durations: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: SpotGcnConfig::default(),
            train: TrainConfig::default(),
            spotting: SpottingConfig::default(),
            iou: evalkit::DEFAULT_IOU,
            matching: Matching::Greedy,
            learn_durations: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub test: String,
    pub params: Params<f32>,
    pub trace: Vec<EpochLoss>,
    pub spotting: SpottingConfig,
    pub proposals: Vec<ExpressionProposal>,
}

#[derive(Debug, Clone)]
pub struct LosoOutcome {
    pub folds: Vec<FoldResult>,
    pub proposals: Vec<ExpressionProposal>,
    pub report: Report,
}

/// Spot every video with a trained model; proposal videos are `subject/video`.
pub fn spot_videos(
    model: &SpotGcnConfig,
    params: &Params<f32>,
    videos: &[&VideoData],
    spotting: &SpottingConfig,
    exec: Exec,
) -> Result<Vec<ExpressionProposal>> {
    let mut out = Vec::new();
    for v in videos {
        let outputs = infer_video(model, params, &v.features, exec)?;
        let probs: Vec<_> = outputs.iter().map(|o| o.probs).collect();
        out.extend(spot_video(&format!("{}/{}", v.subject, v.video), &probs, spotting));
    }
    Ok(out)
}

/// Per-frame outputs of every video, in input order.
pub fn infer_videos(
    model: &SpotGcnConfig,
    params: &Params<f32>,
    videos: &[&VideoData],
    exec: Exec,
) -> Result<Vec<Vec<FrameOutput>>> {
    videos
        .iter()
        .map(|v| infer_video(model, params, &v.features, exec))
        .collect()
}

/// Run one fold: train without `test`, then spot the `test` subject's videos.
pub fn run_fold(
    cfg: &ExperimentConfig,
    videos: &[VideoData],
    annotations: &[AnnotationClip],
    test: &str,
    checkpoint_dir: Option<PathBuf>,
    exec: Exec,
) -> Result<FoldResult> {
    let (held, train): (Vec<&VideoData>, Vec<&VideoData>) = videos.iter().partition(|v| v.subject == test);
    if held.is_empty() {
        return Err(Error::UnknownSubject(test.to_string()));
    }
    let opts = TrainOptions {
        test_subject: Some(test.to_string()),
        checkpoint_dir,
        exec,
    };
    let outcome = trainer::train(&cfg.model, &cfg.train, &train, &opts)?;
    let spotting = if cfg.learn_durations {
        let train_clips: Vec<AnnotationClip> = annotations.iter().filter(|c| c.subject != test).cloned().collect();
        cfg.spotting.with_durations_from(&train_clips)
    } else {
        cfg.spotting
    };
    let proposals = spot_videos(&cfg.model, &outcome.params, &held, &spotting, exec)?;
    Ok(FoldResult {
        test: test.to_string(),
        params: outcome.params,
        trace: outcome.trace,
        spotting,
        proposals,
    })
}

/// Every LOSO fold in subject order, then one report over all videos.
pub fn run_loso(
    cfg: &ExperimentConfig,
    videos: &[VideoData],
    annotations: &[AnnotationClip],
    exec: Exec,
) -> Result<LosoOutcome> {
    cfg.spotting.validate()?;
    let subjects = trainer::subjects(videos);
    let folds = trainer::loso_split(&subjects)?;
    let mut results = Vec::with_capacity(folds.len());
    for f in &folds {
        log::info!("fold {}: training on {} subjects", f.test, f.train.len());
        results.push(run_fold(cfg, videos, annotations, &f.test, None, exec)?);
    }
    let proposals: Vec<ExpressionProposal> = results.iter().flat_map(|r| r.proposals.iter().cloned()).collect();
    let report = evalkit::report(annotations, &proposals, cfg.iou, cfg.matching);
    Ok(LosoOutcome {
        folds: results,
        proposals,
        report,
    })
}

/// Same-label minus different-label mean cosine similarity of embeddings,
/// over frames whose label is not `None`.
pub fn cosine_gap<L: PartialEq>(z: &[Vec<f64>], labels: &[Option<L>]) -> Option<f64> {
    let (mut same, mut ns, mut diff, mut nd) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..z.len() {
        let Some(li) = &labels[i] else { continue };
        for j in i + 1..z.len() {
            let Some(lj) = &labels[j] else { continue };
            let c = cosine(&z[i], &z[j]);
            if li == lj {
                same += c;
                ns += 1;
            } else {
                diff += c;
                nd += 1;
            }
        }
    }
    (ns > 0 && nd > 0).then(|| same / ns as f64 - diff / nd as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
