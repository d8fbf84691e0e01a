use crate::config::RunConfig;
use crate::plot;
use crate::CliError;
use clap::{Args, ValueEnum};
use spotgcn::evalkit::{self, Category, Matching};
use spotgcn::experiment::{self, ExperimentConfig};
use spotgcn::model::{check_params, infer_video, SpotGcnConfig};
use spotgcn::motion::{
    extract_video_features, load_frames, read_features, read_landmarks, write_features, BlockMatcher, ExtractConfig,
    FlowConfig,
};
use spotgcn::numcore::{checkpoint, Params};
use spotgcn::par::Exec;
use spotgcn::spotting::{read_proposals, write_proposals};
use spotgcn::synth::{self, SynthSpec};
use spotgcn::trainer::{
    self, annotation_index, read_annotations, write_loss_trace, AnnotationClip, TrainOptions, VideoData,
};
use std::path::{Path, PathBuf};

type Res = Result<(), CliError>;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| spotgcn::Error::io(dir, e).into())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| spotgcn::Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Every `<subject>/<video>.of1` under `dir`, with its annotations attached.
fn load_dataset(dir: &Path, annotations: &[AnnotationClip]) -> Result<Vec<VideoData>, CliError> {
    let index = annotation_index(annotations);
    let mut out = Vec::new();
    for sdir in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let subject = sdir.file_name().unwrap().to_string_lossy().into_owned();
        for f in sorted_entries(&sdir)? {
            if f.extension().and_then(|e| e.to_str()) != Some("of1") {
                continue;
            }
            let video = file_stem(&f);
            let features = read_features(&f)?;
            let clips = index
                .get(&(subject.clone(), video.clone()))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            out.push(VideoData::new(&subject, &video, features, clips)?);
        }
    }
    if out.is_empty() {
        return Err(spotgcn::Error::Parse(format!("no feature files under {}", dir.display())).into());
    }
    Ok(out)
}

fn load_params(path: &Path, model: &SpotGcnConfig) -> Result<Params<f32>, CliError> {
    let p = checkpoint::load::<f32>(path)?;
    check_params(model, &p)?;
    Ok(p)
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Directory of numbered frame images for a single video.
    #[arg(long, required_unless_present = "dataset_dir", conflicts_with = "dataset_dir")]
    video_dir: Option<PathBuf>,
    /// Landmark CSV of the video (defaults to <video-dir>/landmarks.csv).
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Dataset root with <subject>/<video>/ frame directories.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Feature file, or output root in dataset mode.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 17)]
    window: usize,
    /// Keep every n-th frame (frame-rate normalization).
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

fn extract_one(video_dir: &Path, landmarks: &Path, out: &Path, cfg: &ExtractConfig, stride: usize) -> Res {
    let marks: Vec<_> = read_landmarks(landmarks)?.into_iter().step_by(stride.max(1)).collect();
    let frames = load_frames(video_dir, stride)?;
    let estimator = BlockMatcher::new(FlowConfig::default());
    let features = extract_video_features(&frames, &marks, cfg, &estimator, Exec::Parallel)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_features(out, &features)?;
    println!(
        "{}: N={} w={} R={}",
        out.display(),
        features.n_frames(),
        features.window(),
        features.rois()
    );
    Ok(())
}

pub fn extract(a: ExtractArgs) -> Res {
    if a.window.is_multiple_of(2) {
        return Err(spotgcn::Error::EvenWindow(a.window).into());
    }
    let cfg = ExtractConfig {
        window: a.window,
        ..ExtractConfig::default()
    };
    if let Some(video_dir) = &a.video_dir {
        let marks = a.landmarks.clone().unwrap_or_else(|| video_dir.join("landmarks.csv"));
        return extract_one(video_dir, &marks, &a.out, &cfg, a.stride);
    }
    let root = a.dataset_dir.as_ref().expect("clap enforces one source");
    for sdir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        for vdir in sorted_entries(&sdir)?.into_iter().filter(|p| p.is_dir()) {
            let out = a
                .out
                .join(sdir.file_name().unwrap())
                .join(format!("{}.of1", file_stem(&vdir)));
            extract_one(&vdir, &vdir.join("landmarks.csv"), &out, &cfg, a.stride)?;
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

pub fn train(a: TrainArgs) -> Res {
    let run = RunConfig::resolve(a.config.as_deref(), &a.run)?;
    let exp = run.experiment()?;
    let features_dir = RunConfig::require(&run.features_dir, "features_dir")?;
    let ann_path = RunConfig::require(&run.annotations, "annotations")?;
    let fold = RunConfig::require(&run.fold, "fold")?;
    let out = RunConfig::require(&run.out, "out")?;
    let annotations = read_annotations(ann_path)?;
    let videos = load_dataset(features_dir, &annotations)?;
    if !videos.iter().any(|v| &v.subject == fold) {
        return Err(spotgcn::Error::UnknownSubject(fold.clone()).into());
    }
    let train: Vec<&VideoData> = videos.iter().filter(|v| &v.subject != fold).collect();
    create_dir(out)?;
    let opts = TrainOptions {
        test_subject: Some(fold.clone()),
        checkpoint_dir: Some(out.join("checkpoints")),
        exec: Exec::Parallel,
    };
    let outcome = trainer::train(&exp.model, &exp.train, &train, &opts)?;
    checkpoint::save(&out.join("model.ckpt"), &outcome.params)?;
    write_loss_trace(&out.join("loss_trace.csv"), &outcome.trace)?;
    if let Some(last) = outcome.trace.last() {
        println!(
            "fold {fold}: {} epochs, final loss {:.6} (cls {:.6}, con {:.6})",
            last.epoch, last.total, last.cls, last.con
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SpotArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

pub fn spot(a: SpotArgs) -> Res {
    let run = RunConfig::resolve(a.config.as_deref(), &a.run)?;
    let exp = run.experiment()?;
    let features_dir = RunConfig::require(&run.features_dir, "features_dir")?;
    let ckpt = RunConfig::require(&run.checkpoint, "checkpoint")?;
    let out = RunConfig::require(&run.out, "out")?;
    let annotations = match &run.annotations {
        Some(p) => read_annotations(p)?,
        None => Vec::new(),
    };
    let videos = load_dataset(features_dir, &annotations)?;
    let selected: Vec<&VideoData> = match &run.fold {
        Some(f) => videos.iter().filter(|v| &v.subject == f).collect(),
        None => videos.iter().collect(),
    };
    if let (Some(f), true) = (&run.fold, selected.is_empty()) {
        return Err(spotgcn::Error::UnknownSubject(f.clone()).into());
    }
    let mut spotting = exp.spotting;
    if exp.learn_durations && !annotations.is_empty() {
        let known: Vec<AnnotationClip> = annotations
            .into_iter()
            .filter(|c| run.fold.as_ref() != Some(&c.subject))
            .collect();
        spotting = spotting.with_durations_from(&known);
    }
    let params = load_params(ckpt, &exp.model)?;
    let proposals = experiment::spot_videos(&exp.model, &params, &selected, &spotting, Exec::Parallel)?;
    write_proposals(out, &proposals)?;
    println!(
        "{} proposals over {} videos (micro k={:.2} j={:.2}, macro k={:.2} j={:.2})",
        proposals.len(),
        selected.len(),
        spotting.micro.mean,
        spotting.micro.min,
        spotting.macro_.mean,
        spotting.macro_.min
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

pub fn eval(a: EvalArgs) -> Res {
    let run = RunConfig::resolve(a.config.as_deref(), &a.run)?;
    let ann_path = RunConfig::require(&run.annotations, "annotations")?;
    let prop_path = RunConfig::require(&run.proposals, "proposals")?;
    let theta = run.iou.unwrap_or(evalkit::DEFAULT_IOU);
    let mode = run.matching_mode()?;
    let mut gts = read_annotations(ann_path)?;
    let mut proposals = read_proposals(prop_path)?;
    if let Some(f) = &run.fold {
        gts.retain(|c| &c.subject == f);
        proposals.retain(|p| p.video.split('/').next() == Some(f.as_str()));
    }
    let report = evalkit::report(&gts, &proposals, theta, mode);
    print!("{}", report.pretty());
    if mode == Matching::Greedy {
        let optimal = evalkit::report(&gts, &proposals, theta, Matching::Optimal);
        let (g, o) = (
            report.row(Category::Overall).counts.tp,
            optimal.row(Category::Overall).counts.tp,
        );
        if g != o {
            println!("note: optimal matching finds {o} true positives, greedy {g}");
        }
    }
    if let Some(p) = &run.out {
        report.write_csv(p)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct LosoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

pub fn loso(a: LosoArgs) -> Res {
    let run = RunConfig::resolve(a.config.as_deref(), &a.run)?;
    let exp: ExperimentConfig = run.experiment()?;
    let features_dir = RunConfig::require(&run.features_dir, "features_dir")?;
    let ann_path = RunConfig::require(&run.annotations, "annotations")?;
    let out = RunConfig::require(&run.out, "out")?;
    let annotations = read_annotations(ann_path)?;
    let videos = load_dataset(features_dir, &annotations)?;
    let outcome = experiment::run_loso(&exp, &videos, &annotations, Exec::Parallel)?;
    create_dir(out)?;
    for f in &outcome.folds {
        let dir = out.join(&f.test);
        create_dir(&dir)?;
        write_loss_trace(&dir.join("loss_trace.csv"), &f.trace)?;
        checkpoint::save(&dir.join("model.ckpt"), &f.params)?;
    }
    write_proposals(&out.join("proposals.csv"), &outcome.proposals)?;
    outcome.report.write_csv(&out.join("report.csv"))?;
    print!("{}", outcome.report.pretty());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthMode {
    /// Feature tensors computed from the planted motion.
    Features,
    /// Rendered frames and landmarks.
    Images,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthMode::Features)]
    mode: SynthMode,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Micro-expressions per video.
    #[arg(long)]
    micros: Option<usize>,
    /// Macro-expressions per video.
    #[arg(long)]
    macros: Option<usize>,
    /// Head drift amplitude in pixels.
    #[arg(long)]
    drift: Option<f64>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Flow noise standard deviation in feature mode.
    #[arg(long)]
    feature_noise: Option<f64>,
    /// Blink distractors per video.
    #[arg(long)]
    blinks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn synth(a: SynthArgs) -> Res {
    let mut spec = SynthSpec::default();
    macro_rules! set {
        ($($src:ident => $dst:ident),*) => { $(if let Some(v) = a.$src { spec.$dst = v; })* };
    }
    set!(subjects => n_subjects, videos => videos_per_subject, frames => frames_per_video,
        micros => micro_per_video, macros => macro_per_video, drift => drift_amplitude,
        noise => noise_sigma, feature_noise => feature_noise, blinks => blinks_per_video, seed => seed);
    let plans = match a.mode {
        SynthMode::Features => synth::write_feature_dataset(&spec, &a.out, Exec::Parallel)?,
        SynthMode::Images => synth::write_image_dataset(&spec, &a.out, Exec::Parallel)?,
    };
    let events: usize = plans.iter().map(|p| p.events.len()).sum();
    println!(
        "{}: {} videos, {} annotated expressions",
        a.out.display(),
        plans.len(),
        events
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Model size: default or desk.
    #[arg(long, default_value = "default")]
    model: String,
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 6)]
    batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

pub fn gradcheck(a: GradcheckArgs) -> Res {
    let model = RunConfig {
        model: Some(a.model.clone()),
        ..Default::default()
    }
    .model_config()?;
    let loss = spotgcn::losses::LossConfig::default();
    let mut worst: f64 = 0.0;
    for seed in a.first_seed..a.first_seed + a.seeds {
        let r = trainer::model_grad_check(&model, &loss, a.batch, seed, a.h, a.tol, Exec::Parallel)?;
        println!(
            "seed {seed}: max_rel_err {:.3e} over {} coordinates ({} kinks skipped)",
            r.max_rel_err, r.checked, r.kinks_skipped
        );
        worst = worst.max(r.max_rel_err);
    }
    if worst <= a.tol {
        println!("PASS max_rel_err = {worst:.3e} <= {:e}", a.tol);
        Ok(())
    } else {
        println!("FAIL max_rel_err = {worst:.3e} > {:e}", a.tol);
        Err(CliError::Numeric(format!(
            "gradient check failed: {worst:.3e} > {:e}",
            a.tol
        )))
    }
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Feature file of one video.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "default")]
    model: String,
    /// Annotation CSV for shading ground-truth intervals.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// `subject/video` key of the plotted video in the annotations.
    #[arg(long)]
    video: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a 2-D projection of the embeddings here.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

pub fn plot(a: PlotArgs) -> Res {
    let model = RunConfig {
        model: Some(a.model.clone()),
        ..Default::default()
    }
    .model_config()?;
    let params = load_params(&a.checkpoint, &model)?;
    let features = read_features(&a.features)?;
    let outputs = infer_video(&model, &params, &features, Exec::Parallel)?;
    let gts: Vec<AnnotationClip> = match (&a.annotations, &a.video) {
        (Some(p), Some(key)) => read_annotations(p)?
            .into_iter()
            .filter(|c| &evalkit::video_key(c) == key)
            .collect(),
        (Some(_), None) => return Err(CliError::Usage("--annotations needs --video".into())),
        _ => Vec::new(),
    };
    let title = a.video.clone().unwrap_or_else(|| file_stem(&a.features));
    let svg = plot::probability_svg(&title, &outputs, &gts);
    std::fs::write(&a.out, svg).map_err(|e| spotgcn::Error::io(&a.out, e))?;
    if let Some(path) = &a.embedding {
        let labels = trainer::make_labels(&gts, outputs.len())?;
        let svg = plot::embedding_svg(&title, &outputs, &labels);
        std::fs::write(path, svg).map_err(|e| spotgcn::Error::io(path, e))?;
    }
    println!(
        "{}: {} frames, {} annotated intervals",
        a.out.display(),
        outputs.len(),
        gts.len()
    );
    Ok(())
}
