//! Acceptance suite: one test per criterion, each printing a `PASS`/`FAIL`
//! line with the measured evidence.

#[path = "../../core/tests/reference/mod.rs"]
mod reference;

use reference::*;
use spotgcn::evalkit::{greedy_match, optimal_match_count, prf1, Category, Counts, Matching};
use spotgcn::experiment::{cosine_gap, infer_videos, run_fold, run_loso, ExperimentConfig};
use spotgcn::expr::ExprType;
use spotgcn::graph::flgp_pool;
use spotgcn::losses::{
    classification_loss, focal_loss, supcon_loss, Boundary, FrameLabels, FrameType, LossConfig, Reduction,
};
use spotgcn::model::{
    forward, infer_video, init_params, receptive_field, stgcn_layer, tcn_layer, SpotGcnConfig, HEAD_DIM,
};
use spotgcn::motion::features::{extract_video_features, ExtractConfig, FeatureTensor};
use spotgcn::motion::{BlockMatcher, FlowConfig};
use spotgcn::numcore::{Params, SplitMix64};
use spotgcn::par::Exec;
use spotgcn::spotting::{nms, ExpressionProposal, SpottingConfig};
use spotgcn::synth::{self, render_video, PlantedEvent, SynthSpec, VideoPlan};
use spotgcn::trainer::{model_grad_check, AnnotationClip, TrainConfig, VideoData};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Outcome of one criterion: whether it holds and the measured evidence.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Lines bypass the test harness capture so they show up in plain `cargo test` output.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

// ---------------------------------------------------------------------------
// Detailed published counts

/// (dataset, category, total, tp, fp, fn, precision, recall, f1) as printed.
type PublishedRow = (&'static str, &'static str, usize, usize, usize, usize, f64, f64, f64);

const PUBLISHED: [PublishedRow; 6] = [
    ("SAMM-LV", "MaE", 343, 188, 281, 155, 0.4009, 0.5481, 0.4631),
    ("SAMM-LV", "ME", 159, 69, 114, 90, 0.3770, 0.4340, 0.4035),
    ("SAMM-LV", "Overall", 502, 257, 395, 245, 0.3942, 0.5120, 0.4454),
    ("CAS(ME)2", "MaE", 300, 161, 281, 139, 0.3643, 0.5367, 0.4340),
    ("CAS(ME)2", "ME", 57, 12, 22, 45, 0.3529, 0.2105, 0.2637),
    ("CAS(ME)2", "Overall", 357, 173, 303, 184, 0.3634, 0.4678, 0.4154),
];

fn published_arithmetic() -> Verdict {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut cells = 0;
    for (ds, cat, total, tp, fp, fn_, p, r, f1) in PUBLISHED {
        assert_eq!(tp + fn_, total, "{ds} {cat}: TP + FN is the total");
        let m = prf1(&Counts { total, tp, fp, fn_ });
        for (name, got, want) in [("precision", m.precision, p), ("recall", m.recall, r), ("F1", m.f1, f1)] {
            cells += 1;
            if (got - want).abs() > 1e-4 {
                mismatches.push(format!("{ds} {cat} {name}: computed {got:.4}, printed {want:.4}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = if mismatches.is_empty() {
        format!("{cells}/{cells} cells within 1e-4 in {elapsed:?}")
    } else {
        format!(
            "{}/{cells} cells within 1e-4 in {elapsed:?}; {}. The printed F1 0.4154 follows from recall 173/357 = 0.4846, so the printed recall is inconsistent with its own counts",
            cells - mismatches.len(),
            mismatches.join("; ")
        )
    };
    verdict(mismatches.is_empty() && elapsed < Duration::from_secs(1), detail)
}

fn desk_scale_scope() -> Verdict {
    verdict(
        true,
        "NOT REPRODUCIBLE at desk scale: absolute F1 on SAMM-LV (0.4454) and CAS(ME)2 (0.4154) needs the access-restricted videos; replaced by the property, oracle and synthetic suites",
    )
}

// ---------------------------------------------------------------------------
// Gradients

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let loss = LossConfig::default();
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    let mut runs = 0;
    let mut kinks = 0;
    let suites = [
        ("desk", SpotGcnConfig::desk(), 0..20u64),
        ("default", SpotGcnConfig::default(), 100..102),
    ];
    for (name, cfg, seeds) in suites {
        for seed in seeds {
            runs += 1;
            match model_grad_check(&cfg, &loss, 6, seed, 1e-5, 1e-4, Exec::Parallel) {
                Ok(r) => {
                    worst = worst.max(r.max_rel_err);
                    kinks += r.kinks_skipped;
                    if !r.passed() {
                        failed.push(format!(
                            "{name} seed {seed}: {:.3e} at {:?}",
                            r.max_rel_err,
                            r.worst_param()
                        ));
                    }
                }
                Err(e) => failed.push(format!("{name} seed {seed}: {e}")),
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failed.is_empty() && elapsed < Duration::from_secs(120);
    let mut detail = format!(
        "{runs} seeds (20 desk, 2 default), 64-bit, h = 1e-5: max rel err {worst:.3e} <= 1e-4, {kinks} kink coordinates skipped, {:.1}s",
        elapsed.as_secs_f64()
    );
    if !failed.is_empty() {
        detail.push_str(&format!("; failures: {}", failed.join("; ")));
    }
    verdict(ok, detail)
}

// ---------------------------------------------------------------------------
// Oracles

const INSTANCES: usize = 128;

fn unit_rows(rng: &mut SplitMix64, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
            r.iter().map(|x| x / norm).collect()
        })
        .collect()
}

fn random_labels(rng: &mut SplitMix64, n: usize) -> Vec<FrameLabels> {
    (0..n)
        .map(|_| {
            let mut l = FrameLabels::default();
            let t = match rng.below(3) {
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
            l.types[t.index()].boundary = [
                None,
                Some(Boundary::Onset),
                Some(Boundary::Apex),
                Some(Boundary::Offset),
            ][rng.below(4)];
            l
        })
        .collect()
}

fn random_interval(rng: &mut SplitMix64) -> (usize, usize) {
    let a = rng.below(40);
    (a, a + rng.below(12))
}

fn oracle_equivalence() -> Verdict {
    let mut rng = SplitMix64::new(2024);
    let mut worst = [0.0f64; 8];
    let mut bad = Vec::new();
    let mut note = |i: usize, err: f64, tol: f64, name: &str, worst: &mut [f64; 8]| {
        worst[i] = worst[i].max(err);
        if err > tol {
            bad.push(format!("{name}: {err:.3e}"));
        }
    };
    for _ in 0..INSTANCES {
        // contrastive loss, both reductions
        let (n, d) = (2 + rng.below(7), 1 + rng.below(5));
        let z = unit_rows(&mut rng, n, d);
        let labels: Vec<u8> = (0..n).map(|_| rng.below(3) as u8).collect();
        let tau = rng.uniform(0.1, 1.0);
        for (red, mean) in [(Reduction::Sum, false), (Reduction::MeanOverAnchors, true)] {
            let got = supcon_loss(&z.concat(), d, &labels, tau, red).unwrap().value;
            let want = supcon_reference(&z, &labels, tau, mean);
            note(
                0,
                (got - want).abs() / (1.0 + want.abs()),
                1e-9,
                "supcon_loss",
                &mut worst,
            );
        }

        // focal term and the full classification loss
        let alpha = rng.uniform(0.1, 1.0);
        let gamma = rng.uniform(0.0, 3.0);
        let pair = softmax(&[rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)]);
        let target = rng.below(2);
        let got = focal_loss(&pair, target, alpha, gamma);
        let want = focal(pair[target], alpha, gamma);
        note(
            1,
            (got - want).abs() / (1.0 + want.abs()),
            1e-9,
            "focal_loss",
            &mut worst,
        );
        let frames = 1 + rng.below(5);
        let fl = random_labels(&mut rng, frames);
        let logits: Vec<f64> = (0..frames * HEAD_DIM).map(|_| rng.uniform(-4.0, 4.0)).collect();
        let got = classification_loss(&logits, &fl, alpha, gamma).unwrap().value;
        let want = classification_reference(&logits, &fl, alpha, gamma);
        note(
            1,
            (got - want).abs() / (1.0 + want.abs()),
            1e-9,
            "classification loss",
            &mut worst,
        );

        // graph and temporal layers
        let (s, k, cin, cout) = (1 + rng.below(5), 1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(3));
        let t = k + rng.below(6);
        let x: Vec<f64> = (0..s * t * cin).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w: Vec<f64> = (0..k * cin * cout).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..cout).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let adj: Vec<f64> = (0..s * s).map(|_| rng.uniform(0.0, 1.0)).collect();
        let got = stgcn_layer(&x, (s, t, cin), &adj, &w, &b, k).unwrap();
        let want = stgcn_reference(&x, s, t, cin, &adj, &w, &b, k);
        let err = got.iter().zip(&want).map(|(g, r)| (g - r).abs()).fold(0.0, f64::max);
        note(2, err, 1e-6, "stgcn_layer", &mut worst);
        let xt = &x[..t * cin];
        let got = tcn_layer(xt, (t, cin), &w, &b, k).unwrap();
        let want = stgcn_reference(xt, 1, t, cin, &[1.0], &w, &b, k);
        let err = got.iter().zip(&want).map(|(g, r)| (g - r).abs()).fold(0.0, f64::max);
        note(3, err, 1e-6, "tcn_layer", &mut worst);

        // pooling over a random partition of the ten nodes
        let (t, c) = (1 + rng.below(4), 1 + rng.below(3));
        let x: Vec<f64> = (0..10 * t * c).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 5];
        for node in 0..10 {
            groups[rng.below(5)].push(node);
        }
        groups.retain(|g| !g.is_empty());
        let got = flgp_pool(&x, (10, t, c), 10, &groups).unwrap();
        let want = flgp_reference(&x, t, c, &groups);
        let err = got.iter().zip(&want).map(|(g, r)| (g - r).abs()).fold(0.0, f64::max);
        note(4, err, 1e-6, "flgp_pool", &mut worst);

        // suppression, with coarse scores so ties occur
        let theta = [0.1, 0.3, 0.5, 0.7][rng.below(4)];
        let props: Vec<ExpressionProposal> = (0..rng.below(12))
            .map(|_| {
                let (onset, offset) = random_interval(&mut rng);
                ExpressionProposal {
                    video: "v".into(),
                    expr: ExprType::Micro,
                    onset,
                    offset,
                    score: rng.below(6) as f64 / 5.0,
                }
            })
            .collect();
        let same = nms(props.clone(), theta) == nms_reference(props, theta);
        note(5, if same { 0.0 } else { 1.0 }, 0.0, "nms", &mut worst);

        // matching: optimal equals exhaustive search, greedy never beats it
        let theta = [0.3, 0.5, 0.7][rng.below(3)];
        let gts: Vec<_> = (0..rng.below(10)).map(|_| random_interval(&mut rng)).collect();
        let ps: Vec<_> = (0..rng.below(10)).map(|_| random_interval(&mut rng)).collect();
        let best = max_matching_reference(&gts, &ps, theta);
        let greedy = greedy_match(&gts, &ps, theta);
        let valid = greedy.iter().all(|m| inclusive_iou(gts[m.gt], ps[m.proposal]) >= theta);
        let ok = optimal_match_count(&gts, &ps, theta) == best && greedy.len() <= best && valid;
        note(6, if ok { 0.0 } else { 1.0 }, 0.0, "matching", &mut worst);
    }
    let detail = format!(
        "{INSTANCES} instances each; max err supcon {:.1e}, focal {:.1e} (tol 1e-9), stgcn {:.1e}, tcn {:.1e}, flgp {:.1e} (tol 1e-6), nms and matching exact{}",
        worst[0],
        worst[1],
        worst[2],
        worst[3],
        worst[4],
        if bad.is_empty() { String::new() } else { format!("; failures: {}", bad.join(", ")) }
    );
    verdict(bad.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// Receptive field

fn random_clip(rng: &mut SplitMix64, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.normal() as f32).collect()
}

fn receptive_field_property() -> Verdict {
    let cfg = SpotGcnConfig::default();
    let rf = receptive_field(&cfg.kernels);
    let desk_rf = receptive_field(&SpotGcnConfig::desk().kernels);
    let params = init_params::<f64>(&cfg, 5).unwrap();
    let mut rng = SplitMix64::new(9);
    let row = cfg.channels[0] * 10;
    let clip = random_clip(&mut rng, cfg.window * row);

    // central differences of the logits with respect to each frame row
    let h = 1e-3f32;
    let mut weakest = f64::INFINITY;
    for s in 0..cfg.window {
        let dir = random_clip(&mut rng, row);
        let shift = |sign: f32| {
            let mut c = clip.clone();
            for (v, d) in c[s * row..(s + 1) * row].iter_mut().zip(&dir) {
                *v += sign * h * d;
            }
            forward(&cfg, &params, &c).unwrap().logits
        };
        let (up, down) = (shift(1.0), shift(-1.0));
        let sens = up.iter().zip(&down).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / (2.0 * h as f64);
        weakest = weakest.min(sens);
    }

    // the model sees one clip only: wrong lengths are rejected, and changing
    // every other frame's clip leaves a frame's outputs bit-identical
    let rejects = forward(&cfg, &params, &clip[..(cfg.window - 1) * row]).is_err()
        && forward(&cfg, &params, &[clip.clone(), clip[..row].to_vec()].concat()).is_err();
    let n = 24;
    let data = random_clip(&mut rng, n * cfg.window * row);
    let video = FeatureTensor::new(n, cfg.window, 10, data.clone()).unwrap();
    let p32 = init_params::<f32>(&cfg, 5).unwrap();
    let base = infer_video(&cfg, &p32, &video, Exec::Sequential).unwrap();
    let mut isolated = true;
    for i in [0, 11, n - 1] {
        let mut scrambled = data.clone();
        let clip_len = cfg.window * row;
        for (j, v) in scrambled.iter_mut().enumerate() {
            if j / clip_len != i {
                *v = rng.normal() as f32;
            }
        }
        let other = FeatureTensor::new(n, cfg.window, 10, scrambled).unwrap();
        let out = infer_video(&cfg, &p32, &other, Exec::Sequential).unwrap();
        isolated &= out[i] == base[i];
    }
    let ok = rf == 17 && desk_rf == 17 && rf == cfg.window && weakest > 1e-8 && rejects && isolated;
    verdict(
        ok,
        format!(
            "receptive field {rf} (desk {desk_rf}) = window {}; min per-frame sensitivity {weakest:.3e} over all 17 frames; off-length clips rejected: {rejects}; outputs unchanged when other clips change: {isolated}",
            cfg.window
        ),
    )
}

// ---------------------------------------------------------------------------
// Alignment

fn plan_with(n_frames: usize, events: Vec<PlantedEvent>, drift: [(f64, f64); 2], period: f64) -> VideoPlan {
    VideoPlan {
        subject: "s01".into(),
        video: "v01".into(),
        n_frames,
        events,
        blinks: Vec::new(),
        drift,
        drift_period: period,
        texture_seed: 31,
        noise_seed: 32,
    }
}

fn extract(spec: &SynthSpec, plan: &VideoPlan) -> FeatureTensor {
    let video = render_video(spec, plan, Exec::Parallel).unwrap();
    let estimator = BlockMatcher::new(FlowConfig::default());
    extract_video_features(
        &video.frames,
        &video.landmarks,
        &ExtractConfig::default(),
        &estimator,
        Exec::Parallel,
    )
    .unwrap()
}

fn alignment_property() -> Verdict {
    let spec = SynthSpec::default();
    // axes a quarter period apart: constant speed a * 2pi / period, just under 3 px/frame
    let (amp, period) = (8.3, 18.0);
    let drift = plan_with(
        48,
        Vec::new(),
        [(amp, 0.3), (amp, 0.3 + std::f64::consts::FRAC_PI_2)],
        period,
    );
    let peak_speed = (0..48)
        .map(|t| {
            let (a, b) = (drift.head(t as f64), drift.head(t as f64 + 1.0));
            ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    let f = extract(&spec, &drift);
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..f.n_frames() {
        for s in 1..f.window() {
            for r in 0..f.rois() {
                let (dx, dy) = f.at(i, s, r);
                sum += ((dx * dx + dy * dy) as f64).sqrt();
                count += 1;
            }
        }
    }
    let residual = sum / count as f64;

    // a 2 px micro-movement on two regions, no head motion or pixel noise
    let planted = [(1usize, (0.0, -2.0)), (6, (2f64.sqrt(), -(2f64.sqrt())))];
    let event = PlantedEvent {
        expr: ExprType::Micro,
        onset: 40,
        apex: 46,
        offset: 52,
        rois: planted.to_vec(),
    };
    let quiet = SynthSpec {
        noise_sigma: 0.0,
        ..spec.clone()
    };
    let plan = plan_with(96, vec![event], [(0.0, 0.0), (0.0, 0.0)], 90.0);
    let f = extract(&quiet, &plan);
    // clip whose first frame is the onset; row 6 is the apex
    let clip = 40 + f.window() / 2;
    let mut dev: f64 = 0.0;
    for &(r, (px, py)) in &planted {
        let (dx, dy) = f.at(clip, 6, r);
        dev = dev.max((dx as f64 - px).abs()).max((dy as f64 - py).abs());
    }
    let ok = peak_speed <= 3.0 && residual <= 0.1 && dev <= 0.3;
    verdict(
        ok,
        format!(
            "pure drift at up to {peak_speed:.2} px/frame with pixel noise {}: mean residual ROI flow {residual:.4} px (<= 0.1); planted 2 px motion recovered within {dev:.3} px (<= 0.3)",
            spec.noise_sigma
        ),
    )
}

// ---------------------------------------------------------------------------
// End-to-end synthetic spotting

/// Frames drawn per training epoch; keeps 8 folds x 100 epochs inside the budget.
const SAMPLES_PER_EPOCH: usize = 6144;
/// Spotting thresholds used for the synthetic runs.
const THETA_APEX: f64 = 0.3;
const THETA_OVERLAP: f64 = 0.1;

struct SynthData {
    videos: Vec<VideoData>,
    annotations: Vec<AnnotationClip>,
}

fn synthetic_dataset(spec: &SynthSpec) -> SynthData {
    let plans = synth::plan(spec).unwrap();
    let mut annotations = Vec::new();
    for p in &plans {
        annotations.extend(p.annotations());
    }
    let videos = plans
        .iter()
        .map(|p| {
            VideoData::new(
                &p.subject,
                &p.video,
                synth::direct_features(spec, p).unwrap(),
                &annotations,
            )
            .unwrap()
        })
        .collect();
    SynthData { videos, annotations }
}

fn synthetic_experiment(lambda: f64) -> ExperimentConfig {
    let mut train = TrainConfig {
        epochs: 100,
        samples_per_epoch: Some(SAMPLES_PER_EPOCH),
        ..TrainConfig::default()
    };
    train.loss.lambda = lambda;
    ExperimentConfig {
        model: SpotGcnConfig::desk(),
        train,
        spotting: SpottingConfig {
            theta_apex: THETA_APEX,
            theta_overlap: THETA_OVERLAP,
            ..SpottingConfig::default()
        },
        matching: Matching::Greedy,
        ..ExperimentConfig::default()
    }
}

/// First-fold parameters of the end-to-end run, reused by the contrastive check.
static FIRST_FOLD: Mutex<Option<Params<f32>>> = Mutex::new(None);

fn end_to_end() -> Verdict {
    let start = Instant::now();
    let data = synthetic_dataset(&SynthSpec::default());
    let cfg = synthetic_experiment(0.05);
    let outcome = run_loso(&cfg, &data.videos, &data.annotations, Exec::Parallel).unwrap();
    *FIRST_FOLD.lock().unwrap() = Some(outcome.folds[0].params.clone());
    let elapsed = start.elapsed();
    let row = |c| outcome.report.row(c).metrics;
    let (all, me, mae) = (row(Category::Overall), row(Category::ME), row(Category::MaE));
    let ok = all.f1 >= 0.80 && me.f1 >= 0.70 && elapsed <= Duration::from_secs(15 * 60);
    verdict(
        ok,
        format!(
            "8 folds x 100 epochs (desk, {SAMPLES_PER_EPOCH} frames/epoch, theta_apex {THETA_APEX}, theta_overlap {THETA_OVERLAP}): overall F1 {:.4} (>= 0.80), ME F1 {:.4} (>= 0.70), MaE F1 {:.4}, {:.0}s (<= 900s)",
            all.f1,
            me.f1,
            mae.f1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Contrastive effect

fn embedding_gap(cfg: &ExperimentConfig, params: &Params<f32>, held: &[&VideoData]) -> f64 {
    let outputs = infer_videos(&cfg.model, params, held, Exec::Parallel).unwrap();
    let mut z = Vec::new();
    let mut labels = Vec::new();
    for (v, out) in held.iter().zip(outputs) {
        for (i, (o, l)) in out.into_iter().zip(&v.labels).enumerate() {
            // every expression frame, a sample of neutral ones
            if l.frame_type != FrameType::Normal || i % 8 == 0 {
                z.push(o.embedding.z);
                labels.push(Some(l.frame_type));
            }
        }
    }
    cosine_gap(&z, &labels).unwrap()
}

fn contrastive_effect() -> Verdict {
    let data = synthetic_dataset(&SynthSpec::default());
    let test = "s01";
    let held: Vec<&VideoData> = data.videos.iter().filter(|v| v.subject == test).collect();
    let with = synthetic_experiment(0.05);
    let without = synthetic_experiment(0.0);
    let cached = FIRST_FOLD.lock().unwrap().take();
    let p_with = match cached {
        Some(p) => p,
        None => {
            run_fold(&with, &data.videos, &data.annotations, test, None, Exec::Parallel)
                .unwrap()
                .params
        }
    };
    let p_without = run_fold(&without, &data.videos, &data.annotations, test, None, Exec::Parallel)
        .unwrap()
        .params;
    let (g1, g0) = (
        embedding_gap(&with, &p_with, &held),
        embedding_gap(&without, &p_without, &held),
    );
    verdict(
        g1 > g0,
        format!("held-out {test}: same-minus-different cosine gap {g1:.4} with lambda 0.05 vs {g0:.4} with lambda 0"),
    )
}

// ---------------------------------------------------------------------------
// Pipeline determinism

fn spotgcn(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_spotgcn"))
        .current_dir(dir)
        .args(["--threads", "1"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "spotgcn {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    spotgcn(
        dir,
        &[
            "synth",
            "--out",
            "raw",
            "--mode",
            "images",
            "--subjects",
            "2",
            "--videos",
            "1",
            "--frames",
            "160",
            "--micros",
            "1",
            "--macros",
            "1",
        ],
    );
    spotgcn(dir, &["extract", "--dataset-dir", "raw", "--out", "features"]);
    let common = [
        "--features-dir",
        "features",
        "--annotations",
        "raw/annotations.csv",
        "--fold",
        "s01",
        "--model",
        "desk",
    ];
    let mut train = vec!["train", "--out", "run", "--epochs", "3", "--batch", "64"];
    train.extend(common);
    spotgcn(dir, &train);
    let mut spot = vec![
        "spot",
        "--checkpoint",
        "run/model.ckpt",
        "--out",
        "run/proposals.csv",
        "--theta-apex",
        "0.3",
    ];
    spot.extend(common);
    spotgcn(dir, &spot);
    spotgcn(
        dir,
        &[
            "eval",
            "--annotations",
            "raw/annotations.csv",
            "--proposals",
            "run/proposals.csv",
            "--fold",
            "s01",
            "--out",
            "run/report.csv",
        ],
    );
    let mut files = Vec::new();
    for rel in [
        "raw/annotations.csv",
        "raw/s01/v01/landmarks.csv",
        "run/loss_trace.csv",
        "run/proposals.csv",
        "run/report.csv",
    ] {
        files.push((rel.to_string(), std::fs::read(dir.join(rel)).unwrap()));
    }
    for rel in ["features/s01/v01.of1", "features/s02/v01.of1", "run/model.ckpt"] {
        files.push((rel.to_string(), std::fs::read(dir.join(rel)).unwrap()));
    }
    files
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (pipeline(a.path()), pipeline(b.path()));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let csvs = fa.iter().filter(|f| f.0.ends_with(".csv")).count();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "synth -> extract -> train -> spot -> eval twice: {csvs} CSVs, features and checkpoint byte-identical"
            )
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------

fn check(name: &str, criterion: fn() -> Verdict) {
    let start = Instant::now();
    let v = std::panic::catch_unwind(criterion).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let tag = if v.pass { "PASS" } else { "FAIL" };
    emit(&format!(
        "[{tag}] {name} ({:.1}s): {}",
        start.elapsed().as_secs_f64(),
        v.detail
    ));
    assert!(v.pass, "{name}: {}", v.detail);
}

// Numbered so the single-threaded harness runs them in this order; the
// contrastive check reuses the first fold of the end-to-end run.
macro_rules! criteria {
    ($($test:ident => $criterion:ident,)*) => {
        $(
            #[test]
            fn $test() {
                check(stringify!($test), $criterion);
            }
        )*
    };
}

criteria! {
    c1_published_arithmetic => published_arithmetic,
    c2_desk_scale_scope => desk_scale_scope,
    c3_gradient_suite => gradient_suite,
    c4_oracle_equivalence => oracle_equivalence,
    c5_receptive_field => receptive_field_property,
    c6_alignment => alignment_property,
    c7_end_to_end_spotting => end_to_end,
    c8_contrastive_effect => contrastive_effect,
    c9_determinism => determinism,
}
