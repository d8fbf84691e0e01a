//! Synthetic faces with planted expressions, head drift and noise.
//!
//! Each video is planned first (events, drift path, blinks); the plan can then
//! be rendered to frames and landmarks, or turned straight into a feature
//! tensor. Both paths use the same [`motion_profile`].

pub mod texture;

use crate::error::{Error, Result};
use crate::expr::ExprType;
use crate::graph::{build_roi_layout, face_bbox, place_template, LayoutConfig, Point, Rect, NUM_ROIS};
use crate::motion::features::{padded_source, FeatureTensor, FLOW_DIMS};
use crate::motion::image::GrayImage;
use crate::numcore::rng::label;
use crate::numcore::SplitMix64;
use crate::par::{self, Exec};
use crate::trainer::AnnotationClip;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use texture::Texture;

/// Raised-cosine displacement: 0 at `onset`, `peak` at `apex`, 0 at `offset`
/// and outside; continuous with a continuous first derivative.
pub fn motion_profile(t: f64, onset: f64, apex: f64, offset: f64, peak: f64) -> Result<f64> {
    if !(onset < apex && apex < offset) {
        return Err(Error::InvalidArgument(format!(
            "profile needs onset < apex < offset, got {onset}, {apex}, {offset}"
        )));
    }
    Ok(profile(t, onset, apex, offset, peak))
}

fn profile(t: f64, onset: f64, apex: f64, offset: f64, peak: f64) -> f64 {
    if t <= onset || t >= offset {
        0.0
    } else if t <= apex {
        peak * 0.5 * (1.0 - (PI * (t - onset) / (apex - onset)).cos())
    } else {
        peak * 0.5 * (1.0 + (PI * (t - apex) / (offset - apex)).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub videos_per_subject: usize,
    pub frames_per_video: usize,
    pub micro_per_video: usize,
    pub macro_per_video: usize,
    /// Inclusive frame-count ranges (`offset - onset + 1`).
    pub micro_frames: (usize, usize),
    pub macro_frames: (usize, usize),
    /// Peak ROI displacement ranges in pixels.
    pub micro_intensity: (f64, f64),
    pub macro_intensity: (f64, f64),
    pub drift_amplitude: f64,
    pub drift_period: f64,
    pub noise_sigma: f64,
    pub blinks_per_video: usize,
    pub image_size: usize,
    pub face_scale: f64,
    pub window: usize,
    /// Direct-feature mode: fraction of head drift left in the ROI flows.
    pub drift_leak: f64,
    /// Direct-feature mode: Gaussian noise on every flow component, pixels.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 8,
            videos_per_subject: 4,
            frames_per_video: 600,
            micro_per_video: 3,
            macro_per_video: 3,
            micro_frames: (6, 14),
            macro_frames: (16, 60),
            micro_intensity: (1.5, 2.5),
            macro_intensity: (3.0, 5.0),
            drift_amplitude: 3.0,
            drift_period: 90.0,
            noise_sigma: 1.0,
            blinks_per_video: 2,
            image_size: 128,
            face_scale: 90.0,
            window: 17,
            drift_leak: 0.02,
            feature_noise: 0.05,
            seed: 7,
        }
    }
}

/// Frame count that separates the two classes (0.5 s at 30 fps).
pub const MICRO_LIMIT: usize = 15;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_subjects == 0 || self.videos_per_subject == 0 || self.frames_per_video == 0 {
            return bad("empty dataset");
        }
        let (a, b) = self.micro_frames;
        if a < 3 || a > b || b >= MICRO_LIMIT {
            return bad("micro frame counts must lie in [3, 14]");
        }
        let (c, d) = self.macro_frames;
        if c <= MICRO_LIMIT || c > d {
            return bad("macro frame counts must be at least 16");
        }
        for (lo, hi) in [self.micro_intensity, self.macro_intensity] {
            if !(0.0 <= lo && lo <= hi) {
                return bad("intensity ranges must be ordered and nonnegative");
            }
        }
        if self.drift_amplitude < 0.0 || self.noise_sigma < 0.0 || self.feature_noise < 0.0 {
            return bad("amplitudes must be nonnegative");
        }
        if self.drift_amplitude > 0.0 && (self.drift_period.is_nan() || self.drift_period <= 0.0) {
            return bad("drift period must be positive");
        }
        if 2.0 * PI * self.drift_amplitude / self.drift_period.max(1e-9) > 3.0 * 2.0f64.sqrt() {
            return bad("head drift exceeds 3 px per frame per axis");
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::EvenWindow(self.window));
        }
        let events = self.micro_per_video + self.macro_per_video;
        let longest = if self.macro_per_video > 0 { d } else { b };
        if self
            .frames_per_video
            .checked_div(events)
            .is_some_and(|slot| slot < longest + 20)
        {
            return bad("too many events for the video length");
        }
        Ok(())
    }

    fn face_origin(&self) -> Point {
        let s = self.image_size as f64;
        ((s - self.face_scale) / 2.0, (s - self.face_scale) / 2.0)
    }
}

/// One planted expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub expr: ExprType,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    /// Peak displacement vector per active ROI.
    pub rois: Vec<(usize, (f64, f64))>,
}

impl PlantedEvent {
    /// Displacement of ROI `r` at frame `t`.
    pub fn displacement(&self, r: usize, t: f64) -> (f64, f64) {
        self.rois
            .iter()
            .filter(|(i, _)| *i == r)
            .map(|&(_, (dx, dy))| {
                let w = profile(t, self.onset as f64, self.apex as f64, self.offset as f64, 1.0);
                (w * dx, w * dy)
            })
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blink {
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPlan {
    pub subject: String,
    pub video: String,
    pub n_frames: usize,
    pub events: Vec<PlantedEvent>,
    pub blinks: Vec<Blink>,
    /// Drift amplitude and phase per axis.
    pub drift: [(f64, f64); 2],
    pub drift_period: f64,
    pub texture_seed: u64,
    pub noise_seed: u64,
}

impl VideoPlan {
    pub fn head(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * PI / self.drift_period;
        let [(ax, px), (ay, py)] = self.drift;
        (
            ax * ((w * t + px).sin() - px.sin()),
            ay * ((w * t + py).sin() - py.sin()),
        )
    }

    /// Total expression displacement of ROI `r` at frame `t`.
    pub fn roi_displacement(&self, r: usize, t: f64) -> (f64, f64) {
        self.events
            .iter()
            .map(|e| e.displacement(r, t))
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    }

    pub fn annotations(&self) -> Vec<AnnotationClip> {
        self.events
            .iter()
            .map(|e| AnnotationClip {
                subject: self.subject.clone(),
                video: self.video.clone(),
                expr: e.expr,
                onset: e.onset,
                apex: Some(e.apex),
                offset: e.offset,
            })
            .collect()
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.subject, self.video)
    }
}

/// Motion direction templates per ROI, as angles (radians, y down).
const ROI_DIRECTIONS: [f64; NUM_ROIS] = [
    -PI / 2.0, // outer brows raise
    -PI / 2.0, // inner brows raise
    -PI / 2.0,
    -PI / 2.0,
    PI / 2.0,        // glabella lowers
    -3.0 * PI / 4.0, // mouth corners pull up and out
    -PI / 4.0,
    -PI / 2.0, // upper lip raises
    PI / 2.0,  // lower lip and chin drop
    PI / 2.0,
];

const BROW_ROIS: [usize; 5] = [0, 1, 2, 3, 4];
const MOUTH_ROIS: [usize; 5] = [5, 6, 7, 8, 9];

fn pick_rois(rng: &mut SplitMix64, expr: ExprType, peak: f64) -> Vec<(usize, (f64, f64))> {
    let group: &[usize] = if rng.below(2) == 0 { &BROW_ROIS } else { &MOUTH_ROIS };
    let count = match expr {
        ExprType::Micro => rng.range_inclusive(1, 2),
        ExprType::Macro => rng.range_inclusive(3, 5),
    };
    let mut idx = group.to_vec();
    rng.shuffle(&mut idx);
    let mut chosen: Vec<usize> = idx[..count].to_vec();
    if expr == ExprType::Macro && rng.below(2) == 0 {
        // macro expressions often involve both halves of the face
        let other: &[usize] = if group == BROW_ROIS { &MOUTH_ROIS } else { &BROW_ROIS };
        chosen.push(other[rng.below(other.len())]);
    }
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|r| {
            let a = ROI_DIRECTIONS[r] + rng.uniform(-0.4, 0.4);
            let m = peak * rng.uniform(0.85, 1.0);
            (r, (m * a.cos(), m * a.sin()))
        })
        .collect()
}

fn plan_video(spec: &SynthSpec, subject: usize, video: usize) -> VideoPlan {
    let mut rng = SplitMix64::derive(spec.seed, &[label("video"), subject as u64, video as u64]);
    let n = spec.frames_per_video;
    let mut kinds: Vec<ExprType> = std::iter::repeat_n(ExprType::Micro, spec.micro_per_video)
        .chain(std::iter::repeat_n(ExprType::Macro, spec.macro_per_video))
        .collect();
    rng.shuffle(&mut kinds);
    let seg = if kinds.is_empty() { n } else { n / kinds.len() };
    let mut events = Vec::with_capacity(kinds.len());
    for (k, &expr) in kinds.iter().enumerate() {
        let ((lo, hi), (pl, ph)) = match expr {
            ExprType::Micro => (spec.micro_frames, spec.micro_intensity),
            ExprType::Macro => (spec.macro_frames, spec.macro_intensity),
        };
        let frames = rng.range_inclusive(lo, hi);
        let slack = seg - frames - 20;
        let onset = k * seg + 10 + rng.below(slack + 1);
        let offset = onset + frames - 1;
        let span = (offset - onset) as f64;
        let apex = (onset + (span * rng.uniform(0.3, 0.6)).round() as usize).clamp(onset + 1, offset - 1);
        let peak = rng.uniform(pl, ph);
        let rois = pick_rois(&mut rng, expr, peak);
        events.push(PlantedEvent {
            expr,
            onset,
            apex,
            offset,
            rois,
        });
    }
    let blinks = (0..spec.blinks_per_video)
        .filter_map(|_| {
            let len = rng.range_inclusive(6, 10);
            if n <= len + 1 {
                return None;
            }
            let onset = rng.below(n - len);
            Some(Blink {
                onset,
                apex: onset + len / 2,
                offset: onset + len,
                peak: rng.uniform(2.0, 3.0),
            })
        })
        .collect();
    let amp = spec.drift_amplitude;
    let drift = [
        (amp * rng.uniform(0.5, 1.0), rng.uniform(0.0, 2.0 * PI)),
        (amp * rng.uniform(0.5, 1.0), rng.uniform(0.0, 2.0 * PI)),
    ];
    VideoPlan {
        subject: format!("s{:02}", subject + 1),
        video: format!("v{:02}", video + 1),
        n_frames: n,
        events,
        blinks,
        drift,
        drift_period: spec.drift_period.max(1e-9),
        texture_seed: SplitMix64::derive(spec.seed, &[label("texture"), subject as u64]).next_u64(),
        noise_seed: rng.next_u64(),
    }
}

/// Plan every video of the dataset, in (subject, video) order.
pub fn plan(spec: &SynthSpec) -> Result<Vec<VideoPlan>> {
    spec.validate()?;
    Ok((0..spec.n_subjects)
        .flat_map(|s| (0..spec.videos_per_subject).map(move |v| (s, v)))
        .map(|(s, v)| plan_video(spec, s, v))
        .collect())
}

/// Weight of a region's displacement at head-frame point `q`: 1 inside the
/// region grown by `grow`, raised-cosine falloff over `fall` pixels.
fn bump(q: Point, r: &Rect, grow: f64, fall: f64) -> f64 {
    let axis = |d: f64, half: f64| {
        let e = d.abs() - (half + grow);
        if e <= 0.0 {
            1.0
        } else if e >= fall {
            0.0
        } else {
            0.5 * (1.0 + (PI * e / fall).cos())
        }
    };
    axis(q.0 - r.cx, r.hw) * axis(q.1 - r.cy, r.hh)
}

const BUMP_GROW: f64 = 2.0;
const BUMP_FALL: f64 = 3.0;

/// Frames and per-frame landmarks of one planned video.
pub struct RenderedVideo {
    pub frames: Vec<GrayImage>,
    pub landmarks: Vec<Vec<Point>>,
}

pub fn render_video(spec: &SynthSpec, plan: &VideoPlan, exec: Exec) -> Result<RenderedVideo> {
    let base = place_template(spec.face_origin(), spec.face_scale);
    let bbox = face_bbox(&base, 0.1)?;
    let layout = build_roi_layout(&base, &bbox, &LayoutConfig::default())?;
    let tex = Texture::new(plan.texture_seed, 12);
    let eye = |first: usize| {
        let pts = &base[first..first + 6];
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / 6.0;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / 6.0;
        Rect {
            cx,
            cy,
            hw: 0.08 * spec.face_scale,
            hh: 0.03 * spec.face_scale,
        }
    };
    let eyes = [eye(36), eye(42)];
    let size = spec.image_size;
    let frames = par::map_indexed(exec, plan.n_frames, |f| {
        let t = f as f64;
        let h = plan.head(t);
        let disp: Vec<(f64, f64)> = (0..NUM_ROIS).map(|r| plan.roi_displacement(r, t)).collect();
        let lid: f64 = plan
            .blinks
            .iter()
            .map(|b| profile(t, b.onset as f64, b.apex as f64, b.offset as f64, b.peak))
            .sum();
        let active: Vec<usize> = (0..NUM_ROIS).filter(|&r| disp[r] != (0.0, 0.0)).collect();
        let mut rng = SplitMix64::derive(plan.noise_seed, &[f as u64]);
        let noise: Vec<f64> = if spec.noise_sigma > 0.0 {
            (0..size * size).map(|_| spec.noise_sigma * rng.normal()).collect()
        } else {
            vec![0.0; size * size]
        };
        GrayImage::from_fn(size, size, |x, y| {
            let q = (x as f64 - h.0, y as f64 - h.1);
            let (mut ux, mut uy) = (0.0, 0.0);
            for &r in &active {
                let w = bump(q, &layout.rois[r], BUMP_GROW, BUMP_FALL);
                ux += w * disp[r].0;
                uy += w * disp[r].1;
            }
            if lid != 0.0 {
                for e in &eyes {
                    uy += lid * bump(q, e, 0.0, BUMP_FALL);
                }
            }
            let v = tex.eval(q.0 - ux, q.1 - uy) as f64;
            (v + noise[y * size + x]).clamp(0.0, 255.0) as f32
        })
    });
    let landmarks = (0..plan.n_frames)
        .map(|f| {
            let h = plan.head(f as f64);
            base.iter().map(|&(x, y)| (x + h.0, y + h.1)).collect()
        })
        .collect();
    Ok(RenderedVideo { frames, landmarks })
}

/// Feature tensor of a planned video without rendering: the planted ROI
/// displacement between each window frame and the window's first frame,
/// plus a small residual of head drift and Gaussian measurement noise.
pub fn direct_features(spec: &SynthSpec, plan: &VideoPlan) -> Result<FeatureTensor> {
    let (n, w) = (plan.n_frames, spec.window);
    let mut out = FeatureTensor::zeros(n, w, NUM_ROIS);
    let disp: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|f| (0..NUM_ROIS).map(|r| plan.roi_displacement(r, f as f64)).collect())
        .collect();
    let mut rng = SplitMix64::derive(plan.noise_seed, &[label("direct")]);
    for i in 0..n {
        let a = padded_source(i, n, w);
        let ha = plan.head(a as f64);
        let clip = out.clip_mut(i);
        for s in 1..w {
            let b = padded_source(i + s, n, w);
            let hb = plan.head(b as f64);
            for (r, (db, da)) in disp[b].iter().zip(&disp[a]).enumerate() {
                let base = (s * NUM_ROIS + r) * FLOW_DIMS;
                let dx = db.0 - da.0 + spec.drift_leak * (hb.0 - ha.0);
                let dy = db.1 - da.1 + spec.drift_leak * (hb.1 - ha.1);
                clip[base] = (dx + spec.feature_noise * rng.normal()) as f32;
                clip[base + 1] = (dy + spec.feature_noise * rng.normal()) as f32;
            }
        }
    }
    Ok(out)
}

/// Render a dataset to `dir`: `annotations.csv` plus, per video,
/// `<subject>/<video>/frame_NNNNN.png` and `<subject>/<video>/landmarks.csv`.
pub fn write_image_dataset(spec: &SynthSpec, dir: &Path, exec: Exec) -> Result<Vec<VideoPlan>> {
    let plans = plan(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let annotations: Vec<AnnotationClip> = plans.iter().flat_map(VideoPlan::annotations).collect();
    crate::trainer::write_annotations(&dir.join("annotations.csv"), &annotations)?;
    for p in &plans {
        let vdir = dir.join(&p.subject).join(&p.video);
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        let r = render_video(spec, p, exec)?;
        par::try_map_indexed(exec, r.frames.len(), |f| {
            r.frames[f].save(&vdir.join(format!("frame_{f:05}.png")))
        })?;
        crate::motion::landmarks::write_landmarks(&vdir.join("landmarks.csv"), &r.landmarks)?;
    }
    Ok(plans)
}

/// Write direct-mode features to `dir/<subject>/<video>.of1` plus `annotations.csv`.
pub fn write_feature_dataset(spec: &SynthSpec, dir: &Path, exec: Exec) -> Result<Vec<VideoPlan>> {
    let plans = plan(spec)?;
    let annotations: Vec<AnnotationClip> = plans.iter().flat_map(VideoPlan::annotations).collect();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::trainer::write_annotations(&dir.join("annotations.csv"), &annotations)?;
    let feats = par::try_map_indexed(exec, plans.len(), |i| direct_features(spec, &plans[i]))?;
    for (p, f) in plans.iter().zip(&feats) {
        let sdir = dir.join(&p.subject);
        std::fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        crate::motion::features::write_features(&sdir.join(format!("{}.of1", p.video)), f)?;
    }
    Ok(plans)
}
