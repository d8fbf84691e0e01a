//! Sliding-window partitioning and per-clip ROI flow features.

use super::flow::FlowEstimator;
use super::image::{GrayImage, Pyramid};
use crate::error::{Error, Result};
use crate::graph::{build_roi_layout, face_bbox, LayoutConfig, Point, Rect, RoiLayout, NUM_ROIS};
use crate::par::{self, Exec};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

/// Flow components per ROI.
pub const FLOW_DIMS: usize = 2;

/// One clip per original frame over the padded sequence: clip `i` covers
/// padded indices `[i, i + w)` and is centered on original frame `i`.
pub fn partition_windows(n_frames: usize, window: usize) -> Result<Vec<Range<usize>>> {
    if window.is_multiple_of(2) {
        return Err(Error::EvenWindow(window));
    }
    if n_frames == 0 {
        return Err(Error::InvalidArgument("video has no frames".into()));
    }
    Ok((0..n_frames).map(|i| i..i + window).collect())
}

/// Original frame shown at padded index `p` (first and last frames repeated
/// `w / 2` times at either end).
pub fn padded_source(p: usize, n_frames: usize, window: usize) -> usize {
    (p as i64 - (window / 2) as i64).clamp(0, n_frames as i64 - 1) as usize
}

/// Optical-flow features of a whole video, `N x w x R x 2`, pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    n_frames: usize,
    window: usize,
    rois: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(n_frames: usize, window: usize, rois: usize, data: Vec<f32>) -> Result<Self> {
        let expect = n_frames
            .checked_mul(window)
            .and_then(|x| x.checked_mul(rois))
            .and_then(|x| x.checked_mul(FLOW_DIMS))
            .ok_or_else(|| Error::DimensionOverflow(format!("{n_frames}x{window}x{rois}")))?;
        if expect != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{n_frames}x{window}x{rois}x{FLOW_DIMS} features with {} values",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self {
            n_frames,
            window,
            rois,
            data,
        })
    }

    pub fn zeros(n_frames: usize, window: usize, rois: usize) -> Self {
        Self {
            n_frames,
            window,
            rois,
            data: vec![0.0; n_frames * window * rois * FLOW_DIMS],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn rois(&self) -> usize {
        self.rois
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn clip_len(&self) -> usize {
        self.window * self.rois * FLOW_DIMS
    }

    /// Features `o_i`, `w x R x 2`.
    pub fn clip(&self, i: usize) -> &[f32] {
        let l = self.clip_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn clip_mut(&mut self, i: usize) -> &mut [f32] {
        let l = self.clip_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    /// Flow of ROI `r` at window row `s` of clip `i`.
    pub fn at(&self, i: usize, s: usize, r: usize) -> (f32, f32) {
        let base = ((i * self.window + s) * self.rois + r) * FLOW_DIMS;
        (self.data[base], self.data[base + 1])
    }
}

pub const FEATURE_MAGIC: &[u8; 8] = b"SPOT-OF1";
pub const FEATURE_VERSION: u32 = 1;

pub fn encode_features(t: &FeatureTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + t.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    for v in [
        FEATURE_VERSION,
        t.n_frames as u32,
        t.window as u32,
        t.rois as u32,
        FLOW_DIMS as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for x in &t.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_features(buf: &[u8]) -> Result<FeatureTensor> {
    if buf.len() < 8 || &buf[..8] != FEATURE_MAGIC {
        return Err(Error::BadMagic("feature file".into()));
    }
    if buf.len() < 28 {
        return Err(Error::TruncatedPayload("feature header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(buf[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (n, w, r, d) = (word(1) as u64, word(2) as u64, word(3) as u64, word(4) as u64);
    if d != FLOW_DIMS as u64 {
        return Err(Error::InvalidArgument(format!("flow dimension {d}, expected 2")));
    }
    let count = n
        .checked_mul(w)
        .and_then(|x| x.checked_mul(r))
        .and_then(|x| x.checked_mul(d))
        .filter(|&c| c <= (usize::MAX / 4) as u64)
        .ok_or_else(|| Error::DimensionOverflow(format!("{n}x{w}x{r}x{d}")))?;
    let payload = &buf[28..];
    if (payload.len() as u64) < count * 4 {
        return Err(Error::TruncatedPayload(format!(
            "expected {} payload bytes, found {}",
            count * 4,
            payload.len()
        )));
    }
    let data = payload[..count as usize * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureTensor::new(n as usize, w as usize, r as usize, data)
}

pub fn write_features(path: &Path, t: &FeatureTensor) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_features(t)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureTensor> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_features(&buf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    pub window: usize,
    pub layout: LayoutConfig,
    /// Face box margin around the landmark extents.
    pub bbox_margin: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            window: 17,
            layout: LayoutConfig::default(),
            bbox_margin: 0.1,
        }
    }
}

/// Layout for a frame given its landmarks, with the face box kept inside the image.
pub fn layout_for(landmarks: &[Point], img: &GrayImage, cfg: &ExtractConfig) -> Result<RoiLayout> {
    let bbox = face_bbox(landmarks, cfg.bbox_margin)?;
    let image = Rect::from_bounds(0.0, 0.0, img.width() as f64, img.height() as f64);
    let bbox = bbox.clamped_to(&image);
    build_roi_layout(landmarks, &bbox, &cfg.layout)
}

/// Features `o_i` of one clip (`frames[0]` is the anchor frame), `w x R x 2`.
///
/// For every later frame the nose flow from the anchor is measured first
/// (chained from the previous frame's estimate). The ROI boxes are then shifted
/// by the rounded nose flow, each ROI's flow from the anchor is measured, and
/// the nose flow is subtracted so that only motion relative to the head remains.
pub fn extract_clip_features(
    frames: &[&Pyramid],
    layout: &RoiLayout,
    estimator: &dyn FlowEstimator,
) -> Result<Vec<f32>> {
    let w = frames.len();
    let mut out = vec![0.0f32; w * NUM_ROIS * FLOW_DIMS];
    let first = frames[0];
    let mut nose_prior = (0.0, 0.0);
    for (s, frame) in frames.iter().enumerate().skip(1) {
        if std::ptr::eq(*frame, first) {
            continue;
        }
        let nose = estimator.region_flow(first, frame, &layout.nose, nose_prior)?;
        let shift = (nose.dx.round(), nose.dy.round());
        nose_prior = shift;
        for (r, roi) in layout.rois.iter().enumerate() {
            let f = estimator.region_flow(first, frame, roi, shift)?;
            let base = (s * NUM_ROIS + r) * FLOW_DIMS;
            out[base] = (f.dx - nose.dx) as f32;
            out[base + 1] = (f.dy - nose.dy) as f32;
        }
    }
    Ok(out)
}

/// Stack clip features over the whole video. `landmarks[k]` belongs to frame `k`.
pub fn extract_video_features(
    frames: &[GrayImage],
    landmarks: &[Vec<Point>],
    cfg: &ExtractConfig,
    estimator: &dyn FlowEstimator,
    exec: Exec,
) -> Result<FeatureTensor> {
    if frames.len() != landmarks.len() {
        return Err(Error::FrameCountMismatch(format!(
            "{} frames but {} landmark rows",
            frames.len(),
            landmarks.len()
        )));
    }
    let n = frames.len();
    let clips = partition_windows(n, cfg.window)?;
    let pyramids = par::map_slice(exec, frames, |f| Pyramid::new(f, estimator.levels()));
    let rows = par::try_map_indexed(exec, n, |i| {
        let range = &clips[i];
        let src: Vec<usize> = range.clone().map(|p| padded_source(p, n, cfg.window)).collect();
        let layout = layout_for(&landmarks[src[0]], &frames[src[0]], cfg)?;
        let clip: Vec<&Pyramid> = src.iter().map(|&k| &pyramids[k]).collect();
        extract_clip_features(&clip, &layout, estimator)
    })?;
    FeatureTensor::new(n, cfg.window, NUM_ROIS, rows.concat())
}
