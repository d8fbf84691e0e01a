//! Facial layout: ten landmark-anchored regions, the nose alignment region,
//! and the three-scale graph hierarchy (10 -> 5 -> 1 nodes) used for pooling.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const NUM_LANDMARKS: usize = 68;
pub const NUM_ROIS: usize = 10;
pub const NOSE_LANDMARK: usize = 30;

pub type Point = (f64, f64);

/// Axis-aligned rectangle given by its center and half extents, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    pub hw: f64,
    pub hh: f64,
}

impl Rect {
    pub fn from_bounds(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            hw: (x1 - x0) / 2.0,
            hh: (y1 - y0) / 2.0,
        }
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.hw
    }
    pub fn x1(&self) -> f64 {
        self.cx + self.hw
    }
    pub fn y0(&self) -> f64 {
        self.cy - self.hh
    }
    pub fn y1(&self) -> f64 {
        self.cy + self.hh
    }

    pub fn width(&self) -> f64 {
        2.0 * self.hw
    }

    pub fn height(&self) -> f64 {
        2.0 * self.hh
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        const EPS: f64 = 1e-9;
        other.x0() >= self.x0() - EPS
            && other.x1() <= self.x1() + EPS
            && other.y0() >= self.y0() - EPS
            && other.y1() <= self.y1() + EPS
    }

    /// Intersection with `bounds`, keeping at least one pixel of extent.
    pub fn clamped_to(&self, bounds: &Rect) -> Self {
        let clamp_axis = |lo: f64, hi: f64, blo: f64, bhi: f64| {
            let min_extent = 1.0f64.min(bhi - blo);
            let mut lo = lo.clamp(blo, bhi);
            let mut hi = hi.clamp(blo, bhi);
            if hi - lo < min_extent {
                let c = ((lo + hi) / 2.0).clamp(blo + min_extent / 2.0, bhi - min_extent / 2.0);
                lo = c - min_extent / 2.0;
                hi = c + min_extent / 2.0;
            }
            (lo, hi)
        };
        let (x0, x1) = clamp_axis(self.x0(), self.x1(), bounds.x0(), bounds.x1());
        let (y0, y1) = clamp_axis(self.y0(), self.y1(), bounds.y0(), bounds.y1());
        Rect::from_bounds(x0, y0, x1, y1)
    }

    /// Integer pixel bounds `[x0, x1) x [y0, y1)`, at least one pixel each way.
    pub fn pixel_bounds(&self) -> (i64, i64, i64, i64) {
        let x0 = self.x0().round() as i64;
        let y0 = self.y0().round() as i64;
        let x1 = (self.x1().round() as i64).max(x0 + 1);
        let y1 = (self.y1().round() as i64).max(y0 + 1);
        (x0, y0, x1, y1)
    }
}

/// How a region center is derived from the 68 landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Landmark(usize),
    Midpoint(usize, usize),
}

impl Anchor {
    pub fn locate(&self, lm: &[Point]) -> Point {
        match *self {
            Anchor::Landmark(i) => lm[i],
            Anchor::Midpoint(a, b) => ((lm[a].0 + lm[b].0) / 2.0, (lm[a].1 + lm[b].1) / 2.0),
        }
    }
}

/// Region anchors in node order: outer and inner brows, glabella, mouth
/// corners, upper and lower lip, chin.
pub const ROI_ANCHORS: [Anchor; NUM_ROIS] = [
    Anchor::Landmark(19),
    Anchor::Landmark(21),
    Anchor::Landmark(22),
    Anchor::Landmark(24),
    Anchor::Midpoint(21, 22),
    Anchor::Landmark(48),
    Anchor::Landmark(54),
    Anchor::Landmark(51),
    Anchor::Landmark(57),
    Anchor::Landmark(8),
];

pub const ROI_NAMES: [&str; NUM_ROIS] = [
    "left_outer_brow",
    "left_inner_brow",
    "right_inner_brow",
    "right_outer_brow",
    "glabella",
    "left_mouth_corner",
    "right_mouth_corner",
    "upper_lip",
    "lower_lip",
    "chin",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    /// Region side as a fraction of the face box side.
    pub roi_fraction: f64,
    pub nose_fraction: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            roi_fraction: 0.1,
            nose_fraction: 0.16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiLayout {
    pub rois: [Rect; NUM_ROIS],
    pub nose: Rect,
    pub bbox: Rect,
}

impl RoiLayout {
    /// All eleven regions, ROIs first and the nose last.
    pub fn regions(&self) -> impl Iterator<Item = &Rect> {
        self.rois.iter().chain(std::iter::once(&self.nose))
    }
}

/// Face box of the landmark extents, grown by `margin` of its size per side.
pub fn face_bbox(landmarks: &[Point], margin: f64) -> Result<Rect> {
    if landmarks.is_empty() {
        return Err(Error::InvalidArgument("no landmarks".into()));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in landmarks {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (mx, my) = ((x1 - x0) * margin, (y1 - y0) * margin);
    Ok(Rect::from_bounds(x0 - mx, y0 - my, x1 + mx, y1 + my))
}

pub fn build_roi_layout(landmarks: &[Point], bbox: &Rect, cfg: &LayoutConfig) -> Result<RoiLayout> {
    if landmarks.len() != NUM_LANDMARKS {
        return Err(Error::InvalidArgument(format!(
            "expected {NUM_LANDMARKS} landmarks, got {}",
            landmarks.len()
        )));
    }
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(Error::DegenerateBox {
            width: bbox.width(),
            height: bbox.height(),
        });
    }
    let region = |center: Point, frac: f64| {
        Rect {
            cx: center.0,
            cy: center.1,
            hw: frac * bbox.width() / 2.0,
            hh: frac * bbox.height() / 2.0,
        }
        .clamped_to(bbox)
    };
    let rois = ROI_ANCHORS.map(|a| region(a.locate(landmarks), cfg.roi_fraction));
    let nose = region(landmarks[NOSE_LANDMARK], cfg.nose_fraction);
    Ok(RoiLayout {
        rois,
        nose,
        bbox: *bbox,
    })
}

/// Frontal 68-point template in the unit square (x right, y down), following
/// the usual jaw / brows / nose / eyes / mouth ordering.
pub fn frontal_template() -> Vec<Point> {
    use std::f64::consts::PI;
    let mut p = Vec::with_capacity(NUM_LANDMARKS);
    // jaw 0..=16, chin at 8
    for i in 0..17 {
        let phi = PI * i as f64 / 16.0;
        p.push((0.5 - 0.5 * phi.cos(), 0.25 + 0.75 * phi.sin()));
    }
    // brows 17..=21 and 22..=26 (mirror)
    let brow: Vec<Point> = (0..5)
        .map(|k| {
            let k = k as f64;
            (0.10 + 0.075 * k, 0.12 - 0.06 * (PI * k / 4.0).sin())
        })
        .collect();
    p.extend(brow.iter().copied());
    p.extend(brow.iter().rev().map(|&(x, y)| (1.0 - x, y)));
    // nose bridge 27..=30, nostrils 31..=35
    for k in 0..4 {
        p.push((0.5, 0.2 + 0.1 * k as f64));
    }
    for k in 0..5 {
        let dy = if k == 2 { 0.02 } else { 0.0 };
        p.push((0.4 + 0.05 * k as f64, 0.56 + dy));
    }
    // eyes 36..=41, 42..=47
    for cx in [0.3, 0.7] {
        for k in 0..6 {
            let phi = PI - PI * k as f64 / 3.0;
            p.push((cx + 0.08 * phi.cos(), 0.25 - 0.03 * phi.sin()));
        }
    }
    // outer lip 48..=59
    let (mx, my) = (0.5, 0.77);
    for k in 0..12 {
        let phi = if k <= 6 {
            PI - PI * k as f64 / 6.0
        } else {
            -PI * (k - 6) as f64 / 6.0
        };
        p.push((mx + 0.17 * phi.cos(), my - 0.07 * phi.sin()));
    }
    // inner lip 60..=67
    for k in 0..8 {
        let phi = if k <= 4 {
            PI - PI * k as f64 / 4.0
        } else {
            -PI * (k - 4) as f64 / 4.0
        };
        p.push((mx + 0.10 * phi.cos(), my - 0.03 * phi.sin()));
    }
    debug_assert_eq!(p.len(), NUM_LANDMARKS);
    p
}

/// Template scaled by `scale` pixels and offset by `origin`.
pub fn place_template(origin: Point, scale: f64) -> Vec<Point> {
    frontal_template()
        .into_iter()
        .map(|(x, y)| (origin.0 + scale * x, origin.1 + scale * y))
        .collect()
}

/// Node counts, edge lists and pooling groups of the three graph scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolHierarchy {
    pub scales: Vec<usize>,
    /// Undirected edges per scale, excluding self-loops.
    pub edges: Vec<Vec<(usize, usize)>>,
    /// `groups[i][g]` lists the scale-`i` nodes pooled into node `g` of scale `i + 1`.
    pub groups: Vec<Vec<Vec<usize>>>,
}

impl Default for PoolHierarchy {
    fn default() -> Self {
        Self {
            scales: vec![10, 5, 1],
            edges: vec![
                // brow chain 0-1-4-2-3, mouth ring 5-7-6-8-5, 8-9, glabella to upper lip
                vec![
                    (0, 1),
                    (1, 4),
                    (4, 2),
                    (2, 3),
                    (5, 7),
                    (7, 6),
                    (6, 8),
                    (8, 5),
                    (8, 9),
                    (4, 7),
                ],
                // left brow - glabella - right brow, glabella - upper mouth - lower mouth
                vec![(0, 2), (2, 1), (2, 3), (3, 4)],
                vec![],
            ],
            groups: vec![
                vec![vec![0, 1], vec![2, 3], vec![4], vec![5, 6, 7], vec![8, 9]],
                vec![vec![0, 1, 2, 3, 4]],
            ],
        }
    }
}

impl PoolHierarchy {
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() != self.scales.len() || self.groups.len() + 1 != self.scales.len() {
            return Err(Error::Config("hierarchy: inconsistent scale counts".into()));
        }
        for (s, edges) in self.edges.iter().enumerate() {
            if edges
                .iter()
                .any(|&(a, b)| a >= self.scales[s] || b >= self.scales[s] || a == b)
            {
                return Err(Error::Config(format!("hierarchy: bad edge at scale {s}")));
            }
        }
        for (i, groups) in self.groups.iter().enumerate() {
            if groups.len() != self.scales[i + 1] {
                return Err(Error::Config(format!(
                    "hierarchy: transition {i} has {} groups for {} nodes",
                    groups.len(),
                    self.scales[i + 1]
                )));
            }
            let mut seen = vec![false; self.scales[i]];
            for &n in groups.iter().flatten() {
                if n >= seen.len() || seen[n] {
                    return Err(Error::Config(format!(
                        "hierarchy: transition {i} groups are not a partition"
                    )));
                }
                seen[n] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Config(format!(
                    "hierarchy: transition {i} groups do not cover all nodes"
                )));
            }
        }
        Ok(())
    }

    /// Symmetric 0/1 adjacency of the scale with self-loops, row-major.
    pub fn adjacency(&self, scale: usize) -> Result<Vec<f64>> {
        let n = *self.scales.get(scale).ok_or(Error::ScaleOutOfRange(scale))?;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        for &(i, j) in &self.edges[scale] {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
        Ok(a)
    }

    pub fn normalized_adjacency(&self, scale: usize) -> Result<Vec<f64>> {
        let a = self.adjacency(scale)?;
        normalize_adjacency(&a, self.scales[scale])
    }

    /// Max-pool `S x T x C` node features through one transition.
    pub fn pool(&self, features: &[f64], dims: (usize, usize, usize), transition: usize) -> Result<Vec<f64>> {
        let groups = self.groups.get(transition).ok_or(Error::ScaleOutOfRange(transition))?;
        flgp_pool(features, dims, self.scales[transition], groups)
    }
}

/// `D^-1/2 A D^-1/2` with `D` the row sums.
pub fn normalize_adjacency(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::ShapeMismatch(format!("{} entries for {n} nodes", a.len())));
    }
    let d: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    if let Some(i) = d.iter().position(|&x| x <= 0.0) {
        return Err(Error::ZeroAdjacencyRow(i));
    }
    let inv: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    Ok((0..n * n).map(|k| a[k] * inv[k / n] * inv[k % n]).collect())
}

/// Facial local graph pooling on one sample: `out[g, t, c] = max_{s in g} in[s, t, c]`.
pub fn flgp_pool(
    features: &[f64],
    (s, t, c): (usize, usize, usize),
    expected_nodes: usize,
    groups: &[Vec<usize>],
) -> Result<Vec<f64>> {
    if s != expected_nodes || features.len() != s * t * c {
        return Err(Error::ShapeMismatch(format!(
            "pool: {} values as {s}x{t}x{c} for a {expected_nodes}-node scale",
            features.len()
        )));
    }
    let per = t * c;
    let mut out = Vec::with_capacity(groups.len() * per);
    for group in groups {
        for e in 0..per {
            let m = group
                .iter()
                .map(|&n| features[n * per + e])
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(m);
        }
    }
    Ok(out)
}

/// Serializable description of the regions and hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDescription {
    pub roi_names: Vec<String>,
    pub roi_anchors: Vec<Anchor>,
    pub nose_anchor: Anchor,
    pub layout: LayoutConfig,
    pub hierarchy: PoolHierarchy,
}

impl Default for GraphDescription {
    fn default() -> Self {
        Self {
            roi_names: ROI_NAMES.iter().map(|s| s.to_string()).collect(),
            roi_anchors: ROI_ANCHORS.to_vec(),
            nose_anchor: Anchor::Landmark(NOSE_LANDMARK),
            layout: LayoutConfig::default(),
            hierarchy: PoolHierarchy::default(),
        }
    }
}
