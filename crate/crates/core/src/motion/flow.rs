//! Region-mean optical flow by coarse-to-fine block matching.
//!
//! The region is tiled with square blocks. Each block is matched from frame
//! `a` into frame `b` by exhaustive SSD search over a small radius at every
//! pyramid level, starting from the coarsest; the finest level also searches
//! around the caller's prior. The integer optimum is refined with a parabolic
//! fit per axis and optionally polished by a few Lucas-Kanade iterations. The
//! region flow is the mean of its block flows.

use super::image::{GrayImage, Pyramid};
use crate::error::{Error, Result};
use crate::graph::Rect;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub levels: usize,
    pub search_radius: i64,
    pub block: usize,
    /// Lucas-Kanade polish iterations after the parabolic fit.
    pub refine_iterations: usize,
    /// Mean squared gradient below which a block counts as textureless.
    pub min_texture: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            search_radius: 4,
            block: 8,
            refine_iterations: 2,
            min_texture: 1.0,
        }
    }
}

/// Mean displacement of a region from frame `a` to frame `b`, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionFlow {
    pub dx: f64,
    pub dy: f64,
    /// False when most blocks were textureless or the cost surface was flat.
    pub confident: bool,
}

/// Anything that can estimate the mean flow of a region between two frames.
pub trait FlowEstimator: Sync {
    fn levels(&self) -> usize;

    fn region_flow(&self, a: &Pyramid, b: &Pyramid, region: &Rect, prior: (f64, f64)) -> Result<RegionFlow>;
}

/// Pyramidal block matcher.
#[derive(Debug, Clone, Default)]
pub struct BlockMatcher {
    pub cfg: FlowConfig,
}

impl BlockMatcher {
    pub fn new(cfg: FlowConfig) -> Self {
        Self { cfg }
    }
}

impl FlowEstimator for BlockMatcher {
    fn levels(&self) -> usize {
        self.cfg.levels
    }

    fn region_flow(&self, a: &Pyramid, b: &Pyramid, region: &Rect, prior: (f64, f64)) -> Result<RegionFlow> {
        region_flow_pyr(a, b, region, prior, &self.cfg)
    }
}

/// Convenience wrapper building the pyramids on the fly.
pub fn estimate_region_flow(a: &GrayImage, b: &GrayImage, region: &Rect, cfg: &FlowConfig) -> Result<RegionFlow> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "frames {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let pa = Pyramid::new(a, cfg.levels);
    let pb = Pyramid::new(b, cfg.levels);
    region_flow_pyr(&pa, &pb, region, (0.0, 0.0), cfg)
}

fn block_origins(lo: i64, hi: i64, block: i64) -> Vec<i64> {
    let len = hi - lo;
    if len <= block {
        return vec![lo + len / 2 - block / 2];
    }
    let n = (len + block - 1) / block;
    let span = len - block;
    (0..n).map(|i| lo + (span * i + (n - 1) / 2) / (n - 1)).collect()
}

pub fn region_flow_pyr(
    a: &Pyramid,
    b: &Pyramid,
    region: &Rect,
    prior: (f64, f64),
    cfg: &FlowConfig,
) -> Result<RegionFlow> {
    let img = a.base();
    let (x0, y0, x1, y1) = region.pixel_bounds();
    if x0 < 0 || y0 < 0 || x1 > img.width() as i64 || y1 > img.height() as i64 {
        return Err(Error::RegionOutsideImage(format!(
            "[{x0}, {x1}) x [{y0}, {y1}) in {}x{}",
            img.width(),
            img.height()
        )));
    }
    let block = cfg.block as i64;
    let (xs, ys) = (block_origins(x0, x1, block), block_origins(y0, y1, block));
    let (mut sx, mut sy, mut confident) = (0.0, 0.0, 0usize);
    for &by in &ys {
        for &bx in &xs {
            let f = match_block(a, b, bx, by, prior, cfg);
            sx += f.dx;
            sy += f.dy;
            confident += f.confident as usize;
        }
    }
    let n = (xs.len() * ys.len()) as f64;
    Ok(RegionFlow {
        dx: sx / n,
        dy: sy / n,
        confident: confident as f64 >= n / 2.0,
    })
}

fn ssd(a: &GrayImage, b: &GrayImage, ax: i64, ay: i64, bx: i64, by: i64, size: i64) -> f64 {
    let mut s = 0.0f64;
    for y in 0..size {
        let mut row = 0.0f32;
        for x in 0..size {
            let d = a.at_clamped(ax + x, ay + y) - b.at_clamped(bx + x, by + y);
            row += d * d;
        }
        s += row as f64;
    }
    s
}

/// Best integer offset within `radius` of each center, and its cost.
fn search(
    a: &GrayImage,
    b: &GrayImage,
    ax: i64,
    ay: i64,
    centers: &[(i64, i64)],
    radius: i64,
    size: i64,
) -> ((i64, i64), f64) {
    let mut best = ((0, 0), f64::INFINITY);
    for &(cx, cy) in centers {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let d = (cx + dx, cy + dy);
                let c = ssd(a, b, ax, ay, ax + d.0, ay + d.1, size);
                // strict: earlier candidates win ties, keeping results deterministic
                if c < best.1 {
                    best = (d, c);
                }
            }
        }
    }
    best
}

fn parabolic(cm: f64, c0: f64, cp: f64) -> f64 {
    let denom = cm - 2.0 * c0 + cp;
    if denom <= 0.0 {
        return 0.0;
    }
    (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5)
}

fn match_block(a: &Pyramid, b: &Pyramid, bx: i64, by: i64, prior: (f64, f64), cfg: &FlowConfig) -> RegionFlow {
    let size = cfg.block as i64;
    let levels = a.depth().min(b.depth()).max(1);
    let prior_i = (prior.0.round() as i64, prior.1.round() as i64);
    let mut est = (0i64, 0i64);
    for l in (0..levels).rev() {
        let scale = 1i64 << l;
        let (la, lb) = (a.level(l), b.level(l));
        let (ax, ay) = (bx.div_euclid(scale), by.div_euclid(scale));
        let lp = (prior_i.0.div_euclid(scale), prior_i.1.div_euclid(scale));
        let centers = if l == levels - 1 {
            vec![lp]
        } else if l == 0 {
            vec![est, lp]
        } else {
            vec![est]
        };
        let (d, _) = search(la, lb, ax, ay, &centers, cfg.search_radius, size);
        est = if l > 0 { (2 * d.0, 2 * d.1) } else { d };
    }

    let (la, lb) = (a.base(), b.base());
    let c0 = ssd(la, lb, bx, by, bx + est.0, by + est.1, size);
    let texture = block_texture(la, bx, by, size);
    let textured = texture >= cfg.min_texture;
    if c0 == 0.0 {
        return RegionFlow {
            dx: est.0 as f64,
            dy: est.1 as f64,
            confident: textured,
        };
    }
    let cost = |dx: i64, dy: i64| ssd(la, lb, bx, by, bx + est.0 + dx, by + est.1 + dy, size);
    let (cxm, cxp, cym, cyp) = (cost(-1, 0), cost(1, 0), cost(0, -1), cost(0, 1));
    let curved = cxm - 2.0 * c0 + cxp > 0.0 && cym - 2.0 * c0 + cyp > 0.0;
    let mut d = (
        est.0 as f64 + parabolic(cxm, c0, cxp),
        est.1 as f64 + parabolic(cym, c0, cyp),
    );
    if textured {
        d = lucas_kanade(la, lb, bx, by, size, d, cfg.refine_iterations);
    }
    RegionFlow {
        dx: d.0,
        dy: d.1,
        confident: textured && curved,
    }
}

fn gradient(img: &GrayImage, x: i64, y: i64) -> (f32, f32) {
    (
        0.5 * (img.at_clamped(x + 1, y) - img.at_clamped(x - 1, y)),
        0.5 * (img.at_clamped(x, y + 1) - img.at_clamped(x, y - 1)),
    )
}

fn block_texture(img: &GrayImage, bx: i64, by: i64, size: i64) -> f64 {
    let mut s = 0.0f64;
    for y in 0..size {
        for x in 0..size {
            let (gx, gy) = gradient(img, bx + x, by + y);
            s += (gx * gx + gy * gy) as f64;
        }
    }
    s / (size * size) as f64
}

/// Inverse-compositional translation refinement of `d`, using frame `a` gradients.
fn lucas_kanade(
    a: &GrayImage,
    b: &GrayImage,
    bx: i64,
    by: i64,
    size: i64,
    mut d: (f64, f64),
    iters: usize,
) -> (f64, f64) {
    if iters == 0 {
        return d;
    }
    let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
    let mut grads = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let (gx, gy) = gradient(a, bx + x, by + y);
            let (gx, gy) = (gx as f64, gy as f64);
            gxx += gx * gx;
            gxy += gx * gy;
            gyy += gy * gy;
            grads.push((gx, gy));
        }
    }
    let det = gxx * gyy - gxy * gxy;
    if det <= 1e-9 * (gxx + gyy).powi(2) || det <= 0.0 {
        return d;
    }
    let start = d;
    for _ in 0..iters {
        let (mut ex, mut ey) = (0.0f64, 0.0f64);
        let mut k = 0;
        for y in 0..size {
            for x in 0..size {
                let ia = a.at(
                    (bx + x).clamp(0, a.width() as i64 - 1) as usize,
                    (by + y).clamp(0, a.height() as i64 - 1) as usize,
                ) as f64;
                let ib = b.sample((bx + x) as f64 + d.0, (by + y) as f64 + d.1) as f64;
                let e = ib - ia;
                ex += grads[k].0 * e;
                ey += grads[k].1 * e;
                k += 1;
            }
        }
        let step = (-(gyy * ex - gxy * ey) / det, -(-gxy * ex + gxx * ey) / det);
        d = (d.0 + step.0, d.1 + step.1);
        if step.0.abs() < 1e-4 && step.1.abs() < 1e-4 {
            break;
        }
    }
    // keep the refinement local to the matched cell
    if (d.0 - start.0).abs() > 1.0 || (d.1 - start.1).abs() > 1.0 {
        return start;
    }
    d
}
