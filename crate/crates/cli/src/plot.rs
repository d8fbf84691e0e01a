//! Hand-written SVG: probability curves and a 2-D embedding projection.

use nalgebra::{DMatrix, SymmetricEigen};
use spotgcn::expr::ExprType;
use spotgcn::losses::{FrameLabels, FrameType};
use spotgcn::model::{FrameOutput, HEAD_DIM};
use spotgcn::trainer::AnnotationClip;
use std::fmt::Write;

const WIDTH: f64 = 1000.0;
const PANEL: f64 = 160.0;
const MARGIN: f64 = 40.0;

const CURVES: [(&str, &str); 5] = [
    ("onset", "#1f77b4"),
    ("apex", "#d62728"),
    ("offset", "#2ca02c"),
    ("exp", "#9467bd"),
    ("norm", "#7f7f7f"),
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel per expression type, five curves each; ground-truth intervals
/// of the panel's type are shaded.
pub fn probability_svg(title: &str, outputs: &[FrameOutput], gts: &[AnnotationClip]) -> String {
    let n = outputs.len().max(2);
    let height = 2.0 * PANEL + 3.0 * MARGIN;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let x = |f: f64| MARGIN + plot_w * f / (n - 1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#, esc(title));
    for t in ExprType::ALL {
        let top = MARGIN + t.index() as f64 * (PANEL + MARGIN);
        let y = |p: f64| top + PANEL * (1.0 - p);
        let _ = writeln!(s, r#"<g class="panel" data-type="{t}">"#);
        for g in gts.iter().filter(|g| g.expr == t) {
            let (x0, x1) = (x(g.onset as f64), x(g.offset as f64));
            let _ = writeln!(
                s,
                r##"<rect class="gt" x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{PANEL}" fill="#ffbf00" fill-opacity="0.3"/>"##,
                (x1 - x0).max(1.0)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{:.1}" font-size="12">{t}</text>"#,
            top - 4.0
        );
        for (k, (name, color)) in CURVES.iter().enumerate() {
            let mut pts = String::new();
            for (f, o) in outputs.iter().enumerate() {
                let p = o.probs.to_array()[t.index() * 5 + k];
                let _ = write!(pts, "{:.2},{:.2} ", x(f as f64), y(p));
            }
            let _ = writeln!(
                s,
                r#"<polyline class="curve" data-name="{t}_{name}" fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                pts.trim_end()
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    debug_assert_eq!(CURVES.len() * 2, HEAD_DIM);
    s
}

/// Projection onto the two leading principal axes of the embeddings.
pub fn project_2d(z: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = z.len();
    let d = z.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return Vec::new();
    }
    let mean: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| z[i][j] - mean[j]);
    let cov = x.transpose() * &x / n.max(2) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axis = |k: usize| order.get(k).map(|&c| eig.eigenvectors.column(c).clone_owned());
    let (a, b) = (axis(0), axis(1));
    (0..n)
        .map(|i| {
            let row = x.row(i);
            let p = |v: &Option<nalgebra::DVector<f64>>| v.as_ref().map_or(0.0, |v| row.dot(&v.transpose()));
            (p(&a), p(&b))
        })
        .collect()
}

/// Scatter of projected embeddings colored by frame type.
pub fn embedding_svg(title: &str, outputs: &[FrameOutput], labels: &[FrameLabels]) -> String {
    let z: Vec<Vec<f64>> = outputs.iter().map(|o| o.embedding.z.clone()).collect();
    let pts = project_2d(&z);
    let size = 600.0;
    let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
    for &(a, b) in &pts {
        lo = (lo.0.min(a), lo.1.min(b));
        hi = (hi.0.max(a), hi.1.max(b));
    }
    let span = |l: f64, h: f64| if h > l { h - l } else { 1.0 };
    let inner = size - 2.0 * MARGIN;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <text x=\"{MARGIN}\" y=\"20\" font-size=\"14\">{}</text>\n",
        esc(title)
    );
    for (i, &(a, b)) in pts.iter().enumerate() {
        let (class, color) = match labels.get(i).map(|l| l.frame_type) {
            Some(FrameType::Micro) => ("micro", "#d62728"),
            Some(FrameType::Macro) => ("macro", "#1f77b4"),
            _ => ("normal", "#bbbbbb"),
        };
        let cx = MARGIN + inner * (a - lo.0) / span(lo.0, hi.0);
        let cy = MARGIN + inner * (1.0 - (b - lo.1) / span(lo.1, hi.1));
        let _ = writeln!(
            s,
            r#"<circle class="{class}" cx="{cx:.2}" cy="{cy:.2}" r="2" fill="{color}"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}
