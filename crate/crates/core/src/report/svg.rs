use std::fmt::Write;

use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::simulate::StudySummary;
use crate::spaces::{BasisVector, SubspacePartition};

use super::fmt6;

#[derive(Debug, Clone, PartialEq)]
pub struct FigureLabels {
    pub title: String,
    pub x_axis: String,
    pub scatter_x: String,
    pub scatter_y: String,
}

impl Default for FigureLabels {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_axis: "t".into(),
            scatter_x: "proportion of variance".into(),
            scatter_y: "simplicity score".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub partition: SubspacePartition,
    pub grid: TraitGrid,
    pub labels: FigureLabels,
    pub width: f64,
    pub height: f64,
}

impl FigureSpec {
    pub fn new(partition: SubspacePartition, grid: TraitGrid) -> Self {
        Self {
            partition,
            grid,
            labels: FigureLabels::default(),
            width: 900.0,
            height: 640.0,
        }
    }

    pub fn title(mut self, title: impl Into<String>) -> Self {
        self.labels.title = title.into();
        self
    }
}

const STYLE: &str = "\
.frame{fill:none;stroke:#888;stroke-width:0.8}\
.axis{stroke:#bbb;stroke-width:0.6}\
.model{stroke:#1f4e9c;fill:none;stroke-width:1.6}\
.null{stroke:#c0392b;fill:none;stroke-width:1.6}\
.dashed{stroke-dasharray:6 4}\
.point.model{fill:#1f4e9c}\
.point.null{fill:#c0392b}\
.bar.model{fill:#1f4e9c;stroke:none}\
.bar.null{fill:#c0392b;stroke:none}\
.replicate{stroke-width:0.5;stroke-opacity:0.35}\
.truth{stroke:#111;stroke-width:3;fill:none}\
text{font-family:sans-serif;font-size:11px;fill:#222}\
.title{font-size:14px}";

struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Rect {
    fn inset(&self, pad: f64) -> Rect {
        Rect {
            x: self.x + pad,
            y: self.y + pad,
            w: self.w - 2.0 * pad,
            h: self.h - 2.0 * pad,
        }
    }

    /// Maps `(u, v)` in the unit square to pixels, `v` upward.
    fn at(&self, u: f64, v: f64) -> (f64, f64) {
        (self.x + u * self.w, self.y + (1.0 - v) * self.h)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open_svg(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <style>{STYLE}</style>\n",
        w = fmt6(width),
        h = fmt6(height)
    );
    if !title.is_empty() {
        let _ = writeln!(out, "<text class=\"title\" x=\"12\" y=\"18\">{}</text>", escape(title));
    }
}

fn frame(out: &mut String, r: &Rect) {
    let _ = writeln!(
        out,
        "<rect class=\"frame\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>",
        fmt6(r.x),
        fmt6(r.y),
        fmt6(r.w),
        fmt6(r.h)
    );
}

fn hline(out: &mut String, r: &Rect, v: f64) {
    let (x0, y) = r.at(0.0, v);
    let (x1, _) = r.at(1.0, v);
    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
        fmt6(x0),
        fmt6(y),
        fmt6(x1),
        fmt6(y)
    );
}

fn text(out: &mut String, class: &str, x: f64, y: f64, s: &str) {
    let _ = writeln!(
        out,
        "<text class=\"{class}\" x=\"{}\" y=\"{}\">{}</text>",
        fmt6(x),
        fmt6(y),
        escape(s)
    );
}

/// Polyline of `values` against `grid`, vertical range `[-limit, limit]`.
fn curve(out: &mut String, r: &Rect, grid: &TraitGrid, values: &[f64], limit: f64, class: &str) {
    let t = grid.points();
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let pts: Vec<String> = t
        .iter()
        .zip(values)
        .map(|(&ti, &v)| {
            let (x, y) = r.at((ti - t0) / (t1 - t0), 0.5 + 0.5 * v / limit);
            format!("{},{}", fmt6(x), fmt6(y))
        })
        .collect();
    let _ = writeln!(out, "<polyline class=\"{class}\" points=\"{}\"/>", pts.join(" "));
}

/// Order in which basis vectors fill the panel grid: PC1, then the simplest
/// null vector, then the remaining model and null vectors.
fn panel_order(j: usize, k: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(k);
    if j > 0 {
        order.push(0);
    }
    if j < k {
        order.push(j);
    }
    order.extend((1..j).chain(j + 1..k));
    order
}

/// Small-multiples figure of a partition: one panel per basis vector, a
/// (proportion, score) scatter and a model/null variance bar chart.
pub fn render_partition_figure(spec: &FigureSpec) -> Result<String> {
    let p = &spec.partition;
    let k = p.dim;
    if spec.grid.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "partition has K = {k} but grid has {} points",
            spec.grid.len()
        )));
    }
    if !(spec.width > 0.0 && spec.height > 0.0) {
        return Err(Error::InvalidParameter("figure dimensions must be positive".into()));
    }
    let vectors: Vec<&BasisVector> = p.all_vectors().collect();
    let j = p.model_dim;

    let mut out = String::new();
    open_svg(&mut out, spec.width, spec.height, &spec.labels.title);

    let top = 28.0;
    let rows = k.div_ceil(2);
    let left_w = spec.width * 2.0 / 3.0;
    let cell_w = left_w / 2.0;
    let cell_h = (spec.height - top) / rows as f64;

    for (slot, &idx) in panel_order(j, k).iter().enumerate() {
        let v = vectors[idx];
        let is_model = idx < j;
        let cell = Rect {
            x: (slot % 2) as f64 * cell_w,
            y: top + (slot / 2) as f64 * cell_h,
            w: cell_w,
            h: cell_h,
        };
        let r = cell.inset(12.0);
        let (kind, style) = if is_model {
            ("model", "model solid")
        } else {
            ("null", "null dashed")
        };
        let _ = writeln!(
            out,
            "<g class=\"panel vector-panel {kind}\" data-index=\"{}\">",
            idx + 1
        );
        frame(&mut out, &r);
        hline(&mut out, &r, 0.5);
        curve(&mut out, &r, &spec.grid, &v.coordinates, 1.0, style);
        let detail = match v.eigenvalue {
            Some(l) => format!("{}  \u{3bb} = {}", idx + 1, fmt6(l)),
            None => format!("{}  score = {}", idx + 1, fmt6(v.simplicity_score)),
        };
        text(&mut out, "label", r.x + 4.0, r.y + 12.0, &detail);
        out.push_str("</g>\n");
    }

    let right = Rect {
        x: left_w,
        y: top,
        w: spec.width - left_w,
        h: (spec.height - top) / 2.0,
    };

    // scatter of (proportion, score)
    let r = right.inset(24.0);
    let bound = p
        .all_vectors()
        .map(|v| v.simplicity_score)
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    out.push_str("<g class=\"panel scatter-panel\">\n");
    frame(&mut out, &r);
    for (idx, v) in vectors.iter().enumerate() {
        let kind = if idx < j { "model" } else { "null" };
        let (x, y) = r.at(v.proportion, v.simplicity_score / bound);
        let _ = writeln!(
            out,
            "<circle class=\"point {kind}\" cx=\"{}\" cy=\"{}\" r=\"3\" data-index=\"{}\" data-proportion=\"{}\" data-score=\"{}\"/>",
            fmt6(x),
            fmt6(y),
            idx + 1,
            fmt6(v.proportion),
            fmt6(v.simplicity_score)
        );
        text(&mut out, "point-label", x + 4.0, y - 4.0, &(idx + 1).to_string());
    }
    text(&mut out, "axis-label", r.x, r.y + r.h + 16.0, &spec.labels.scatter_x);
    text(&mut out, "axis-label", r.x, r.y - 6.0, &spec.labels.scatter_y);
    out.push_str("</g>\n");

    // variance fractions
    let r = Rect {
        y: right.y + right.h,
        ..right
    }
    .inset(24.0);
    out.push_str("<g class=\"panel variance-panel\">\n");
    frame(&mut out, &r);
    let bar_w = r.w / 5.0;
    for (i, (kind, frac)) in [("model", p.model_variance_fraction), ("null", p.null_variance_fraction)]
        .into_iter()
        .enumerate()
    {
        let x = r.x + bar_w * (1.0 + 2.0 * i as f64);
        let h = frac.clamp(0.0, 1.0) * r.h;
        let _ = writeln!(
            out,
            "<rect class=\"bar {kind}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" data-fraction=\"{}\"/>",
            fmt6(x),
            fmt6(r.y + r.h - h),
            fmt6(bar_w),
            fmt6(h),
            fmt6(frac)
        );
        text(
            &mut out,
            "bar-label",
            x,
            r.y + r.h + 14.0,
            &format!("{kind} {}", fmt6(frac)),
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

/// Replicate overlays for a study: each row shows one null-space direction
/// (simplest vector first, then PCs J+1..K) and its response under true G.
pub fn render_study_figure(summary: &StudySummary) -> Result<String> {
    let reps = &summary.replicates;
    if reps.is_empty() {
        return Err(Error::InvalidParameter("study has no replicates".into()));
    }
    let grid = &summary.params.grid;
    let g = &summary.params.g;
    let j = summary.model_dim;

    struct Row {
        label: String,
        vectors: Vec<Vec<f64>>,
        responses: Vec<Vec<f64>>,
        truth: Vec<f64>,
    }
    let mut rows = vec![Row {
        label: "simplest null vector".into(),
        vectors: reps.iter().map(|r| r.simplest_vector.clone()).collect(),
        responses: reps.iter().map(|r| r.simplest_response.clone()).collect(),
        truth: summary.true_simplest_vector.clone(),
    }];
    for (m, truth) in summary.true_null_eigenvectors.iter().enumerate() {
        rows.push(Row {
            label: format!("PC{}", j + m + 1),
            vectors: reps.iter().map(|r| r.null_eigenvectors[m].clone()).collect(),
            responses: reps.iter().map(|r| r.null_eigenvector_responses[m].clone()).collect(),
            truth: truth.clone(),
        });
    }

    let width = 760.0;
    let top = 28.0;
    let cell_h = 170.0;
    let height = top + cell_h * rows.len() as f64;
    let mut out = String::new();
    let title = format!(
        "{} replicates, {} families of {}",
        reps.len(),
        summary.params.n_families,
        summary.params.family_size
    );
    open_svg(&mut out, width, height, &title);

    for (i, row) in rows.iter().enumerate() {
        let truth_response = g.mul_vec(&row.truth)?;
        let limit = row
            .responses
            .iter()
            .flatten()
            .chain(&truth_response)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
            .max(1e-12);
        for (col, (kind, curves, truth, lim)) in [
            ("vector", &row.vectors, &row.truth, 1.0),
            ("response", &row.responses, &truth_response, limit),
        ]
        .into_iter()
        .enumerate()
        {
            let cell = Rect {
                x: col as f64 * width / 2.0,
                y: top + i as f64 * cell_h,
                w: width / 2.0,
                h: cell_h,
            };
            let r = cell.inset(14.0);
            let _ = writeln!(out, "<g class=\"panel {kind}-panel\" data-row=\"{}\">", i + 1);
            frame(&mut out, &r);
            hline(&mut out, &r, 0.5);
            for c in curves.iter() {
                curve(&mut out, &r, grid, c, lim, "null replicate");
            }
            curve(&mut out, &r, grid, truth, lim, "truth");
            let label = if kind == "vector" {
                row.label.clone()
            } else {
                format!("response to {}  (range \u{b1}{})", row.label, fmt6(lim))
            };
            text(&mut out, "label", r.x + 4.0, r.y + 12.0, &label);
            out.push_str("</g>\n");
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_order_cases() {
        assert_eq!(panel_order(4, 6), vec![0, 4, 1, 2, 3, 5]);
        assert_eq!(panel_order(0, 3), vec![0, 1, 2]);
        assert_eq!(panel_order(3, 3), vec![0, 1, 2]);
        assert_eq!(panel_order(1, 3), vec![0, 1, 2]);
    }
}
