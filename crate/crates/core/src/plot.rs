//! Self-contained SVG plots: bias heatmaps, gap scatterplots and histograms.
//!
//! Plots carry display copies only. Heatmap normalization happens here and
//! never touches the values stored in reports.

use std::fmt::Write as _;

use crate::convergence::Histogram;
use crate::error::{Error, Result};
use crate::transfer::{GapAnalysis, Quadrant};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";
const CELL_W: f64 = 56.0;
const CELL_H: f64 = 22.0;
const UNDEFINED_FILL: &str = "#d9d9d9";

/// Escapes text for SVG content and attribute values.
fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Linear ramp from white (0) to dark blue (1).
pub fn intensity_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let ch = |lo: f64| (255.0 + (lo - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(8.0), ch(48.0), ch(107.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Normalization group of each row, e.g. its protected attribute.
    pub row_groups: Vec<String>,
}

impl Heatmap {
    fn check(&self) -> Result<()> {
        let rows = self.values.len();
        if self.row_labels.len() != rows || self.row_groups.len() != rows {
            return Err(Error::Shape(format!(
                "{rows} heatmap rows but {} labels and {} groups",
                self.row_labels.len(),
                self.row_groups.len()
            )));
        }
        if let Some((i, r)) = self.values.iter().enumerate().find(|(_, r)| r.len() != self.col_labels.len()) {
            return Err(Error::Shape(format!(
                "heatmap row {i} has {} cells, expected {}",
                r.len(),
                self.col_labels.len()
            )));
        }
        Ok(())
    }

    /// Min-max scales the defined cells of each row group to `[0, 1]`. A
    /// group whose defined cells are all equal maps to 0.5.
    pub fn normalized(&self) -> Result<Vec<Vec<Option<f64>>>> {
        self.check()?;
        let mut out = self.values.clone();
        let mut seen: Vec<&str> = Vec::new();
        for g in &self.row_groups {
            if seen.contains(&g.as_str()) {
                continue;
            }
            seen.push(g);
            let rows: Vec<usize> = (0..self.values.len()).filter(|&i| &self.row_groups[i] == g).collect();
            let defined = rows.iter().flat_map(|&i| self.values[i].iter().flatten().copied());
            let (lo, hi) = defined.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            for &i in &rows {
                for cell in out[i].iter_mut() {
                    *cell = cell.map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 });
                }
            }
        }
        Ok(out)
    }
}

pub fn heatmap_svg(h: &Heatmap) -> Result<String> {
    let norm = h.normalized()?;
    let label_w = 8.0 + 7.0 * h.row_labels.iter().map(|l| l.len()).max().unwrap_or(0) as f64;
    let top = 48.0;
    let width = label_w + CELL_W * h.col_labels.len() as f64 + 16.0;
    let height = top + CELL_H * h.values.len() as f64 + 16.0;
    let mut s = open(width, height);
    let _ = writeln!(s, "<text x=\"8\" y=\"16\" {FONT} font-weight=\"bold\">{}</text>", esc(&h.title));
    for (j, c) in h.col_labels.iter().enumerate() {
        let x = label_w + CELL_W * (j as f64 + 0.5);
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" {FONT} text-anchor=\"middle\">{}</text>", top - 8.0, esc(c));
    }
    for (i, row) in norm.iter().enumerate() {
        let y = top + CELL_H * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"{}\" {FONT}>{}</text>",
            y + CELL_H * 0.7,
            esc(&h.row_labels[i])
        );
        for (j, cell) in row.iter().enumerate() {
            let x = label_w + CELL_W * j as f64;
            let (fill, norm_attr, text) = match (cell, h.values[i][j]) {
                (Some(t), Some(raw)) => (intensity_color(*t), format!("{t}"), format!("{raw:.3}")),
                _ => (UNDEFINED_FILL.to_string(), "undefined".to_string(), "n/a".to_string()),
            };
            let ink = if cell.is_some_and(|t| t > 0.6) { "white" } else { "black" };
            let _ = writeln!(
                s,
                "<rect class=\"cell\" data-row=\"{i}\" data-col=\"{j}\" data-norm=\"{norm_attr}\" x=\"{x}\" y=\"{y}\" \
                 width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{fill}\" stroke=\"white\"/>"
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"middle\" fill=\"{ink}\">{text}</text>",
                x + CELL_W / 2.0,
                y + CELL_H * 0.7
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn quadrant_color(q: Quadrant) -> &'static str {
    match q {
        Quadrant::I | Quadrant::III => "#1b9e77",
        Quadrant::II | Quadrant::IV => "#d95f02",
        Quadrant::Axis => "#7f7f7f",
    }
}

fn quadrant_name(q: Quadrant) -> &'static str {
    match q {
        Quadrant::I => "I",
        Quadrant::II => "II",
        Quadrant::III => "III",
        Quadrant::IV => "IV",
        Quadrant::Axis => "axis",
    }
}

/// Scatter of downstream gap against pre-adaptation gap, one point per model,
/// colored by quadrant: agreeing signs (I, III), opposing signs (II, IV), or
/// on an axis.
pub fn scatter_svg(title: &str, gaps: &GapAnalysis) -> Result<String> {
    let (size, pad) = (360.0, 40.0);
    let span = |f: fn(&crate::transfer::GapPoint) -> f64| {
        gaps.points.iter().map(|p| f(p).abs()).fold(0.0_f64, f64::max).max(1e-12) * 1.1
    };
    let (sx, sy) = (span(|p| p.pre_gap), span(|p| p.down_gap));
    let px = |x: f64| pad + (x / sx + 1.0) / 2.0 * size;
    let py = |y: f64| pad + (1.0 - (y / sy + 1.0) / 2.0) * size;
    let mut s = open(size + 2.0 * pad, size + 2.0 * pad);
    let _ = writeln!(s, "<text x=\"8\" y=\"16\" {FONT} font-weight=\"bold\">{}</text>", esc(title));
    let (cx, cy) = (px(0.0), py(0.0));
    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{pad}\" y1=\"{cy}\" x2=\"{}\" y2=\"{cy}\" stroke=\"black\"/>",
        pad + size
    );
    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{cx}\" y1=\"{pad}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\"/>",
        pad + size
    );
    let [a, b] = &gaps.demographics;
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"middle\">pre gap ({} - {})</text>",
        pad + size / 2.0,
        size + 2.0 * pad - 8.0,
        esc(a),
        esc(b)
    );
    let _ = writeln!(
        s,
        "<text x=\"12\" y=\"{}\" {FONT} transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">downstream gap</text>",
        pad + size / 2.0,
        pad + size / 2.0
    );
    for p in &gaps.points {
        let _ = writeln!(
            s,
            "<circle class=\"point\" data-quadrant=\"{}\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"><title>{}</title></circle>",
            quadrant_name(p.quadrant),
            px(p.pre_gap),
            py(p.down_gap),
            quadrant_color(p.quadrant),
            esc(&p.model)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Bar histogram with an optional vertical marker (e.g. a 0.3 threshold).
pub fn histogram_svg(title: &str, hist: &Histogram, marker: Option<f64>) -> Result<String> {
    histograms_svg(title, &[("", hist)], marker)
}

/// Stacked histogram panels sharing one title and marker.
pub fn histograms_svg(title: &str, panels: &[(&str, &Histogram)], marker: Option<f64>) -> Result<String> {
    let (w, h, pad) = (480.0, 200.0, 40.0);
    let panel_h = h + 2.0 * pad;
    let mut s = open(w + 2.0 * pad, 24.0 + panel_h * panels.len() as f64);
    let _ = writeln!(s, "<text x=\"8\" y=\"16\" {FONT} font-weight=\"bold\">{}</text>", esc(title));
    for (n, (label, hist)) in panels.iter().enumerate() {
        if hist.edges.len() != hist.counts.len() + 1 || hist.counts.is_empty() {
            return Err(Error::Shape(format!(
                "{} edges for {} bins",
                hist.edges.len(),
                hist.counts.len()
            )));
        }
        let top = 24.0 + panel_h * n as f64;
        let lo = hist.edges[0];
        let hi = *hist.edges.last().expect("non-empty");
        let range = if hi > lo { hi - lo } else { 1.0 };
        let px = |x: f64| pad + (x - lo) / range * w;
        let base = top + pad + h;
        let peak = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        if !label.is_empty() {
            let _ = writeln!(s, "<text x=\"{pad}\" y=\"{}\" {FONT}>{}</text>", top + pad - 8.0, esc(label));
        }
        for (i, &c) in hist.counts.iter().enumerate() {
            let (x0, x1) = (px(hist.edges[i]), px(hist.edges[i + 1]));
            let bh = c as f64 / peak * h;
            let _ = writeln!(
                s,
                "<rect class=\"bar\" data-count=\"{c}\" x=\"{x0}\" y=\"{}\" width=\"{}\" height=\"{bh}\" fill=\"#4c72b0\"/>",
                base - bh,
                (x1 - x0).max(0.5)
            );
        }
        let _ = writeln!(
            s,
            "<line class=\"axis\" x1=\"{pad}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>",
            pad + w
        );
        for (x, anchor) in [(lo, "start"), (hi, "end")] {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"{anchor}\">{x:.3}</text>",
                px(x),
                base + 14.0
            );
        }
        if let Some(m) = marker.filter(|m| (lo..=hi).contains(m)) {
            let x = px(m);
            let _ = writeln!(
                s,
                "<line class=\"marker\" data-x=\"{m}\" x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{base}\" stroke=\"#c44e52\" stroke-dasharray=\"4 3\"/>",
                top + pad
            );
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" {FONT} fill=\"#c44e52\">{m}</text>", x + 3.0, top + pad + 10.0);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{GapPoint, GapSummary};

    fn two_by_two() -> Heatmap {
        Heatmap {
            title: "t".into(),
            row_labels: vec!["r0".into(), "r1".into()],
            col_labels: vec!["a".into(), "b".into()],
            values: vec![vec![Some(0.0), Some(1.0)], vec![Some(0.5), Some(0.5)]],
            row_groups: vec!["g".into(), "g".into()],
        }
    }

    #[test]
    fn heatmap_extremes_and_mids() {
        let svg = heatmap_svg(&two_by_two()).unwrap();
        assert_eq!(svg.matches(&format!("fill=\"{}\"", intensity_color(0.0))).count(), 1);
        assert_eq!(svg.matches(&format!("fill=\"{}\"", intensity_color(1.0))).count(), 1);
        assert_eq!(svg.matches("data-norm=\"0.5\"").count(), 2);
    }

    #[test]
    fn normalization_is_per_group_and_leaves_input_alone() {
        let mut h = two_by_two();
        h.row_groups = vec!["g".into(), "k".into()];
        let n = h.normalized().unwrap();
        assert_eq!(n[0], vec![Some(0.0), Some(1.0)]);
        assert_eq!(n[1], vec![Some(0.5), Some(0.5)]);
        assert_eq!(h.values[1], vec![Some(0.5), Some(0.5)]);
    }

    #[test]
    fn ragged_heatmap_is_a_shape_error() {
        let mut h = two_by_two();
        h.values[1].pop();
        assert!(matches!(heatmap_svg(&h), Err(Error::Shape(_))));
    }

    #[test]
    fn undefined_cells_are_grey() {
        let mut h = two_by_two();
        h.values[0][0] = None;
        let svg = heatmap_svg(&h).unwrap();
        assert!(svg.contains("data-norm=\"undefined\""));
        assert!(svg.contains(UNDEFINED_FILL));
    }

    #[test]
    fn scatter_colors_by_quadrant() {
        let pts = [(1.0, 1.0, Quadrant::I), (-1.0, 2.0, Quadrant::II), (0.0, 1.0, Quadrant::Axis)];
        let gaps = GapAnalysis {
            demographics: ["a".into(), "b".into()],
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y, q))| GapPoint {
                    model: format!("m{i}"),
                    pre_gap: x,
                    down_gap: y,
                    quadrant: q,
                })
                .collect(),
            summary: GapSummary {
                n: 3,
                agree: 1.0 / 3.0,
                disagree: 1.0 / 3.0,
                axis: 1.0 / 3.0,
            },
            skipped: vec![],
        };
        let svg = scatter_svg("gaps", &gaps).unwrap();
        for q in [Quadrant::I, Quadrant::II, Quadrant::Axis] {
            let tag = format!("data-quadrant=\"{}\"", quadrant_name(q));
            let at = svg.find(&tag).unwrap();
            assert!(svg[at..].contains(quadrant_color(q)));
        }
    }

    #[test]
    fn histogram_marker_sits_at_threshold() {
        let hist = Histogram::uniform(&[-0.5, 0.1, 0.35, 0.9], -1.0, 1.0, 20);
        let svg = histogram_svg("rho", &hist, Some(0.3)).unwrap();
        assert!(svg.contains("data-x=\"0.3\""));
        // 0.3 on [-1, 1] over a 480 px axis starting at x = 40.
        assert!(svg.contains(&format!("x1=\"{}\"", 40.0 + 1.3 / 2.0 * 480.0)));
        assert_eq!(svg.matches("class=\"bar\"").count(), 20);
    }

    #[test]
    fn bad_histogram_shape() {
        let h = Histogram {
            edges: vec![0.0, 1.0],
            counts: vec![1, 2],
        };
        assert!(histogram_svg("x", &h, None).is_err());
    }
}
