//! Static SVG figures: density overlays, confusion heatmaps, scatter and residual plots.

use std::fmt::Write as _;

use crate::eval::ConfusionMatrix;
use crate::labels::{Category, DensityEstimate, Group, VariableGap, SCALE_MAX, SCALE_MIN};

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub fn group_color(group: Group) -> &'static str {
    match group {
        Group::All => "#7f7f7f",
        Group::Dem => "#1f4e9e",
        Group::Rep => "#c0282d",
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from data space to the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: bool) {
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#,
            escape(text)
        );
    }

    fn axes(&mut self, f: &Frame, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) {
        let (x0, y0) = (f.px(f.x.0), f.py(f.y.0));
        self.line(x0, y0, f.px(f.x.1), y0, "black", false);
        self.line(x0, y0, x0, f.py(f.y.1), "black", false);
        for &t in x_ticks {
            self.line(f.px(t), y0, f.px(t), y0 + 4.0, "black", false);
            self.text(f.px(t), y0 + 18.0, "middle", &tick(t));
        }
        for &t in y_ticks {
            self.line(x0 - 4.0, f.py(t), x0, f.py(t), "black", false);
            self.text(x0 - 7.0, f.py(t) + 4.0, "end", &tick(t));
        }
        self.text(WIDTH / 2.0, HEIGHT - 14.0, "middle", x_label);
        let _ = writeln!(
            self.body,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn even_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn scale_ticks() -> Vec<f64> {
    (1..=7).map(f64::from).collect()
}

/// Overlaid per-group AES densities for one variable.
pub fn density_overlay(title: &str, gap: &VariableGap) -> String {
    let mut peak: f64 = 0.0;
    for d in gap.distributions.values() {
        if let DensityEstimate::Kde { values, .. } = &d.density {
            peak = values.iter().copied().fold(peak, f64::max);
        }
    }
    let peak = if peak > 0.0 { peak * 1.1 } else { 1.0 };
    let f = Frame {
        x: (SCALE_MIN, SCALE_MAX),
        y: (0.0, peak),
    };
    let mut svg = Svg::new(title);
    svg.axes(&f, "average evaluation score", "density", &scale_ticks(), &even_ticks(0.0, peak, 4));
    for (row, (group, dist)) in gap.distributions.iter().enumerate() {
        let color = group_color(*group);
        match &dist.density {
            DensityEstimate::Kde { grid, values, .. } => {
                let pts: Vec<String> = grid
                    .iter()
                    .zip(values)
                    .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
                    .collect();
                let _ = writeln!(
                    svg.body,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            DensityEstimate::PointMass { location } => {
                svg.line(f.px(*location), f.py(0.0), f.px(*location), f.py(peak), color, true);
            }
            DensityEstimate::Empty => {}
        }
        let y = MARGIN + 4.0 + 16.0 * row as f64;
        svg.line(WIDTH - MARGIN - 120.0, y, WIDTH - MARGIN - 100.0, y, color, false);
        svg.text(
            WIDTH - MARGIN - 94.0,
            y + 4.0,
            "start",
            &format!("{} (n={})", group.key(), dist.n_images),
        );
    }
    svg.finish()
}

/// Heatmap of a confusion matrix with counts written in each cell.
pub fn confusion_heatmap(title: &str, cm: &ConfusionMatrix) -> String {
    let mut svg = Svg::new(title);
    let max = cm.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let cell = (HEIGHT - 2.0 * MARGIN - 20.0) / 3.0;
    let left = (WIDTH - 3.0 * cell) / 2.0 + 20.0;
    let top = MARGIN + 10.0;
    for t in Category::ALL {
        for p in Category::ALL {
            let v = cm.counts[t.index()][p.index()];
            let shade = 255.0 - 200.0 * v as f64 / max;
            let (x, y) = (left + cell * p.index() as f64, top + cell * t.index() as f64);
            let _ = writeln!(
                svg.body,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({s},{s},255)" stroke="white"/>"#,
                s = shade.round() as u8
            );
            svg.text(x + cell / 2.0, y + cell / 2.0 + 5.0, "middle", &v.to_string());
        }
        svg.text(left + cell * (t.index() as f64 + 0.5), top + 3.0 * cell + 18.0, "middle", t.title());
        svg.text(left - 8.0, top + cell * (t.index() as f64 + 0.5) + 4.0, "end", t.title());
    }
    svg.text(left + 1.5 * cell, HEIGHT - 12.0, "middle", "predicted");
    let _ = writeln!(
        svg.body,
        r#"<text x="16" y="{y:.2}" text-anchor="middle" transform="rotate(-90 16 {y:.2})">true</text>"#,
        y = top + 1.5 * cell
    );
    svg.finish()
}

fn points(svg: &mut Svg, f: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    for (&x, &y) in xs.iter().zip(ys) {
        let _ = writeln!(
            svg.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.6"/>"#,
            f.px(x),
            f.py(y)
        );
    }
}

/// Actual against predicted scores with the identity line.
pub fn scatter_plot(title: &str, actual: &[f64], predicted: &[f64], color: &str) -> String {
    let f = Frame {
        x: (SCALE_MIN, SCALE_MAX),
        y: (SCALE_MIN, SCALE_MAX),
    };
    let mut svg = Svg::new(title);
    svg.axes(&f, "actual", "predicted", &scale_ticks(), &scale_ticks());
    svg.line(f.px(SCALE_MIN), f.py(SCALE_MIN), f.px(SCALE_MAX), f.py(SCALE_MAX), "#999999", true);
    points(&mut svg, &f, actual, predicted, color);
    svg.finish()
}

/// Residuals (actual minus predicted) against predicted scores.
pub fn residual_plot(title: &str, actual: &[f64], predicted: &[f64], color: &str) -> String {
    let residuals: Vec<f64> = actual.iter().zip(predicted).map(|(a, p)| a - p).collect();
    let bound = residuals.iter().fold(1.0f64, |m, r| m.max(r.abs())).ceil();
    let f = Frame {
        x: (SCALE_MIN, SCALE_MAX),
        y: (-bound, bound),
    };
    let mut svg = Svg::new(title);
    svg.axes(&f, "predicted", "residual", &scale_ticks(), &even_ticks(-bound, bound, 4));
    svg.line(f.px(SCALE_MIN), f.py(0.0), f.px(SCALE_MAX), f.py(0.0), "#999999", true);
    points(&mut svg, &f, predicted, &residuals, color);
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_lists_every_count() {
        let cm = ConfusionMatrix::from_counts([[5, 1, 0], [2, 6, 2], [0, 1, 7]]);
        let svg = confusion_heatmap("dem", &cm);
        assert_eq!(svg.matches("<rect x=").count(), 9);
        assert!(svg.contains(">7</text>"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn scatter_has_one_marker_per_point() {
        let svg = scatter_plot("s", &[1.0, 2.0, 3.0], &[1.5, 2.5, 7.0], "red");
        assert_eq!(svg.matches("<circle").count(), 3);
        let svg = residual_plot("r", &[1.0, 2.0], &[1.5, 2.5], "red");
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn titles_are_escaped() {
        assert!(Svg::new("a < b & c").finish().contains("a &lt; b &amp; c"));
    }
}
