//! Minimal deterministic SVG figures: line/scatter panels and heat maps.

use std::fmt::Write;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 280.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Panel {
    Lines {
        title: String,
        x_label: String,
        y_label: String,
        series: Vec<Series>,
        /// Draw markers only.
        scatter: bool,
        /// Add the line y = x.
        diagonal: bool,
    },
    Heat {
        title: String,
        x_label: String,
        y_label: String,
        xs: Vec<f64>,
        ys: Vec<f64>,
        /// `z[j][i]` at `(xs[i], ys[j])`.
        z: Vec<Vec<f64>>,
    },
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + MARGIN + (x - self.xr.0) / (self.xr.1 - self.xr.0) * (PANEL_W - 1.5 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H - MARGIN - (y - self.yr.0) / (self.yr.1 - self.yr.0) * (PANEL_H - 1.8 * MARGIN)
    }
}

fn axes(out: &mut String, f: &Frame, title: &str, x_label: &str, y_label: &str) {
    let (l, r) = (f.px(f.xr.0), f.px(f.xr.1));
    let (b, t) = (f.py(f.yr.0), f.py(f.yr.1));
    let _ = writeln!(
        out,
        r##"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        r - l,
        b - t
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        (l + r) / 2.0,
        f.y0 + 0.5 * MARGIN,
        esc(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
        (l + r) / 2.0,
        f.y0 + PANEL_H - 8.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        f.x0 + 12.0,
        (b + t) / 2.0,
        f.x0 + 12.0,
        (b + t) / 2.0,
        esc(y_label)
    );
    for (v, anchor, x, y) in [
        (f.xr.0, "start", l, b + 14.0),
        (f.xr.1, "end", r, b + 14.0),
        (f.yr.0, "end", l - 3.0, b),
        (f.yr.1, "end", l - 3.0, t + 10.0),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="9">{}</text>"#,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn lines(out: &mut String, f: &Frame, series: &[Series], scatter: bool, diagonal: bool) {
    if diagonal {
        let lo = f.xr.0.max(f.yr.0);
        let hi = f.xr.1.min(f.yr.1);
        if lo < hi {
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
                f.px(lo),
                f.py(lo),
                f.px(hi),
                f.py(hi)
            );
        }
    }
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if scatter {
            for (x, y) in &pts {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#,
                    f.px(*x),
                    f.py(*y)
                );
            }
        } else if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" fill="{colour}">{}</text>"#,
            f.x0 + PANEL_W - 4.0 * MARGIN,
            f.y0 + MARGIN + 11.0 * i as f64,
            esc(&s.name)
        );
    }
}

fn heat(out: &mut String, f: &Frame, xs: &[f64], ys: &[f64], z: &[Vec<f64>]) {
    let (lo, hi) = range(z.iter().flatten().copied());
    let half = |v: &[f64], i: usize| {
        if v.len() < 2 {
            0.5
        } else if i + 1 < v.len() {
            (v[i + 1] - v[i]) / 2.0
        } else {
            (v[i] - v[i - 1]) / 2.0
        }
    };
    for (j, row) in z.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let t = if v.is_finite() { (v - lo) / (hi - lo) } else { 0.0 };
            let (hx, hy) = (half(xs, i), half(ys, j));
            let (x1, x2) = (f.px(xs[i] - hx), f.px(xs[i] + hx));
            let (y1, y2) = (f.py(ys[j] + hy), f.py(ys[j] - hy));
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{x1:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="rgb(255,{shade},{shade})"/>"#,
                x2 - x1,
                y2 - y1
            );
        }
    }
    if let Some((j, i)) = z
        .iter()
        .enumerate()
        .flat_map(|(j, r)| r.iter().enumerate().map(move |(i, v)| (j, i, *v)))
        .filter(|t| t.2.is_finite())
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(j, i, _)| (j, i))
    {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="#000"/>"##,
            f.px(xs[i]),
            f.py(ys[j])
        );
    }
}

/// Render panels side by side, wrapping after `per_row`.
pub fn render(title: &str, panels: &[Panel], per_row: usize) -> String {
    let per_row = per_row.max(1);
    let rows = panels.len().div_ceil(per_row).max(1);
    let width = PANEL_W * per_row.min(panels.len().max(1)) as f64;
    let height = 24.0 + PANEL_H * rows as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="17" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        esc(title)
    );
    for (k, panel) in panels.iter().enumerate() {
        let (x0, y0) = (PANEL_W * (k % per_row) as f64, 24.0 + PANEL_H * (k / per_row) as f64);
        match panel {
            Panel::Lines {
                title,
                x_label,
                y_label,
                series,
                scatter,
                diagonal,
            } => {
                let all = || series.iter().flat_map(|s| s.points.iter());
                let mut xr = range(all().map(|p| p.0));
                let mut yr = range(all().map(|p| p.1));
                if *diagonal {
                    let lo = xr.0.min(yr.0);
                    let hi = xr.1.max(yr.1);
                    xr = (lo, hi);
                    yr = (lo, hi);
                }
                let f = Frame { x0, y0, xr, yr };
                axes(&mut out, &f, title, x_label, y_label);
                lines(&mut out, &f, series, *scatter, *diagonal);
            }
            Panel::Heat {
                title,
                x_label,
                y_label,
                xs,
                ys,
                z,
            } => {
                let pad = |v: &[f64]| {
                    let (lo, hi) = range(v.iter().copied());
                    let step = if v.len() > 1 { (hi - lo) / (v.len() - 1) as f64 / 2.0 } else { 0.5 };
                    (lo - step, hi + step)
                };
                let f = Frame {
                    x0,
                    y0,
                    xr: pad(xs),
                    yr: pad(ys),
                };
                heat(&mut out, &f, xs, ys, z);
                axes(&mut out, &f, title, x_label, y_label);
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panels() -> Vec<Panel> {
        vec![
            Panel::Lines {
                title: "a < b".into(),
                x_label: "x".into(),
                y_label: "y".into(),
                series: vec![Series {
                    name: "s".into(),
                    points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)],
                }],
                scatter: false,
                diagonal: true,
            },
            Panel::Heat {
                title: "h".into(),
                x_label: "k1".into(),
                y_label: "k2".into(),
                xs: vec![1.0, 2.0],
                ys: vec![1.0, 2.0],
                z: vec![vec![0.0, 1.0], vec![2.0, 3.0]],
            },
        ]
    }

    #[test]
    fn renders_escaped_deterministic_document() {
        let svg = render("t", &panels(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<rect").count(), 1 + 2 + 4);
        assert_eq!(svg, render("t", &panels(), 2));
    }
}
