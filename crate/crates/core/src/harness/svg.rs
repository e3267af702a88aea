//! Dependency-free SVG line plots: one panel per phase, one polyline per
//! method. Output depends only on the data, so files are reproducible.

use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional vertical marker, e.g. a stabilization iteration.
    pub marker: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;

/// Panels side by side with a shared legend underneath.
pub fn render(title: &str, panels: &[Panel]) -> String {
    let width = panels.len().max(1) as f64 * (PANEL_W + MARGIN) + MARGIN;
    let legend: Vec<&str> = {
        let mut labels: Vec<&str> = Vec::new();
        for s in panels.iter().flat_map(|p| &p.series) {
            if !labels.contains(&s.label.as_str()) {
                labels.push(&s.label);
            }
        }
        labels
    };
    let height = PANEL_H + 2.0 * MARGIN + 20.0 * legend.len() as f64 + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.0}" y="20" text-anchor="middle" font-size="15">{}</text>"#, width / 2.0, escape(title));

    for (i, panel) in panels.iter().enumerate() {
        let x0 = MARGIN + i as f64 * (PANEL_W + MARGIN);
        draw_panel(&mut out, panel, x0, MARGIN, &legend);
    }

    let ly = MARGIN + PANEL_H + 40.0;
    for (k, label) in legend.iter().enumerate() {
        let y = ly + 20.0 * k as f64;
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN:.0}" y1="{y:.1}" x2="{:.0}" y2="{y:.1}" stroke="{color}" stroke-width="2"/><text x="{:.0}" y="{:.1}">{}</text>"#,
            MARGIN + 25.0,
            MARGIN + 32.0,
            y + 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, panel: &Panel, x0: f64, y0: f64, legend: &[&str]) {
    let pts = panel.series.iter().flat_map(|s| s.points.iter());
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax - xmin < 1e-9 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-9 {
        ymin -= 1.0;
        ymax += 1.0;
    }
    let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * PANEL_W;
    let sy = |y: f64| y0 + PANEL_H - (y - ymin) / (ymax - ymin) * PANEL_H;

    let _ = writeln!(
        out,
        r##"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL_W:.0}" height="{PANEL_H:.0}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        x0 + PANEL_W / 2.0,
        y0 - 8.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        x0 + PANEL_W / 2.0,
        y0 + PANEL_H + 30.0,
        escape(&panel.x_label)
    );
    for k in 0..=4 {
        let fy = ymin + (ymax - ymin) * k as f64 / 4.0;
        let fx = xmin + (xmax - xmin) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#444">{fy:.1}</text><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#444">{fx:.0}</text>"##,
            x0 - 4.0,
            sy(fy) + 4.0,
            sx(fx),
            y0 + PANEL_H + 14.0
        );
    }
    if ymin < 4.0 && 4.0 < ymax {
        let _ = writeln!(
            out,
            r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#bbb" stroke-dasharray="2,3"/>"##,
            x0 + PANEL_W,
            y = sy(4.0)
        );
    }
    for s in &panel.series {
        let k = legend.iter().position(|l| *l == s.label).unwrap_or(0);
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        if let Some(m) = s.marker.filter(|m| (xmin..=xmax).contains(m)) {
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="5,4"/>"#,
                y0 + PANEL_H,
                x = sx(m)
            );
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> Panel {
        Panel {
            title: "train".into(),
            x_label: "iteration".into(),
            series: vec![Series {
                label: "a<b".into(),
                points: vec![(0.0, -100.0), (10.0, 4.0)],
                marker: Some(10.0),
            }],
        }
    }

    #[test]
    fn renders_deterministically() {
        let a = render("t", &[panel(), panel()]);
        assert_eq!(a, render("t", &[panel(), panel()]));
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("a&lt;b"));
    }

    #[test]
    fn empty_panel_is_valid() {
        let s = render("empty", &[Panel { title: "x".into(), x_label: "i".into(), series: vec![] }]);
        assert!(s.contains("</svg>"));
    }
}
