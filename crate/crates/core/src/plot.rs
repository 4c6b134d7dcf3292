//! Minimal SVG scatter plots.

use std::collections::BTreeSet;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Colour group.
    pub class: i32,
    /// Tooltip text.
    pub label: String,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const LEGEND: f64 = 110.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders one `<circle class="point">` per point, coloured by class, with
/// a legend titled `legend`.
pub fn scatter_svg(points: &[Point], title: &str, legend: &str) -> String {
    let (x0, x1) = span(points.iter().map(|p| p.x));
    let (y0, y1) = span(points.iter().map(|p| p.y));
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;
    let classes: Vec<i32> = points.iter().map(|p| p.class).collect::<BTreeSet<_>>().into_iter().collect();
    let colour = |c: i32| PALETTE[classes.iter().position(|&k| k == c).unwrap_or(0) % PALETTE.len()];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>
<text x="{}" y="{}" text-anchor="middle">PC1</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">PC2</text>"##,
        (WIDTH - LEGEND) / 2.0,
        escape(title),
        MARGIN + plot_w / 2.0,
        HEIGHT - 14.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
    );
    s.push_str("<g class=\"points\">\n");
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle class="point" data-id="{}" data-class="{}" cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
            p.id,
            p.class,
            sx(p.x),
            sy(p.y),
            colour(p.class),
            escape(&p.label)
        );
    }
    s.push_str("</g>\n<g class=\"legend\">\n");
    let lx = WIDTH - LEGEND - MARGIN / 2.0 + 16.0;
    let _ = writeln!(s, r#"<text x="{lx}" y="{}">{}</text>"#, MARGIN + 4.0, escape(legend));
    for (i, c) in classes.iter().enumerate() {
        let y = MARGIN + 22.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{c}</text>"#,
            y - 9.0,
            colour(*c),
            lx + 16.0,
            y
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}
