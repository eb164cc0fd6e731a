//! Minimal SVG charts: bars and point series, both with error bars.

use std::fmt::Write;

/// One bar or point: label, value and half-height of its error bar.
#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub label: String,
    pub value: f64,
    pub err: f64,
}

/// A titled set of points drawn in one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub points: Vec<Datum>,
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// Upper end of the value axis: the largest `value + err`, padded.
fn y_max(points: &[Datum]) -> f64 {
    let m = points
        .iter()
        .map(|d| finite_or_zero(d.value) + finite_or_zero(d.err))
        .fold(0.0, f64::max);
    if m > 0.0 {
        m * 1.1
    } else {
        1.0
    }
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" \
         viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Draws axes, ticks and the title of a `width`-wide panel whose top-left
/// corner is `(x0, y0)`; returns a function mapping values to pixel heights.
fn frame(
    out: &mut String,
    x0: f64,
    y0: f64,
    width: f64,
    title: &str,
    y_label: &str,
    ymax: f64,
) -> impl Fn(f64) -> f64 {
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let left = x0 + MARGIN_L;
    let bottom = y0 + PANEL_H - MARGIN_B;
    let right = x0 + width - MARGIN_R;
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        x0 + width / 2.0,
        y0 + 18.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{left:.1}\" y1=\"{:.1}\" x2=\"{left:.1}\" y2=\"{bottom:.1}\" stroke=\"black\"/>\
         <line x1=\"{left:.1}\" y1=\"{bottom:.1}\" x2=\"{right:.1}\" y2=\"{bottom:.1}\" stroke=\"black\"/>",
        y0 + MARGIN_T
    );
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let y = bottom - plot_h * i as f64 / 4.0;
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{left:.1}\" y2=\"{y:.1}\" stroke=\"black\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>",
            left - 4.0,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1} {:.1})\">{}</text>",
        x0 + 14.0,
        y0 + MARGIN_T + plot_h / 2.0,
        x0 + 14.0,
        y0 + MARGIN_T + plot_h / 2.0,
        escape(y_label)
    );
    move |v: f64| bottom - plot_h * (finite_or_zero(v) / ymax).clamp(0.0, 1.0)
}

fn error_bar(out: &mut String, x: f64, lo: f64, hi: f64) {
    let _ = writeln!(
        out,
        "<line x1=\"{x:.1}\" y1=\"{lo:.1}\" x2=\"{x:.1}\" y2=\"{hi:.1}\" stroke=\"black\"/>\
         <line x1=\"{:.1}\" y1=\"{lo:.1}\" x2=\"{:.1}\" y2=\"{lo:.1}\" stroke=\"black\"/>\
         <line x1=\"{:.1}\" y1=\"{hi:.1}\" x2=\"{:.1}\" y2=\"{hi:.1}\" stroke=\"black\"/>",
        x - 4.0,
        x + 4.0,
        x - 4.0,
        x + 4.0
    );
}

fn x_label(out: &mut String, x: f64, y: f64, label: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"end\" transform=\"rotate(-35 {x:.1} {y:.1})\">{}</text>",
        escape(label)
    );
}

/// Vertical bars with error bars, one per datum.
pub fn bar_chart(title: &str, y_label: &str, bars: &[Datum]) -> String {
    let width = (MARGIN_L + MARGIN_R + 70.0 * bars.len().max(1) as f64).max(PANEL_W);
    let mut out = open(width, PANEL_H);
    let slot = (width - MARGIN_L - MARGIN_R) / bars.len().max(1) as f64;
    let to_y = frame(&mut out, 0.0, 0.0, width, title, y_label, y_max(bars));
    for (i, d) in bars.iter().enumerate() {
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let top = to_y(d.value);
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4c72b0\"><title>{}: {}</title></rect>",
            cx - slot * 0.3,
            slot * 0.6,
            to_y(0.0) - top,
            escape(&d.label),
            d.value
        );
        error_bar(&mut out, cx, to_y(d.value - d.err), to_y(d.value + d.err));
        x_label(&mut out, cx, PANEL_H - MARGIN_B + 14.0, &d.label);
    }
    out.push_str("</svg>\n");
    out
}

/// Panels laid out in rows of `columns`, each a point series with error bars.
pub fn panel_grid(title: &str, y_label: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1).min(panels.len().max(1));
    let rows = panels.len().div_ceil(columns).max(1);
    let header = 28.0;
    let mut out = open(PANEL_W * columns as f64, header + PANEL_H * rows as f64);
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        PANEL_W * columns as f64 / 2.0,
        escape(title)
    );
    for (k, panel) in panels.iter().enumerate() {
        let x0 = PANEL_W * (k % columns) as f64;
        let y0 = header + PANEL_H * (k / columns) as f64;
        let to_y = frame(
            &mut out,
            x0,
            y0,
            PANEL_W,
            &panel.title,
            y_label,
            y_max(&panel.points),
        );
        let slot = (PANEL_W - MARGIN_L - MARGIN_R) / panel.points.len().max(1) as f64;
        let mut path = Vec::new();
        for (i, d) in panel.points.iter().enumerate() {
            let cx = x0 + MARGIN_L + slot * (i as f64 + 0.5);
            let cy = to_y(d.value);
            path.push(format!("{cx:.1},{cy:.1}"));
            error_bar(&mut out, cx, to_y(d.value - d.err), to_y(d.value + d.err));
            let _ = writeln!(
                out,
                "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"3.5\" fill=\"#dd8452\"><title>{}: {}</title></circle>",
                escape(&d.label),
                d.value
            );
            x_label(&mut out, cx, y0 + PANEL_H - MARGIN_B + 14.0, &d.label);
        }
        if path.len() > 1 {
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#dd8452\"/>",
                path.join(" ")
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
