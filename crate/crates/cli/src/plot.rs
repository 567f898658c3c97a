//! Convergence plots as standalone SVG: `‖F′‖` against iteration and wall
//! time on a log scale, plus `F − F*` panels when the optimal value is known.

use std::fmt::Write as _;

use sr1qn::solvers::IterateRecord;

pub struct Series<'a> {
    pub label: &'a str,
    pub records: &'a [IterateRecord],
}

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const LEGEND_H: f64 = 30.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Copy)]
enum XAxis {
    Iteration,
    Seconds,
}

#[derive(Clone, Copy)]
enum YAxis {
    Gnorm,
    Gap(f64),
}

pub fn convergence_svg(title: &str, series: &[Series<'_>], f_star: Option<f64>) -> String {
    let rows = if f_star.is_some() { 2 } else { 1 };
    let cell_w = MARGIN_L + PANEL_W + MARGIN_R;
    let cell_h = MARGIN_T + PANEL_H + MARGIN_B;
    let width = 2.0 * cell_w;
    let height = LEGEND_H + rows as f64 * cell_h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    legend(&mut out, series);
    let mut ys = vec![YAxis::Gnorm];
    if let Some(fs) = f_star {
        ys.push(YAxis::Gap(fs));
    }
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in [XAxis::Iteration, XAxis::Seconds].iter().enumerate() {
            let ox = col as f64 * cell_w + MARGIN_L;
            let oy = LEGEND_H + row as f64 * cell_h + MARGIN_T;
            panel(&mut out, series, x, y, ox, oy);
        }
    }
    out.push_str("</svg>\n");
    out
}

fn legend(out: &mut String, series: &[Series<'_>]) {
    for (i, s) in series.iter().enumerate() {
        let x = MARGIN_L + i as f64 * 140.0;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="32" x2="{}" y2="32" stroke="{c}" stroke-width="2"/><text x="{}" y="36">{}</text>"#,
            x + 20.0,
            x + 25.0,
            escape(s.label)
        );
    }
}

fn x_value(r: &IterateRecord, x: XAxis) -> f64 {
    match x {
        XAxis::Iteration => r.k as f64,
        XAxis::Seconds => r.elapsed_s,
    }
}

/// Log₁₀ of the plotted quantity, or `None` for non-positive values.
fn y_value(r: &IterateRecord, y: YAxis) -> Option<f64> {
    let v = match y {
        YAxis::Gnorm => r.gnorm,
        YAxis::Gap(fs) => r.f - fs,
    };
    (v > 0.0 && v.is_finite()).then(|| v.log10())
}

fn panel(out: &mut String, series: &[Series<'_>], x: XAxis, y: YAxis, ox: f64, oy: f64) {
    let points = || series.iter().flat_map(|s| s.records.iter());
    let x_max = points().map(|r| x_value(r, x)).fold(0.0, f64::max);
    let (mut y_lo, mut y_hi) = points()
        .filter_map(|r| y_value(r, y))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 1.0);
    }
    let (y_lo, y_hi) = (y_lo.floor(), y_hi.ceil().max(y_lo.floor() + 1.0));
    let x_span = if x_max > 0.0 { x_max } else { 1.0 };
    let sx = |v: f64| ox + v / x_span * PANEL_W;
    let sy = |v: f64| oy + (y_hi - v) / (y_hi - y_lo) * PANEL_H;

    let _ = writeln!(
        out,
        r##"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let decade_step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
    let mut d = y_lo;
    while d <= y_hi {
        let py = sy(d);
        let _ = writeln!(
            out,
            r##"<line x1="{ox}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            ox + PANEL_W,
            ox - 6.0,
            py + 4.0,
            d as i64
        );
        d += decade_step;
    }
    for i in 0..=4 {
        let v = x_span * i as f64 / 4.0;
        let label = match x {
            XAxis::Iteration => format!("{}", v.round() as i64),
            XAxis::Seconds => format!("{v:.3}"),
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            sx(v),
            oy + PANEL_H + 16.0
        );
    }
    let x_label = match x {
        XAxis::Iteration => "iteration",
        XAxis::Seconds if x_max > 0.0 => "seconds",
        XAxis::Seconds => "seconds (wall clock not recorded)",
    };
    let y_label = match y {
        YAxis::Gnorm => "‖F′(x)‖",
        YAxis::Gap(_) => "F(x) − F*",
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text><text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{y_label}</text>"#,
        ox + PANEL_W / 2.0,
        oy + PANEL_H + 36.0,
        ox - 52.0,
        oy + PANEL_H / 2.0,
        ox - 52.0,
        oy + PANEL_H / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let mut pts = String::new();
        for r in s.records {
            if let Some(v) = y_value(r, y) {
                let _ = write!(pts, "{:.2},{:.2} ", sx(x_value(r, x)), sy(v));
            }
        }
        if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                COLORS[i % COLORS.len()],
                pts.trim_end()
            );
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, gnorm: f64, f: f64) -> IterateRecord {
        IterateRecord {
            k,
            f,
            gnorm,
            r: 0.0,
            lambda: 0.0,
            trace_g: 0.0,
            restarted: false,
            elapsed_s: k as f64 * 0.5,
        }
    }

    #[test]
    fn one_polyline_per_series_and_panel() {
        let a = [rec(0, 1.0, 2.0), rec(1, 0.1, 1.5), rec(2, 0.0, 1.0)];
        let b = [rec(0, 1.0, 2.0), rec(1, 0.5, 1.8)];
        let series = [Series { label: "a", records: &a }, Series { label: "b<&>", records: &b }];
        let svg = convergence_svg("t", &series, None);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("b&lt;&amp;&gt;"));
        let svg = convergence_svg("t", &series, Some(1.0));
        assert_eq!(svg.matches("<polyline").count(), 8);
    }

    #[test]
    fn nonpositive_values_are_dropped() {
        let a = [rec(0, 0.0, 0.0)];
        let svg = convergence_svg("t", &[Series { label: "a", records: &a }], None);
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.ends_with("</svg>\n"));
    }
}
