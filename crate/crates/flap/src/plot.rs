//! Minimal deterministic SVG line charts for experiment outputs.
//!
//! Plots are derived solely from summary CSV rows, so regenerating a chart
//! from the same CSV yields byte-identical SVG. No display server needed.

use std::fmt::Write as _;

/// One plotted series: mean line plus an optional +/- sd band.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// (x, mean, sd) sorted by x.
    pub points: Vec<(f64, f64, f64)>,
}

/// Fixed palette keyed by series order; stable across runs.
const PALETTE: [&str; 10] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000",
    "#f58231", "#911eb4",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders a line chart with shaded +/- sd bands.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs_min = f64::INFINITY;
    let mut xs_max = f64::NEG_INFINITY;
    let mut ys_min = f64::INFINITY;
    let mut ys_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, m, sd) in &s.points {
            xs_min = xs_min.min(x);
            xs_max = xs_max.max(x);
            ys_min = ys_min.min(m - sd);
            ys_max = ys_max.max(m + sd);
        }
    }
    if !xs_min.is_finite() {
        xs_min = 0.0;
        xs_max = 1.0;
        ys_min = 0.0;
        ys_max = 1.0;
    }
    if xs_max == xs_min {
        xs_max = xs_min + 1.0;
    }
    if ys_max == ys_min {
        ys_max = ys_min + 1.0;
    }
    let pad = 0.05 * (ys_max - ys_min);
    ys_min -= pad;
    ys_max += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - xs_min) / (xs_max - xs_min) * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - ys_min) / (ys_max - ys_min)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        fmt(MARGIN_L + plot_w / 2.0),
        title
    );

    // axes with four ticks each
    for t in 0..=4 {
        let frac = t as f64 / 4.0;
        let xv = xs_min + frac * (xs_max - xs_min);
        let yv = ys_min + frac * (ys_max - ys_min);
        let xpix = fmt(sx(xv));
        let ypix = fmt(sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{xpix}" y1="{}" x2="{xpix}" y2="{}" stroke="#dddddd"/>"##,
            fmt(MARGIN_T),
            fmt(MARGIN_T + plot_h)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{ypix}" x2="{}" y2="{ypix}" stroke="#dddddd"/>"##,
            fmt(MARGIN_L),
            fmt(MARGIN_L + plot_w)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xpix}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            fmt(MARGIN_T + plot_h + 16.0),
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ypix}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            fmt(MARGIN_L - 6.0),
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333"/>"##,
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 10.0),
        x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        y_label
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if s.points.iter().any(|&(_, _, sd)| sd > 0.0) {
            let mut band = String::new();
            for &(x, m, sd) in &s.points {
                let _ = write!(band, "{},{} ", fmt(sx(x)), fmt(sy(m + sd)));
            }
            for &(x, m, sd) in s.points.iter().rev() {
                let _ = write!(band, "{},{} ", fmt(sx(x)), fmt(sy(m - sd)));
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" opacity="0.15"/>"#,
                band.trim_end()
            );
        }
        let mut line = String::new();
        for &(x, m, _) in &s.points {
            let _ = write!(line, "{},{} ", fmt(sx(x)), fmt(sy(m)));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.trim_end()
        );
        for &(x, m, _) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{}" cy="{}" r="2.4" fill="{color}"/>"#,
                fmt(sx(x)),
                fmt(sy(m))
            );
        }
        // legend
        let ly = MARGIN_T + 14.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#,
            fmt(WIDTH - MARGIN_R + 8.0),
            fmt(ly),
            fmt(WIDTH - MARGIN_R + 28.0),
            fmt(ly)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            fmt(WIDTH - MARGIN_R + 34.0),
            fmt(ly + 4.0),
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_series() -> Vec<Series> {
        vec![
            Series {
                name: "a".into(),
                points: vec![(0.0, 0.1, 0.02), (1.0, 0.4, 0.05), (2.0, 0.9, 0.01)],
            },
            Series {
                name: "b".into(),
                points: vec![(0.0, 0.3, 0.0), (1.0, 0.2, 0.0), (2.0, 0.25, 0.0)],
            },
        ]
    }

    #[test]
    fn chart_is_deterministic() {
        let a = line_chart_svg("t", "x", "y", &demo_series());
        let b = line_chart_svg("t", "x", "y", &demo_series());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn chart_contains_legend_entries() {
        let svg = line_chart_svg("t", "x", "y", &demo_series());
        assert!(svg.contains(">a</text>"));
        assert!(svg.contains(">b</text>"));
    }

    #[test]
    fn degenerate_input_still_renders() {
        let svg = line_chart_svg("t", "x", "y", &[]);
        assert!(svg.contains("</svg>"));
        let single = vec![Series {
            name: "s".into(),
            points: vec![(1.0, 0.5, 0.0)],
        }];
        let svg = line_chart_svg("t", "x", "y", &single);
        assert!(svg.contains("circle"));
    }
}
