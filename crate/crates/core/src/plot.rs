//! Minimal static SVG line and scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Figure<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub style: Style,
    /// Plot `log10(y)`; non-positive values are dropped.
    pub log_y: bool,
    /// Fixed x range; taken from the data when `None`.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl<'a> Figure<'a> {
    pub fn line(title: &'a str, x_label: &'a str, y_label: &'a str) -> Self {
        Figure {
            title,
            x_label,
            y_label,
            style: Style::Line,
            log_y: false,
            x_range: None,
            y_range: None,
        }
    }

    pub fn scatter(title: &'a str, x_label: &'a str, y_label: &'a str) -> Self {
        Figure {
            style: Style::Scatter,
            ..Figure::line(title, x_label, y_label)
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders `(x, y)` pairs. Non-finite points are skipped. A comment line
/// carrying `digest` is embedded after the root element.
pub fn render(fig: &Figure, x: &[f64], y: &[f64], digest: &str) -> String {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter_map(|(&a, &b)| {
            let b = if fig.log_y {
                if b > 0.0 {
                    b.log10()
                } else {
                    return None;
                }
            } else {
                b
            };
            (a.is_finite() && b.is_finite()).then_some((a, b))
        })
        .collect();

    let (x0, x1) = fig
        .x_range
        .unwrap_or_else(|| data_range(pts.iter().map(|p| p.0)));
    let (y0, y1) = match fig.y_range {
        Some((a, b)) if fig.log_y => (a.log10(), b.log10()),
        Some(r) => r,
        None => data_range(pts.iter().map(|p| p.1)),
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, "<!-- # config_digest={digest} -->").unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(fig.title)
    )
    .unwrap();

    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e4e4e4"/>"##,
            TOP + ph
        )
        .unwrap();
        writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e4e4e4"/>"##,
            LEFT + pw
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            tick_label(xv)
        )
        .unwrap();
        let ylab = if fig.log_y {
            format!("1e{yv:.1}")
        } else {
            tick_label(yv)
        };
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{ylab}</text>"#,
            LEFT - 6.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(fig.x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(fig.y_label)
    )
    .unwrap();

    match fig.style {
        Style::Line => {
            let mut d = String::new();
            for (i, &(a, b)) in pts.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                write!(d, "{cmd}{:.2},{:.2} ", sx(a), sy(b)).unwrap();
            }
            writeln!(
                out,
                r##"<path d="{}" fill="none" stroke="#1f5fa8" stroke-width="1.2"/>"##,
                d.trim_end()
            )
            .unwrap();
        }
        Style::Scatter => {
            out.push_str(r##"<g fill="#1f5fa8" fill-opacity="0.6">"##);
            out.push('\n');
            for &(a, b) in &pts {
                let (px, py) = (sx(a), sy(b));
                if (LEFT..=LEFT + pw).contains(&px) && (TOP..=TOP + ph).contains(&py) {
                    writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.6"/>"#).unwrap();
                }
            }
            out.push_str("</g>\n");
        }
    }
    out.push_str("</svg>\n");
    out
}
