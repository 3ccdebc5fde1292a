//! Minimal SVG scatter/line plots. Output carries no timestamps or random
//! ids, so it is a pure function of the data.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Scatter,
    Line,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub style: SeriesStyle,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

impl Plot {
    pub fn render(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = extent(pts().map(|p| p.0));
        let (y0, y1) = extent(pts().map(|p| p.1));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let bottom = MARGIN_T + ph;
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
                bottom + 5.0,
                bottom + 18.0
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{MARGIN_L}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            let finite = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite());
            match s.style {
                SeriesStyle::Scatter => {
                    for &(x, y) in finite {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                            sx(x),
                            sy(y),
                            escape(&s.color)
                        );
                    }
                }
                SeriesStyle::Line => {
                    let path: Vec<String> = finite
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    if !path.is_empty() {
                        let _ = writeln!(
                            out,
                            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                            path.join(" "),
                            escape(&s.color)
                        );
                    }
                }
            }
        }

        for (i, s) in self.series.iter().enumerate() {
            let y = MARGIN_T + 15.0 + 18.0 * i as f64;
            let x = MARGIN_L + pw - 130.0;
            let marker = match s.style {
                SeriesStyle::Scatter => format!(
                    r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}"/>"#,
                    x + 8.0,
                    y - 4.0,
                    escape(&s.color)
                ),
                SeriesStyle::Line => format!(
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#,
                    y - 4.0,
                    x + 16.0,
                    y - 4.0,
                    escape(&s.color)
                ),
            };
            let _ = writeln!(
                out,
                r#"{marker}<text x="{:.1}" y="{y:.1}">{}</text>"#,
                x + 22.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot() -> Plot {
        Plot {
            title: "σ vs T".into(),
            x_label: "T".into(),
            y_label: "sigma".into(),
            series: vec![
                Series {
                    label: "experimental".into(),
                    color: "black".into(),
                    style: SeriesStyle::Scatter,
                    points: vec![(1.0, 0.1), (2.0, 0.05), (3.0, f64::NAN)],
                },
                Series {
                    label: "theoretical".into(),
                    color: "green".into(),
                    style: SeriesStyle::Line,
                    points: vec![(1.0, 0.12), (3.0, 0.04)],
                },
            ],
        }
    }

    #[test]
    fn renders_both_series_deterministically() {
        let a = plot().render();
        assert_eq!(a, plot().render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 2 + 1);
        assert_eq!(a.matches("<polyline").count(), 1);
        assert!(a.contains(">experimental<") && a.contains(">theoretical<"));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn degenerate_extent() {
        let p = Plot {
            series: vec![Series {
                points: vec![(5.0, 5.0)],
                ..plot().series[0].clone()
            }],
            ..plot()
        };
        assert!(!p.render().contains("NaN"));
    }
}
