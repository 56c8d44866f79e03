//! Minimal SVG line charts: enough for training curves, rollout sweeps, and
//! trajectory overlays, with deterministic output for byte-level comparison.

/// One polyline. Non-finite points split the line into segments.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A shaded region between two curves sharing x coordinates, drawn behind
/// the lines (used for the envelope across runs).
#[derive(Debug, Clone)]
pub struct Band {
    pub upper: Vec<(f64, f64)>,
    pub lower: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// A single-panel line chart.
#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    /// Vertical marker lines at data-space x positions.
    pub vlines: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() { "0".to_string() } else { s }
    } else {
        format!("{v:.2e}")
    }
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            ..Default::default()
        }
    }

    fn data_range(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        let mut eat = |pts: &[(f64, f64)]| {
            for (x, y) in pts {
                if x.is_finite() && y.is_finite() {
                    xs.push(*x);
                    ys.push(*y);
                }
            }
        };
        for s in &self.series {
            eat(&s.points);
        }
        for b in &self.bands {
            eat(&b.upper);
            eat(&b.lower);
        }
        xs.extend(self.vlines.iter().filter(|v| v.is_finite()));
        let span = |vals: &[f64]| -> (f64, f64) {
            if vals.is_empty() {
                return (0.0, 1.0);
            }
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = (hi - lo) * 0.05;
                (lo - pad, hi + pad)
            }
        };
        (span(&xs), span(&ys))
    }

    /// Renders the complete SVG document.
    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.data_range();
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
        ));
        out.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            fmt(WIDTH / 2.0),
            escape(&self.title)
        ));

        for (i, b) in self.bands.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut pts: Vec<String> = b
                .upper
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{},{}", fmt(sx(*x)), fmt(sy(*y))))
                .collect();
            pts.extend(
                b.lower
                    .iter()
                    .rev()
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .map(|(x, y)| format!("{},{}", fmt(sx(*x)), fmt(sy(*y)))),
            );
            if pts.len() >= 3 {
                out.push_str(&format!(
                    "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                    pts.join(" ")
                ));
            }
        }

        for x in &self.vlines {
            if !x.is_finite() {
                continue;
            }
            out.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#999999\" \
                 stroke-dasharray=\"4,3\" stroke-width=\"1\"/>\n",
                fmt(sx(*x)),
                fmt(MARGIN_TOP),
                fmt(MARGIN_TOP + plot_h)
            ));
        }

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut segment: Vec<String> = Vec::new();
            let flush = |seg: &mut Vec<String>, out: &mut String| {
                if seg.len() >= 2 {
                    out.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                        seg.join(" ")
                    ));
                }
                seg.clear();
            };
            for (x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    segment.push(format!("{},{}", fmt(sx(*x)), fmt(sy(*y))));
                } else {
                    flush(&mut segment, &mut out);
                }
            }
            flush(&mut segment, &mut out);
            if s.points.len() == 1 && s.points[0].0.is_finite() && s.points[0].1.is_finite() {
                out.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                    fmt(sx(s.points[0].0)),
                    fmt(sy(s.points[0].1))
                ));
            }
        }

        // Axes on top of the data.
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(MARGIN_TOP),
            fmt(MARGIN_TOP + plot_h)
        ));
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(MARGIN_LEFT + plot_w),
            fmt(MARGIN_TOP + plot_h)
        ));
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            out.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
                fmt(sx(fx)),
                fmt(MARGIN_TOP + plot_h),
                fmt(MARGIN_TOP + plot_h + 5.0)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                fmt(sx(fx)),
                fmt(MARGIN_TOP + plot_h + 18.0),
                tick_label(fx)
            ));
            out.push_str(&format!(
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>\n",
                fmt(sy(fy)),
                fmt(MARGIN_LEFT - 5.0),
                fmt(MARGIN_LEFT)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
                fmt(MARGIN_LEFT - 8.0),
                fmt(sy(fy) + 4.0),
                tick_label(fy)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            fmt(MARGIN_LEFT + plot_w / 2.0),
            fmt(HEIGHT - 12.0),
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 16 {})\">{}</text>\n",
            fmt(MARGIN_TOP + plot_h / 2.0),
            fmt(MARGIN_TOP + plot_h / 2.0),
            escape(&self.y_label)
        ));

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let ly = MARGIN_TOP + 10.0 + 16.0 * i as f64;
            let lx = MARGIN_LEFT + plot_w - 150.0;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                fmt(lx),
                fmt(ly),
                fmt(lx + 18.0),
                fmt(ly)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
                fmt(lx + 24.0),
                fmt(ly + 4.0),
                escape(&s.label)
            ));
        }

        out.push_str("</svg>\n");
        out
    }
}
