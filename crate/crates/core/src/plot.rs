//! Self-contained SVG line charts of result CSVs.
//!
//! Output depends only on the rows and options: series are ordered by first
//! appearance and all coordinates are printed with fixed precision.

use std::fmt::Write as _;

use crate::bench::ResultRow;
use crate::error::{Result, RieError};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOptions {
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

/// True when rows come from the trace-relation sweep (x axis is `N`).
fn is_size_sweep(rows: &[ResultRow]) -> bool {
    rows.iter().all(|r| r.estimator.starts_with("abs_error") || r.estimator.starts_with("rel_error"))
}

fn collect_series(rows: &[ResultRow]) -> (Vec<Series>, &'static str, &'static str) {
    let mut series: Vec<Series> = Vec::new();
    let mut push = |label: String, p: (f64, f64)| match series.iter_mut().find(|s| s.label == label) {
        Some(s) => s.points.push(p),
        None => series.push(Series {
            label,
            points: vec![p],
            dashed: false,
        }),
    };
    if is_size_sweep(rows) {
        let lambdas_vary = rows.iter().any(|r| r.lambda != rows[0].lambda);
        for r in rows.iter().filter(|r| r.estimator.starts_with("abs_error")) {
            let label = if lambdas_vary {
                format!("{} lambda={}", r.estimator, r.lambda)
            } else {
                r.estimator.clone()
            };
            push(label, (r.n as f64, r.mean_mse));
        }
        let mut ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        ns.sort_by(f64::total_cmp);
        ns.dedup();
        series.push(Series {
            label: "0.4 N^{-1/2}".into(),
            points: ns.iter().map(|&n| (n, 0.4 / n.sqrt())).collect(),
            dashed: true,
        });
        return (series, "N", "mean |error|");
    }
    let multi_panel = rows.iter().any(|r| (r.n, r.m) != (rows[0].n, rows[0].m));
    for r in rows {
        let label = if multi_panel {
            format!("{} ({}x{})", r.estimator, r.n, r.m)
        } else {
            r.estimator.clone()
        };
        push(label, (r.lambda, r.mean_mse));
    }
    (series, "lambda", "MSE")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else if !log {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            (self.lo as i32..=self.hi as i32).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5).map(|k| self.lo + (self.hi - self.lo) * k as f64 / 5.0).collect()
        }
    }
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if v.abs() >= 1e-3 || v == 0.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders rows as an SVG line chart. The trace-relation sweep plots
/// `mean |ε_N|` against `N` on log-log axes with the `0.4 N^{-1/2}`
/// reference; everything else plots MSE against `λ`.
pub fn render_svg(rows: &[ResultRow], options: &PlotOptions) -> Result<String> {
    if rows.is_empty() {
        return Err(RieError::Format("no data rows to plot".into()));
    }
    let size_sweep = is_size_sweep(rows);
    let (series, x_label, y_label) = collect_series(rows);
    let log_x = options.log_x || size_sweep;
    let log_y = options.log_y || size_sweep;
    let keep = |(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!log_x || *x > 0.0) && (!log_y || *y > 0.0);
    let series: Vec<Series> = series
        .into_iter()
        .map(|s| Series {
            points: s.points.into_iter().filter(keep).collect(),
            ..s
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    if series.is_empty() {
        return Err(RieError::Format("no plottable points (non-positive values on a log axis?)".into()));
    }
    let all = || series.iter().flat_map(|s| s.points.iter());
    let ax = Axis::new(all().map(|p| p.0), log_x);
    let ay = Axis::new(all().map(|p| p.1), log_y);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * ax.frac(x);
    let py = |y: f64| TOP + ph * (1.0 - ay.frac(y));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = options
        .title
        .clone()
        .unwrap_or_else(|| format!("{} ({})", rows[0].experiment, y_label));
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##
    );
    for t in ax.ticks() {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{TOP}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 18.0,
            tick_label(t, log_x)
        );
    }
    for t in ay.ticks() {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t, log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = if ser.dashed { "#000000" } else { PALETTE[i % PALETTE.len()] };
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            pts.join(" ")
        );
        if !ser.dashed {
            for &(x, y) in &ser.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
            }
        }
        let ly = TOP + 16.0 * i as f64 + 8.0;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
