//! Learning curves as standalone SVG: one short tick per episode reward and a
//! trailing moving average per run.

use std::fmt::Write as _;

use crate::csvlog::EpisodeRow;

/// Trailing mean over every full window: entry `i` averages
/// `values[i + 1 - window ..= i]` and is reported at episode `i`.
pub fn moving_average(values: &[i8], window: usize) -> Vec<(usize, f64)> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() + 1 - window);
    let mut sum: i64 = values[..window].iter().map(|&v| v as i64).sum();
    out.push((window - 1, sum as f64 / window as f64));
    for i in window..values.len() {
        sum += values[i] as i64 - values[i - window] as i64;
        out.push((i, sum as f64 / window as f64));
    }
    out
}

/// Rows that feed a learning curve: everything except the listed workers
/// (the demonstrators of planner-imitation runs).
pub fn curve_rows<'a>(rows: &'a [EpisodeRow], exclude: &[usize]) -> Vec<&'a EpisodeRow> {
    rows.iter().filter(|r| !exclude.contains(&r.worker_id)).collect()
}

/// A tenth of the run, at least one episode.
pub fn default_window(episodes: usize) -> usize {
    (episodes / 10).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub rewards: Vec<i8>,
    pub average: Vec<(usize, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, rows: &[&EpisodeRow], window: usize) -> Self {
        let rewards: Vec<i8> = rows.iter().map(|r| r.reward).collect();
        let average = moving_average(&rewards, window);
        Series { label: label.into(), rewards, average }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(series: &[Series], window: usize) -> String {
    let (w, h) = (900.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 50.0);
    let n = series.iter().map(|s| s.rewards.len()).max().unwrap_or(0).max(2);
    let x = |i: usize| left + (w - left - right) * i as f64 / (n - 1) as f64;
    let y = |v: f64| top + (h - top - bottom) * (1.0 - v) / 2.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for v in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let _ = writeln!(out, r##"<line x1="{left}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#ddd"/>"##, y(v), w - right);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{v}</text>"#, left - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">episode (moving average window {window})</text>"#,
        w / 2.0,
        h - 12.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(out, r#"<g stroke="{color}" stroke-opacity="0.25">"#);
        for (i, &r) in s.rewards.iter().enumerate() {
            let _ = writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}"/>"#, x(i) - 1.5, y(r as f64), x(i) + 1.5);
        }
        let _ = writeln!(out, "</g>");
        if !s.average.is_empty() {
            let pts: Vec<String> = s.average.iter().map(|&(i, v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            left + 8.0,
            top - 10.0 + 14.0 * k as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
