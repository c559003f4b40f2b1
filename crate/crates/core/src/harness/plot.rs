//! Minimal SVG line charts for learning curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::compare::{moving_average, CURVES_HEADER, SMOOTHING_WINDOW};
use crate::harness::train::CSV_HEADER;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the series as a line chart with a point marker per sample.
pub fn render_svg(series: &[Series], x_label: &str, y_label: &str) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Csv("no data points to plot".into()));
    }
    if all.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Csv("non-finite data point".into()));
    }
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    // SVG y grows downwards.
    let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let bottom = MARGIN_TOP + plot_h;
    let right = MARGIN_LEFT + plot_w;
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black"><line x1="{MARGIN_LEFT}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{bottom}"/></g>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            bottom + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = MARGIN_TOP + 14.0 + 16.0 * k as f64;
        let lx = right - 150.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

fn field<T: std::str::FromStr>(cols: &[&str], idx: usize, line: usize) -> Result<T> {
    cols.get(idx)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Csv(format!("line {line}: bad or missing column {}", idx + 1)))
}

/// Reads a training metrics CSV or a comparison curves CSV into plottable
/// series of smoothed team return per episode.
pub fn read_series(text: &str) -> Result<Vec<Series>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Csv("empty file".into()))?;
    let header = header.trim();
    let series = if header == CSV_HEADER {
        let mut team: BTreeMap<u64, f64> = BTreeMap::new();
        for (i, line) in lines {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(Error::Csv(format!("line {}: expected 9 columns, found {}", i + 1, cols.len())));
            }
            let episode: u64 = field(&cols, 0, i + 1)?;
            let value: f64 = field(&cols, 3, i + 1)?;
            team.insert(episode, value);
        }
        let xs: Vec<f64> = team.keys().map(|&e| e as f64).collect();
        let ys: Vec<f64> = team.values().copied().collect();
        let smooth = moving_average(&ys, SMOOTHING_WINDOW);
        vec![Series { name: "team return".into(), points: xs.into_iter().zip(smooth).collect() }]
    } else if header == CURVES_HEADER {
        // mode -> episode -> (sum, count) of smoothed values across seeds.
        let mut acc: BTreeMap<String, BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
        for (i, line) in lines {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Csv(format!("line {}: expected 5 columns, found {}", i + 1, cols.len())));
            }
            let episode: u64 = field(&cols, 2, i + 1)?;
            let smoothed: f64 = field(&cols, 4, i + 1)?;
            let slot = acc.entry(cols[0].to_string()).or_default().entry(episode).or_insert((0.0, 0.0));
            slot.0 += smoothed;
            slot.1 += 1.0;
        }
        acc.into_iter()
            .map(|(name, eps)| Series {
                name,
                points: eps.into_iter().map(|(e, (s, c))| (e as f64, s / c)).collect(),
            })
            .collect()
    } else {
        return Err(Error::Csv(format!("unrecognised header {header:?}")));
    };
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(series)
}

/// Reads `csv_path` and writes the chart to `out_path`.
pub fn plot(csv_path: &Path, out_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv_path)?;
    let series = read_series(&text)?;
    let svg = render_svg(&series, "episode", "team return (moving average)")?;
    std::fs::write(out_path, svg)?;
    Ok(())
}
