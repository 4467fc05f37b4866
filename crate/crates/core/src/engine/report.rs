//! Rendering of backtest reports to JSON, CSV and SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::backtest::{Aggregates, BacktestConfig, BacktestReport, StrategyWindow, Timings};
use crate::error::{Error, Result};

pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(Error::Input(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    run_hash: &'a str,
    config: &'a BacktestConfig,
    aggregates: &'a Aggregates,
    timings: &'a Timings,
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the full report (for later re-rendering) plus the requested
/// formats into `dir`; returns the paths written.
pub fn write_report(rep: &BacktestReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = vec![write(dir.join(RUN_FILE), &serde_json::to_string(rep)?)?];
    for f in formats {
        match f {
            Format::Json => out.push(write_summary(rep, dir)?),
            Format::Csv => out.extend(write_series(rep, dir)?),
            Format::Svg => out.extend(write_figures(rep, dir)?),
        }
    }
    Ok(out)
}

pub fn load_run(dir: &Path) -> Result<BacktestReport> {
    let path = dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_summary(rep: &BacktestReport, dir: &Path) -> Result<PathBuf> {
    let s = Summary {
        run_hash: &rep.run_hash,
        config: &rep.config,
        aggregates: &rep.aggregates,
        timings: &rep.timings,
    };
    write(dir.join(REPORT_FILE), &serde_json::to_string_pretty(&s)?)
}

pub fn series_csv(rows: &[StrategyWindow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Input(e.to_string());
    w.write_record([
        "window", "date", "te_ex_post", "te_ex_ante", "forecast", "realized", "benchmark", "excess", "missing_realized", "selected", "weights",
    ])
    .map_err(err)?;
    for r in rows {
        let weights: Vec<String> = r.weights.iter().map(|x| x.to_string()).collect();
        w.write_record([
            r.window.to_string(),
            r.date.to_string(),
            r.te_ex_post.to_string(),
            r.te_ex_ante.to_string(),
            r.forecast.to_string(),
            r.realized.to_string(),
            r.benchmark.to_string(),
            (r.realized - r.benchmark).to_string(),
            r.missing_realized.to_string(),
            r.selected.join(";"),
            weights.join(";"),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_series(rep: &BacktestReport, dir: &Path) -> Result<Vec<PathBuf>> {
    rep.series
        .iter()
        .map(|(s, rows)| write(dir.join(format!("series_{s}.csv")), &series_csv(rows)?))
        .collect()
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal line chart: one polyline per named series over the window index.
pub fn line_chart(title: &str, lines: &[(String, Vec<(usize, f64)>)]) -> String {
    let (w, h, pad) = (800.0, 400.0, 50.0);
    let pts = lines.iter().flat_map(|l| l.1.iter()).filter(|p| p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x as f64);
        x1 = x1.max(x as f64);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="25" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(s, r#"<text x="5" y="{}" font-family="sans-serif" font-size="10">{y1:.3e}</text>"#, pad + 4.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-family="sans-serif" font-size="10">{y0:.3e}</text>"#, h - pad);
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="10">{x0}</text>"#, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{x1}</text>"#, w - pad, h - pad + 15.0);
    for (k, (name, data)) in lines.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = data
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x as f64), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#, coords.join(" "));
        let ly = pad + 15.0 + 15.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            pad + 10.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_figures(rep: &BacktestReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let pick = |f: fn(&StrategyWindow) -> f64| -> Vec<(String, Vec<(usize, f64)>)> {
        rep.series
            .iter()
            .map(|(s, rows)| (s.to_string(), rows.iter().map(|r| (r.window, f(r))).collect()))
            .collect()
    };
    Ok(vec![
        write(dir.join("fig_te_post.svg"), &line_chart("Ex-post tracking error", &pick(|r| r.te_ex_post)))?,
        write(dir.join("fig_te_ante.svg"), &line_chart("Ex-ante tracking error", &pick(|r| r.te_ex_ante)))?,
        write(dir.join("fig_excess.svg"), &line_chart("Portfolio minus benchmark return", &pick(|r| r.realized - r.benchmark)))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let svg = line_chart("a < b", &[("x".into(), (1..=5).map(|i| (i, i as f64 * 0.1)).collect()), ("y".into(), vec![])]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }
}
