//! CSV, SVG and JSON emitters.
//!
//! Numbers are written with `{:.16e}` (17 significant digits), `.` decimal
//! separator and LF line endings, so identical inputs give identical bytes.
//! Every file is written to a sibling temporary and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::asymptotics::{RateFit, RemainderSample};
use crate::continuation::GlobalProfile;
use crate::metric::MetricProfile;
use crate::picard::LocalSolution;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to write for {0}")]
    Empty(&'static str),
    #[error("column {column} has {got} rows, expected {expected}")]
    Ragged { column: String, got: usize, expected: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Renders named columns as CSV.
pub fn csv_string(columns: &[(&str, &[f64])]) -> Result<String, ReportError> {
    let rows = columns.first().map(|c| c.1.len()).unwrap_or(0);
    if rows == 0 {
        return Err(ReportError::Empty("csv"));
    }
    for (name, col) in columns {
        if col.len() != rows {
            return Err(ReportError::Ragged { column: name.to_string(), got: col.len(), expected: rows });
        }
    }
    let mut out = columns.iter().map(|c| c.0).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..rows {
        for (j, (_, col)) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{:.16e}", col[i]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<(), ReportError> {
    let body = csv_string(columns)?;
    write_atomic(path, body.as_bytes())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axes {
    Linear,
    LogLog,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// A bare line chart: axes box, one polyline per series and a legend.
/// On log axes non-positive points are skipped.
pub fn svg_chart(title: &str, x: &[f64], series: &[(&str, &[f64])], axes: Axes) -> Result<String, ReportError> {
    let map = |v: f64| match axes {
        Axes::Linear => Some(v).filter(|v| v.is_finite()),
        Axes::LogLog => Some(v).filter(|v| *v > 0.0 && v.is_finite()).map(f64::log10),
    };
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(series.len());
    for (name, ys) in series {
        if ys.len() != x.len() {
            return Err(ReportError::Ragged { column: name.to_string(), got: ys.len(), expected: x.len() });
        }
        pts.push(x.iter().zip(ys.iter()).filter_map(|(&a, &b)| Some((map(a)?, map(b)?))).collect());
    }
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in all {
        x0 = x0.min(a);
        x1 = x1.max(a);
        y0 = y0.min(b);
        y1 = y1.max(b);
    }
    if !(x0 <= x1 && y0 <= y1) {
        return Err(ReportError::Empty("chart"));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |a: f64| MARGIN + (a - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |b: f64| HEIGHT - MARGIN - (b - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title))
        .unwrap();
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    let label = |v: f64| match axes {
        Axes::Linear => format!("{v:.3e}"),
        Axes::LogLog => format!("1e{v:.1}"),
    };
    let font = r#"font-family="sans-serif" font-size="10""#;
    writeln!(s, r#"<text x="{MARGIN}" y="{}" {font}>{}</text>"#, HEIGHT - MARGIN + 14.0, label(x0)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="end">{}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 14.0, label(x1)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="end">{}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN, label(y0)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 10.0, label(y1)).unwrap();
    for (k, ((name, _), line)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = line.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" ")).unwrap();
        let ly = MARGIN + 14.0 * (k as f64 + 1.0);
        writeln!(s, r#"<text x="{}" y="{ly}" {font} fill="{color}">{}</text>"#, MARGIN + 8.0, escape(name)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `name.csv` plus `name.svg`, both rendered before either file is written.
pub fn emit_series(
    dir: &Path,
    name: &str,
    x_name: &str,
    x: &[f64],
    series: &[(&str, &[f64])],
    axes: Axes,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut cols: Vec<(&str, &[f64])> = vec![(x_name, x)];
    cols.extend_from_slice(series);
    let csv = csv_string(&cols)?;
    let svg = svg_chart(name, x, series, axes)?;
    let (csv_path, svg_path) = (dir.join(format!("{name}.csv")), dir.join(format!("{name}.svg")));
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

/// `local.csv` with `r, w, v, h, h_r` on the fixed-point grid and `local.json`
/// with the run metadata.
pub fn emit_local(dir: &Path, sol: &LocalSolution) -> Result<Vec<PathBuf>, ReportError> {
    let p = &sol.params;
    let r = sol.grid().nodes();
    let (w, v) = (sol.w(), sol.v());
    let a = p.alpha;
    let h: Vec<f64> = r.iter().zip(&w).map(|(r, w)| w * r.powf(-a)).collect();
    // h_r = r^{-alpha} (v - alpha w / r)
    let h_r: Vec<f64> = (0..r.len()).map(|i| r[i].powf(-a) * (v[i] - a * w[i] / r[i])).collect();
    let csv = csv_string(&[("r", r), ("w", &w), ("v", &v), ("h", &h), ("h_r", &h_r)])?;
    let csv_path = dir.join("local.csv");
    let json_path = dir.join("local.json");
    write_atomic(&csv_path, csv.as_bytes())?;
    write_json(&json_path, &sol.metadata())?;
    Ok(vec![csv_path, json_path])
}

/// `h_vs_r.csv` (`r, h, h_r, h_rr`) and a log-log chart of `h`.
pub fn emit_profile(dir: &Path, profile: &GlobalProfile) -> Result<Vec<PathBuf>, ReportError> {
    if profile.is_empty() {
        return Err(ReportError::Empty("profile"));
    }
    let csv = csv_string(&[("r", &profile.r), ("h", &profile.h), ("h_r", &profile.h_r), ("h_rr", &profile.h_rr)])?;
    let svg = svg_chart("h_vs_r", &profile.r, &[("h", &profile.h)], Axes::LogLog)?;
    let (csv_path, svg_path) = (dir.join("h_vs_r.csv"), dir.join("h_vs_r.svg"));
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

/// `qtail.csv` with the fitted `(r, q)` pairs.
pub fn emit_qtail(dir: &Path, fit: &RateFit) -> Result<PathBuf, ReportError> {
    let (r, q): (Vec<f64>, Vec<f64>) = fit.q_tail.iter().copied().unzip();
    let path = dir.join("qtail.csv");
    write_csv(&path, &[("r", &r), ("q", &q)])?;
    Ok(path)
}

/// `remainders.csv` (`r, remainder, scaled_remainder`) and a linear chart of
/// the scaled remainder.
pub fn emit_remainders(dir: &Path, samples: &[RemainderSample]) -> Result<Vec<PathBuf>, ReportError> {
    let r: Vec<f64> = samples.iter().map(|s| s.r).collect();
    let rem: Vec<f64> = samples.iter().map(|s| s.remainder).collect();
    let scaled: Vec<f64> = samples.iter().map(|s| s.scaled_remainder).collect();
    let csv = csv_string(&[("r", &r), ("remainder", &rem), ("scaled_remainder", &scaled)])?;
    let svg = svg_chart("remainders", &r, &[("scaled_remainder", &scaled)], Axes::Linear)?;
    let (csv_path, svg_path) = (dir.join("remainders.csv"), dir.join("remainders.svg"));
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

/// `metric.csv` (`t, a, a_t, a_tt, f_t, f_tt, f`) and a log-log chart of `a(t)`.
pub fn emit_metric(dir: &Path, mp: &MetricProfile) -> Result<Vec<PathBuf>, ReportError> {
    if mp.is_empty() {
        return Err(ReportError::Empty("metric profile"));
    }
    if !mp.has_potential() {
        return Err(ReportError::Empty("potential"));
    }
    let csv = csv_string(&[
        ("t", &mp.t),
        ("a", &mp.a),
        ("a_t", &mp.a_t),
        ("a_tt", &mp.a_tt),
        ("f_t", &mp.f_t),
        ("f_tt", &mp.f_tt),
        ("f", &mp.f),
    ])?;
    let svg = svg_chart("a_vs_t", &mp.t, &[("a", &mp.a)], Axes::LogLog)?;
    let (csv_path, svg_path) = (dir.join("metric.csv"), dir.join("a_vs_t.svg"));
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}
