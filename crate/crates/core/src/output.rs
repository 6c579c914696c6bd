//! Deterministic artifact writers: CSV (17 significant digits, `.` decimal,
//! `,` separator), JSON (sorted keys), and the self-contained SVG polar plot.
//! Every file carries the config hash in a metadata header.

use crate::metric::MetricParams;
use std::fs;
use std::io;
use std::path::Path;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(
    path: &Path,
    config_hash: &str,
    columns: &[&str],
    rows: &[Vec<f64>],
) -> io::Result<()> {
    let mut text = String::new();
    text.push_str(&format!("# config-hash: {config_hash}\n"));
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let cells: Vec<String> = row.iter().map(|&v| sig17(v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text)
}

/// Write a JSON object with the config hash injected as `config_hash`.
/// serde_json keeps object keys sorted, so identical data is byte-identical.
pub fn write_json(
    path: &Path,
    config_hash: &str,
    value: serde_json::Value,
) -> io::Result<()> {
    let mut value = value;
    match &mut value {
        serde_json::Value::Object(map) => {
            map.insert("config_hash".into(), config_hash.into());
        }
        _ => panic!("top-level JSON artifact must be an object"),
    }
    let text = serde_json::to_string_pretty(&value).expect("JSON serializes");
    fs::write(path, text + "\n")
}

/// Polar plot of a trajectory: concentric circles at the horizons and the
/// turning radius, plus the geodesic curve. Self-contained (no external
/// assets), viewBox [−1.2·r₊, 1.2·r₊]² with r₊ replaced by the launch radius
/// in the naked regime (where the curve is meant to escape the frame).
pub fn write_trace_svg(
    path: &Path,
    config_hash: &str,
    params: &MetricParams,
    r0: Option<f64>,
    curve: &[(f64, f64)],
) -> io::Result<()> {
    let frame_r = params.r_plus.unwrap_or_else(|| {
        curve.first().map(|&(x, y)| (x * x + y * y).sqrt()).unwrap_or(1.0)
    });
    let half = 1.2 * frame_r;
    let fmt = |v: f64| format!("{v:.6}");

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
        fmt(-half),
        fmt(-half),
        fmt(2.0 * half),
        fmt(2.0 * half)
    ));
    s.push_str(&format!("<!-- config-hash: {config_hash} -->\n"));
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        fmt(-half),
        fmt(-half),
        fmt(2.0 * half),
        fmt(2.0 * half)
    ));
    let circle = |r: f64, stroke: &str, dash: &str, s: &mut String| {
        s.push_str(&format!(
            "<circle cx=\"0\" cy=\"0\" r=\"{}\" fill=\"none\" stroke=\"{stroke}\" \
             stroke-width=\"{}\"{dash}/>\n",
            fmt(r),
            fmt(half / 300.0)
        ));
    };
    if let Some(rp) = params.r_plus {
        circle(rp, "#555555", "", &mut s);
    }
    if let Some(rm) = params.r_minus {
        if rm > 0.0 {
            circle(rm, "#555555", " stroke-dasharray=\"0.04 0.04\"", &mut s);
        }
    }
    if let Some(r0) = r0 {
        circle(r0, "#bb3333", " stroke-dasharray=\"0.02 0.02\"", &mut s);
    }
    if !curve.is_empty() {
        let pts: Vec<String> =
            curve.iter().map(|&(x, y)| format!("{},{}", fmt(x), fmt(-y))).collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#2255bb\" stroke-width=\"{}\"/>\n",
            pts.join(" "),
            fmt(half / 200.0)
        ));
    }
    s.push_str("</svg>\n");
    fs::write(path, s)
}
