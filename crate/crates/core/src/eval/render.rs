//! CSV tables and SVG figures for evaluation reports.

use std::fmt::Write;

use super::peg::{PegGrid, PegZone};
use super::{EvalRecord, EvalReport, ReportRow};
use crate::error::Result;

fn csv_string(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cluster_label(row: &ReportRow) -> String {
    row.cluster.map_or("Avg.".to_string(), |c| c.to_string())
}

/// Rows grouped by cluster, averaged row last, each paired with its
/// per-method entries in report method order.
fn by_cluster(report: &EvalReport) -> Vec<(String, usize, Vec<Option<&ReportRow>>)> {
    let mut clusters: Vec<usize> = report.rows.iter().filter_map(|r| r.cluster).collect();
    clusters.dedup();
    let mut out: Vec<_> = clusters
        .into_iter()
        .map(|c| {
            let cells: Vec<Option<&ReportRow>> = report.methods.iter().map(|m| report.row(c, m)).collect();
            let segments = cells.iter().flatten().map(|r| r.segments).max().unwrap_or(0);
            (c.to_string(), segments, cells)
        })
        .collect();
    let overall: Vec<Option<&ReportRow>> = report
        .methods
        .iter()
        .map(|m| report.overall.iter().find(|r| &r.method == m))
        .collect();
    let segments = overall.iter().flatten().map(|r| r.segments).max().unwrap_or(0);
    out.push((
        overall
            .iter()
            .flatten()
            .next()
            .map_or("Avg.".into(), |r| cluster_label(r)),
        segments,
        overall,
    ));
    out
}

/// Zone percentages per cluster with one A..E column group per method.
pub fn zones_csv(report: &EvalReport) -> Result<String> {
    let mut header = vec!["cluster".to_string(), "test_segments".to_string()];
    for m in &report.methods {
        header.extend(PegZone::ALL.iter().map(|z| format!("{m}_{z}")));
    }
    let rows = by_cluster(report)
        .into_iter()
        .map(|(label, segments, cells)| {
            let mut row = vec![label, segments.to_string()];
            for cell in cells {
                match cell {
                    Some(r) => row.extend(r.zones.iter().map(|z| format!("{z:.2}"))),
                    None => row.extend(std::iter::repeat_n(String::new(), 5)),
                }
            }
            row
        })
        .collect();
    csv_string(header, rows)
}

/// MRMSE per cluster with one column per method.
pub fn mrmse_csv(report: &EvalReport) -> Result<String> {
    let mut header = vec!["cluster".to_string(), "test_segments".to_string()];
    header.extend(report.methods.iter().cloned());
    let rows = by_cluster(report)
        .into_iter()
        .map(|(label, segments, cells)| {
            let mut row = vec![label, segments.to_string()];
            row.extend(
                cells
                    .iter()
                    .map(|c| c.map_or(String::new(), |r| format!("{:.4}", r.mrmse))),
            );
            row
        })
        .collect();
    csv_string(header, rows)
}

pub fn horizon_csv(report: &EvalReport) -> Result<String> {
    let header = ["method", "horizon", "minutes", "pairs", "A+B", "C", "D+E"]
        .map(String::from)
        .to_vec();
    let rows = report
        .horizons
        .iter()
        .map(|h| {
            let mut row = vec![
                h.method.clone(),
                h.horizon.to_string(),
                h.minutes.to_string(),
                h.pairs.to_string(),
            ];
            row.extend(h.bands.iter().map(|b| format!("{b:.2}")));
            row
        })
        .collect();
    csv_string(header, rows)
}

const BAND_COLOURS: [&str; 3] = ["#4c9f70", "#f2c14e", "#d1495b"];

/// Stacked-area chart of the banded zone percentages over the horizon.
pub fn horizon_svg(report: &EvalReport, method: &str) -> String {
    let rows: Vec<_> = report.horizons.iter().filter(|h| h.method == method).collect();
    let (w, h, pad) = (480.0, 300.0, 40.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{method}: error grid bands by horizon</title>"#);
    if rows.len() >= 2 {
        let first = rows[0].minutes as f64;
        let last = rows[rows.len() - 1].minutes as f64;
        let x = |m: i64| pad + (m as f64 - first) / (last - first) * (w - 2.0 * pad);
        let y = |p: f64| h - pad - p / 100.0 * (h - 2.0 * pad);
        for band in (0..3).rev() {
            let top: Vec<f64> = rows.iter().map(|r| r.bands[..=band].iter().sum()).collect();
            let bottom: Vec<f64> = rows.iter().map(|r| r.bands[..band].iter().sum()).collect();
            let mut points: Vec<String> = rows
                .iter()
                .zip(&top)
                .map(|(r, t)| format!("{:.1},{:.1}", x(r.minutes), y(*t)))
                .collect();
            points.extend(
                rows.iter()
                    .zip(&bottom)
                    .rev()
                    .map(|(r, b)| format!("{:.1},{:.1}", x(r.minutes), y(*b))),
            );
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}"/>"#,
                points.join(" "),
                BAND_COLOURS[band]
            );
        }
        for r in &rows {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                x(r.minutes),
                h - pad + 14.0,
                r.minutes
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">minutes after meal</text>"#,
        w / 2.0,
        h - 6.0
    );
    for (i, label) in ["A+B", "C", "D+E"].iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="10">{label}</text>"#,
            pad + 60.0 * i as f64,
            10.0,
            BAND_COLOURS[i],
            pad + 60.0 * i as f64 + 14.0,
            19.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter of (reference, prediction) pairs over the grid boundaries.
pub fn scatter_svg(records: &[EvalRecord], method: &str, horizon: usize) -> String {
    let grid = PegGrid::type1();
    let (size, pad) = (420.0, 30.0);
    let max = grid.domain[1];
    let px = |v: f64| pad + v.clamp(0.0, max) / max * (size - 2.0 * pad);
    let py = |v: f64| size - pad - v.clamp(0.0, max) / max * (size - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(
        s,
        r#"<title>{method}: error grid at {} minutes</title>"#,
        horizon as i64 * crate::data::STEP_MINUTES
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{0}" height="{0}" fill="none" stroke="black"/>"#,
        size - 2.0 * pad
    );
    for b in &grid.boundaries {
        for line in [&b.upper, &b.lower] {
            if line.is_empty() {
                continue;
            }
            let pts: Vec<String> = line
                .iter()
                .map(|[x, y]| format!("{:.1},{:.1}", px(*x), py(*y)))
                .collect();
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#555" stroke-width="1"/>"##,
                pts.join(" ")
            );
        }
    }
    for r in records.iter().filter(|r| r.method == method && r.horizon == horizon) {
        if let Some(p) = r.prediction {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="#1f5f8b"/>"##,
                px(r.reference),
                py(p)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
