//! Report emission: JSON metrics, CSV tables, and SVG charts.

use std::fs;
use std::path::Path;

use crate::error::Result;

use super::metrics::EvalReport;
use super::mi::MiRow;

/// Minimal line chart; one polyline per named series, shared axes.
pub fn svg_line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 48.0;
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 1.0f64, 0.0f64, 1.0f64);
    if !points.is_empty() {
        x0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        x1 = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        y0 = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
        y1 = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    }
    if (x1 - x0).abs() < 1e-12 {
        x1 = x0 + 1.0;
    }
    if (y1 - y0).abs() < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        title
    ));
    // Axes.
    s.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - M,
        W - M
    ));
    s.push_str(&format!(
        "<text x=\"{M}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.2}</text>\n<text x=\"{M}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.2}</text>\n",
        H - M + 14.0,
        y0,
        M - 6.0,
        y1
    ));
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            W - M - 120.0,
            M + 16.0 * (i + 1) as f64
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Structural check used by tests and the CLI before writing charts.
pub fn validate_svg(svg: &str) -> bool {
    svg.starts_with("<?xml")
        && svg.contains("<svg ")
        && svg.trim_end().ends_with("</svg>")
        && svg.matches("<polyline").count() >= 1
}

pub fn bins_csv(report: &EvalReport) -> String {
    let mut out = String::from("lo,hi,n,sr,spl\n");
    for b in &report.bins {
        let hi = b.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".into());
        out.push_str(&format!("{},{},{},{:.4},{:.4}\n", b.lo, hi, b.n, b.sr, b.spl));
    }
    out
}

pub fn mi_csv(rows: &[MiRow]) -> String {
    let mut out = String::from("instance,exact_bits,bound_bits,gap_bits\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9}\n",
            r.instance, r.exact_bits, r.bound_bits, r.gap_bits
        ));
    }
    out
}

/// Writes report.json, bins.csv, and curves.svg (success/SPL against the
/// start geodesic bin) into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    fs::write(dir.join("bins.csv"), bins_csv(report))?;

    let populated: Vec<&crate::evalkit::metrics::BinStat> =
        report.bins.iter().filter(|b| b.n > 0).collect();
    let mid = |b: &crate::evalkit::metrics::BinStat| match b.hi {
        Some(h) => (b.lo + h) as f64 / 2.0,
        None => b.lo as f64 + 1.0,
    };
    let series = vec![
        (
            "success rate".to_string(),
            populated.iter().map(|b| (mid(b), b.sr)).collect(),
        ),
        (
            "SPL".to_string(),
            populated.iter().map(|b| (mid(b), b.spl)).collect(),
        ),
    ];
    let svg = svg_line_chart("Success vs. start geodesic distance", &series);
    debug_assert!(validate_svg(&svg));
    fs::write(dir.join("curves.svg"), svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::metrics::compute_metrics;
    use crate::evalkit::mi::mi_sweep;

    #[test]
    fn chart_passes_structural_validation() {
        let svg = svg_line_chart(
            "t",
            &[("a".into(), vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)])],
        );
        assert!(validate_svg(&svg));
        assert!(!validate_svg("<svg></svg>"));
    }

    #[test]
    fn report_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = compute_metrics(&[]);
        emit_report(&report, dir.path()).unwrap();
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let csv = std::fs::read_to_string(dir.path().join("bins.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + report.bins.len());
        let svg = std::fs::read_to_string(dir.path().join("curves.svg")).unwrap();
        assert!(validate_svg(&svg));
    }

    #[test]
    fn mi_table_has_header_and_all_rows() {
        let rows = mi_sweep(3, 1).unwrap();
        let csv = mi_csv(&rows);
        assert!(csv.starts_with("instance,exact_bits"));
        assert_eq!(csv.lines().count(), 1 + rows.len());
    }
}
