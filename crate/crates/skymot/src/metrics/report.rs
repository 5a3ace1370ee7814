//! Rendering of metric reports as an aligned text table and as CSV.

use super::MetricReport;

/// Column order of the standard report table.
pub const COLUMNS: [&str; 17] = [
    "IDF1", "IDP", "IDR", "Rcll", "Prcn", "FAR", "GT", "MT", "PT", "ML", "FP", "FN", "ID",
    "FM", "MOTA", "MOTP", "MOTAL",
];

fn percent(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.1}")
    }
}

fn row_values(r: &MetricReport) -> Vec<String> {
    vec![
        percent(r.idf1),
        percent(r.idp),
        percent(r.idr),
        percent(r.recall),
        percent(r.precision),
        if r.far.is_nan() { "NaN".into() } else { format!("{:.2}", r.far) },
        r.gt_tracks.to_string(),
        r.mostly_tracked.to_string(),
        r.partially_tracked.to_string(),
        r.mostly_lost.to_string(),
        r.false_positives.to_string(),
        r.misses.to_string(),
        r.id_switches.to_string(),
        r.fragmentations.to_string(),
        percent(r.mota),
        percent(r.motp),
        percent(r.motal),
    ]
}

/// Aligned plain-text table, one row per report.
pub fn render_table(reports: &[MetricReport]) -> String {
    let name_width = reports
        .iter()
        .map(|r| r.name.len())
        .chain(std::iter::once("Sequence".len()))
        .max()
        .unwrap_or(8);
    let rows: Vec<Vec<String>> = reports.iter().map(row_values).collect();
    let widths: Vec<usize> = COLUMNS
        .iter()
        .enumerate()
        .map(|(i, header)| {
            rows.iter()
                .map(|r| r[i].len())
                .chain(std::iter::once(header.len()))
                .max()
                .unwrap()
        })
        .collect();

    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}", "Sequence"));
    for (header, w) in COLUMNS.iter().zip(&widths) {
        out.push_str(&format!("  {header:>w$}"));
    }
    out.push('\n');
    for (report, row) in reports.iter().zip(&rows) {
        out.push_str(&format!("{:<name_width$}", report.name));
        for (value, w) in row.iter().zip(&widths) {
            out.push_str(&format!("  {value:>w$}"));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable CSV with full-precision floats, same column order.
pub fn render_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("Sequence");
    for c in COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.idf1,
            r.idp,
            r.idr,
            r.recall,
            r.precision,
            r.far,
            r.gt_tracks,
            r.mostly_tracked,
            r.partially_tracked,
            r.mostly_lost,
            r.false_positives,
            r.misses,
            r.id_switches,
            r.fragmentations,
            r.mota,
            r.motp,
            r.motal,
        ));
    }
    out
}
