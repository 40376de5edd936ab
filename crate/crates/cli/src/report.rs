//! Rendering of metric reports: aligned plain-text tables and an SVG bar
//! chart of recall@k.

use std::collections::BTreeMap;

use techembed_core::eval::MetricsReport;

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

/// An aligned two-column table of the headline metrics.
pub fn render_table(report: &MetricsReport) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("map".to_string(), fmt(report.map)),
        ("mrr".to_string(), fmt(report.mrr)),
    ];
    for (k, v) in &report.precision {
        rows.push((format!("precision@{k}"), fmt(*v)));
    }
    for (k, v) in &report.recall {
        rows.push((format!("recall@{k}"), fmt(*v)));
    }
    rows.push(("queries".to_string(), report.per_query.len().to_string()));
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, value) in rows {
        out.push_str(&format!("{name:<width$}  {value}\n"));
    }
    out
}

/// A comparison table with one row per named report (e.g. ablation arms)
/// and columns for map, mrr, and recall@k.
pub fn render_comparison(reports: &BTreeMap<String, MetricsReport>) -> String {
    let mut out = String::new();
    if reports.is_empty() {
        return out;
    }
    let ks: Vec<usize> = reports
        .values()
        .next()
        .map(|r| r.recall.keys().copied().collect())
        .unwrap_or_default();
    let name_width = reports
        .keys()
        .map(String::len)
        .max()
        .unwrap_or(4)
        .max("arm".len());
    out.push_str(&format!("{:<name_width$}", "arm"));
    out.push_str(&format!("  {:>8}  {:>8}", "map", "mrr"));
    for k in &ks {
        out.push_str(&format!("  {:>8}", format!("r@{k}")));
    }
    out.push('\n');
    for (name, report) in reports {
        out.push_str(&format!("{name:<name_width$}"));
        out.push_str(&format!("  {:>8}  {:>8}", fmt(report.map), fmt(report.mrr)));
        for k in &ks {
            out.push_str(&format!("  {:>8}", fmt(report.recall[k])));
        }
        out.push('\n');
    }
    out
}

/// A static SVG bar chart of recall@k.
pub fn render_recall_svg(report: &MetricsReport) -> String {
    let bars: Vec<(usize, f64)> = report.recall.iter().map(|(k, v)| (*k, *v)).collect();
    let bar_width = 60.0;
    let gap = 30.0;
    let chart_height = 220.0;
    let base_y = 260.0;
    let width = 60.0 + bars.len() as f64 * (bar_width + gap);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"320\" viewBox=\"0 0 {width:.0} 320\">\n"
    ));
    svg.push_str("  <style>text { font-family: monospace; font-size: 14px; }</style>\n");
    svg.push_str(&format!(
        "  <line x1=\"40\" y1=\"{base_y}\" x2=\"{:.0}\" y2=\"{base_y}\" stroke=\"#333\"/>\n",
        width - 10.0
    ));
    svg.push_str("  <text x=\"10\" y=\"30\">recall@k</text>\n");
    for (i, (k, v)) in bars.iter().enumerate() {
        let h = v.clamp(0.0, 1.0) * chart_height;
        let x = 50.0 + i as f64 * (bar_width + gap);
        let y = base_y - h;
        svg.push_str(&format!(
            "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_width:.1}\" height=\"{h:.1}\" fill=\"#4878a8\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x + bar_width / 2.0,
            y - 6.0,
            fmt(*v)
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">k={k}</text>\n",
            x + bar_width / 2.0,
            base_y + 20.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use techembed_core::eval::{EvalConfigEcho, JudgmentLevel};

    fn report() -> MetricsReport {
        MetricsReport {
            map: 0.5,
            mrr: 0.625,
            precision: [(5, 0.2)].into_iter().collect(),
            recall: [(5, 0.5), (10, 0.75)].into_iter().collect(),
            per_query: BTreeMap::new(),
            config: EvalConfigEcho {
                k_values: vec![5, 10],
                level: JudgmentLevel::Chunk,
                run_config: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn table_lists_every_metric() {
        let table = render_table(&report());
        for needle in ["map", "mrr", "precision@5", "recall@5", "recall@10", "0.7500"] {
            assert!(table.contains(needle), "missing {needle}:\n{table}");
        }
    }

    #[test]
    fn svg_has_one_bar_per_cutoff() {
        let svg = render_recall_svg(&report());
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("k=5") && svg.contains("k=10"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn comparison_has_a_row_per_arm() {
        let mut reports = BTreeMap::new();
        reports.insert("full".to_string(), report());
        reports.insert("no-tuning".to_string(), report());
        let table = render_comparison(&reports);
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().next().unwrap().contains("r@10"));
    }
}
