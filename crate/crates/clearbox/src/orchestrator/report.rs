//! Metric tables: the Precision / Recall / mAP(0.5) / mAP(0.5:0.95)
//! quadruple as aligned text or CSV, one row per configuration.

use crate::evaluator::EvalResult;

pub const METRIC_COLUMNS: [&str; 4] = ["Precision", "Recall", "mAP(0.5)", "mAP(0.5:0.95)"];

/// Render rows of (label, metrics) as an aligned plain-text table.
pub fn metrics_table(rows: &[(String, &EvalResult)]) -> String {
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .chain(std::iter::once("configuration".len()))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", "configuration"));
    for col in METRIC_COLUMNS {
        out.push_str(&format!("  {col:>13}"));
    }
    out.push('\n');
    for (label, result) in rows {
        out.push_str(&format!("{label:<label_width$}"));
        for value in [result.precision, result.recall, result.map50, result.map5095] {
            out.push_str(&format!("  {value:>13.3}"));
        }
        out.push('\n');
    }
    out
}

/// The same rows as CSV with full float precision.
pub fn metrics_csv(rows: &[(String, &EvalResult)]) -> String {
    let mut out = String::from("configuration,precision,recall,map50,map5095\n");
    for (label, result) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_escape(label),
            result.precision,
            result.recall,
            result.map50,
            result.map5095
        ));
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
