//! Flatten one analysis of a report into a plot-ready table.

use serde_json::Value;

use crate::config::ConfigError;

pub enum Format {
    Csv,
    Json,
}

/// Extract the named analysis's table rows and render them. Column order
/// is the sorted key order of the first row (rows are uniform).
pub fn emit_table(report: &Value, which: &str, format: Format) -> Result<String, ConfigError> {
    let analyses = report
        .get("analyses")
        .and_then(Value::as_array)
        .ok_or_else(|| ConfigError("report has no analyses".into()))?;
    let analysis = analyses
        .iter()
        .find(|a| a.get("name").and_then(Value::as_str) == Some(which))
        .ok_or_else(|| ConfigError(format!("no analysis named {which:?} in report")))?;
    let rows = analysis
        .get("table")
        .and_then(Value::as_array)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| ConfigError(format!("analysis {which:?} has no table")))?;

    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let first = rows[0]
                .as_object()
                .ok_or_else(|| ConfigError("table rows must be objects".into()))?;
            let columns: Vec<&String> = first.keys().collect();
            let mut out = columns
                .iter()
                .map(|c| c.as_str())
                .collect::<Vec<_>>()
                .join(",");
            out.push('\n');
            for row in rows {
                let obj = row
                    .as_object()
                    .ok_or_else(|| ConfigError("table rows must be objects".into()))?;
                let cells: Vec<String> = columns
                    .iter()
                    .map(|c| match obj.get(*c) {
                        Some(Value::String(s)) => csv_quote(s),
                        Some(Value::Null) | None => String::new(),
                        Some(v) => csv_quote(&v.to_string()),
                    })
                    .collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
