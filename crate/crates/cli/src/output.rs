//! Flat views of a report: CSV rows and a plain-text table.

use std::path::Path;

use serde_json::Value;

use crate::CliResult;

/// Rows above this count are elided from the table.
const TABLE_ROWS: usize = 200;

/// Every numeric leaf with its JSON path (`a.b[2].c`).
pub fn numeric_leaves(v: &Value) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    walk(v, String::new(), &mut out);
    out
}

fn walk(v: &Value, path: String, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                out.push((path, x));
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                walk(item, format!("{path}[{i}]"), out);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                walk(item, p, out);
            }
        }
        _ => {}
    }
}

pub fn write_csv(path: &Path, results: &Value) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path", "value"])?;
    for (p, x) in numeric_leaves(results) {
        w.write_record([p, format!("{x}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn table(results: &Value) -> String {
    let rows = numeric_leaves(results);
    let width = rows
        .iter()
        .take(TABLE_ROWS)
        .map(|(p, _)| p.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut s = format!("{:<width$}  value\n", "path");
    for (p, x) in rows.iter().take(TABLE_ROWS) {
        s.push_str(&format!("{p:<width$}  {x:.10e}\n"));
    }
    if rows.len() > TABLE_ROWS {
        s.push_str(&format!("... {} more rows\n", rows.len() - TABLE_ROWS));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn leaves_carry_paths() {
        let v = json!({ "a": { "b": [1.5, "x", { "c": 2 }] }, "d": true });
        assert_eq!(
            numeric_leaves(&v),
            vec![("a.b[0]".to_string(), 1.5), ("a.b[2].c".to_string(), 2.0)]
        );
    }

    #[test]
    fn long_tables_are_elided() {
        let v = Value::Array((0..250).map(|i| json!(i)).collect());
        assert!(table(&v).ends_with("... 50 more rows\n"));
    }
}
