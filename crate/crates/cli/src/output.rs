//! Plain-text rendering of command results.

use std::fmt::Write;

use serde_json::Value;

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6}").trim_end_matches('0').trim_end_matches('.').to_string(),
            _ => n.to_string(),
        }),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn cell(v: &Value) -> String {
    scalar(v).unwrap_or_else(|| {
        let s = v.to_string();
        if s.len() > 40 {
            format!("{}…", &s[..s.char_indices().nth(39).map_or(s.len(), |c| c.0)])
        } else {
            s
        }
    })
}

/// Rows of objects become a table over their scalar columns.
fn table(rows: &[Value]) -> String {
    let mut cols: Vec<String> = Vec::new();
    for r in rows {
        if let Value::Object(m) = r {
            for (k, v) in m {
                if scalar(v).is_some() && !cols.contains(k) {
                    cols.push(k.clone());
                }
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| r.get(c).map(cell).unwrap_or_default()).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| cells.iter().map(|r| r[i].chars().count()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, items: &[String]| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &cols);
    for r in &cells {
        line(&mut out, r);
    }
    out
}

pub fn human(v: &Value) -> String {
    match v {
        Value::Array(rows) if rows.iter().all(Value::is_object) && !rows.is_empty() => table(rows),
        Value::Array(items) => items.iter().map(|i| format!("{}\n", cell(i))).collect(),
        Value::Object(m) => {
            let width = m.keys().map(String::len).max().unwrap_or(0);
            let mut out = String::new();
            for (k, v) in m {
                match v {
                    Value::Array(rows) if rows.iter().any(Value::is_object) => {
                        let _ = writeln!(out, "{k}:");
                        for l in table(rows).lines() {
                            let _ = writeln!(out, "  {l}");
                        }
                    }
                    _ => {
                        let _ = writeln!(out, "{k:<width$}  {}", cell(v));
                    }
                }
            }
            out
        }
        other => format!("{}\n", cell(other)),
    }
}
