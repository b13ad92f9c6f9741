//! Report serialization: `key=value` text and a JSON mirror.
//!
//! Text keys are the JSON paths joined with `.`; absent values print as
//! `n/a` and numbers use the same 6-significant-digit form as the record
//! files.

use serde::Serialize;
use serde_json::Value;

use super::formats::format_g;

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), v, out);
            }
        }
        leaf => {
            let text = match leaf {
                Value::Null => "n/a".to_string(),
                Value::Number(n) if n.is_f64() => format_g(n.as_f64().unwrap_or(f64::NAN)),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(prefix);
            out.push('=');
            out.push_str(&text);
            out.push('\n');
        }
    }
}

pub fn to_text<T: Serialize>(report: &T) -> String {
    let v = serde_json::to_value(report).expect("reports serialize to JSON");
    let mut out = String::new();
    flatten("", &v, &mut out);
    out
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize to JSON");
    s.push('\n');
    s
}
