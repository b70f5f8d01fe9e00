//! Deterministic serialization of structured payloads.
//!
//! Everything that gets hashed or signed (documents, credential payloads,
//! transaction records, ledger blocks) goes through this one rule so the
//! same value always produces the same bytes: object keys sorted by byte
//! order, UTF-8, no insignificant whitespace, numbers in their shortest
//! exact form.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalError {
    #[error("null is not a canonicalizable value")]
    UnsupportedNull,
}

/// Renders `value` to canonical bytes. Supported values are trees of
/// objects, arrays, strings, numbers and booleans; null is rejected.
pub fn canonical_json(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = String::new();
    write_value(value, &mut out)?;
    Ok(out.into_bytes())
}

/// Canonicalizes any serializable value via its JSON form.
pub fn canonical_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value).map_err(|_| CanonicalError::UnsupportedNull)?;
    canonical_json(&value)
}

fn write_value(value: &Value, out: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => return Err(CanonicalError::UnsupportedNull),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        // serde_json renders integers exactly and floats in shortest
        // round-trip form, which is the rule here
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => write_escaped(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_escaped(key, out);
                out.push(':');
                write_value(&map[*key], out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

fn write_escaped(s: &str, out: &mut String) {
    // serde_json's escaping: quote, backslash and control characters only
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}
