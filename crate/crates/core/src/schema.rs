//! Record schema validation.
//!
//! A schema is a flat list of named fields, each with a kind that
//! constrains its string value. Validation runs against the JSON object
//! carried in a data credential; unknown fields are refused so a
//! tampered payload cannot smuggle extra keys past the check.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema must define at least one field")]
    Empty,
    #[error("duplicate field '{0}'")]
    DuplicateField(String),
}

/// A single violated constraint; `field` names the offending key.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field '{field}': {problem}")]
pub struct SchemaViolation {
    pub field: String,
    pub problem: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Any non-empty string.
    String,
    /// A non-negative decimal such as `10` or `1234.56`.
    Decimal,
    /// A three-letter uppercase currency code.
    Currency,
    /// An RFC 3339 timestamp.
    Timestamp,
}

fn default_required() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default = "default_required")]
    pub required: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSchema {
    pub fields: Vec<FieldSpec>,
}

impl RecordSchema {
    pub fn from_fields(fields: Vec<FieldSpec>) -> Result<Self, SchemaError> {
        if fields.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for field in &fields {
            if !seen.insert(field.name.as_str()) {
                return Err(SchemaError::DuplicateField(field.name.clone()));
            }
        }
        Ok(RecordSchema { fields })
    }

    pub fn from_file(path: &Path) -> Result<Self, SchemaError> {
        let raw = std::fs::read(path)?;
        let schema: RecordSchema = serde_json::from_slice(&raw)?;
        Self::from_fields(schema.fields)
    }

    /// The transaction layout used throughout: ten required fields
    /// covering parties, amounts, currencies and the payment format.
    pub fn transaction_default() -> Self {
        let field = |name: &str, kind: FieldKind| FieldSpec {
            name: name.to_string(),
            kind,
            required: true,
        };
        RecordSchema {
            fields: vec![
                field("timestamp", FieldKind::Timestamp),
                field("from_bank", FieldKind::String),
                field("from_account", FieldKind::String),
                field("to_bank", FieldKind::String),
                field("to_account", FieldKind::String),
                field("amount_received", FieldKind::Decimal),
                field("receiving_currency", FieldKind::Currency),
                field("amount_paid", FieldKind::Decimal),
                field("payment_currency", FieldKind::Currency),
                field("payment_format", FieldKind::String),
            ],
        }
    }

    /// Checks `value` against the schema. Reports the first violation:
    /// non-object payloads, missing required fields, non-string or
    /// ill-typed values, and unknown fields all fail.
    pub fn validate(&self, value: &Value) -> Result<(), SchemaViolation> {
        let object = match value {
            Value::Object(map) => map,
            _ => {
                return Err(SchemaViolation {
                    field: String::new(),
                    problem: "payload must be a json object".into(),
                })
            }
        };
        for spec in &self.fields {
            match object.get(&spec.name) {
                None if spec.required => {
                    return Err(SchemaViolation {
                        field: spec.name.clone(),
                        problem: "required field is missing".into(),
                    })
                }
                None => {}
                Some(v) => check_value(spec, v)?,
            }
        }
        for key in object.keys() {
            if !self.fields.iter().any(|f| &f.name == key) {
                return Err(SchemaViolation {
                    field: key.clone(),
                    problem: "unknown field".into(),
                });
            }
        }
        Ok(())
    }
}

fn check_value(spec: &FieldSpec, value: &Value) -> Result<(), SchemaViolation> {
    let violation = |problem: &str| SchemaViolation {
        field: spec.name.clone(),
        problem: problem.into(),
    };
    let s = value.as_str().ok_or_else(|| violation("must be a string"))?;
    if s.is_empty() {
        return Err(violation("must not be empty"));
    }
    match spec.kind {
        FieldKind::String => Ok(()),
        FieldKind::Decimal => {
            if is_decimal(s) {
                Ok(())
            } else {
                Err(violation("must be a non-negative decimal"))
            }
        }
        FieldKind::Currency => {
            if s.len() == 3 && s.bytes().all(|b| b.is_ascii_uppercase()) {
                Ok(())
            } else {
                Err(violation("must be a three-letter currency code"))
            }
        }
        FieldKind::Timestamp => {
            if chrono::DateTime::parse_from_rfc3339(s).is_ok() {
                Ok(())
            } else {
                Err(violation("must be an rfc3339 timestamp"))
            }
        }
    }
}

fn is_decimal(s: &str) -> bool {
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    digits(int_part) && frac_part.is_none_or(digits)
}

/// One cross-border transaction, the payload every data credential
/// carries. All fields are strings; the schema gives them types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub timestamp: String,
    pub from_bank: String,
    pub from_account: String,
    pub to_bank: String,
    pub to_account: String,
    pub amount_received: String,
    pub receiving_currency: String,
    pub amount_paid: String,
    pub payment_currency: String,
    pub payment_format: String,
}

impl TransactionRecord {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("string struct serializes")
    }

    pub fn from_value(value: &Value) -> Result<Self, SchemaViolation> {
        serde_json::from_value(value.clone()).map_err(|e| SchemaViolation {
            field: String::new(),
            problem: format!("payload does not parse as a transaction: {e}"),
        })
    }

    pub fn to_map(&self) -> Map<String, Value> {
        match self.to_value() {
            Value::Object(map) => map,
            _ => unreachable!(),
        }
    }
}
