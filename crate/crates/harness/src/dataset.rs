//! Transaction dataset loading.
//!
//! Runs read a delimited-text file with a header row; a 1000-row
//! synthetic fixture ships inside the binary for offline use. Every row
//! is checked against the transaction schema up front so a bad dataset
//! fails loudly with line numbers instead of surfacing later as
//! server-side rejections.

use std::path::Path;
use thiserror::Error;
use trustlayer_core::schema::{RecordSchema, TransactionRecord};

/// Bundled synthetic fixture with the same columns as external files.
pub const EMBEDDED_CSV: &str = include_str!("../fixtures/transactions_1k.csv");

pub const COLUMNS: [&str; 10] = [
    "timestamp",
    "from_bank",
    "from_account",
    "to_bank",
    "to_account",
    "amount_received",
    "receiving_currency",
    "amount_paid",
    "payment_currency",
    "payment_format",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset header is missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("dataset line {line}: {problem}")]
    Row { line: u64, problem: String },
    #[error("dataset is empty")]
    Empty,
}

pub fn load_dataset(path: &Path) -> Result<Vec<TransactionRecord>, DatasetError> {
    let raw = std::fs::read_to_string(path)?;
    parse_csv(&raw)
}

pub fn load_embedded() -> Vec<TransactionRecord> {
    parse_csv(EMBEDDED_CSV).expect("bundled fixture parses")
}

fn parse_csv(raw: &str) -> Result<Vec<TransactionRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Row { line: 1, problem: e.to_string() })?
        .clone();
    let missing: Vec<String> = COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == **c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingColumns(missing));
    }

    let schema = RecordSchema::transaction_default();
    let mut records = Vec::new();
    for result in reader.deserialize::<TransactionRecord>() {
        let record = result.map_err(|e| DatasetError::Row {
            line: csv_error_line(&e),
            problem: e.to_string(),
        })?;
        // Header is line 1, first record line 2.
        let line = records.len() as u64 + 2;
        schema
            .validate(&record.to_value())
            .map_err(|v| DatasetError::Row {
                line,
                problem: format!("{}: {}", v.field, v.problem),
            })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(records)
}

fn csv_error_line(e: &csv::Error) -> u64 {
    match e.kind() {
        csv::ErrorKind::Deserialize { pos: Some(pos), .. } => pos.line(),
        _ => 0,
    }
}
