//! Layered trust for open-banking data ingestion.
//!
//! The crate is organized around three trust layers. Layer 1 verifies data
//! sources through decentralized identifiers and nonce-bound verifiable
//! presentations, Layer 2 validates each submitted record as a signed
//! verifiable credential, and Layer 3 anchors a digest of every accepted
//! record on an append-only DAG ledger while the full record lives in an
//! off-chain store. Modules:
//!
//! - [`crypto`]: Ed25519, Blake2b-256, Bech32 and base64url primitives
//! - [`canonical`]: the deterministic byte form used for hashing and signing
//! - [`identity`]: DID documents, anchoring and resolution
//! - [`credentials`]: compact signed tokens for credentials and presentations
//! - [`ledger`]: the in-process DAG ledger simulation
//! - [`storage`]: the pluggable off-chain record store
//! - [`pipeline`]: the three layers wired together, challenges and sessions
//! - [`schema`]: transaction record shape validation

pub mod canonical;
pub mod credentials;
pub mod crypto;
pub mod identity;
pub mod ledger;
pub mod pipeline;
pub mod schema;
pub mod storage;

/// Milliseconds since the Unix epoch, the time unit used across the crate.
pub type TimestampMs = i64;

/// Current wall-clock time in epoch milliseconds.
pub fn now_ms() -> TimestampMs {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("system clock before epoch")
        .as_millis() as TimestampMs
}
