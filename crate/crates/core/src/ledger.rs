//! In-process DAG ledger.
//!
//! Stands in for a Tangle-style distributed ledger: blocks reference up
//! to two parent tips, alias blocks anchor DID documents, data blocks
//! anchor record digests. A block's id is the Blake2b-256 digest of its
//! canonical payload encoding, deliberately excluding parents, sequence
//! and timestamp, so submitting the same payload twice converges on the
//! same block instead of duplicating it.
//!
//! The ledger is a single shared state behind a read-write lock. An
//! optional append-only log file persists every admitted block; opening
//! the same path replays the log and verifies each block id on the way
//! in.

use crate::canonical::{canonical_bytes, CanonicalError};
use crate::crypto::{blake2b_256, verify, Signature};
use crate::identity::{governor_address, parse_kid, Did, DidDocument};
use crate::TimestampMs;
use parking_lot::RwLock;
use rand::{Rng, RngExt as _};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("alias signature verification failed")]
    AliasSignature,
    #[error("alias signer rejected: {0}")]
    AliasSigner(String),
    #[error("alias address does not match the signing key")]
    AliasAddress,
    #[error("alias document invalid: {0}")]
    Document(String),
    #[error("signer kid names no verification method '{0}'")]
    AliasFragment(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("ledger log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt ledger log at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
}

/// Content address of a block: Blake2b-256 over the canonical payload.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId([u8; 32]);

impl BlockId {
    pub fn from_payload(payload: &BlockPayload) -> Result<Self, CanonicalError> {
        Ok(BlockId(
            *blake2b_256(&canonical_payload_bytes(payload)?).as_bytes(),
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        <[u8; 32]>::try_from(bytes).ok().map(BlockId)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        hex::decode(s).ok().and_then(|b| Self::from_bytes(&b))
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({})", self.to_hex())
    }
}

impl Serialize for BlockId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BlockId::from_hex(&s)
            .ok_or_else(|| serde::de::Error::custom("block id must be 64 hex characters"))
    }
}

/// An anchored DID document together with the signature that authorizes
/// it and the bech32 address derived from the signing key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AliasPayload {
    pub document: DidDocument,
    pub signer_kid: String,
    pub signature: Signature,
    pub address: String,
}

/// What a block carries: a DID document update or a bare data digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BlockPayload {
    #[serde(rename = "alias")]
    Alias(AliasPayload),
    #[serde(rename = "dataHash")]
    DataHash { digest: crate::crypto::Digest },
}

/// Domain-separated bytes that a block id commits to. Alias payloads
/// hash as `0x01 || canonical JSON`, data payloads as `0x02 || digest`.
pub fn canonical_payload_bytes(payload: &BlockPayload) -> Result<Vec<u8>, CanonicalError> {
    match payload {
        BlockPayload::Alias(alias) => {
            let mut out = vec![0x01];
            out.extend_from_slice(&canonical_bytes(alias)?);
            Ok(out)
        }
        BlockPayload::DataHash { digest } => {
            let mut out = vec![0x02];
            out.extend_from_slice(digest.as_bytes());
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerBlock {
    pub block_id: BlockId,
    pub parents: Vec<BlockId>,
    pub payload: BlockPayload,
    pub sequence: u64,
    pub timestamp: TimestampMs,
}

/// Read and append operations the rest of the system needs from a
/// ledger. Implemented by [`Ledger`] in process and by remote clients
/// that talk to a served ledger.
pub trait DagLedger: Send + Sync {
    fn submit_block(&self, payload: BlockPayload) -> Result<BlockId, LedgerError>;
    fn get_block(&self, id: &BlockId) -> Option<LedgerBlock>;
    fn latest_alias_document(&self, did: &Did) -> Option<DidDocument>;
}

/// Picks `min(2, |tips|)` distinct tips uniformly at random.
pub fn select_tips<R: Rng + ?Sized>(tips: &[BlockId], rng: &mut R) -> Vec<BlockId> {
    match tips.len() {
        0 | 1 | 2 => tips.to_vec(),
        n => {
            let first = rng.random_range(0..n);
            let mut second = rng.random_range(0..n - 1);
            if second >= first {
                second += 1;
            }
            vec![tips[first], tips[second]]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LedgerStats {
    pub blocks: usize,
    pub alias_blocks: usize,
    pub data_blocks: usize,
    pub tips: usize,
}

struct LedgerState {
    blocks: HashMap<BlockId, LedgerBlock>,
    order: Vec<BlockId>,
    tips: Vec<BlockId>,
    alias_heads: HashMap<Did, BlockId>,
    next_sequence: u64,
    log: Option<File>,
}

pub struct Ledger {
    state: RwLock<LedgerState>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            state: RwLock::new(LedgerState {
                blocks: HashMap::new(),
                order: Vec::new(),
                tips: Vec::new(),
                alias_heads: HashMap::new(),
                next_sequence: 0,
                log: None,
            }),
        }
    }

    /// Opens a persistent ledger, replaying any existing log at `path`.
    pub fn open(path: &Path) -> Result<Self, LedgerError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;

        let ledger = Ledger::in_memory();
        {
            let mut state = ledger.state.write();
            let mut offset = 0u64;
            let mut cursor = &raw[..];
            while !cursor.is_empty() {
                if cursor.len() < 4 {
                    return Err(LedgerError::Corrupt {
                        offset,
                        reason: "truncated length prefix".into(),
                    });
                }
                let len = u32::from_le_bytes(cursor[..4].try_into().unwrap()) as usize;
                if cursor.len() < 4 + len {
                    return Err(LedgerError::Corrupt {
                        offset,
                        reason: "truncated record".into(),
                    });
                }
                let block: LedgerBlock =
                    serde_json::from_slice(&cursor[4..4 + len]).map_err(|e| {
                        LedgerError::Corrupt {
                            offset,
                            reason: e.to_string(),
                        }
                    })?;
                let expected = BlockId::from_payload(&block.payload)?;
                if expected != block.block_id {
                    return Err(LedgerError::Corrupt {
                        offset,
                        reason: "block id does not match payload".into(),
                    });
                }
                state.admit(block);
                cursor = &cursor[4 + len..];
                offset += 4 + len as u64;
            }
            state.log = Some(file);
        }
        Ok(ledger)
    }

    pub fn stats(&self) -> LedgerStats {
        let state = self.state.read();
        let alias_blocks = state
            .blocks
            .values()
            .filter(|b| matches!(b.payload, BlockPayload::Alias(_)))
            .count();
        LedgerStats {
            blocks: state.blocks.len(),
            alias_blocks,
            data_blocks: state.blocks.len() - alias_blocks,
            tips: state.tips.len(),
        }
    }

    /// All blocks in admission order, for dumps and audits.
    pub fn blocks_in_order(&self) -> Vec<LedgerBlock> {
        let state = self.state.read();
        state
            .order
            .iter()
            .map(|id| state.blocks[id].clone())
            .collect()
    }

    /// Structural self-check; returns one message per violated invariant.
    pub fn check_invariants(&self) -> Vec<String> {
        let state = self.state.read();
        let mut problems = Vec::new();
        for (id, block) in &state.blocks {
            match BlockId::from_payload(&block.payload) {
                Ok(expected) if expected == *id => {}
                Ok(expected) => problems.push(format!(
                    "block {id} does not hash to its id (expected {expected})"
                )),
                Err(e) => problems.push(format!("block {id} payload not canonicalizable: {e}")),
            }
            if block.parents.len() > 2 {
                problems.push(format!("block {id} has {} parents", block.parents.len()));
            }
            if block.sequence > 0 && block.parents.is_empty() {
                problems.push(format!("non-genesis block {id} has no parents"));
            }
            for parent in &block.parents {
                match state.blocks.get(parent) {
                    None => problems.push(format!("block {id} references missing parent {parent}")),
                    Some(p) if p.sequence >= block.sequence => problems.push(format!(
                        "block {id} (seq {}) references parent {parent} (seq {})",
                        block.sequence, p.sequence
                    )),
                    Some(_) => {}
                }
            }
        }
        let referenced: std::collections::HashSet<BlockId> = state
            .blocks
            .values()
            .flat_map(|b| b.parents.iter().copied())
            .collect();
        for tip in &state.tips {
            if referenced.contains(tip) {
                problems.push(format!("tip {tip} is referenced by another block"));
            }
        }
        let expected_tips = state.blocks.len()
            - state
                .blocks
                .keys()
                .filter(|id| referenced.contains(id))
                .count();
        if state.tips.len() != expected_tips {
            problems.push(format!(
                "tip set has {} entries, expected {expected_tips}",
                state.tips.len()
            ));
        }
        problems
    }
}

impl LedgerState {
    /// Inserts a block assumed already verified, updating tips, alias
    /// heads and the sequence counter.
    fn admit(&mut self, block: LedgerBlock) {
        let id = block.block_id;
        self.tips.retain(|t| !block.parents.contains(t));
        self.tips.push(id);
        if let BlockPayload::Alias(alias) = &block.payload {
            self.alias_heads.insert(alias.document.id.clone(), id);
        }
        self.next_sequence = self.next_sequence.max(block.sequence + 1);
        self.order.push(id);
        self.blocks.insert(id, block);
    }

    fn verify_alias(&self, alias: &AliasPayload) -> Result<(), LedgerError> {
        alias
            .document
            .validate()
            .map_err(|e| LedgerError::Document(e.to_string()))?;
        let (kid_did, fragment) =
            parse_kid(&alias.signer_kid).map_err(|e| LedgerError::AliasSigner(e.to_string()))?;
        if kid_did != alias.document.id {
            return Err(LedgerError::AliasSigner(
                "signer kid names a different did".into(),
            ));
        }
        // First anchor verifies against the incoming document; updates
        // verify against the currently anchored one, which is what makes
        // rotation possible and hijack impossible.
        let key_source = match self.alias_heads.get(&alias.document.id) {
            Some(head) => match &self.blocks[head].payload {
                BlockPayload::Alias(prev) => &prev.document,
                BlockPayload::DataHash { .. } => unreachable!("alias head points at data block"),
            },
            None => &alias.document,
        };
        let method = key_source
            .method(&fragment)
            .ok_or_else(|| LedgerError::AliasFragment(fragment.clone()))?;
        let expected_address =
            governor_address(alias.document.id.network_hrp(), &method.public_key)
                .map_err(|e| LedgerError::Document(e.to_string()))?;
        if alias.address != expected_address {
            return Err(LedgerError::AliasAddress);
        }
        let message = alias
            .document
            .canonical_bytes()
            .map_err(LedgerError::Canonical)?;
        if !verify(&method.public_key, &message, &alias.signature) {
            return Err(LedgerError::AliasSignature);
        }
        Ok(())
    }
}

impl DagLedger for Ledger {
    fn submit_block(&self, payload: BlockPayload) -> Result<BlockId, LedgerError> {
        let id = BlockId::from_payload(&payload)?;
        let mut state = self.state.write();
        if state.blocks.contains_key(&id) {
            return Ok(id);
        }
        if let BlockPayload::Alias(alias) = &payload {
            state.verify_alias(alias)?;
        }
        let parents = select_tips(&state.tips, &mut rand::rng());
        let block = LedgerBlock {
            block_id: id,
            parents,
            payload,
            sequence: state.next_sequence,
            timestamp: crate::now_ms(),
        };
        if let Some(log) = &mut state.log {
            let encoded = serde_json::to_vec(&block)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            log.write_all(&(encoded.len() as u32).to_le_bytes())?;
            log.write_all(&encoded)?;
            log.flush()?;
        }
        state.admit(block);
        Ok(id)
    }

    fn get_block(&self, id: &BlockId) -> Option<LedgerBlock> {
        self.state.read().blocks.get(id).cloned()
    }

    fn latest_alias_document(&self, did: &Did) -> Option<DidDocument> {
        let state = self.state.read();
        let head = state.alias_heads.get(did)?;
        match &state.blocks[head].payload {
            BlockPayload::Alias(alias) => Some(alias.document.clone()),
            BlockPayload::DataHash { .. } => None,
        }
    }
}
