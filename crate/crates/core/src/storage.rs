//! Off-chain record store.
//!
//! Holds the full record payloads whose digests are anchored on the
//! ledger. Two backends share one trait: an in-memory map, and a file
//! backend that appends length-prefixed JSON entries (puts and delete
//! tombstones) and rebuilds its index by replay on open.

use crate::identity::Did;
use crate::ledger::BlockId;
use crate::TimestampMs;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record id '{0}' already stored")]
    Duplicate(String),
    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store log at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
}

/// A stored record: the payload plus the anchoring and provenance
/// metadata the query path needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffChainRecord {
    pub record_id: String,
    pub data: Value,
    pub block_id: BlockId,
    pub source_did: Did,
    pub stored_at: TimestampMs,
}

/// Keyed record storage. `put` refuses duplicates and structurally
/// empty records; reads are by exact record id.
pub trait RecordStore: Send + Sync {
    fn put(&self, record: OffChainRecord) -> Result<(), StoreError>;
    fn get(&self, record_id: &str) -> Option<OffChainRecord>;
    fn delete(&self, record_id: &str) -> Result<bool, StoreError>;
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_record(record: &OffChainRecord) -> Result<(), StoreError> {
    if record.record_id.is_empty() {
        return Err(StoreError::InvalidRecord("record id is empty"));
    }
    match &record.data {
        Value::Object(map) if !map.is_empty() => Ok(()),
        Value::Object(_) => Err(StoreError::InvalidRecord("data object is empty")),
        _ => Err(StoreError::InvalidRecord("data must be a json object")),
    }
}

#[derive(Default)]
pub struct MemoryStore {
    records: Mutex<HashMap<String, OffChainRecord>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RecordStore for MemoryStore {
    fn put(&self, record: OffChainRecord) -> Result<(), StoreError> {
        check_record(&record)?;
        let mut records = self.records.lock();
        if records.contains_key(&record.record_id) {
            return Err(StoreError::Duplicate(record.record_id));
        }
        records.insert(record.record_id.clone(), record);
        Ok(())
    }

    fn get(&self, record_id: &str) -> Option<OffChainRecord> {
        self.records.lock().get(record_id).cloned()
    }

    fn delete(&self, record_id: &str) -> Result<bool, StoreError> {
        Ok(self.records.lock().remove(record_id).is_some())
    }

    fn len(&self) -> usize {
        self.records.lock().len()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op")]
enum LogEntry {
    #[serde(rename = "put")]
    Put { record: OffChainRecord },
    #[serde(rename = "delete")]
    Delete { record_id: String },
}

struct FileStoreInner {
    index: HashMap<String, OffChainRecord>,
    log: File,
}

/// Append-only file-backed store. Every mutation is flushed before it
/// becomes visible; open replays the log, applying tombstones.
pub struct FileStore {
    inner: Mutex<FileStoreInner>,
}

impl FileStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut raw = Vec::new();
        log.read_to_end(&mut raw)?;

        let mut index = HashMap::new();
        let mut offset = 0u64;
        let mut cursor = &raw[..];
        while !cursor.is_empty() {
            if cursor.len() < 4 {
                return Err(StoreError::Corrupt {
                    offset,
                    reason: "truncated length prefix".into(),
                });
            }
            let len = u32::from_le_bytes(cursor[..4].try_into().unwrap()) as usize;
            if cursor.len() < 4 + len {
                return Err(StoreError::Corrupt {
                    offset,
                    reason: "truncated entry".into(),
                });
            }
            let entry: LogEntry =
                serde_json::from_slice(&cursor[4..4 + len]).map_err(|e| StoreError::Corrupt {
                    offset,
                    reason: e.to_string(),
                })?;
            match entry {
                LogEntry::Put { record } => {
                    index.insert(record.record_id.clone(), record);
                }
                LogEntry::Delete { record_id } => {
                    index.remove(&record_id);
                }
            }
            cursor = &cursor[4 + len..];
            offset += 4 + len as u64;
        }
        Ok(FileStore {
            inner: Mutex::new(FileStoreInner { index, log }),
        })
    }

    fn append(inner: &mut FileStoreInner, entry: &LogEntry) -> Result<(), StoreError> {
        let encoded = serde_json::to_vec(entry)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        inner.log.write_all(&(encoded.len() as u32).to_le_bytes())?;
        inner.log.write_all(&encoded)?;
        inner.log.flush()?;
        Ok(())
    }
}

impl RecordStore for FileStore {
    fn put(&self, record: OffChainRecord) -> Result<(), StoreError> {
        check_record(&record)?;
        let mut inner = self.inner.lock();
        if inner.index.contains_key(&record.record_id) {
            return Err(StoreError::Duplicate(record.record_id));
        }
        Self::append(
            &mut inner,
            &LogEntry::Put {
                record: record.clone(),
            },
        )?;
        inner.index.insert(record.record_id.clone(), record);
        Ok(())
    }

    fn get(&self, record_id: &str) -> Option<OffChainRecord> {
        self.inner.lock().index.get(record_id).cloned()
    }

    fn delete(&self, record_id: &str) -> Result<bool, StoreError> {
        let mut inner = self.inner.lock();
        if !inner.index.contains_key(record_id) {
            return Ok(false);
        }
        Self::append(
            &mut inner,
            &LogEntry::Delete {
                record_id: record_id.to_string(),
            },
        )?;
        inner.index.remove(record_id);
        Ok(true)
    }

    fn len(&self) -> usize {
        self.inner.lock().index.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use serde_json::json;

    fn sample(id: &str, amount: &str) -> OffChainRecord {
        let (_, public) = generate_keypair(Some(&[51; 32])).unwrap();
        OffChainRecord {
            record_id: id.to_string(),
            data: json!({"amount_paid": amount, "payment_format": "wire"}),
            block_id: BlockId::from_bytes(&[9; 32]).unwrap(),
            source_did: Did::from_public_key("tst", &public).unwrap(),
            stored_at: 42,
        }
    }

    #[test]
    fn memory_put_get_delete() {
        let store = MemoryStore::new();
        store.put(sample("r1", "10.00")).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("r1").unwrap().stored_at, 42);
        assert!(store.get("r2").is_none());
        assert!(store.delete("r1").unwrap());
        assert!(!store.delete("r1").unwrap());
        assert!(store.is_empty());
    }

    #[test]
    fn duplicate_ids_are_refused() {
        let store = MemoryStore::new();
        store.put(sample("r1", "10.00")).unwrap();
        assert!(matches!(
            store.put(sample("r1", "20.00")),
            Err(StoreError::Duplicate(_))
        ));
        assert_eq!(store.get("r1").unwrap().data["amount_paid"], "10.00");
    }

    #[test]
    fn empty_records_are_refused() {
        let store = MemoryStore::new();
        let mut bad = sample("r1", "10.00");
        bad.data = json!({});
        assert!(matches!(
            store.put(bad),
            Err(StoreError::InvalidRecord(_))
        ));
        let mut not_object = sample("r2", "10.00");
        not_object.data = json!("payload");
        assert!(store.put(not_object).is_err());
        let mut no_id = sample("", "10.00");
        no_id.record_id = String::new();
        assert!(store.put(no_id).is_err());
    }

    #[test]
    fn file_store_replays_its_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.log");
        {
            let store = FileStore::open(&path).unwrap();
            store.put(sample("r1", "10.00")).unwrap();
            store.put(sample("r2", "20.00")).unwrap();
            store.delete("r1").unwrap();
        }
        let reopened = FileStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        assert!(reopened.get("r1").is_none());
        assert_eq!(reopened.get("r2").unwrap().data["amount_paid"], "20.00");
    }

    #[test]
    fn file_store_refuses_corrupt_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.log");
        {
            let store = FileStore::open(&path).unwrap();
            store.put(sample("r1", "10.00")).unwrap();
        }
        let mut raw = std::fs::read(&path).unwrap();
        let last = raw.len() - 1;
        raw[last] = b'x';
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(
            FileStore::open(&path),
            Err(StoreError::Corrupt { .. })
        ));
    }

    #[test]
    fn stores_expose_one_interface() {
        fn exercise(store: &dyn RecordStore) {
            store.put(sample("shared", "5.00")).unwrap();
            assert_eq!(store.get("shared").unwrap().record_id, "shared");
        }
        let dir = tempfile::tempdir().unwrap();
        exercise(&MemoryStore::new());
        exercise(&FileStore::open(&dir.path().join("s.log")).unwrap());
    }
}
