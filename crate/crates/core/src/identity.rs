//! Decentralized identifiers and their ledger-anchored documents.
//!
//! A DID names a key holder; the DID document carries the holder's public
//! keys and is anchored on the DAG ledger so that anyone can resolve the
//! identifier back to key material without talking to the holder. The
//! unique-id part of a DID is the Blake2b-256 digest of the subject's
//! public key, hex encoded, which ties the identifier to the key that
//! created it.

use crate::canonical::{canonical_bytes, CanonicalError};
use crate::crypto::{
    bech32_encode, blake2b_256, sign, verify, Bech32Error, CryptoError, PrivateScalar, PublicKey,
    Signature,
};
use crate::ledger::{AliasPayload, BlockId, BlockPayload, DagLedger, LedgerError};
use crate::TimestampMs;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Method name used by every identifier minted here.
pub const DID_METHOD: &str = "iota";

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("network hrp must not be empty")]
    EmptyHrp,
    #[error("bad key material: {0}")]
    Key(#[from] CryptoError),
    #[error("fragment must be non-empty and must not contain '#'")]
    BadFragment,
    #[error("malformed did: {0}")]
    MalformedDid(String),
    #[error("malformed key identifier: {0}")]
    MalformedKid(String),
    #[error("no document anchored for {0}")]
    NotFound(String),
    #[error("document has no verification method '{0}'")]
    UnknownFragment(String),
    #[error("signer key does not appear in the document")]
    SignerMismatch,
    #[error("ledger rejected the anchor: {0}")]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Address(#[from] Bech32Error),
}

/// A parsed `did:iota:<hrp>:<unique-id>` identifier.
///
/// The unique id is always 64 lowercase hex characters (a Blake2b-256
/// digest), so equality and ordering on the string form are well defined.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    network_hrp: String,
    unique_id: String,
}

impl Did {
    /// Derives the identifier for a public key on the given network.
    pub fn from_public_key(network_hrp: &str, key: &PublicKey) -> Result<Self, IdentityError> {
        if network_hrp.is_empty() {
            return Err(IdentityError::EmptyHrp);
        }
        Ok(Did {
            network_hrp: network_hrp.to_string(),
            unique_id: blake2b_256(key.as_bytes()).to_hex(),
        })
    }

    pub fn network_hrp(&self) -> &str {
        &self.network_hrp
    }

    pub fn unique_id(&self) -> &str {
        &self.unique_id
    }

    /// Forms the key identifier `<did>#<fragment>` for one of the
    /// document's verification methods.
    pub fn kid(&self, fragment: &str) -> String {
        format!("{self}#{fragment}")
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{DID_METHOD}:{}:{}", self.network_hrp, self.unique_id)
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || IdentityError::MalformedDid(s.to_string());
        let mut parts = s.split(':');
        if parts.next() != Some("did") || parts.next() != Some(DID_METHOD) {
            return Err(malformed());
        }
        let hrp = parts.next().filter(|h| !h.is_empty()).ok_or_else(malformed)?;
        let unique = parts.next().ok_or_else(malformed)?;
        if parts.next().is_some() {
            return Err(malformed());
        }
        let digest_like = unique.len() == 64
            && unique
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !digest_like {
            return Err(malformed());
        }
        Ok(Did {
            network_hrp: hrp.to_string(),
            unique_id: unique.to_string(),
        })
    }
}

impl Serialize for Did {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One public key entry in a DID document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationMethod {
    pub fragment: String,
    #[serde(rename = "publicKey")]
    pub public_key: PublicKey,
}

/// The resolvable document for a DID: its keys and which of them may
/// sign assertions on the subject's behalf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub id: Did,
    #[serde(rename = "verificationMethod")]
    pub verification_methods: Vec<VerificationMethod>,
    #[serde(rename = "assertionMethod")]
    pub assertion_methods: Vec<String>,
}

impl DidDocument {
    /// Checks the structural invariants: at least one verification
    /// method, and every assertion method names an existing fragment.
    pub fn validate(&self) -> Result<(), IdentityError> {
        if self.verification_methods.is_empty() {
            return Err(IdentityError::MalformedDid(
                "document carries no verification methods".into(),
            ));
        }
        for frag in &self.assertion_methods {
            if self.method(frag).is_none() {
                return Err(IdentityError::UnknownFragment(frag.clone()));
            }
        }
        Ok(())
    }

    pub fn method(&self, fragment: &str) -> Option<&VerificationMethod> {
        self.verification_methods
            .iter()
            .find(|m| m.fragment == fragment)
    }

    /// Finds the fragment whose key equals `key`, if any.
    pub fn fragment_for_key(&self, key: &PublicKey) -> Option<&str> {
        self.verification_methods
            .iter()
            .find(|m| &m.public_key == key)
            .map(|m| m.fragment.as_str())
    }

    /// The byte string that anchor signatures cover: the canonical JSON
    /// form of the document.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical_bytes(self)
    }
}

/// Proof that a document landed on the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorReceipt {
    pub block_id: BlockId,
    pub did: Did,
    pub anchored_at: TimestampMs,
}

/// Builds a fresh single-key document for `key`. The document is not
/// anchored yet; pair with [`anchor_did`].
pub fn create_did_document(
    network_hrp: &str,
    key: &PublicKey,
    fragment: &str,
) -> Result<DidDocument, IdentityError> {
    if fragment.is_empty() || fragment.contains('#') {
        return Err(IdentityError::BadFragment);
    }
    let id = Did::from_public_key(network_hrp, key)?;
    Ok(DidDocument {
        id,
        verification_methods: vec![VerificationMethod {
            fragment: fragment.to_string(),
            public_key: *key,
        }],
        assertion_methods: vec![fragment.to_string()],
    })
}

/// The ledger address that holds a key's alias output: the bech32
/// encoding of the key digest under the network hrp.
pub fn governor_address(network_hrp: &str, key: &PublicKey) -> Result<String, IdentityError> {
    let digest = blake2b_256(key.as_bytes());
    Ok(bech32_encode(network_hrp, digest.as_bytes())?.to_string())
}

/// Signs `document` with `signer` and submits it as an alias block.
///
/// The signer's public key must appear among the document's verification
/// methods for a first anchor; for an update the ledger checks the
/// signature against the previously anchored document instead, so key
/// rotation works as long as the old key signs the new document.
pub fn anchor_did(
    document: &DidDocument,
    ledger: &dyn DagLedger,
    signer: &PrivateScalar,
) -> Result<AnchorReceipt, IdentityError> {
    document.validate()?;
    let public = signer.public_key();
    let fragment = match document.fragment_for_key(&public) {
        Some(f) => f.to_string(),
        None => match ledger.latest_alias_document(&document.id) {
            Some(previous) => previous
                .fragment_for_key(&public)
                .ok_or(IdentityError::SignerMismatch)?
                .to_string(),
            None => return Err(IdentityError::SignerMismatch),
        },
    };
    let signature = sign(signer, &document.canonical_bytes()?);
    let payload = BlockPayload::Alias(AliasPayload {
        document: document.clone(),
        signer_kid: document.id.kid(&fragment),
        signature,
        address: governor_address(document.id.network_hrp(), &public)?,
    });
    let block_id = ledger.submit_block(payload)?;
    let anchored_at = ledger
        .get_block(&block_id)
        .map(|b| b.timestamp)
        .unwrap_or_default();
    Ok(AnchorReceipt {
        block_id,
        did: document.id.clone(),
        anchored_at,
    })
}

/// Fetches the latest anchored document for `did`.
pub fn resolve_did(did: &Did, ledger: &dyn DagLedger) -> Result<DidDocument, IdentityError> {
    ledger
        .latest_alias_document(did)
        .ok_or_else(|| IdentityError::NotFound(did.to_string()))
}

/// Splits a key identifier into its DID and fragment parts.
pub fn parse_kid(kid: &str) -> Result<(Did, String), IdentityError> {
    let malformed = || IdentityError::MalformedKid(kid.to_string());
    let (did_part, fragment) = kid.split_once('#').ok_or_else(malformed)?;
    if fragment.is_empty() || fragment.contains('#') {
        return Err(malformed());
    }
    let did = did_part
        .parse::<Did>()
        .map_err(|_| malformed())?;
    Ok((did, fragment.to_string()))
}

/// Resolves a key identifier to the public key it names, going through
/// the anchored document.
pub fn resolve_public_key(kid: &str, ledger: &dyn DagLedger) -> Result<PublicKey, IdentityError> {
    let (did, fragment) = parse_kid(kid)?;
    let document = resolve_did(&did, ledger)?;
    document
        .method(&fragment)
        .map(|m| m.public_key)
        .ok_or(IdentityError::UnknownFragment(fragment))
}

/// Verifies an alias signature against the key a document names.
///
/// Used by the ledger when admitting alias blocks; exposed so callers
/// can pre-check a payload before submission.
pub fn verify_document_signature(
    key_source: &DidDocument,
    fragment: &str,
    signed_document: &DidDocument,
    signature: &Signature,
) -> Result<bool, IdentityError> {
    let method = key_source
        .method(fragment)
        .ok_or_else(|| IdentityError::UnknownFragment(fragment.to_string()))?;
    Ok(verify(
        &method.public_key,
        &signed_document.canonical_bytes()?,
        signature,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use crate::ledger::Ledger;

    fn keypair(tag: u8) -> (PrivateScalar, PublicKey) {
        generate_keypair(Some(&[tag; 32])).unwrap()
    }

    #[test]
    fn did_string_form() {
        let (_, public) = keypair(1);
        let did = Did::from_public_key("tst", &public).unwrap();
        let s = did.to_string();
        assert!(s.starts_with("did:iota:tst:"));
        assert_eq!(s.len(), "did:iota:tst:".len() + 64);
        assert_eq!(did.unique_id(), blake2b_256(public.as_bytes()).to_hex());
    }

    #[test]
    fn did_is_deterministic_per_key() {
        let (_, a) = keypair(2);
        let (_, b) = keypair(3);
        assert_eq!(
            Did::from_public_key("tst", &a).unwrap(),
            Did::from_public_key("tst", &a).unwrap()
        );
        assert_ne!(
            Did::from_public_key("tst", &a).unwrap(),
            Did::from_public_key("tst", &b).unwrap()
        );
    }

    #[test]
    fn did_parse_round_trip() {
        let (_, public) = keypair(4);
        let did = Did::from_public_key("iota", &public).unwrap();
        let parsed: Did = did.to_string().parse().unwrap();
        assert_eq!(parsed, did);
    }

    #[test]
    fn did_parse_rejects_bad_forms() {
        for bad in [
            "",
            "did:iota:tst",
            "did:web:tst:0000000000000000000000000000000000000000000000000000000000000000",
            "did:iota::0000000000000000000000000000000000000000000000000000000000000000",
            "did:iota:tst:00ff",
            "did:iota:tst:ZZ00000000000000000000000000000000000000000000000000000000000000",
            "did:iota:tst:0000000000000000000000000000000000000000000000000000000000000000:x",
        ] {
            assert!(bad.parse::<Did>().is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn create_document_validates_inputs() {
        let (_, public) = keypair(5);
        assert!(matches!(
            create_did_document("", &public, "key-1"),
            Err(IdentityError::EmptyHrp)
        ));
        assert!(matches!(
            create_did_document("tst", &public, ""),
            Err(IdentityError::BadFragment)
        ));
        assert!(matches!(
            create_did_document("tst", &public, "a#b"),
            Err(IdentityError::BadFragment)
        ));
    }

    #[test]
    fn document_canonical_bytes_are_stable() {
        let (_, public) = keypair(6);
        let doc = create_did_document("tst", &public, "key-1").unwrap();
        assert_eq!(doc.canonical_bytes().unwrap(), doc.canonical_bytes().unwrap());
        let text = String::from_utf8(doc.canonical_bytes().unwrap()).unwrap();
        assert!(text.starts_with("{\"assertionMethod\":[\"key-1\"]"));
        assert!(text.contains("\"verificationMethod\""));
    }

    #[test]
    fn anchor_and_resolve_round_trip() {
        let ledger = Ledger::in_memory();
        let (private, public) = keypair(7);
        let doc = create_did_document("tst", &public, "key-1").unwrap();
        let receipt = anchor_did(&doc, &ledger, &private).unwrap();
        assert_eq!(receipt.did, doc.id);
        let resolved = resolve_did(&doc.id, &ledger).unwrap();
        assert_eq!(resolved, doc);
    }

    #[test]
    fn anchor_rejects_unrelated_signer() {
        let ledger = Ledger::in_memory();
        let (_, public) = keypair(8);
        let (other_private, _) = keypair(9);
        let doc = create_did_document("tst", &public, "key-1").unwrap();
        assert!(matches!(
            anchor_did(&doc, &ledger, &other_private),
            Err(IdentityError::SignerMismatch)
        ));
    }

    #[test]
    fn update_resolves_to_latest_document() {
        let ledger = Ledger::in_memory();
        let (private, public) = keypair(10);
        let mut doc = create_did_document("tst", &public, "key-1").unwrap();
        anchor_did(&doc, &ledger, &private).unwrap();

        let (_, next_public) = keypair(11);
        doc.verification_methods.push(VerificationMethod {
            fragment: "key-2".to_string(),
            public_key: next_public,
        });
        doc.assertion_methods.push("key-2".to_string());
        anchor_did(&doc, &ledger, &private).unwrap();

        let resolved = resolve_did(&doc.id, &ledger).unwrap();
        assert_eq!(resolved.verification_methods.len(), 2);
        assert_eq!(resolved, doc);
    }

    #[test]
    fn rotation_keeps_old_key_as_signer() {
        let ledger = Ledger::in_memory();
        let (old_private, old_public) = keypair(12);
        let doc_v1 = create_did_document("tst", &old_public, "key-1").unwrap();
        anchor_did(&doc_v1, &ledger, &old_private).unwrap();

        // v2 replaces the key entirely; only the old key may sign it.
        let (_, new_public) = keypair(13);
        let doc_v2 = DidDocument {
            id: doc_v1.id.clone(),
            verification_methods: vec![VerificationMethod {
                fragment: "key-2".to_string(),
                public_key: new_public,
            }],
            assertion_methods: vec!["key-2".to_string()],
        };
        anchor_did(&doc_v2, &ledger, &old_private).unwrap();
        assert_eq!(resolve_did(&doc_v1.id, &ledger).unwrap(), doc_v2);
    }

    #[test]
    fn resolve_unknown_did_fails() {
        let ledger = Ledger::in_memory();
        let (_, public) = keypair(14);
        let did = Did::from_public_key("tst", &public).unwrap();
        assert!(matches!(
            resolve_did(&did, &ledger),
            Err(IdentityError::NotFound(_))
        ));
    }

    #[test]
    fn kid_resolution() {
        let ledger = Ledger::in_memory();
        let (private, public) = keypair(15);
        let doc = create_did_document("tst", &public, "key-1").unwrap();
        anchor_did(&doc, &ledger, &private).unwrap();

        let kid = doc.id.kid("key-1");
        assert_eq!(resolve_public_key(&kid, &ledger).unwrap(), public);
        assert!(matches!(
            resolve_public_key(&doc.id.kid("key-9"), &ledger),
            Err(IdentityError::UnknownFragment(_))
        ));
        assert!(matches!(
            resolve_public_key("not-a-kid", &ledger),
            Err(IdentityError::MalformedKid(_))
        ));
        assert!(matches!(
            resolve_public_key(&format!("{}#", doc.id), &ledger),
            Err(IdentityError::MalformedKid(_))
        ));
    }

    #[test]
    fn governor_address_is_bech32_of_key_digest() {
        let (_, public) = keypair(16);
        let addr = governor_address("tst", &public).unwrap();
        assert!(addr.starts_with("tst1"));
        let (hrp, data) = crate::crypto::bech32_decode(&addr).unwrap();
        assert_eq!(hrp, "tst");
        assert_eq!(data, blake2b_256(public.as_bytes()).as_bytes());
    }
}
