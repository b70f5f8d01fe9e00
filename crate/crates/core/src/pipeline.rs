//! The three-layer trust pipeline.
//!
//! Layer 1 verifies who is talking: a challenge nonce, a signed
//! presentation over it, and a short-lived session token on success.
//! Layer 2 verifies what they sent: the data credential's signature,
//! that its issuer is the session subject, and the record schema.
//! Layer 3 makes the record tamper-evident: its digest is anchored on
//! the ledger first, then the full payload lands in the off-chain
//! store. Queries re-derive the digest and compare against the anchor.
//!
//! Every refusal carries a stable string code (see [`codes`]) so
//! transports and tooling can classify failures without parsing
//! messages.

use crate::canonical::canonical_json;
use crate::credentials::{
    decode_vc_unchecked, validate_vc, validate_vp, InvalidReason, JwtCompact, KeyResolver,
    NONCE_LEN,
};
use crate::crypto::{
    base64url_decode, base64url_encode, blake2b_256, sign, verify, Digest, PrivateScalar,
    PublicKey,
};
use crate::identity::{
    anchor_did, create_did_document, parse_kid, resolve_public_key, Did, DidDocument,
    IdentityError,
};
use crate::ledger::{BlockId, BlockPayload, DagLedger, LedgerError};
use crate::schema::{RecordSchema, SchemaViolation, TransactionRecord};
use crate::storage::{OffChainRecord, RecordStore, StoreError};
use crate::TimestampMs;
use parking_lot::Mutex;
use rand::Rng as _;
use serde_json::Value;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Stable error codes, one per refusal class.
pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const UNKNOWN_CHALLENGE: &str = "unknown-challenge";
    pub const EXPIRED_CHALLENGE: &str = "expired-challenge";
    pub const CONSUMED_CHALLENGE: &str = "consumed-challenge";
    pub const INVALID_PRESENTATION: &str = "invalid-presentation";
    pub const UNANCHORED_HOLDER: &str = "unanchored-holder";
    pub const UNTRUSTED_ISSUER: &str = "untrusted-issuer";
    pub const SESSION_EXPIRED: &str = "session-expired";
    pub const SESSION_INVALID: &str = "session-invalid";
    pub const VC_INVALID: &str = "vc-invalid";
    pub const ISSUER_MISMATCH: &str = "issuer-mismatch";
    pub const SCHEMA_VIOLATION: &str = "schema-violation";
    pub const NOT_FOUND: &str = "not-found";
    pub const LEDGER_FAILURE: &str = "ledger-failure";
    pub const STORE_FAILURE: &str = "store-failure";
}

pub const DEFAULT_CHALLENGE_TTL_MS: i64 = 60_000;
pub const DEFAULT_SESSION_TTL_MS: i64 = 300_000;
pub const DEFAULT_VP_TTL_MS: i64 = 120_000;

#[derive(Debug, Clone)]
pub struct TrustConfig {
    pub challenge_ttl_ms: i64,
    pub session_ttl_ms: i64,
    pub trusted_issuers: HashSet<Did>,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            challenge_ttl_ms: DEFAULT_CHALLENGE_TTL_MS,
            session_ttl_ms: DEFAULT_SESSION_TTL_MS,
            trusted_issuers: HashSet::new(),
        }
    }
}

/// A handed-out challenge nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; NONCE_LEN],
    pub issued_at: TimestampMs,
    pub expires_at: TimestampMs,
}

struct ChallengeState {
    expires_at: TimestampMs,
    consumed: bool,
}

/// Layer 1 refusals.
#[derive(Debug, Error)]
pub enum Layer1Error {
    #[error("malformed presentation: {0}")]
    Malformed(&'static str),
    #[error("challenge is not known")]
    UnknownChallenge,
    #[error("challenge has expired")]
    ExpiredChallenge,
    #[error("challenge was already consumed")]
    ConsumedChallenge,
    #[error("presentation rejected: {0}")]
    InvalidPresentation(&'static str),
    #[error("holder has no anchored identity")]
    UnanchoredHolder,
    #[error("no trusted issuer vouches for the holder")]
    UntrustedIssuer,
}

impl Layer1Error {
    pub fn code(&self) -> &'static str {
        match self {
            Layer1Error::Malformed(_) => codes::MALFORMED,
            Layer1Error::UnknownChallenge => codes::UNKNOWN_CHALLENGE,
            Layer1Error::ExpiredChallenge => codes::EXPIRED_CHALLENGE,
            Layer1Error::ConsumedChallenge => codes::CONSUMED_CHALLENGE,
            Layer1Error::InvalidPresentation(_) => codes::INVALID_PRESENTATION,
            Layer1Error::UnanchoredHolder => codes::UNANCHORED_HOLDER,
            Layer1Error::UntrustedIssuer => codes::UNTRUSTED_ISSUER,
        }
    }
}

/// Session refusals.
#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session token is malformed or missigned")]
    Invalid,
    #[error("session has expired")]
    Expired,
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Invalid => codes::SESSION_INVALID,
            SessionError::Expired => codes::SESSION_EXPIRED,
        }
    }
}

/// Layer 2 refusals.
#[derive(Debug, Error)]
pub enum Layer2Error {
    #[error("data credential rejected: {0}")]
    VcInvalid(&'static str),
    #[error("credential issuer does not match the session subject")]
    IssuerMismatch,
    #[error(transparent)]
    Schema(#[from] SchemaViolation),
}

impl Layer2Error {
    pub fn code(&self) -> &'static str {
        match self {
            Layer2Error::VcInvalid(_) => codes::VC_INVALID,
            Layer2Error::IssuerMismatch => codes::ISSUER_MISMATCH,
            Layer2Error::Schema(_) => codes::SCHEMA_VIOLATION,
        }
    }
}

/// Layer 3 refusals.
#[derive(Debug, Error)]
pub enum Layer3Error {
    #[error("ledger refused the anchor: {0}")]
    Ledger(#[from] LedgerError),
    #[error("store refused the record: {0}")]
    Store(#[from] StoreError),
}

impl Layer3Error {
    pub fn code(&self) -> &'static str {
        match self {
            Layer3Error::Ledger(_) => codes::LEDGER_FAILURE,
            Layer3Error::Store(_) => codes::STORE_FAILURE,
        }
    }
}

/// A self-contained bearer token: canonical claims plus the trust
/// layer's signature, both base64url, joined by a dot. Verification
/// needs no session table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionToken {
    pub subject: Did,
    pub issued_at: TimestampMs,
    pub expires_at: TimestampMs,
    encoded: String,
}

impl SessionToken {
    fn claims_bytes(subject: &Did, issued_at: TimestampMs, expires_at: TimestampMs) -> Vec<u8> {
        canonical_json(&serde_json::json!({
            "subject": subject.to_string(),
            "issued_at": issued_at,
            "expires_at": expires_at,
        }))
        .expect("session claims canonicalize")
    }

    fn issue(
        key: &PrivateScalar,
        subject: Did,
        issued_at: TimestampMs,
        expires_at: TimestampMs,
    ) -> Self {
        let claims = Self::claims_bytes(&subject, issued_at, expires_at);
        let signature = sign(key, &claims);
        let encoded = format!(
            "{}.{}",
            base64url_encode(&claims),
            base64url_encode(signature.as_bytes())
        );
        SessionToken {
            subject,
            issued_at,
            expires_at,
            encoded,
        }
    }

    pub fn encoded(&self) -> &str {
        &self.encoded
    }

    /// Parses and verifies a token against the issuing key, then checks
    /// expiry. A token is expired when `now >= expires_at`.
    pub fn verify(encoded: &str, key: &PublicKey, now: TimestampMs) -> Result<Self, SessionError> {
        let (claims64, sig64) = encoded.split_once('.').ok_or(SessionError::Invalid)?;
        let claims_raw = base64url_decode(claims64).map_err(|_| SessionError::Invalid)?;
        let sig_raw = base64url_decode(sig64).map_err(|_| SessionError::Invalid)?;
        let signature =
            crate::crypto::Signature::from_bytes(&sig_raw).map_err(|_| SessionError::Invalid)?;
        if !verify(key, &claims_raw, &signature) {
            return Err(SessionError::Invalid);
        }
        #[derive(serde::Deserialize)]
        struct Claims {
            subject: String,
            issued_at: TimestampMs,
            expires_at: TimestampMs,
        }
        let claims: Claims =
            serde_json::from_slice(&claims_raw).map_err(|_| SessionError::Invalid)?;
        let subject: Did = claims.subject.parse().map_err(|_| SessionError::Invalid)?;
        // Signed claims re-encode canonically to the carried bytes by
        // construction, so no re-serialization check is needed here.
        if now >= claims.expires_at {
            return Err(SessionError::Expired);
        }
        Ok(SessionToken {
            subject,
            issued_at: claims.issued_at,
            expires_at: claims.expires_at,
            encoded: encoded.to_string(),
        })
    }
}

/// Receipt for a stored record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredReceipt {
    pub record_id: String,
    pub block_id: BlockId,
    pub data_hash: Digest,
}

/// Result of a verified query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedQuery {
    pub record: Value,
    pub source_did: Did,
    pub block_id: BlockId,
    pub verified: bool,
    /// Why verification failed, when it did.
    pub failure: Option<&'static str>,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("no record stored under '{0}'")]
    NotFound(String),
}

/// Resolves keys through the anchored documents on a ledger.
pub struct LedgerKeyResolver<'a> {
    pub ledger: &'a dyn DagLedger,
}

impl KeyResolver for LedgerKeyResolver<'_> {
    fn resolve_key(&self, kid: &str) -> Option<PublicKey> {
        resolve_public_key(kid, self.ledger).ok()
    }
}

/// The verifier side of the pipeline: owns the challenge table, the
/// session signing key and the trusted issuer set.
pub struct TrustLayer {
    config: TrustConfig,
    signing_key: PrivateScalar,
    public_key: PublicKey,
    did: Did,
    challenges: Mutex<HashMap<[u8; NONCE_LEN], ChallengeState>>,
}

impl TrustLayer {
    /// Builds a trust layer around an existing key and identity.
    pub fn new(config: TrustConfig, signing_key: PrivateScalar, did: Did) -> Self {
        let public_key = signing_key.public_key();
        TrustLayer {
            config,
            signing_key,
            public_key,
            did,
            challenges: Mutex::new(HashMap::new()),
        }
    }

    /// Generates a key, anchors a single-key document for it on the
    /// ledger and returns the ready trust layer.
    pub fn bootstrap(
        network_hrp: &str,
        config: TrustConfig,
        ledger: &dyn DagLedger,
    ) -> Result<Self, IdentityError> {
        let (private, public) = crate::crypto::generate_keypair(None)
            .expect("unseeded keypair generation cannot fail");
        let document = create_did_document(network_hrp, &public, "key-1")?;
        anchor_did(&document, ledger, &private)?;
        Ok(Self::new(config, private, document.id))
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public_key
    }

    pub fn config(&self) -> &TrustConfig {
        &self.config
    }

    pub fn trusted_issuers(&self) -> &HashSet<Did> {
        &self.config.trusted_issuers
    }

    /// Hands out a fresh single-use challenge.
    pub fn issue_challenge(&self, now: TimestampMs) -> Challenge {
        let mut nonce = [0u8; NONCE_LEN];
        rand::rng().fill_bytes(&mut nonce);
        let challenge = Challenge {
            nonce,
            issued_at: now,
            expires_at: now + self.config.challenge_ttl_ms,
        };
        let mut table = self.challenges.lock();
        // Lazy sweep: drop entries whose expiry is long past so the
        // table does not grow without bound under sustained load.
        if table.len() >= 4096 {
            table.retain(|_, c| now < c.expires_at);
        }
        table.insert(
            nonce,
            ChallengeState {
                expires_at: challenge.expires_at,
                consumed: false,
            },
        );
        challenge
    }

    /// Layer 1: verifies a presentation against an issued challenge and
    /// returns a session token.
    ///
    /// The challenge is consumed on every well-formed attempt, failed or
    /// not, so a rejected presentation cannot be replayed. Tokens too
    /// broken to name a challenge consume nothing.
    pub fn verify_presentation(
        &self,
        vp_token: &JwtCompact,
        ledger: &dyn DagLedger,
        ttl_ms: Option<i64>,
        now: TimestampMs,
    ) -> Result<SessionToken, Layer1Error> {
        let (_, payload64, _) = vp_token
            .segments()
            .map_err(|_| Layer1Error::Malformed("expected three dot-separated segments"))?;
        let payload = base64url_decode(payload64)
            .map_err(|_| Layer1Error::Malformed("payload is not base64url"))?;
        let vp: crate::credentials::VerifiablePresentation = serde_json::from_slice(&payload)
            .map_err(|_| Layer1Error::Malformed("payload is not a presentation"))?;
        let nonce_raw = base64url_decode(&vp.nonce)
            .map_err(|_| Layer1Error::Malformed("nonce is not base64url"))?;
        let nonce: [u8; NONCE_LEN] = nonce_raw
            .try_into()
            .map_err(|_| Layer1Error::Malformed("nonce must be 16 bytes"))?;

        {
            let mut table = self.challenges.lock();
            let state = table.get_mut(&nonce).ok_or(Layer1Error::UnknownChallenge)?;
            if state.consumed {
                return Err(Layer1Error::ConsumedChallenge);
            }
            if now >= state.expires_at {
                return Err(Layer1Error::ExpiredChallenge);
            }
            state.consumed = true;
        }

        if ledger.latest_alias_document(&vp.holder).is_none() {
            return Err(Layer1Error::UnanchoredHolder);
        }

        let holder_kid = crate::credentials::header_kid(vp_token)
            .map_err(|_| Layer1Error::InvalidPresentation("bad header"))?;
        let (kid_did, _) = parse_kid(&holder_kid)
            .map_err(|_| Layer1Error::InvalidPresentation("bad kid"))?;
        if kid_did != vp.holder {
            return Err(Layer1Error::InvalidPresentation("kid names a different did"));
        }

        let resolver = LedgerKeyResolver { ledger };
        let vp = validate_vp(vp_token, &nonce, &resolver, now)
            .map_err(|reason| Layer1Error::InvalidPresentation(reason.code()))?;

        // At least one embedded credential must come from a trusted
        // issuer and vouch for this holder. Signatures were already
        // checked inside validate_vp.
        let vouched = vp.verifiable_credential.iter().any(|token| {
            decode_vc_unchecked(token).is_ok_and(|vc| {
                self.config.trusted_issuers.contains(&vc.issuer)
                    && vc.subject_did().as_ref() == Some(&vp.holder)
            })
        });
        if !vouched {
            return Err(Layer1Error::UntrustedIssuer);
        }

        let ttl = ttl_ms
            .filter(|t| *t > 0)
            .map(|t| t.min(self.config.session_ttl_ms))
            .unwrap_or(self.config.session_ttl_ms);
        Ok(SessionToken::issue(
            &self.signing_key,
            vp.holder,
            now,
            now + ttl,
        ))
    }

    /// Verifies a bearer token and returns the session subject.
    pub fn check_session(&self, encoded: &str, now: TimestampMs) -> Result<Did, SessionError> {
        SessionToken::verify(encoded, &self.public_key, now).map(|t| t.subject)
    }

    /// Layer 2: validates a data credential inside an authenticated
    /// session. The credential must verify against its issuer's anchored
    /// key, the issuer must be the session subject, and the carried
    /// record must satisfy the schema.
    pub fn validate_data_credential(
        &self,
        vc_token: &JwtCompact,
        session_subject: &Did,
        ledger: &dyn DagLedger,
        schema: &RecordSchema,
    ) -> Result<(TransactionRecord, Value), Layer2Error> {
        let resolver = LedgerKeyResolver { ledger };
        let vc = validate_vc(vc_token, &resolver).map_err(|reason| match reason {
            InvalidReason::Malformed(_) => Layer2Error::VcInvalid(codes::MALFORMED),
            other => Layer2Error::VcInvalid(other.code()),
        })?;
        if &vc.issuer != session_subject {
            return Err(Layer2Error::IssuerMismatch);
        }
        schema.validate(&vc.credential_subject)?;
        let record = TransactionRecord::from_value(&vc.credential_subject)?;
        Ok((record, vc.credential_subject))
    }

    /// Layer 3: anchors the record digest, then stores the payload.
    /// Anchor-first ordering means a store failure can leave an anchor
    /// without a record, but never a record without an anchor.
    pub fn store_record(
        &self,
        record: &TransactionRecord,
        source: &Did,
        ledger: &dyn DagLedger,
        store: &dyn RecordStore,
        now: TimestampMs,
    ) -> Result<StoredReceipt, Layer3Error> {
        let value = record.to_value();
        let canonical = canonical_json(&value).expect("transaction canonicalizes");
        let data_hash = blake2b_256(&canonical);
        let block_id = ledger.submit_block(BlockPayload::DataHash { digest: data_hash })?;
        let record_id = uuid::Uuid::new_v4().to_string();
        store.put(OffChainRecord {
            record_id: record_id.clone(),
            data: value,
            block_id,
            source_did: source.clone(),
            stored_at: now,
        })?;
        Ok(StoredReceipt {
            record_id,
            block_id,
            data_hash,
        })
    }
}

/// Fetches a record and re-verifies it against its ledger anchor. The
/// digest is recomputed over the stored payload only; anchoring
/// metadata never feeds its own hash.
pub fn query_verified(
    record_id: &str,
    ledger: &dyn DagLedger,
    store: &dyn RecordStore,
) -> Result<VerifiedQuery, QueryError> {
    let record = store
        .get(record_id)
        .ok_or_else(|| QueryError::NotFound(record_id.to_string()))?;
    let base = |verified, failure| VerifiedQuery {
        record: record.data.clone(),
        source_did: record.source_did.clone(),
        block_id: record.block_id,
        verified,
        failure,
    };
    let block = match ledger.get_block(&record.block_id) {
        Some(b) => b,
        None => return Ok(base(false, Some("ledger-miss"))),
    };
    let anchored = match block.payload {
        BlockPayload::DataHash { digest } => digest,
        BlockPayload::Alias(_) => return Ok(base(false, Some("wrong-block-kind"))),
    };
    let recomputed = match canonical_json(&record.data) {
        Ok(bytes) => blake2b_256(&bytes),
        Err(_) => return Ok(base(false, Some("uncanonicalizable-record"))),
    };
    if recomputed == anchored {
        Ok(base(true, None))
    } else {
        Ok(base(false, Some("hash-mismatch")))
    }
}

/// Everything a source needs to act as a holder in tests and tools:
/// a key, an anchored identity, and helpers to build presentations.
pub struct SourceIdentity {
    pub key: PrivateScalar,
    pub public: PublicKey,
    pub did: Did,
    pub document: DidDocument,
    pub fragment: String,
}

impl SourceIdentity {
    /// Creates a source identity; `seed` fixes the key for
    /// deterministic tests.
    pub fn generate(network_hrp: &str, seed: Option<&[u8]>) -> Result<Self, IdentityError> {
        let (key, public) = crate::crypto::generate_keypair(seed)?;
        let document = create_did_document(network_hrp, &public, "key-1")?;
        Ok(SourceIdentity {
            key,
            public,
            did: document.id.clone(),
            document,
            fragment: "key-1".to_string(),
        })
    }

    pub fn anchor(&self, ledger: &dyn DagLedger) -> Result<(), IdentityError> {
        anchor_did(&self.document, ledger, &self.key).map(|_| ())
    }

    pub fn kid(&self) -> String {
        self.did.kid(&self.fragment)
    }
}
