//! Verifiable credentials and presentations as compact signed tokens.
//!
//! Both travel as `base64url(header).base64url(payload).base64url(sig)`.
//! The header keeps its field order (`alg`, `typ`, `kid`); the payload is
//! canonical JSON so that byte-identical inputs sign identically. A
//! presentation additionally binds a challenge nonce: its signature
//! covers the ASCII signing input with the raw nonce bytes appended, and
//! the payload carries a copy of the nonce so the verifier can cross
//! check both.
//!
//! Validation returns the credential or presentation on success and a
//! machine-readable [`InvalidReason`] otherwise. Presentation checks run
//! in a fixed order: expiry first (before any key resolution), then the
//! embedded credentials, then the holder's signature.

use crate::canonical::{canonical_bytes, CanonicalError};
use crate::crypto::{base64url_decode, base64url_encode, sign, verify, PrivateScalar, PublicKey, Signature};
use crate::identity::Did;
use crate::TimestampMs;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const JWT_ALG: &str = "EdDSA";
pub const JWT_TYP: &str = "JWT";
pub const VC_TYPE: &str = "VerifiableCredential";
pub const VP_TYPE: &str = "VerifiablePresentation";
pub const NONCE_LEN: usize = 16;

/// Token header. Serialized in declaration order, never canonicalized,
/// so the on-the-wire form is always `{"alg":…,"typ":…,"kid":…}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JwtHeader {
    pub alg: String,
    pub typ: String,
    pub kid: String,
}

impl JwtHeader {
    pub fn new(kid: String) -> Self {
        JwtHeader {
            alg: JWT_ALG.to_string(),
            typ: JWT_TYP.to_string(),
            kid,
        }
    }
}

/// A compact token: three base64url segments joined by dots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JwtCompact(String);

impl JwtCompact {
    pub fn from_string(s: String) -> Self {
        JwtCompact(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Splits into (header, payload, signature) segments without
    /// decoding them.
    pub fn segments(&self) -> Result<(&str, &str, &str), InvalidReason> {
        let mut parts = self.0.split('.');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(p), Some(s), None) if !h.is_empty() && !p.is_empty() && !s.is_empty() => {
                Ok((h, p, s))
            }
            _ => Err(InvalidReason::Malformed("expected three dot-separated segments")),
        }
    }
}

impl std::fmt::Display for JwtCompact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for JwtCompact {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for JwtCompact {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(JwtCompact(String::deserialize(deserializer)?))
    }
}

/// Claims carried by a credential token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiableCredential {
    pub id: String,
    #[serde(rename = "type")]
    pub credential_type: Vec<String>,
    pub issuer: Did,
    #[serde(rename = "credentialSubject")]
    pub credential_subject: Value,
}

impl VerifiableCredential {
    /// The subject DID, when the subject carries an `id` claim.
    pub fn subject_did(&self) -> Option<Did> {
        self.credential_subject
            .get("id")
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
    }
}

/// Claims carried by a presentation token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiablePresentation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub holder: Did,
    #[serde(rename = "verifiableCredential")]
    pub verifiable_credential: Vec<JwtCompact>,
    /// Base64url copy of the challenge nonce, cross-checked against the
    /// nonce the signature binds.
    pub nonce: String,
    pub expiration: TimestampMs,
}

/// Why a token failed validation. All variants map to the same refusal
/// from the caller's point of view; the variant is diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidReason {
    Malformed(&'static str),
    UnresolvableKey,
    BadSignature,
    Expired,
    EmbeddedCredential,
    NonceMismatch,
}

impl InvalidReason {
    pub fn code(&self) -> &'static str {
        match self {
            InvalidReason::Malformed(_) => "malformed",
            InvalidReason::UnresolvableKey => "unresolvable-key",
            InvalidReason::BadSignature => "bad-signature",
            InvalidReason::Expired => "expired",
            InvalidReason::EmbeddedCredential => "embedded-credential",
            InvalidReason::NonceMismatch => "nonce-mismatch",
        }
    }
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidReason::Malformed(detail) => write!(f, "malformed token: {detail}"),
            other => f.write_str(other.code()),
        }
    }
}

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error("nonce must be {NONCE_LEN} bytes, got {0}")]
    BadNonceLength(usize),
    #[error("expiry offset must not be negative")]
    NegativeExpiry,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// Resolves a key identifier to the public key it names. Backed by the
/// ledger in production; tests substitute fixed maps.
pub trait KeyResolver {
    fn resolve_key(&self, kid: &str) -> Option<PublicKey>;
}

impl<F> KeyResolver for F
where
    F: Fn(&str) -> Option<PublicKey>,
{
    fn resolve_key(&self, kid: &str) -> Option<PublicKey> {
        self(kid)
    }
}

/// Signs `payload` under `kid`, appending `extra` to the signed bytes.
/// The token's signature covers `header64 || '.' || payload64 || extra`.
pub fn sign_compact(
    key: &PrivateScalar,
    kid: &str,
    payload: &[u8],
    extra: &[u8],
) -> JwtCompact {
    let header = JwtHeader::new(kid.to_string());
    let header64 = base64url_encode(&serde_json::to_vec(&header).expect("header serializes"));
    let payload64 = base64url_encode(payload);
    let signing_input = format!("{header64}.{payload64}");
    let mut message = signing_input.clone().into_bytes();
    message.extend_from_slice(extra);
    let signature = sign(key, &message);
    JwtCompact(format!("{signing_input}.{}", base64url_encode(signature.as_bytes())))
}

fn decode_header(segment: &str) -> Result<JwtHeader, InvalidReason> {
    let raw = base64url_decode(segment)
        .map_err(|_| InvalidReason::Malformed("header is not base64url"))?;
    let header: JwtHeader = serde_json::from_slice(&raw)
        .map_err(|_| InvalidReason::Malformed("header is not a jwt header"))?;
    if header.alg != JWT_ALG || header.typ != JWT_TYP {
        return Err(InvalidReason::Malformed("unsupported alg or typ"));
    }
    Ok(header)
}

fn decode_signature(segment: &str) -> Result<Signature, InvalidReason> {
    let raw = base64url_decode(segment)
        .map_err(|_| InvalidReason::Malformed("signature is not base64url"))?;
    Signature::from_bytes(&raw).map_err(|_| InvalidReason::Malformed("signature must be 64 bytes"))
}

/// Issues a credential over `credential_subject`.
pub fn generate_vc(
    issuer: &Did,
    issuer_key: &PrivateScalar,
    fragment: &str,
    credential_subject: Value,
    subtype: Option<&str>,
) -> Result<JwtCompact, CredentialError> {
    let mut credential_type = vec![VC_TYPE.to_string()];
    if let Some(t) = subtype {
        credential_type.push(t.to_string());
    }
    let vc = VerifiableCredential {
        id: format!("urn:uuid:{}", uuid::Uuid::new_v4()),
        credential_type,
        issuer: issuer.clone(),
        credential_subject,
    };
    let payload = canonical_bytes(&vc)?;
    Ok(sign_compact(issuer_key, &issuer.kid(fragment), &payload, &[]))
}

/// Validates a credential token: structure, issuer key, signature.
pub fn validate_vc(
    token: &JwtCompact,
    resolver: &dyn KeyResolver,
) -> Result<VerifiableCredential, InvalidReason> {
    let (header64, payload64, sig64) = token.segments()?;
    let header = decode_header(header64)?;
    let key = resolver
        .resolve_key(&header.kid)
        .ok_or(InvalidReason::UnresolvableKey)?;
    let signature = decode_signature(sig64)?;
    let signing_input = format!("{header64}.{payload64}");
    if !verify(&key, signing_input.as_bytes(), &signature) {
        return Err(InvalidReason::BadSignature);
    }
    let payload = base64url_decode(payload64)
        .map_err(|_| InvalidReason::Malformed("payload is not base64url"))?;
    let vc: VerifiableCredential = serde_json::from_slice(&payload)
        .map_err(|_| InvalidReason::Malformed("payload is not a credential"))?;
    if !vc.credential_type.iter().any(|t| t == VC_TYPE) {
        return Err(InvalidReason::Malformed("missing credential type"));
    }
    Ok(vc)
}

/// Builds a presentation over already-issued credential tokens, bound
/// to `nonce` and expiring `expiry_ms` from `now`.
pub fn generate_vp(
    holder: &Did,
    holder_key: &PrivateScalar,
    fragment: &str,
    credentials: Vec<JwtCompact>,
    nonce: &[u8],
    expiry_ms: i64,
    now: TimestampMs,
) -> Result<JwtCompact, CredentialError> {
    if nonce.len() != NONCE_LEN {
        return Err(CredentialError::BadNonceLength(nonce.len()));
    }
    if expiry_ms < 0 {
        return Err(CredentialError::NegativeExpiry);
    }
    let vp = VerifiablePresentation {
        id: Some(format!("urn:uuid:{}", uuid::Uuid::new_v4())),
        holder: holder.clone(),
        verifiable_credential: credentials,
        nonce: base64url_encode(nonce),
        expiration: now + expiry_ms,
    };
    let payload = canonical_bytes(&vp)?;
    Ok(sign_compact(holder_key, &holder.kid(fragment), &payload, nonce))
}

/// Validates a presentation token against the nonce the verifier issued.
///
/// Check order: payload decodes, expiry (no key resolution happens for
/// an expired token), every embedded credential, nonce copy, holder key
/// resolution, holder signature over `signingInput || nonce`.
pub fn validate_vp(
    token: &JwtCompact,
    expected_nonce: &[u8],
    resolver: &dyn KeyResolver,
    now: TimestampMs,
) -> Result<VerifiablePresentation, InvalidReason> {
    if expected_nonce.len() != NONCE_LEN {
        return Err(InvalidReason::NonceMismatch);
    }
    let (header64, payload64, sig64) = token.segments()?;
    let payload = base64url_decode(payload64)
        .map_err(|_| InvalidReason::Malformed("payload is not base64url"))?;
    let vp: VerifiablePresentation = serde_json::from_slice(&payload)
        .map_err(|_| InvalidReason::Malformed("payload is not a presentation"))?;
    if now >= vp.expiration {
        return Err(InvalidReason::Expired);
    }
    for credential in &vp.verifiable_credential {
        validate_vc(credential, resolver).map_err(|_| InvalidReason::EmbeddedCredential)?;
    }
    let carried_nonce = base64url_decode(&vp.nonce)
        .map_err(|_| InvalidReason::Malformed("nonce is not base64url"))?;
    if carried_nonce != expected_nonce {
        return Err(InvalidReason::NonceMismatch);
    }
    let header = decode_header(header64)?;
    let key = resolver
        .resolve_key(&header.kid)
        .ok_or(InvalidReason::UnresolvableKey)?;
    let signature = decode_signature(sig64)?;
    let mut message = format!("{header64}.{payload64}").into_bytes();
    message.extend_from_slice(expected_nonce);
    if !verify(&key, &message, &signature) {
        return Err(InvalidReason::BadSignature);
    }
    Ok(vp)
}

/// Decodes a credential token's payload without verifying anything.
/// For callers that already validated the token and need its claims
/// again without paying for a second signature check.
pub fn decode_vc_unchecked(token: &JwtCompact) -> Result<VerifiableCredential, InvalidReason> {
    let (_, payload64, _) = token.segments()?;
    let payload = base64url_decode(payload64)
        .map_err(|_| InvalidReason::Malformed("payload is not base64url"))?;
    serde_json::from_slice(&payload)
        .map_err(|_| InvalidReason::Malformed("payload is not a credential"))
}

/// The kid named in a token's header, without any verification.
pub fn header_kid(token: &JwtCompact) -> Result<String, InvalidReason> {
    let (header64, _, _) = token.segments()?;
    Ok(decode_header(header64)?.kid)
}
