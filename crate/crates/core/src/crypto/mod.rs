//! Cryptographic primitives shared by every other module: Ed25519 keys and
//! signatures, Blake2b-256 digests, Bech32 addresses and the unpadded
//! Base64URL codec used by the compact token format.
//!
//! All operations here are pure and stateless; entropy for unseeded key
//! generation comes from the thread-local CSPRNG.

pub mod bech32;

use blake2::digest::consts::U32;
use blake2::{Blake2b, Digest as _};
use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use rand::Rng as _;
use thiserror::Error;

pub use bech32::{bech32_decode, bech32_encode, Bech32Address, Bech32Error};

type Blake2b256 = Blake2b<U32>;

/// Errors from key handling and codec operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("seed must be exactly 32 bytes, got {0}")]
    BadSeedLength(usize),
    #[error("public key must be exactly 32 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("signature must be exactly 64 bytes, got {0}")]
    BadSignatureLength(usize),
    #[error("digest must be exactly 32 bytes, got {0}")]
    BadDigestLength(usize),
    #[error("invalid base64url input: {0}")]
    Base64(String),
}

/// 32-byte Ed25519 secret seed. Never serialized; `Debug` is redacted.
#[derive(Clone)]
pub struct PrivateScalar([u8; 32]);

impl PrivateScalar {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadSeedLength(bytes.len()))?;
        Ok(Self(arr))
    }

    /// Derives the matching public key.
    pub fn public_key(&self) -> PublicKey {
        let signing = SigningKey::from_bytes(&self.0);
        PublicKey(signing.verifying_key().to_bytes())
    }
}

impl std::fmt::Debug for PrivateScalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrivateScalar(..)")
    }
}

/// 32-byte Ed25519 public key point. Point validity is checked at
/// verification time, not on construction.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey([u8; 32]);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|_| CryptoError::BadKeyLength(0))?;
        Self::from_bytes(&bytes)
    }
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.0))
    }
}

/// 64-byte Ed25519 signature.
#[derive(Clone, Copy)]
pub struct Signature([u8; 64]);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 64] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadSignatureLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|_| CryptoError::BadSignatureLength(0))?;
        Self::from_bytes(&bytes)
    }
}

impl PartialEq for Signature {
    fn eq(&self, other: &Self) -> bool {
        self.0[..] == other.0[..]
    }
}
impl Eq for Signature {}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({})", hex::encode(self.0))
    }
}

/// 32-byte Blake2b-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub(crate) [u8; 32]);

impl Digest {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadDigestLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|_| CryptoError::BadDigestLength(0))?;
        Self::from_bytes(&bytes)
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", hex::encode(self.0))
    }
}

// Public keys, signatures and digests cross the wire as lowercase hex.
macro_rules! hex_serde {
    ($ty:ty, $expecting:literal) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
                Self::from_bytes(&bytes).map_err(|_| {
                    serde::de::Error::invalid_length(bytes.len(), &$expecting)
                })
            }
        }
    };
}

hex_serde!(PublicKey, "a 32-byte hex string");
hex_serde!(Signature, "a 64-byte hex string");
hex_serde!(Digest, "a 32-byte hex string");

/// Generates an Ed25519 keypair. Deterministic when a 32-byte seed is given,
/// otherwise drawn from the thread CSPRNG.
pub fn generate_keypair(rng_seed: Option<&[u8]>) -> Result<(PrivateScalar, PublicKey), CryptoError> {
    let seed: [u8; 32] = match rng_seed {
        Some(bytes) => bytes
            .try_into()
            .map_err(|_| CryptoError::BadSeedLength(bytes.len()))?,
        None => {
            let mut buf = [0u8; 32];
            rand::rng().fill_bytes(&mut buf);
            buf
        }
    };
    let secret = PrivateScalar(seed);
    let public = secret.public_key();
    Ok((secret, public))
}

/// Signs `message` with the given secret scalar (pure Ed25519, RFC 8032).
pub fn sign(key: &PrivateScalar, message: &[u8]) -> Signature {
    let signing = SigningKey::from_bytes(&key.0);
    Signature(signing.sign(message).to_bytes())
}

/// Returns true iff `sig` is a valid Ed25519 signature of `message` under
/// `key`. A key that is not a valid curve point yields false, not an error.
pub fn verify(key: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(verifying) = VerifyingKey::from_bytes(&key.0) else {
        return false;
    };
    let signature = ed25519_dalek::Signature::from_bytes(&sig.0);
    verifying.verify(message, &signature).is_ok()
}

/// Length-tolerant verification for untrusted wire input. Malformed key or
/// signature lengths return false instead of an error.
pub fn verify_raw(key: &[u8], message: &[u8], sig: &[u8]) -> bool {
    let (Ok(key), Ok(sig)) = (PublicKey::from_bytes(key), Signature::from_bytes(sig)) else {
        return false;
    };
    verify(&key, message, &sig)
}

/// Blake2b with a 256-bit output.
pub fn blake2b_256(data: &[u8]) -> Digest {
    let mut hasher = Blake2b256::new();
    hasher.update(data);
    Digest(hasher.finalize().into())
}

/// Unpadded URL-safe base64 (the compact token segment encoding).
pub fn base64url_encode(data: &[u8]) -> String {
    use base64::Engine as _;
    base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(data)
}

/// Inverse of [`base64url_encode`]. Rejects padding, non-alphabet characters
/// and non-canonical trailing bits.
pub fn base64url_decode(s: &str) -> Result<Vec<u8>, CryptoError> {
    use base64::Engine as _;
    base64::engine::general_purpose::URL_SAFE_NO_PAD
        .decode(s.as_bytes())
        .map_err(|e| CryptoError::Base64(e.to_string()))
}
