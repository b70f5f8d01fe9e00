//! The credential issuer: a regulator-style identity that vouches for
//! data sources after checking their onboarding document fingerprint
//! against its policy.

use crate::config::{IssuerConfig, IssuerMode};
use std::collections::HashMap;
use thiserror::Error;
use trustlayer_core::credentials::{generate_vc, JwtCompact};
use trustlayer_core::identity::{Did, IdentityError};
use trustlayer_core::ledger::DagLedger;
use trustlayer_core::pipeline::SourceIdentity;

#[derive(Debug, Error)]
pub enum IssueRefusal {
    #[error("fingerprint must be 64 lowercase hex characters")]
    BadFingerprint,
    #[error("policy does not allow issuing to this did")]
    Refused,
}

/// Who may be issued a credential.
pub enum IssuerPolicy {
    AllowAny,
    /// fingerprint -> the only DID that fingerprint may register.
    Allowlist(HashMap<String, Did>),
}

impl IssuerPolicy {
    pub fn from_config(config: &IssuerConfig) -> Self {
        match config.mode {
            IssuerMode::AllowAny => IssuerPolicy::AllowAny,
            IssuerMode::Allowlist => IssuerPolicy::Allowlist(
                config
                    .allowlist
                    .iter()
                    .map(|e| {
                        (
                            e.fingerprint.clone(),
                            e.did.parse().expect("allowlist did validated by config"),
                        )
                    })
                    .collect(),
            ),
        }
    }

    fn permits(&self, fingerprint: &str, did: &Did) -> bool {
        match self {
            IssuerPolicy::AllowAny => true,
            IssuerPolicy::Allowlist(entries) => entries.get(fingerprint) == Some(did),
        }
    }
}

/// An issuer with its own anchored identity and signing key.
pub struct IssuerService {
    identity: SourceIdentity,
    policy: IssuerPolicy,
}

impl IssuerService {
    /// Creates the issuer and anchors its document on the ledger so
    /// sources can resolve its key when validating credentials.
    pub fn bootstrap(
        network_hrp: &str,
        policy: IssuerPolicy,
        ledger: &dyn DagLedger,
    ) -> Result<Self, IdentityError> {
        let identity = SourceIdentity::generate(network_hrp, None)?;
        identity.anchor(ledger)?;
        Ok(IssuerService { identity, policy })
    }

    pub fn did(&self) -> &Did {
        &self.identity.did
    }

    /// Issues an identity credential binding `subject` to the verified
    /// onboarding document.
    pub fn issue(&self, subject: &Did, fingerprint: &str) -> Result<JwtCompact, IssueRefusal> {
        let well_formed = fingerprint.len() == 64
            && fingerprint
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(IssueRefusal::BadFingerprint);
        }
        if !self.policy.permits(fingerprint, subject) {
            return Err(IssueRefusal::Refused);
        }
        Ok(generate_vc(
            &self.identity.did,
            &self.identity.key,
            &self.identity.fragment,
            serde_json::json!({
                "id": subject.to_string(),
                "document_fingerprint": fingerprint,
            }),
            Some("IdentityCredential"),
        )
        .expect("identity credential subject canonicalizes"))
    }
}
