//! Invalid-request generation.
//!
//! Seven mutation classes, each mapped to the exact status and error
//! code the service must answer with. The executor builds each bad
//! request from a known-good record using a registered client (plus an
//! accomplice identity for the cross-signing case) so the only thing
//! wrong with a request is the thing its class says is wrong.

use serde_json::{json, Value};
use trustlayer_core::canonical::canonical_json;
use trustlayer_core::credentials::{generate_vc, JwtCompact};
use trustlayer_core::crypto::{base64url_decode, base64url_encode};
use trustlayer_core::now_ms;
use trustlayer_core::schema::TransactionRecord;
use trustlayer_service::client::{ClientError, SourceClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InvalidClass {
    /// Data credential with a corrupted payload byte.
    TamperedVc,
    /// Presentation signed over a different nonce than it quotes.
    WrongNonceVp,
    /// Presentation whose expiration has already passed.
    ExpiredVp,
    /// Data submission under a session past its expiry.
    ExpiredSession,
    /// Record missing a required schema field.
    SchemaMissingField,
    /// Record with an ill-typed field value.
    SchemaIllTyped,
    /// Data credential signed by a different identity than the session.
    IssuerMismatch,
}

pub const ALL_CLASSES: [InvalidClass; 7] = [
    InvalidClass::TamperedVc,
    InvalidClass::WrongNonceVp,
    InvalidClass::ExpiredVp,
    InvalidClass::ExpiredSession,
    InvalidClass::SchemaMissingField,
    InvalidClass::SchemaIllTyped,
    InvalidClass::IssuerMismatch,
];

impl InvalidClass {
    pub fn name(&self) -> &'static str {
        match self {
            InvalidClass::TamperedVc => "tampered-vc",
            InvalidClass::WrongNonceVp => "wrong-nonce-vp",
            InvalidClass::ExpiredVp => "expired-vp",
            InvalidClass::ExpiredSession => "expired-session",
            InvalidClass::SchemaMissingField => "schema-missing-field",
            InvalidClass::SchemaIllTyped => "schema-ill-typed",
            InvalidClass::IssuerMismatch => "issuer-mismatch",
        }
    }

    pub fn expected_status(&self) -> u16 {
        match self {
            InvalidClass::WrongNonceVp
            | InvalidClass::ExpiredVp
            | InvalidClass::ExpiredSession => 401,
            _ => 422,
        }
    }

    pub fn expected_code(&self) -> &'static str {
        match self {
            InvalidClass::TamperedVc => "vc-invalid",
            InvalidClass::WrongNonceVp | InvalidClass::ExpiredVp => "invalid-presentation",
            InvalidClass::ExpiredSession => "session-expired",
            InvalidClass::SchemaMissingField | InvalidClass::SchemaIllTyped => "schema-violation",
            InvalidClass::IssuerMismatch => "issuer-mismatch",
        }
    }

    pub fn from_name(name: &str) -> Option<InvalidClass> {
        ALL_CLASSES.iter().copied().find(|c| c.name() == name)
    }
}

/// What actually came back for one invalid request.
#[derive(Debug, Clone)]
pub struct InvalidOutcome {
    pub class: InvalidClass,
    pub status: u16,
    pub code: Option<String>,
    pub latency: std::time::Duration,
}

impl InvalidOutcome {
    pub fn matches_expectation(&self) -> bool {
        self.status == self.class.expected_status()
            && self.code.as_deref() == Some(self.class.expected_code())
    }
}

/// Flips one byte inside a decoded JWT segment and re-encodes it.
pub fn tamper_segment(jwt: &str, segment: usize) -> String {
    let mut parts: Vec<String> = jwt.split('.').map(str::to_string).collect();
    let mut bytes = base64url_decode(&parts[segment]).expect("segment decodes");
    bytes[0] ^= 0x01;
    parts[segment] = base64url_encode(&bytes);
    parts.join(".")
}

/// Rewrites a presentation's nonce copy without re-signing, leaving the
/// signature bound to the original nonce.
pub fn splice_nonce(vp: &str, nonce: &[u8]) -> String {
    let parts: Vec<&str> = vp.split('.').collect();
    let mut payload: Value =
        serde_json::from_slice(&base64url_decode(parts[1]).expect("payload decodes"))
            .expect("payload parses");
    payload["nonce"] = json!(base64url_encode(nonce));
    let canonical = canonical_json(&payload).expect("payload canonicalizes");
    format!("{}.{}.{}", parts[0], base64url_encode(&canonical), parts[2])
}

async fn ensure_session(client: &mut SourceClient) -> Result<String, ClientError> {
    let expired = client
        .session()
        .map(|s| now_ms() >= s.expires_at)
        .unwrap_or(true);
    if expired {
        client.establish_session(None).await?;
    }
    Ok(client.session().expect("session present").token.clone())
}

/// Builds and sends one request of the given class. `accomplice` must be
/// a different registered identity on the same service. Transport
/// failures surface as errors; everything else becomes an outcome.
pub async fn execute(
    class: InvalidClass,
    client: &mut SourceClient,
    accomplice: &SourceClient,
    record: &TransactionRecord,
) -> Result<InvalidOutcome, ClientError> {
    let outcome = match class {
        InvalidClass::TamperedVc => {
            let token = ensure_session(client).await?;
            let vc = client.build_data_vc(record)?;
            let tampered = tamper_segment(vc.as_str(), 1);
            client.send_data_vc(&token, &tampered).await?
        }
        InvalidClass::WrongNonceVp => {
            let (live, _) = client.request_challenge().await?;
            let vp = client.build_vp(&[0x5a; 16], client.vp_ttl_ms)?;
            let spliced = splice_nonce(vp.as_str(), &live);
            client
                .send_vp(&JwtCompact::from_string(spliced), None)
                .await?
        }
        InvalidClass::ExpiredVp => {
            let (nonce, _) = client.request_challenge().await?;
            let vp = client.build_vp(&nonce, 0)?;
            client.send_vp(&vp, None).await?
        }
        InvalidClass::ExpiredSession => {
            let kept = client.session().cloned();
            client.establish_session(Some(1)).await?;
            let doomed = client.session().expect("session present").token.clone();
            tokio::time::sleep(std::time::Duration::from_millis(5)).await;
            let vc = client.build_data_vc(record)?;
            let outcome = client.send_data_vc(&doomed, vc.as_str()).await?;
            match kept {
                Some(session) => client.set_session(session),
                None => client.clear_session(),
            }
            outcome
        }
        InvalidClass::SchemaMissingField => {
            let token = ensure_session(client).await?;
            let mut value = record.to_value();
            value
                .as_object_mut()
                .expect("record is an object")
                .remove("payment_format");
            let vc = signed_record_vc(client, value)?;
            client.send_data_vc(&token, vc.as_str()).await?
        }
        InvalidClass::SchemaIllTyped => {
            let token = ensure_session(client).await?;
            let mut value = record.to_value();
            value["amount_paid"] = json!("12,40");
            let vc = signed_record_vc(client, value)?;
            client.send_data_vc(&token, vc.as_str()).await?
        }
        InvalidClass::IssuerMismatch => {
            let token = ensure_session(client).await?;
            let vc = accomplice.build_data_vc(record)?;
            client.send_data_vc(&token, vc.as_str()).await?
        }
    };
    Ok(InvalidOutcome {
        class,
        status: outcome.status,
        code: outcome.error_code,
        latency: outcome.latency,
    })
}

fn signed_record_vc(client: &SourceClient, value: Value) -> Result<JwtCompact, ClientError> {
    Ok(generate_vc(
        client.did(),
        &client.identity.key,
        &client.identity.fragment,
        value,
        Some("TransactionDataCredential"),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_class_has_distinct_name_and_expectation() {
        let names: std::collections::HashSet<_> =
            ALL_CLASSES.iter().map(|c| c.name()).collect();
        assert_eq!(names.len(), ALL_CLASSES.len());
        for class in ALL_CLASSES {
            assert_eq!(InvalidClass::from_name(class.name()), Some(class));
            assert!(matches!(class.expected_status(), 401 | 422));
            assert!(!class.expected_code().is_empty());
        }
    }

    #[test]
    fn tampering_changes_exactly_one_segment() {
        let jwt = format!(
            "{}.{}.{}",
            base64url_encode(b"header"),
            base64url_encode(b"payload"),
            base64url_encode(b"signature")
        );
        let tampered = tamper_segment(&jwt, 1);
        let before: Vec<&str> = jwt.split('.').collect();
        let after: Vec<&str> = tampered.split('.').collect();
        assert_eq!(before[0], after[0]);
        assert_ne!(before[1], after[1]);
        assert_eq!(before[2], after[2]);
    }
}
