//! Source-side client: a bank or data provider talking to the service.
//!
//! Wraps the whole protocol: anchoring an identity over the ledger
//! endpoints, obtaining an identity credential, running the challenge
//! and presentation handshake, and submitting signed data records.
//! Two verification modes mirror the two deployment shapes: a full
//! handshake per submission, or one session reused until it expires.

use serde_json::{json, Value};
use std::time::{Duration, Instant};
use thiserror::Error;
use trustlayer_core::credentials::{generate_vc, generate_vp, CredentialError, JwtCompact};
use trustlayer_core::crypto::{base64url_decode, blake2b_256, sign};
use trustlayer_core::identity::{governor_address, Did, IdentityError};
use trustlayer_core::ledger::{AliasPayload, BlockPayload};
use trustlayer_core::now_ms;
use trustlayer_core::pipeline::SourceIdentity;
use trustlayer_core::schema::TransactionRecord;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("api returned {status}: {code}{}", detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    Api {
        status: u16,
        code: String,
        detail: Option<String>,
    },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

/// How the client proves itself across submissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// Challenge, presentation and fresh session for every record.
    PerRequest,
    /// One session, reused until it expires.
    SessionReuse,
}

#[derive(Debug, Clone)]
pub struct SessionHandle {
    pub token: String,
    pub expires_at: i64,
}

/// Raw response view used by corpus and diagnostic callers.
#[derive(Debug, Clone)]
pub struct HttpOutcome {
    pub status: u16,
    pub error_code: Option<String>,
    pub body: Value,
    pub layer_us: Vec<u64>,
    pub latency: Duration,
}

/// Result of one record submission, successful or refused.
#[derive(Debug, Clone)]
pub struct SubmitOutcome {
    pub status: u16,
    pub error_code: Option<String>,
    pub record_id: Option<String>,
    pub block_id: Option<String>,
    /// Whole-operation latency, handshake included when one ran.
    pub latency: Duration,
    /// Server-side per-layer microseconds: presentation/session work,
    /// credential validation, anchoring and storage.
    pub layer_us: [u64; 3],
    /// Whether this submission paid for a fresh handshake.
    pub handshake: bool,
}

pub struct SourceClient {
    http: reqwest::Client,
    base: String,
    pub identity: SourceIdentity,
    identity_vc: Option<JwtCompact>,
    session: Option<SessionHandle>,
    pub mode: VerifyMode,
    pub vp_ttl_ms: i64,
}

fn parse_layer_us(response: &reqwest::Response) -> Vec<u64> {
    response
        .headers()
        .get("x-layer-us")
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').filter_map(|p| p.parse().ok()).collect())
        .unwrap_or_default()
}

async fn outcome_from(response: reqwest::Response, started: Instant) -> Result<HttpOutcome, ClientError> {
    let status = response.status().as_u16();
    let layer_us = parse_layer_us(&response);
    let body: Value = response.json().await.unwrap_or(Value::Null);
    let error_code = body
        .get("error")
        .and_then(Value::as_str)
        .map(str::to_string);
    Ok(HttpOutcome {
        status,
        error_code,
        body,
        layer_us,
        latency: started.elapsed(),
    })
}

fn expect_ok(outcome: &HttpOutcome) -> Result<(), ClientError> {
    if (200..300).contains(&outcome.status) {
        return Ok(());
    }
    Err(ClientError::Api {
        status: outcome.status,
        code: outcome
            .error_code
            .clone()
            .unwrap_or_else(|| "unknown".to_string()),
        detail: outcome
            .body
            .get("detail")
            .and_then(Value::as_str)
            .map(str::to_string),
    })
}

impl SourceClient {
    pub fn new(base: &str, network_hrp: &str, mode: VerifyMode) -> Result<Self, ClientError> {
        Self::with_seed(base, network_hrp, mode, None)
    }

    pub fn with_seed(
        base: &str,
        network_hrp: &str,
        mode: VerifyMode,
        seed: Option<&[u8]>,
    ) -> Result<Self, ClientError> {
        Ok(SourceClient {
            http: reqwest::Client::new(),
            base: base.trim_end_matches('/').to_string(),
            identity: SourceIdentity::generate(network_hrp, seed)?,
            identity_vc: None,
            session: None,
            mode,
            vp_ttl_ms: trustlayer_core::pipeline::DEFAULT_VP_TTL_MS,
        })
    }

    pub fn did(&self) -> &Did {
        &self.identity.did
    }

    pub fn identity_vc(&self) -> Option<&JwtCompact> {
        self.identity_vc.as_ref()
    }

    pub fn session(&self) -> Option<&SessionHandle> {
        self.session.as_ref()
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn post_json(&self, path: &str, body: &Value) -> Result<HttpOutcome, ClientError> {
        let started = Instant::now();
        let response = self.http.post(self.url(path)).json(body).send().await?;
        outcome_from(response, started).await
    }

    /// Signs this identity's document and submits it as an alias block
    /// over the ledger endpoint.
    pub async fn anchor_identity(&self) -> Result<String, ClientError> {
        let document = &self.identity.document;
        let signature = sign(
            &self.identity.key,
            &document
                .canonical_bytes()
                .map_err(|e| ClientError::Protocol(e.to_string()))?,
        );
        let payload = BlockPayload::Alias(AliasPayload {
            document: document.clone(),
            signer_kid: self.identity.kid(),
            signature,
            address: governor_address(document.id.network_hrp(), &self.identity.public)?,
        });
        let body = serde_json::to_value(&payload)
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        let outcome = self.post_json("/tangle/blocks", &body).await?;
        expect_ok(&outcome)?;
        outcome.body["block_id"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("anchor response lacks block_id".into()))
    }

    /// Requests an identity credential for this source, presenting the
    /// onboarding document's fingerprint.
    pub async fn fetch_identity_credential(
        &mut self,
        onboarding_document: &[u8],
    ) -> Result<(), ClientError> {
        let fingerprint = blake2b_256(onboarding_document).to_hex();
        let outcome = self
            .post_json(
                "/issuer/credentials",
                &json!({
                    "did": self.identity.did.to_string(),
                    "document_fingerprint": fingerprint,
                }),
            )
            .await?;
        expect_ok(&outcome)?;
        let vc = outcome.body["vc_jwt"]
            .as_str()
            .ok_or_else(|| ClientError::Protocol("issuer response lacks vc_jwt".into()))?;
        self.identity_vc = Some(JwtCompact::from_string(vc.to_string()));
        Ok(())
    }

    /// Anchors the identity and obtains the identity credential.
    pub async fn register(&mut self, onboarding_document: &[u8]) -> Result<(), ClientError> {
        self.anchor_identity().await?;
        self.fetch_identity_credential(onboarding_document).await
    }

    pub async fn request_challenge(&self) -> Result<(Vec<u8>, i64), ClientError> {
        let outcome = self.post_json("/layer1/challenges", &json!({})).await?;
        expect_ok(&outcome)?;
        let nonce = outcome.body["nonce_b64url"]
            .as_str()
            .and_then(|s| base64url_decode(s).ok())
            .ok_or_else(|| ClientError::Protocol("challenge response lacks nonce".into()))?;
        let expires_at = outcome.body["expires_at"].as_i64().unwrap_or_default();
        Ok((nonce, expires_at))
    }

    /// Builds a presentation over the held identity credential.
    pub fn build_vp(&self, nonce: &[u8], expiry_ms: i64) -> Result<JwtCompact, ClientError> {
        let identity_vc = self
            .identity_vc
            .clone()
            .ok_or_else(|| ClientError::Protocol("no identity credential held; register first".into()))?;
        Ok(generate_vp(
            &self.identity.did,
            &self.identity.key,
            &self.identity.fragment,
            vec![identity_vc],
            nonce,
            expiry_ms,
            now_ms(),
        )?)
    }

    /// Sends an already-built presentation. Used directly by invalid
    /// traffic generators; normal flows go through `establish_session`.
    pub async fn send_vp(
        &self,
        vp: &JwtCompact,
        ttl_ms: Option<i64>,
    ) -> Result<HttpOutcome, ClientError> {
        let mut body = json!({ "vp_jwt": vp.as_str() });
        if let Some(ttl) = ttl_ms {
            body["ttl_ms"] = json!(ttl);
        }
        self.post_json("/layer1/sessions", &body).await
    }

    /// Runs the full handshake and stores the resulting session.
    /// Returns the server-side presentation-verification microseconds.
    pub async fn establish_session(&mut self, ttl_ms: Option<i64>) -> Result<u64, ClientError> {
        let (nonce, _) = self.request_challenge().await?;
        let vp = self.build_vp(&nonce, self.vp_ttl_ms)?;
        let outcome = self.send_vp(&vp, ttl_ms).await?;
        expect_ok(&outcome)?;
        let token = outcome.body["session_token"]
            .as_str()
            .ok_or_else(|| ClientError::Protocol("session response lacks token".into()))?;
        self.session = Some(SessionHandle {
            token: token.to_string(),
            expires_at: outcome.body["expires_at"].as_i64().unwrap_or_default(),
        });
        Ok(outcome.layer_us.first().copied().unwrap_or_default())
    }

    pub fn build_data_vc(&self, record: &TransactionRecord) -> Result<JwtCompact, ClientError> {
        Ok(generate_vc(
            &self.identity.did,
            &self.identity.key,
            &self.identity.fragment,
            record.to_value(),
            Some("TransactionDataCredential"),
        )?)
    }

    /// Sends a data credential under an explicit session token. Used by
    /// invalid traffic generators and by `submit_record`.
    pub async fn send_data_vc(
        &self,
        session_token: &str,
        vc_jwt: &str,
    ) -> Result<HttpOutcome, ClientError> {
        let started = Instant::now();
        let response = self
            .http
            .post(self.url("/data"))
            .header("authorization", format!("Bearer {session_token}"))
            .json(&json!({ "vc_jwt": vc_jwt }))
            .send()
            .await?;
        outcome_from(response, started).await
    }

    /// Submits one record end to end under the configured verification
    /// mode. Refusals come back as outcomes, not errors; only transport
    /// and handshake failures error out.
    pub async fn submit_record(
        &mut self,
        record: &TransactionRecord,
    ) -> Result<SubmitOutcome, ClientError> {
        let started = Instant::now();
        let needs_handshake = match self.mode {
            VerifyMode::PerRequest => true,
            VerifyMode::SessionReuse => match &self.session {
                Some(s) => now_ms() >= s.expires_at,
                None => true,
            },
        };
        let mut handshake_us = 0u64;
        if needs_handshake {
            handshake_us = self.establish_session(None).await?;
        }
        let token = self
            .session
            .clone()
            .expect("session present after handshake")
            .token;
        let vc = self.build_data_vc(record)?;
        let outcome = self.send_data_vc(&token, vc.as_str()).await?;

        let mut layer_us = [0u64; 3];
        for (slot, value) in layer_us.iter_mut().zip(outcome.layer_us.iter()) {
            *slot = *value;
        }
        layer_us[0] += handshake_us;
        Ok(SubmitOutcome {
            status: outcome.status,
            error_code: outcome.error_code,
            record_id: outcome.body["record_id"].as_str().map(str::to_string),
            block_id: outcome.body["block_id"].as_str().map(str::to_string),
            latency: started.elapsed(),
            layer_us,
            handshake: needs_handshake,
        })
    }

    pub async fn query_record(&self, record_id: &str) -> Result<HttpOutcome, ClientError> {
        let started = Instant::now();
        let response = self
            .http
            .get(self.url(&format!("/data/{record_id}")))
            .send()
            .await?;
        outcome_from(response, started).await
    }

    pub async fn stats(&self) -> Result<Value, ClientError> {
        let started = Instant::now();
        let response = self.http.get(self.url("/stats")).send().await?;
        let outcome = outcome_from(response, started).await?;
        expect_ok(&outcome)?;
        Ok(outcome.body)
    }

    /// Drops the held session so the next submission re-handshakes.
    pub fn clear_session(&mut self) {
        self.session = None;
    }

    /// Installs a session token directly; invalid traffic generators
    /// use this to replay expired sessions.
    pub fn set_session(&mut self, session: SessionHandle) {
        self.session = Some(session);
    }
}
