//! Spins the HTTP service up on an ephemeral port and exercises every
//! endpoint, including each documented error path and its stable code.

use serde_json::{json, Value};
use trustlayer_core::credentials::generate_vc;
use trustlayer_core::crypto::{base64url_decode, base64url_encode, blake2b_256, sign};
use trustlayer_core::ledger::{AliasPayload, BlockPayload};
use trustlayer_core::schema::TransactionRecord;
use trustlayer_service::client::{SourceClient, VerifyMode};
use trustlayer_service::config::{AllowlistEntry, IssuerMode, ServiceConfig};
use trustlayer_service::{build_state, spawn};

const ONBOARDING_DOC: &[u8] = b"notarised onboarding dossier";

async fn start(config: ServiceConfig) -> String {
    let state = build_state(config).expect("state builds");
    let (addr, _handle) = spawn(state, "127.0.0.1:0").await.expect("bind");
    format!("http://{addr}")
}

async fn start_default() -> String {
    start(ServiceConfig::default()).await
}

fn sample_record(suffix: &str) -> TransactionRecord {
    TransactionRecord {
        timestamp: "2024-05-14T09:30:00Z".into(),
        from_bank: "070".into(),
        from_account: format!("80021100{suffix}"),
        to_bank: "212".into(),
        to_account: format!("80101200{suffix}"),
        amount_received: "1423.05".into(),
        receiving_currency: "EUR".into(),
        amount_paid: "1423.05".into(),
        payment_currency: "EUR".into(),
        payment_format: "SEPA".into(),
    }
}

async fn registered_client(base: &str, mode: VerifyMode) -> SourceClient {
    let mut client = SourceClient::new(base, "tst", mode).expect("client");
    client.register(ONBOARDING_DOC).await.expect("register");
    client
}

async fn raw_post(base: &str, path: &str, body: &Value) -> (u16, Value, reqwest::header::HeaderMap) {
    let response = reqwest::Client::new()
        .post(format!("{base}{path}"))
        .json(body)
        .send()
        .await
        .expect("request");
    let status = response.status().as_u16();
    let headers = response.headers().clone();
    let body: Value = response.json().await.unwrap_or(Value::Null);
    (status, body, headers)
}

async fn raw_get(base: &str, path: &str) -> (u16, Value) {
    let response = reqwest::Client::new()
        .get(format!("{base}{path}"))
        .send()
        .await
        .expect("request");
    let status = response.status().as_u16();
    let body: Value = response.json().await.unwrap_or(Value::Null);
    (status, body)
}

#[tokio::test]
async fn full_round_trip_with_session_reuse() {
    let base = start_default().await;
    let mut client = registered_client(&base, VerifyMode::SessionReuse).await;

    let first = client.submit_record(&sample_record("01")).await.expect("submit");
    assert_eq!(first.status, 201);
    assert!(first.handshake);
    assert!(first.record_id.is_some() && first.block_id.is_some());
    assert!(first.layer_us[0] > 0, "handshake cost folds into layer 1");

    let second = client.submit_record(&sample_record("02")).await.expect("submit");
    assert_eq!(second.status, 201);
    assert!(!second.handshake, "second submission reuses the session");

    let queried = client
        .query_record(first.record_id.as_deref().unwrap())
        .await
        .expect("query");
    assert_eq!(queried.status, 200);
    assert_eq!(queried.body["verified"], json!(true));
    assert_eq!(queried.body["source_did"], json!(client.did().to_string()));
    assert_eq!(queried.body["block_id"], json!(first.block_id.unwrap()));
    assert_eq!(
        queried.body["record"]["payment_format"],
        json!("SEPA"),
        "stored record round-trips"
    );

    let stats = client.stats().await.expect("stats");
    assert_eq!(stats["records"], json!(2));
    assert_eq!(stats["ledger"]["data_blocks"], json!(2));
    assert_eq!(stats["network_hrp"], json!("tst"));
}

#[tokio::test]
async fn per_request_mode_handshakes_every_time() {
    let base = start_default().await;
    let mut client = registered_client(&base, VerifyMode::PerRequest).await;
    for i in 0..3 {
        let outcome = client
            .submit_record(&sample_record(&format!("{i:02}")))
            .await
            .expect("submit");
        assert_eq!(outcome.status, 201);
        assert!(outcome.handshake, "every submission renegotiates");
    }
}

#[tokio::test]
async fn challenges_are_distinct_and_timed() {
    let base = start_default().await;
    let (a, expires_a) = SourceClient::new(&base, "tst", VerifyMode::PerRequest)
        .unwrap()
        .request_challenge()
        .await
        .expect("challenge");
    let (b, _) = SourceClient::new(&base, "tst", VerifyMode::PerRequest)
        .unwrap()
        .request_challenge()
        .await
        .expect("challenge");
    assert_eq!(a.len(), 16);
    assert_ne!(a, b);
    assert!(expires_a > trustlayer_core::now_ms());
}

#[tokio::test]
async fn issuer_refuses_bad_fingerprints() {
    let base = start_default().await;
    let client = SourceClient::new(&base, "tst", VerifyMode::PerRequest).unwrap();
    let (status, body, _) = raw_post(
        &base,
        "/issuer/credentials",
        &json!({ "did": client.did().to_string(), "document_fingerprint": "not-hex" }),
    )
    .await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], json!("malformed"));
}

#[tokio::test]
async fn issuer_allowlist_gates_on_did_fingerprint_pair() {
    let known = SourceClient::new("http://placeholder", "tst", VerifyMode::PerRequest).unwrap();
    let fingerprint = blake2b_256(ONBOARDING_DOC).to_hex();
    let mut config = ServiceConfig::default();
    config.issuer.mode = IssuerMode::Allowlist;
    config.issuer.allowlist = vec![AllowlistEntry {
        fingerprint: fingerprint.clone(),
        did: known.did().to_string(),
    }];
    let base = start(config).await;

    let (status, body, _) = raw_post(
        &base,
        "/issuer/credentials",
        &json!({ "did": known.did().to_string(), "document_fingerprint": fingerprint }),
    )
    .await;
    assert_eq!(status, 200);
    assert!(body["vc_jwt"].as_str().is_some());

    let stranger = SourceClient::new(&base, "tst", VerifyMode::PerRequest).unwrap();
    let (status, body, _) = raw_post(
        &base,
        "/issuer/credentials",
        &json!({ "did": stranger.did().to_string(), "document_fingerprint": fingerprint }),
    )
    .await;
    assert_eq!(status, 403);
    assert_eq!(body["error"], json!("refused"));
}

#[tokio::test]
async fn session_rejections_carry_specific_codes() {
    let base = start_default().await;

    let (status, body, headers) =
        raw_post(&base, "/layer1/sessions", &json!({ "vp_jwt": "garbage" })).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], json!("malformed"));
    assert!(headers.contains_key("x-request-id"));
    assert!(headers.contains_key("x-layer-us"));

    // A presentation over a nonce the service never issued.
    let client = registered_client(&base, VerifyMode::PerRequest).await;
    let vp = client.build_vp(&[7u8; 16], client.vp_ttl_ms).expect("vp");
    let outcome = client.send_vp(&vp, None).await.expect("send");
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("unknown-challenge"));

    // Replaying a successful presentation hits the consumed challenge.
    let (nonce, _) = client.request_challenge().await.unwrap();
    let vp = client.build_vp(&nonce, client.vp_ttl_ms).unwrap();
    let first = client.send_vp(&vp, None).await.unwrap();
    assert_eq!(first.status, 200);
    let replay = client.send_vp(&vp, None).await.unwrap();
    assert_eq!(replay.status, 401);
    assert_eq!(replay.error_code.as_deref(), Some("consumed-challenge"));

    // Signed over one nonce while quoting another live one.
    let (live, _) = client.request_challenge().await.unwrap();
    let vp = client.build_vp(&[9u8; 16], client.vp_ttl_ms).unwrap();
    let spliced = splice_nonce(vp.as_str(), &live);
    let outcome = client
        .send_vp(&trustlayer_core::credentials::JwtCompact::from_string(spliced), None)
        .await
        .unwrap();
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("invalid-presentation"));

    // An expired presentation over a live nonce.
    let (live, _) = client.request_challenge().await.unwrap();
    let vp = client.build_vp(&live, 0).unwrap();
    let outcome = client.send_vp(&vp, None).await.unwrap();
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("invalid-presentation"));

    // Holder that never anchored a document.
    let mut ghost = SourceClient::new(&base, "tst", VerifyMode::PerRequest).unwrap();
    ghost.fetch_identity_credential(ONBOARDING_DOC).await.expect("vc");
    let (nonce, _) = ghost.request_challenge().await.unwrap();
    let vp = ghost.build_vp(&nonce, ghost.vp_ttl_ms).unwrap();
    let outcome = ghost.send_vp(&vp, None).await.unwrap();
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("unanchored-holder"));

    // Anchored holder presenting only a self-issued credential.
    let rogue = SourceClient::new(&base, "tst", VerifyMode::PerRequest).unwrap();
    rogue.anchor_identity().await.expect("anchor");
    let self_vc = generate_vc(
        rogue.did(),
        &rogue.identity.key,
        &rogue.identity.fragment,
        json!({ "id": rogue.did().to_string() }),
        Some("IdentityCredential"),
    )
    .unwrap();
    let (nonce, _) = rogue.request_challenge().await.unwrap();
    let vp = trustlayer_core::credentials::generate_vp(
        rogue.did(),
        &rogue.identity.key,
        &rogue.identity.fragment,
        vec![self_vc],
        &nonce,
        rogue.vp_ttl_ms,
        trustlayer_core::now_ms(),
    )
    .unwrap();
    let outcome = rogue.send_vp(&vp, None).await.unwrap();
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("untrusted-issuer"));
}

/// Rewrites a presentation's payload to quote `nonce` while leaving the
/// signature bound to whatever it originally signed.
fn splice_nonce(vp: &str, nonce: &[u8]) -> String {
    let parts: Vec<&str> = vp.split('.').collect();
    let mut payload: Value =
        serde_json::from_slice(&base64url_decode(parts[1]).unwrap()).unwrap();
    payload["nonce"] = json!(base64url_encode(nonce));
    let canonical = trustlayer_core::canonical::canonical_json(&payload).unwrap();
    format!("{}.{}.{}", parts[0], base64url_encode(&canonical), parts[2])
}

#[tokio::test]
async fn session_ttl_override_is_clamped_and_expiry_enforced() {
    let base = start_default().await;
    let mut client = registered_client(&base, VerifyMode::SessionReuse).await;

    let before = trustlayer_core::now_ms();
    client.establish_session(Some(i64::MAX)).await.expect("session");
    let granted = client.session().unwrap().expires_at - before;
    assert!(
        granted <= trustlayer_core::pipeline::DEFAULT_SESSION_TTL_MS + 5_000,
        "ttl override cannot exceed the configured ceiling (got {granted})"
    );

    client.establish_session(Some(1)).await.expect("session");
    tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    let token = client.session().unwrap().token.clone();
    let vc = client.build_data_vc(&sample_record("09")).unwrap();
    let outcome = client.send_data_vc(&token, vc.as_str()).await.unwrap();
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("session-expired"));
    assert_eq!(outcome.layer_us, vec![0, 0, 0], "no layer ran to completion");
}

#[tokio::test]
async fn data_rejections_carry_specific_codes() {
    let base = start_default().await;
    let mut client = registered_client(&base, VerifyMode::SessionReuse).await;
    client.establish_session(None).await.expect("session");
    let token = client.session().unwrap().token.clone();

    let response = reqwest::Client::new()
        .post(format!("{base}/data"))
        .json(&json!({ "vc_jwt": "x.y.z" }))
        .send()
        .await
        .unwrap();
    assert_eq!(response.status().as_u16(), 401);
    let body: Value = response.json().await.unwrap();
    assert_eq!(body["error"], json!("session-invalid"));

    let vc = client.build_data_vc(&sample_record("11")).unwrap();
    let outcome = client.send_data_vc("bogus-token", vc.as_str()).await.unwrap();
    assert_eq!(outcome.status, 401);
    assert_eq!(outcome.error_code.as_deref(), Some("session-invalid"));

    // Bit-flip inside the payload segment breaks the signature.
    let tampered = tamper_segment(vc.as_str(), 1);
    let outcome = client.send_data_vc(&token, &tampered).await.unwrap();
    assert_eq!(outcome.status, 422);
    assert_eq!(outcome.error_code.as_deref(), Some("vc-invalid"));

    let mut bad = sample_record("12");
    bad.receiving_currency = "euros".into();
    let vc = client.build_data_vc(&bad).unwrap();
    let outcome = client.send_data_vc(&token, vc.as_str()).await.unwrap();
    assert_eq!(outcome.status, 422);
    assert_eq!(outcome.error_code.as_deref(), Some("schema-violation"));
    assert_eq!(outcome.body["field"], json!("receiving_currency"));

    // A record credential missing a required field entirely.
    let mut value = sample_record("13").to_value();
    value.as_object_mut().unwrap().remove("payment_format");
    let vc = generate_vc(
        client.did(),
        &client.identity.key,
        &client.identity.fragment,
        value,
        Some("TransactionDataCredential"),
    )
    .unwrap();
    let outcome = client.send_data_vc(&token, vc.as_str()).await.unwrap();
    assert_eq!(outcome.status, 422);
    assert_eq!(outcome.error_code.as_deref(), Some("schema-violation"));
    assert_eq!(outcome.body["field"], json!("payment_format"));

    // Credential signed by a different anchored identity than the session.
    let other = registered_client(&base, VerifyMode::PerRequest).await;
    let vc = other.build_data_vc(&sample_record("14")).unwrap();
    let outcome = client.send_data_vc(&token, vc.as_str()).await.unwrap();
    assert_eq!(outcome.status, 422);
    assert_eq!(outcome.error_code.as_deref(), Some("issuer-mismatch"));

    let (status, body) = raw_get(&base, "/data/no-such-record").await;
    assert_eq!(status, 404);
    assert_eq!(body["error"], json!("not-found"));
}

fn tamper_segment(jwt: &str, segment: usize) -> String {
    let mut parts: Vec<String> = jwt.split('.').map(str::to_string).collect();
    let mut bytes = base64url_decode(&parts[segment]).unwrap();
    bytes[0] ^= 0x01;
    parts[segment] = base64url_encode(&bytes);
    parts.join(".")
}

#[tokio::test]
async fn tangle_endpoints_expose_the_ledger() {
    let base = start_default().await;
    let client = SourceClient::new(&base, "tst", VerifyMode::PerRequest).unwrap();
    let block_id = client.anchor_identity().await.expect("anchor");

    let (status, body) = raw_get(&base, &format!("/tangle/blocks/{block_id}")).await;
    assert_eq!(status, 200);
    assert_eq!(body["blockId"], json!(block_id));
    assert_eq!(body["payload"]["kind"], json!("alias"));
    assert_eq!(
        body["payload"]["document"]["id"],
        json!(client.did().to_string())
    );

    let (status, body) = raw_get(&base, "/tangle/blocks/zzz").await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], json!("malformed"));

    let absent = "0".repeat(64);
    let (status, body) = raw_get(&base, &format!("/tangle/blocks/{absent}")).await;
    assert_eq!(status, 404);
    assert_eq!(body["error"], json!("not-found"));

    // Alias whose governor signature does not match the document key.
    let rogue = SourceClient::new(&base, "tst", VerifyMode::PerRequest).unwrap();
    let document = rogue.identity.document.clone();
    let payload = BlockPayload::Alias(AliasPayload {
        signer_kid: rogue.identity.kid(),
        signature: sign(&rogue.identity.key, b"the wrong bytes"),
        address: trustlayer_core::identity::governor_address("tst", &rogue.identity.public)
            .unwrap(),
        document,
    });
    let (status, body, _) = raw_post(
        &base,
        "/tangle/blocks",
        &serde_json::to_value(&payload).unwrap(),
    )
    .await;
    assert_eq!(status, 422);
    assert_eq!(body["error"], json!("ledger-rejected"));

    let (status, body, _) = raw_post(&base, "/tangle/blocks", &json!({ "kind": "mystery" })).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], json!("malformed"));
}

#[tokio::test]
async fn stats_and_request_ids_are_always_present() {
    let base = start_default().await;
    let (status, body, headers) = raw_post(&base, "/layer1/challenges", &json!({})).await;
    assert_eq!(status, 200);
    assert!(body["nonce_b64url"].as_str().is_some());
    assert!(headers.contains_key("x-request-id"));

    let (status, stats) = raw_get(&base, "/stats").await;
    assert_eq!(status, 200);
    let trust_did = stats["trust_did"].as_str().unwrap();
    let issuer_did = stats["issuer_did"].as_str().unwrap();
    assert!(trust_did.parse::<trustlayer_core::identity::Did>().is_ok());
    assert!(stats["trusted_issuers"]
        .as_array()
        .unwrap()
        .iter()
        .any(|d| d == issuer_did));
    assert_eq!(stats["ledger"]["alias_blocks"], json!(2), "issuer and trust layer anchor themselves");
    assert_eq!(stats["session_ttl_ms"], json!(trustlayer_core::pipeline::DEFAULT_SESSION_TTL_MS));
}
