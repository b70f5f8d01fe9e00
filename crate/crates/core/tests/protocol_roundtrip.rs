//! Full protocol walk-through at the library level: a source registers
//! an identity, an issuer vouches for it, the trust layer runs its
//! three layers over a submission, and a reader gets a verified record
//! back. Also property tests over token round trips.

use proptest::prelude::*;
use serde_json::json;
use trustlayer_core::credentials::{
    generate_vc, generate_vp, validate_vc, validate_vp, InvalidReason, JwtCompact, NONCE_LEN,
};
use trustlayer_core::crypto::base64url_decode;
use trustlayer_core::ledger::Ledger;
use trustlayer_core::pipeline::{
    query_verified, SourceIdentity, TrustConfig, TrustLayer,
};
use trustlayer_core::schema::{RecordSchema, TransactionRecord};
use trustlayer_core::storage::{MemoryStore, RecordStore};

fn transaction(suffix: u32) -> TransactionRecord {
    TransactionRecord {
        timestamp: "2023-09-01T08:00:00Z".into(),
        from_bank: format!("bank-{:03}", suffix % 500),
        from_account: format!("acct-{:09}", 100_000_000 + suffix),
        to_bank: format!("bank-{:03}", (suffix + 7) % 500),
        to_account: format!("acct-{:09}", 200_000_000 + suffix),
        amount_received: format!("{}.{:02}", 1000 + suffix, suffix % 100),
        receiving_currency: "USD".into(),
        amount_paid: format!("{}.{:02}", 1000 + suffix, suffix % 100),
        payment_currency: "USD".into(),
        payment_format: "wire".into(),
    }
}

#[test]
fn registration_to_verified_query() {
    let ledger = Ledger::in_memory();
    let store = MemoryStore::new();
    let schema = RecordSchema::transaction_default();

    // Issuer and source both anchor their identities.
    let issuer = SourceIdentity::generate("tst", Some(&[71; 32])).unwrap();
    issuer.anchor(&ledger).unwrap();
    let source = SourceIdentity::generate("tst", Some(&[72; 32])).unwrap();
    source.anchor(&ledger).unwrap();

    let trust = TrustLayer::bootstrap(
        "tst",
        TrustConfig {
            trusted_issuers: [issuer.did.clone()].into(),
            ..TrustConfig::default()
        },
        &ledger,
    )
    .unwrap();

    // Registration: the issuer hands the source an identity credential.
    let identity_vc = generate_vc(
        &issuer.did,
        &issuer.key,
        &issuer.fragment,
        json!({"id": source.did.to_string(), "document_fingerprint": "ab".repeat(32)}),
        Some("IdentityCredential"),
    )
    .unwrap();

    // Source verification: challenge, presentation, session.
    let now = 50_000;
    let challenge = trust.issue_challenge(now);
    let vp = generate_vp(
        &source.did,
        &source.key,
        &source.fragment,
        vec![identity_vc.clone()],
        &challenge.nonce,
        120_000,
        now,
    )
    .unwrap();
    let session = trust
        .verify_presentation(&vp, &ledger, None, now + 10)
        .unwrap();
    let subject = trust.check_session(session.encoded(), now + 20).unwrap();
    assert_eq!(subject, source.did);

    // Data authentication and storage for a batch of records.
    let mut receipts = Vec::new();
    for i in 0..20 {
        let record = transaction(i);
        let vc = generate_vc(
            &source.did,
            &source.key,
            &source.fragment,
            record.to_value(),
            Some("TransactionDataCredential"),
        )
        .unwrap();
        let (validated, _) = trust
            .validate_data_credential(&vc, &subject, &ledger, &schema)
            .unwrap();
        assert_eq!(validated, record);
        receipts.push((
            record,
            trust
                .store_record(&validated, &subject, &ledger, &store, now + 30 + i as i64)
                .unwrap(),
        ));
    }

    // Retrieval: every record verifies against its anchor.
    for (record, receipt) in &receipts {
        let result = query_verified(&receipt.record_id, &ledger, &store).unwrap();
        assert!(result.verified);
        assert_eq!(result.record, record.to_value());
        assert_eq!(result.source_did, source.did);
    }

    // The ledger holds the three identity anchors plus the data blocks,
    // and stays structurally sound.
    let stats = ledger.stats();
    assert_eq!(stats.alias_blocks, 3);
    assert_eq!(stats.data_blocks, 20);
    assert!(ledger.check_invariants().is_empty());
    assert_eq!(store.len(), 20);
}

#[test]
fn session_reuse_skips_the_handshake_but_not_data_checks() {
    let ledger = Ledger::in_memory();
    let store = MemoryStore::new();
    let schema = RecordSchema::transaction_default();
    let issuer = SourceIdentity::generate("tst", Some(&[73; 32])).unwrap();
    issuer.anchor(&ledger).unwrap();
    let source = SourceIdentity::generate("tst", Some(&[74; 32])).unwrap();
    source.anchor(&ledger).unwrap();
    let trust = TrustLayer::bootstrap(
        "tst",
        TrustConfig {
            trusted_issuers: [issuer.did.clone()].into(),
            ..TrustConfig::default()
        },
        &ledger,
    )
    .unwrap();

    let identity_vc = generate_vc(
        &issuer.did,
        &issuer.key,
        &issuer.fragment,
        json!({"id": source.did.to_string()}),
        Some("IdentityCredential"),
    )
    .unwrap();
    let now = 1_000;
    let challenge = trust.issue_challenge(now);
    let vp = generate_vp(
        &source.did,
        &source.key,
        &source.fragment,
        vec![identity_vc],
        &challenge.nonce,
        120_000,
        now,
    )
    .unwrap();
    let session = trust.verify_presentation(&vp, &ledger, None, now).unwrap();

    // One session carries many submissions; each still passes layer 2
    // individually, and a tampered one still fails.
    for i in 0..5 {
        let record = transaction(100 + i);
        let subject = trust.check_session(session.encoded(), now + i as i64).unwrap();
        let vc = generate_vc(
            &source.did,
            &source.key,
            &source.fragment,
            record.to_value(),
            None,
        )
        .unwrap();
        let (validated, _) = trust
            .validate_data_credential(&vc, &subject, &ledger, &schema)
            .unwrap();
        trust
            .store_record(&validated, &subject, &ledger, &store, now)
            .unwrap();
    }
    assert_eq!(store.len(), 5);

    let bad = generate_vc(
        &source.did,
        &source.key,
        &source.fragment,
        json!({"timestamp": "2023-09-01T08:00:00Z"}),
        None,
    )
    .unwrap();
    assert!(trust
        .validate_data_credential(&bad, &source.did, &ledger, &schema)
        .is_err());
}

#[test]
fn key_rotation_invalidates_old_signatures_for_new_tokens() {
    let ledger = Ledger::in_memory();
    let source = SourceIdentity::generate("tst", Some(&[75; 32])).unwrap();
    source.anchor(&ledger).unwrap();

    let vc = generate_vc(
        &source.did,
        &source.key,
        &source.fragment,
        json!({"id": source.did.to_string()}),
        None,
    )
    .unwrap();
    let resolver = trustlayer_core::pipeline::LedgerKeyResolver { ledger: &ledger };
    assert!(validate_vc(&vc, &resolver).is_ok());

    // Rotate: anchor a new document carrying only a new key under the
    // same fragment, signed by the old key.
    let replacement = SourceIdentity::generate("tst", Some(&[76; 32])).unwrap();
    let rotated = trustlayer_core::identity::DidDocument {
        id: source.did.clone(),
        verification_methods: vec![trustlayer_core::identity::VerificationMethod {
            fragment: source.fragment.clone(),
            public_key: replacement.public,
        }],
        assertion_methods: vec![source.fragment.clone()],
    };
    trustlayer_core::identity::anchor_did(&rotated, &ledger, &source.key).unwrap();

    // Tokens signed by the retired key now fail against the ledger.
    assert_eq!(validate_vc(&vc, &resolver), Err(InvalidReason::BadSignature));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Credential round trip: whatever subject map goes in comes back
    /// intact after sign + validate.
    #[test]
    fn vc_round_trips_arbitrary_subjects(
        entries in proptest::collection::btree_map("[a-z_]{1,12}", "[ -~]{0,24}", 0..8),
        seed in 1u8..=255,
    ) {
        let (key, public) = trustlayer_core::crypto::generate_keypair(Some(&[seed; 32])).unwrap();
        let did = trustlayer_core::identity::Did::from_public_key("tst", &public).unwrap();
        let subject = serde_json::to_value(&entries).unwrap();
        let kid = did.kid("key-1");
        let resolver = move |candidate: &str| {
            (candidate == kid).then_some(public)
        };
        let token = generate_vc(&did, &key, "key-1", subject.clone(), None).unwrap();
        let vc = validate_vc(&token, &resolver).unwrap();
        prop_assert_eq!(vc.credential_subject, subject);
        prop_assert_eq!(vc.issuer, did);
    }

    /// Presentation expiry is exact: valid strictly before, invalid at
    /// and after the expiration instant.
    #[test]
    fn vp_expiry_boundary(ttl in 1i64..1_000_000, offset in 0i64..2_000_000) {
        let (key, public) = trustlayer_core::crypto::generate_keypair(Some(&[77; 32])).unwrap();
        let did = trustlayer_core::identity::Did::from_public_key("tst", &public).unwrap();
        let kid = did.kid("key-1");
        let resolver = move |candidate: &str| (candidate == kid).then_some(public);
        let nonce = [0x5Au8; NONCE_LEN];
        let issued = 1_000_000;
        let token = generate_vp(&did, &key, "key-1", vec![], &nonce, ttl, issued).unwrap();
        let outcome = validate_vp(&token, &nonce, &resolver, issued + offset);
        if offset < ttl {
            prop_assert!(outcome.is_ok());
        } else {
            prop_assert_eq!(outcome, Err(InvalidReason::Expired));
        }
    }

    /// Any single corrupted byte in any of the three segments makes a
    /// presentation invalid; it never validates to different claims.
    #[test]
    fn corrupted_vp_never_validates(pos_seed in 0usize..10_000, bit in 0u8..8) {
        let (key, public) = trustlayer_core::crypto::generate_keypair(Some(&[78; 32])).unwrap();
        let did = trustlayer_core::identity::Did::from_public_key("tst", &public).unwrap();
        let kid = did.kid("key-1");
        let resolver = move |candidate: &str| (candidate == kid).then_some(public);
        let nonce = [0x11u8; NONCE_LEN];
        let token = generate_vp(&did, &key, "key-1", vec![], &nonce, 60_000, 0).unwrap();

        let (h, p, s) = token.segments().unwrap();
        let (h, p, s) = (h.to_string(), p.to_string(), s.to_string());
        // Corrupt one byte of one decoded segment and re-encode, so the
        // result is still structurally a token.
        let segment = pos_seed % 3;
        let rebuilt = {
            let target = [&h, &p, &s][segment];
            let mut raw = base64url_decode(target).unwrap();
            let idx = (pos_seed / 3) % raw.len();
            raw[idx] ^= 1 << bit;
            let enc = trustlayer_core::crypto::base64url_encode(&raw);
            match segment {
                0 => format!("{enc}.{p}.{s}"),
                1 => format!("{h}.{enc}.{s}"),
                _ => format!("{h}.{p}.{enc}"),
            }
        };
        prop_assert!(validate_vp(
            &JwtCompact::from_string(rebuilt),
            &nonce,
            &resolver,
            1,
        ).is_err());
    }
}
