mod common;

use std::collections::BTreeSet;

use common::net::{build, default_net, observation, outsider, Net};
use common::{contains, sentinel_client, sentinel_resolver};
use pdns_core::collector::{PublicRecord, RecordId};
use pdns_core::identity::{CertificateAuthority, Role};
use pdns_core::ledger::{Selector, TxValidity};
use pdns_core::network::NetworkConfig;
use pdns_core::txflow::{Gateway, TxError, TxStatus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn committed_height(status: &TxStatus) -> u64 {
    match status {
        TxStatus::Committed { block_height } => *block_height,
        other => panic!("expected commit, got {other:?}"),
    }
}

fn store(net: &mut Net, i: u32, domain: &str) -> (RecordId, u64) {
    let caller = net.org1();
    let rec = observation(i, domain);
    let res = net.gw.store_record(&caller, &rec).unwrap();
    (rec.record_id, committed_height(&res.status))
}

fn heights(net: &Net) -> Vec<Option<u64>> {
    net.gw.network().peers().map(|p| p.ledger().height()).collect()
}

#[test]
fn init_puts_every_peer_at_genesis() {
    let net = default_net();
    assert_eq!(heights(&net), vec![Some(0); 4]);
    assert_eq!(net.gw.height(), 0);
}

#[test]
fn second_init_is_rejected() {
    let mut net = default_net();
    assert!(matches!(net.gw.init_chain(), Err(TxError::InvalidConfig(_))));
    assert_eq!(heights(&net), vec![Some(0); 4]);
}

#[test]
fn collection_without_members_is_invalid() {
    let mut config = NetworkConfig::default();
    config.collections[0].member_orgs = BTreeSet::new();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut ca = CertificateAuthority::generate(&mut rng);
    let ids = pdns_core::network::enroll_topology(&config, &mut ca, &mut rng).unwrap();
    let err = Gateway::new(config, ca.public_key(), &ids).err().unwrap();
    assert!(matches!(err, TxError::InvalidConfig(_)), "{err:?}");
}

#[test]
fn org1_store_lands_public_everywhere_private_on_org1_only() {
    let mut net = default_net();
    let rec = observation(7, "example.com");
    let res = net.gw.store_record(&net.org1(), &rec).unwrap();
    let h = committed_height(&res.status);
    assert_eq!(h, 1);
    let (public, private) = rec.split();
    for peer in net.gw.network().peers() {
        let ledger = peer.ledger();
        assert_eq!(ledger.height(), Some(1));
        assert_eq!(ledger.world_state().get(&rec.record_id).unwrap().value, public);
        assert!(ledger.private_digest("pdnsPrivate", &rec.record_id).is_some());
        let held = ledger.get_private("pdnsPrivate", &rec.record_id);
        if peer.org() == "Org1" {
            assert_eq!(held, Some(&private));
        } else {
            assert_eq!(held, None);
        }
    }
    let loc = net.gw.network().peers().next().unwrap().ledger().tx_location(&res.tx_id).unwrap();
    assert_eq!(loc.height, 1);
    assert_eq!(loc.validity, TxValidity::Valid);
}

#[test]
fn forged_certificate_is_a_policy_violation() {
    let mut net = default_net();
    let mut rng = ChaCha20Rng::seed_from_u64(66);
    let mut rogue = CertificateAuthority::generate(&mut rng);
    let forged = rogue.enroll("client", "Org1", Role::Client, &mut rng).unwrap();
    let err = net.gw.store_record(&forged, &observation(1, "example.com")).unwrap_err();
    assert!(matches!(err, TxError::PolicyViolation(_)), "{err:?}");
    assert_eq!(heights(&net), vec![Some(0); 4]);
}

#[test]
fn invalid_record_produces_no_block() {
    let mut net = default_net();
    let mut rec = observation(1, "example.com");
    rec.domain = String::new();
    let err = net.gw.store_record(&net.org1(), &rec).unwrap_err();
    assert!(matches!(err, TxError::InvalidRecord(_)), "{err:?}");
    let mut rec = observation(2, "example.com");
    rec.chain_id = "other".into();
    assert!(matches!(
        net.gw.store_record(&net.org1(), &rec),
        Err(TxError::InvalidRecord(_))
    ));
    assert_eq!(heights(&net), vec![Some(0); 4]);
}

#[test]
fn non_member_writer_cannot_fill_the_collection() {
    let mut net = default_net();
    let err = net.gw.store_record(&net.org2(), &observation(3, "example.com")).unwrap_err();
    assert!(matches!(err, TxError::PolicyViolation(_)), "{err:?}");
    let stranger = outsider(&mut net);
    let err = net.gw.store_record(&stranger, &observation(4, "example.com")).unwrap_err();
    assert!(matches!(err, TxError::PolicyViolation(_)), "{err:?}");
    assert_eq!(heights(&net), vec![Some(0); 4]);
}

#[test]
fn private_query_follows_collection_membership() {
    let mut net = default_net();
    let (id, _) = store(&mut net, 9, "example.com");
    let private = net.gw.query_private(&net.org1(), &id).unwrap();
    assert_eq!(private.client_ip, sentinel_client(9));
    assert_eq!(private.resolver_ip, sentinel_resolver());
    let org1_peer = net.id("peer0@Org1").clone();
    assert_eq!(net.gw.query_private(&org1_peer, &id).unwrap(), private);

    for who in ["client@Org2", "peer0@Org2", "peer1@Org2"] {
        let caller = net.id(who).clone();
        assert_eq!(net.gw.query_private(&caller, &id), Err(TxError::AccessDenied), "{who}");
    }
    let stranger = outsider(&mut net);
    assert_eq!(net.gw.query_private(&stranger, &id), Err(TxError::AccessDenied));
    assert_eq!(
        net.gw.query_private(&net.org1(), &RecordId([0xab; 16])),
        Err(TxError::NotFound)
    );
}

#[test]
fn expired_private_data_reports_purged() {
    let mut config = NetworkConfig::default();
    config.collections[0].block_to_live = 2;
    let mut net = build(config);
    let (id, h) = store(&mut net, 1, "old.example");
    assert_eq!(h, 1);
    assert!(net.gw.query_private(&net.org1(), &id).is_ok());
    store(&mut net, 2, "a.example");
    assert!(net.gw.query_private(&net.org1(), &id).is_ok());
    store(&mut net, 3, "b.example");
    assert_eq!(net.gw.query_private(&net.org1(), &id), Err(TxError::Purged));
    // the public side is untouched by the purge
    let public = net.gw.query_public(&net.org1(), &Selector::record_id(id)).unwrap();
    assert_eq!(public.len(), 1);
}

#[test]
fn public_query_matches_a_linear_scan_and_carries_no_personal_fields() {
    let mut net = default_net();
    let domains = ["example.com", "example.org", "example.com", "test.example", "example.com"];
    let records: Vec<_> = domains
        .iter()
        .enumerate()
        .map(|(i, d)| observation(i as u32 + 20, d))
        .collect();
    for r in net.gw.store_batch(&net.org1(), &records) {
        assert!(r.unwrap().is_committed());
    }
    for caller in [net.org1(), net.org2(), net.id("peer1@Org2").clone()] {
        let got = net.gw.query_public_json(&caller, r#"{"domain": "example.com"}"#).unwrap();
        let mut expected: Vec<PublicRecord> = records
            .iter()
            .filter(|r| r.domain == "example.com")
            .map(|r| r.split().0)
            .collect();
        expected.sort_by_key(|r| r.record_id);
        let mut got_sorted = got.clone();
        got_sorted.sort_by_key(|r| r.record_id);
        assert_eq!(got_sorted, expected);

        let body = serde_json::to_string(&got).unwrap();
        assert!(!body.contains("client_ip") && !body.contains("resolver_ip"));
        for r in &records {
            assert!(!contains(body.as_bytes(), r.client_ip.to_string().as_bytes()));
            assert!(!contains(body.as_bytes(), r.resolver_ip.to_string().as_bytes()));
        }
    }
}

#[test]
fn public_query_rejects_private_fields_and_outsiders() {
    let mut net = default_net();
    store(&mut net, 1, "example.com");
    assert!(matches!(
        net.gw.query_public_json(&net.org1(), r#"{"client_ip": "203.0.113.4"}"#),
        Err(TxError::Query(_))
    ));
    let stranger = outsider(&mut net);
    assert_eq!(
        net.gw.query_public(&stranger, &Selector::all()),
        Err(TxError::AccessDenied)
    );
}

#[test]
fn empty_ledger_answers_with_nothing() {
    let net = default_net();
    for selector in [Selector::all(), Selector::domain("example.com")] {
        assert!(net.gw.query_public(&net.org1(), &selector).unwrap().is_empty());
    }
}

#[test]
fn history_tracks_every_public_version() {
    let mut net = default_net();
    let mut rec = observation(5, "example.com");
    let first = net.gw.store_record(&net.org1(), &rec).unwrap();
    rec.visit_count += 1;
    rec.ts_seconds += 60;
    let second = net.gw.store_record(&net.org1(), &rec).unwrap();

    let history = net.gw.get_history(&net.org2(), &rec.record_id).unwrap();
    assert_eq!(history.len(), 2);
    assert_eq!(history[0].tx_id, first.tx_id);
    assert_eq!(history[1].tx_id, second.tx_id);
    assert_eq!(history[0].value.visit_count, 1);
    assert!(history[0].height < history[1].height);

    // replaying the versions in order must land on the current state
    let mut replayed = None;
    for entry in &history {
        replayed = Some(entry.value.clone());
    }
    let current = net.gw.query_public(&net.org1(), &Selector::record_id(rec.record_id)).unwrap();
    assert_eq!(current, vec![replayed.unwrap()]);
    assert_eq!(current[0], rec.split().0);

    assert_eq!(
        net.gw.get_history(&net.org1(), &RecordId([1; 16])),
        Err(TxError::NotFound)
    );
    let stranger = outsider(&mut net);
    assert_eq!(
        net.gw.get_history(&stranger, &rec.record_id),
        Err(TxError::AccessDenied)
    );
}

#[test]
fn tx_result_serializes_flat() {
    let mut net = default_net();
    let res = net.gw.store_record(&net.org1(), &observation(1, "example.com")).unwrap();
    let json: serde_json::Value = serde_json::to_value(&res).unwrap();
    assert_eq!(json["status"], "committed");
    assert_eq!(json["block_height"], 1);
    assert_eq!(json["tx_id"].as_str().unwrap().len(), 64);
}

#[test]
fn batch_results_line_up_with_inputs() {
    let mut net = default_net();
    let mut bad = observation(2, "example.com");
    bad.visit_count = 0;
    let batch = vec![observation(1, "a.example"), bad, observation(3, "c.example")];
    let out = net.gw.store_batch(&net.org1(), &batch);
    assert_eq!(out.len(), 3);
    assert!(out[0].as_ref().unwrap().is_committed());
    assert!(matches!(out[1], Err(TxError::InvalidRecord(_))));
    assert!(out[2].as_ref().unwrap().is_committed());
    assert_eq!(net.gw.query_public(&net.org2(), &Selector::all()).unwrap().len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    // observation keys repeat every 1000 ids
    fn committed_records_are_readable_by_id(ids in proptest::collection::btree_set(0u32..200, 1..12)) {
        let mut net = default_net();
        let records: Vec<_> = ids.iter().map(|&i| observation(i, "prop.example")).collect();
        let out = net.gw.store_batch(&net.org1(), &records);
        for (r, res) in records.iter().zip(out) {
            let res = res.unwrap();
            let h = committed_height(&res.status);
            prop_assert!(net.gw.height() >= h);
            let got = net.gw.query_public(&net.org2(), &Selector::record_id(r.record_id)).unwrap();
            prop_assert_eq!(got, vec![r.split().0]);
        }
    }
}
