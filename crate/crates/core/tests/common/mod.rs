//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::net::{IpAddr, Ipv4Addr};

use pdns_core::collector::{PrivateRecord, PublicRecord, RecordId};
use pdns_core::identity::{CertificateAuthority, Identity, Msp, Policy, PolicyKind, Role};
use pdns_core::ledger::{
    Block, ChainConfig, CollectionConfig, Endorsement, Ledger, PrivateDigest, PrivatePayload,
    Proposal, PublicWrite, Transaction,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const COLLECTION: &str = "pdnsPrivate";

pub struct Consortium {
    pub config: ChainConfig,
    pub peers: Vec<Identity>,
    pub org1_client: Identity,
    pub org2_client: Identity,
}

pub fn consortium(block_to_live: u64) -> Consortium {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut ca = CertificateAuthority::generate(&mut rng);
    let mut peers = Vec::new();
    for org in ["Org1", "Org2"] {
        for p in ["peer0", "peer1"] {
            peers.push(ca.enroll(p, org, Role::Peer, &mut rng).unwrap());
        }
    }
    let org1_client = ca.enroll("client", "Org1", Role::Client, &mut rng).unwrap();
    let org2_client = ca.enroll("client", "Org2", Role::Client, &mut rng).unwrap();
    let config = ChainConfig {
        msp: Msp::new(ca.public_key(), ["Org1", "Org2"]),
        endorsement: Policy::any_peer_endorsement(),
        writers: Policy::member_of(PolicyKind::Write, ["Org1", "Org2"]),
        readers: Policy::member_of(PolicyKind::Read, ["Org1", "Org2"]),
        collections: vec![CollectionConfig {
            name: COLLECTION.into(),
            member_orgs: ["Org1".to_string()].into(),
            block_to_live,
            read_policy: Policy::member_of(PolicyKind::Read, ["Org1"]),
            write_policy: Policy::member_of(PolicyKind::Write, ["Org1"]),
        }],
    };
    Consortium {
        config,
        peers,
        org1_client,
        org2_client,
    }
}

/// Sentinel client address for record `i`; unique text that never occurs
/// in any public field.
pub fn sentinel_client(i: u32) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(203, 0, 113, (i % 250 + 3) as u8))
}

pub fn sentinel_resolver() -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(198, 51, 100, 251))
}

pub fn record(id: u32, domain: &str, visits: u64) -> (PublicRecord, PrivateRecord) {
    let mut rid = [0u8; 16];
    rid[..4].copy_from_slice(&id.to_be_bytes());
    (
        PublicRecord {
            chain_id: "pdns".into(),
            record_id: RecordId(rid),
            domain: domain.into(),
            answer_ip: format!("192.0.2.{}", id % 200 + 1),
            ttl: 300,
            ts_seconds: 1_700_000_000 + u64::from(id),
            ts_millis: (id % 1000) as u16,
            visit_count: visits,
        },
        PrivateRecord {
            client_ip: sentinel_client(id),
            resolver_ip: sentinel_resolver(),
        },
    )
}

impl Consortium {
    /// A fully endorsed transaction writing `public` and committing to
    /// `private`, plus the payload that member peers should receive.
    pub fn tx(
        &self,
        creator: &Identity,
        public: PublicRecord,
        private: PrivateRecord,
        nonce: u64,
    ) -> (Transaction, PrivatePayload) {
        let payload = PrivatePayload {
            collection: COLLECTION.into(),
            key: public.record_id,
            value: private,
        };
        let proposal = Proposal::new(
            creator.certificate.clone(),
            nonce,
            nonce,
            vec![PublicWrite {
                key: public.record_id,
                value: public,
            }],
            vec![PrivateDigest {
                collection: COLLECTION.into(),
                key: payload.key,
                digest: payload.digest(),
            }],
        );
        let bytes = proposal.signing_bytes();
        let endorsements = [&self.peers[0], &self.peers[2]]
            .iter()
            .map(|p| Endorsement {
                endorser: p.certificate.clone(),
                signature: p.sign(&bytes),
            })
            .collect();
        (Transaction::assemble(creator, proposal, endorsements), payload)
    }
}

pub fn next_block(ledger: &Ledger, txs: Vec<Transaction>) -> Block {
    Block::new(ledger.blocks().len() as u64, ledger.tip_hash(), txs)
}

/// Naive substring search.
pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

pub mod net {
    use std::collections::BTreeMap;

    use pdns_core::collector::{PassiveDnsRecord, ObservationKey};
    use pdns_core::dnswire::RecordType;
    use pdns_core::identity::{CertificateAuthority, Identity, Role};
    use pdns_core::network::{enroll_topology, NetworkConfig, NodeId};
    use pdns_core::txflow::Gateway;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub struct Net {
        pub gw: Gateway,
        pub ids: BTreeMap<NodeId, Identity>,
        pub ca: CertificateAuthority,
    }

    impl Net {
        pub fn id(&self, label: &str) -> &Identity {
            &self.ids[&NodeId(label.into())]
        }

        pub fn org1(&self) -> Identity {
            self.id("client@Org1").clone()
        }

        pub fn org2(&self) -> Identity {
            self.id("client@Org2").clone()
        }
    }

    pub fn build(config: NetworkConfig) -> Net {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let mut ca = CertificateAuthority::generate(&mut rng);
        let ids = enroll_topology(&config, &mut ca, &mut rng).unwrap();
        let mut gw = Gateway::new(config, ca.public_key(), &ids).unwrap();
        gw.init_chain().unwrap();
        Net { gw, ids, ca }
    }

    pub fn default_net() -> Net {
        build(NetworkConfig::default())
    }

    /// An outsider issued by the same CA for an organization outside the
    /// consortium.
    pub fn outsider(net: &mut Net) -> Identity {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        net.ca.enroll("client", "Org3", Role::Client, &mut rng).unwrap()
    }

    /// Observation `i`: sentinel client address, `domain`, an A answer.
    pub fn observation(i: u32, domain: &str) -> PassiveDnsRecord {
        let client_ip = super::sentinel_client(i);
        let answer_ip = format!("192.0.2.{}", i % 200 + 1);
        let key = ObservationKey {
            client_ip,
            domain: domain.into(),
            rtype: RecordType::A,
            answer_ip: answer_ip.clone(),
        };
        PassiveDnsRecord {
            chain_id: "pdns".into(),
            record_id: key.record_id("pdns"),
            domain: domain.into(),
            answer_ip,
            ttl: 300,
            ts_seconds: 1_700_000_000 + u64::from(i),
            ts_millis: (i % 1000) as u16,
            visit_count: 1,
            client_ip,
            resolver_ip: super::sentinel_resolver(),
        }
    }
}
