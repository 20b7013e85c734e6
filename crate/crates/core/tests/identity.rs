use pdns_core::identity::{
    keypair_from_secret, verify_certificate, verify_signature, Certificate, CertificateAuthority,
    Identity, Msp, Policy, PolicyKind, Role, Signature,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn unhex<const N: usize>(s: &str) -> [u8; N] {
    hex::decode(s).unwrap().try_into().unwrap()
}

/// RFC 8032 section 7.1, TEST 1 and TEST 2.
#[test]
fn ed25519_reference_vectors() {
    let vectors = [
        (
            "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
            "",
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        ),
        (
            "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
            "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
            "72",
            "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
        ),
    ];
    for (secret, public, msg, sig) in vectors {
        let (secret, pk) = keypair_from_secret(unhex(secret));
        assert_eq!(hex::encode(pk.0), public);

        let mut ca = CertificateAuthority::from_secret([9; 32]);
        let cert = ca.issue("vector", "Org1", Role::Client, pk).unwrap();
        let id = Identity::new(cert.clone(), secret).unwrap();
        let msg = hex::decode(msg).unwrap();
        let signature = id.sign(&msg);
        assert_eq!(hex::encode(signature.0), sig);
        assert!(verify_signature(&cert, &msg, &signature));
        assert!(!verify_signature(&cert, b"different payload", &signature));
    }
}

fn fixture_cert() -> (Certificate, CertificateAuthority) {
    let mut ca = CertificateAuthority::from_secret([3; 32]);
    let (_, pk) = keypair_from_secret([4; 32]);
    let cert = ca.issue("p0", "O1", Role::Peer, pk).unwrap();
    (cert, ca)
}

#[test]
fn every_single_bit_flip_of_signed_payload_is_rejected() {
    let (cert, ca) = fixture_cert();
    assert!(verify_certificate(&cert, &ca.public_key()));
    let bytes = cert.to_bytes();
    let payload_len = cert.signed_payload().len();
    let mut flips = 0;
    for byte in 0..payload_len {
        for bit in 0..8 {
            let mut mutated = bytes.clone();
            mutated[byte] ^= 1 << bit;
            // a flip may break the framing, which is also a rejection
            if let Some(c) = Certificate::from_bytes(&mutated) {
                assert!(
                    !verify_certificate(&c, &ca.public_key()),
                    "flip at byte {byte} bit {bit} verified"
                );
            }
            flips += 1;
        }
    }
    assert_eq!(flips, payload_len * 8);
}

#[test]
fn signature_bit_flips_are_rejected() {
    let (cert, ca) = fixture_cert();
    for byte in 0..64 {
        let mut c = cert.clone();
        c.ca_signature.0[byte] ^= 0x01;
        assert!(!verify_certificate(&c, &ca.public_key()));
    }
}

/// All 16 subsets of the four topology peers' signatures under the default
/// endorsement policy, against a brute-force expectation.
#[test]
fn endorsement_policy_truth_table() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut ca = CertificateAuthority::generate(&mut rng);
    let msp = Msp::new(ca.public_key(), ["Org1", "Org2"]);
    let peers: Vec<Identity> = ["Org1", "Org2"]
        .iter()
        .flat_map(|org| ["peer0", "peer1"].map(|p| (p, *org)))
        .map(|(p, org)| ca.enroll(p, org, Role::Peer, &mut rng).unwrap())
        .collect();
    let policy = Policy::any_peer_endorsement();
    let payload = b"proposal";
    for mask in 0u32..16 {
        let sigs: Vec<_> = (0..4)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| peers[i].endorse(payload))
            .collect();
        let expected = mask.count_ones() >= 1;
        assert_eq!(msp.evaluate_policy(&policy, &sigs, payload), expected, "mask {mask:04b}");
    }
}

#[test]
fn invalid_certificate_contributes_nothing() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut ca = CertificateAuthority::generate(&mut rng);
    let mut rogue_ca = CertificateAuthority::generate(&mut rng);
    let msp = Msp::new(ca.public_key(), ["Org1", "Org2"]);
    let forged = rogue_ca.enroll("peer0", "Org1", Role::Peer, &mut rng).unwrap();
    let policy = Policy::any_peer_endorsement();
    assert!(!msp.evaluate_policy(&policy, &[], b"p"));
    assert!(!msp.evaluate_policy(&policy, &[forged.endorse(b"p")], b"p"));
    // a client-role signature does not satisfy a peer-only policy
    let client = ca.enroll("c", "Org1", Role::Client, &mut rng).unwrap();
    assert!(!msp.evaluate_policy(&policy, &[client.endorse(b"p")], b"p"));
    // an org outside the consortium is rejected even with a genuine CA signature
    let outsider = ca.enroll("peer0", "Org3", Role::Peer, &mut rng).unwrap();
    assert!(!msp.evaluate_policy(&policy, &[outsider.endorse(b"p")], b"p"));
}

struct Pool {
    msp: Msp,
    valid: Vec<Identity>,
    forged: Vec<Identity>,
}

fn pool() -> Pool {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut ca = CertificateAuthority::generate(&mut rng);
    let mut rogue = CertificateAuthority::generate(&mut rng);
    let roles = [Role::Peer, Role::Client, Role::Admin];
    let mut valid = Vec::new();
    let mut forged = Vec::new();
    for (i, org) in ["Org1", "Org2"].iter().enumerate() {
        for (j, role) in roles.iter().enumerate() {
            let name = format!("n{i}{j}");
            valid.push(ca.enroll(&name, org, *role, &mut rng).unwrap());
            forged.push(rogue.enroll(&name, org, *role, &mut rng).unwrap());
        }
    }
    Pool {
        msp: Msp::new(ca.public_key(), ["Org1", "Org2"]),
        valid,
        forged,
    }
}

fn policies() -> Vec<Policy> {
    vec![
        Policy::any_peer_endorsement(),
        Policy::member_of(PolicyKind::Read, ["Org1"]),
        Policy::any_member(PolicyKind::Read),
    ]
}

proptest! {
    #[test]
    fn forged_signatures_never_satisfy(picks in prop::collection::vec((0usize..6, any::<bool>()), 0..8), p in 0usize..3) {
        let pool = pool();
        let policy = &policies()[p];
        let payload = b"payload";
        let sigs: Vec<(Certificate, Signature)> = picks
            .iter()
            .map(|&(i, wrong_payload)| {
                if wrong_payload {
                    pool.valid[i].endorse(b"something else")
                } else {
                    pool.forged[i].endorse(payload)
                }
            })
            .collect();
        prop_assert!(!pool.msp.evaluate_policy(policy, &sigs, payload));
    }

    #[test]
    fn adding_a_signature_is_monotone(base in prop::collection::vec(0usize..12, 0..5), extra in 0usize..12, p in 0usize..3) {
        let pool = pool();
        let policy = &policies()[p];
        let payload = b"payload";
        let pick = |i: usize| if i < 6 { pool.valid[i].endorse(payload) } else { pool.forged[i - 6].endorse(payload) };
        let mut sigs: Vec<_> = base.iter().map(|&i| pick(i)).collect();
        let before = pool.msp.evaluate_policy(policy, &sigs, payload);
        sigs.push(pick(extra));
        let after = pool.msp.evaluate_policy(policy, &sigs, payload);
        prop_assert!(!before || after);
    }
}
