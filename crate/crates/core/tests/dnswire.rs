use std::net::{Ipv4Addr, Ipv6Addr};

use pdns_core::dnswire::{
    decode_hex_fixture, encode_message, parse_message, DnsMessage, Flags, Name, Question, RData,
    RecordType, ResourceRecord, WireError, CLASS_IN,
};
use proptest::prelude::*;

fn fixture(name: &str) -> Vec<u8> {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    decode_hex_fixture(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Minimal byte assembler, independent of the crate's encoder.
struct Asm(Vec<u8>);

impl Asm {
    fn u16(mut self, v: u16) -> Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    fn u32(mut self, v: u32) -> Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    fn bytes(mut self, b: &[u8]) -> Self {
        self.0.extend_from_slice(b);
        self
    }
    fn name(mut self, dotted: &str) -> Self {
        for label in dotted.split('.') {
            self.0.push(label.len() as u8);
            self.0.extend_from_slice(label.as_bytes());
        }
        self.0.push(0);
        self
    }
}

#[test]
fn query_fixture_matches_reference_assembly_and_encoder() {
    let assembled = Asm(Vec::new())
        .u16(0x1234)
        .u16(0x0100)
        .u16(1)
        .u16(0)
        .u16(0)
        .u16(0)
        .name("example.com")
        .u16(1)
        .u16(1)
        .0;
    assert_eq!(assembled, fixture("query_example_a.hex"));

    let msg = DnsMessage::query(0x1234, "example.com".parse().unwrap(), RecordType::A);
    assert_eq!(encode_message(&msg).unwrap(), assembled);
    assert_eq!(parse_message(&assembled).unwrap(), msg);
}

#[test]
fn response_fixture_yields_typed_answers() {
    let ttl = 3600;
    let assembled = Asm(Vec::new())
        .u16(0xbeef)
        .u16(0x8180)
        .u16(1)
        .u16(3)
        .u16(0)
        .u16(0)
        .name("example.com")
        .u16(1)
        .u16(1)
        .bytes(&[0xc0, 0x0c])
        .u16(1)
        .u16(1)
        .u32(ttl)
        .u16(4)
        .bytes(&[93, 184, 216, 34])
        .bytes(&[0xc0, 0x0c])
        .u16(28)
        .u16(1)
        .u32(ttl)
        .u16(16)
        .bytes(&"2606:2800:220:1:248:1893:25c8:1946".parse::<Ipv6Addr>().unwrap().octets())
        .bytes(&[0xc0, 0x0c])
        .u16(15)
        .u16(1)
        .u32(ttl)
        .u16(9)
        .u16(10)
        .bytes(&[4, b'm', b'a', b'i', b'l', 0xc0, 0x0c])
        .0;
    let bytes = fixture("response_a_aaaa_mx.hex");
    assert_eq!(assembled, bytes);

    let msg = parse_message(&bytes).unwrap();
    assert!(msg.is_response());
    assert_eq!(msg.id, 0xbeef);
    let types: Vec<u16> = msg.answers.iter().map(|rr| rr.rtype.0).collect();
    assert_eq!(types, vec![1, 28, 15]);

    let owner: Name = "example.com".parse().unwrap();
    assert!(msg.answers.iter().all(|rr| rr.name == owner && rr.ttl == ttl));
    assert_eq!(msg.answers[0].rdata, RData::A(Ipv4Addr::new(93, 184, 216, 34)));
    assert_eq!(
        msg.answers[1].rdata,
        RData::Aaaa("2606:2800:220:1:248:1893:25c8:1946".parse().unwrap())
    );
    assert_eq!(
        msg.answers[2].rdata,
        RData::Mx {
            preference: 10,
            exchange: "mail.example.com".parse().unwrap()
        }
    );

    // re-encoding drops compression but keeps the content
    let plain = encode_message(&msg).unwrap();
    assert!(plain.len() > bytes.len());
    assert_eq!(parse_message(&plain).unwrap(), msg);
}

#[test]
fn every_truncation_of_the_response_is_an_error() {
    let bytes = fixture("response_a_aaaa_mx.hex");
    for cut in 0..bytes.len() {
        let err = parse_message(&bytes[..cut]).unwrap_err();
        assert!(
            matches!(
                err,
                WireError::TruncatedMessage(_) | WireError::MalformedName(_)
            ),
            "cut at {cut}: {err:?}"
        );
    }
}

fn arb_label() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        "[a-zA-Z0-9-]{1,20}".prop_map(String::into_bytes),
        prop::collection::vec(any::<u8>(), 1..=63),
    ]
}

fn arb_name() -> impl Strategy<Value = Name> {
    prop::collection::vec(arb_label(), 0..4).prop_filter_map("name too long", |labels| {
        Name::from_labels(labels).ok()
    })
}

fn arb_record() -> impl Strategy<Value = ResourceRecord> {
    let rdata = prop_oneof![
        any::<[u8; 4]>().prop_map(|o| (RecordType::A, RData::A(Ipv4Addr::from(o)))),
        any::<[u8; 16]>().prop_map(|o| (RecordType::AAAA, RData::Aaaa(Ipv6Addr::from(o)))),
        (any::<u16>(), arb_name()).prop_map(|(preference, exchange)| (
            RecordType::MX,
            RData::Mx {
                preference,
                exchange
            }
        )),
        (
            any::<u16>().prop_filter("typed", |t| !RecordType(*t).is_typed()),
            prop::collection::vec(any::<u8>(), 0..40)
        )
            .prop_map(|(t, b)| (RecordType(t), RData::Opaque(b))),
    ];
    (arb_name(), any::<u16>(), any::<u32>(), rdata).prop_map(|(name, rclass, ttl, (rtype, rdata))| {
        ResourceRecord {
            name,
            rtype,
            rclass,
            ttl,
            rdata,
        }
    })
}

prop_compose! {
    fn arb_flags()(qr: bool, opcode in 0u8..16, aa: bool, tc: bool, rd: bool, ra: bool, rcode in 0u8..16) -> Flags {
        Flags { qr, opcode, aa, tc, rd, ra, rcode }
    }
}

pub fn arb_message() -> impl Strategy<Value = DnsMessage> {
    let question = (arb_name(), any::<u16>(), any::<u16>()).prop_map(|(qname, t, qclass)| Question {
        qname,
        qtype: RecordType(t),
        qclass,
    });
    (
        any::<u16>(),
        arb_flags(),
        prop::collection::vec(question, 0..3),
        prop::collection::vec(arb_record(), 0..4),
        prop::collection::vec(arb_record(), 0..2),
        prop::collection::vec(arb_record(), 0..2),
    )
        .prop_map(|(id, flags, questions, answers, authorities, additionals)| DnsMessage {
            id,
            flags,
            questions,
            answers,
            authorities,
            additionals,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn encode_parse_round_trip(msg in arb_message()) {
        let bytes = encode_message(&msg).unwrap();
        let parsed = parse_message(&bytes).unwrap();
        prop_assert_eq!(&parsed, &msg);
        // encoding is canonical, so re-encoding the parse is byte-identical
        prop_assert_eq!(encode_message(&parsed).unwrap(), bytes);
    }

    #[test]
    fn parse_is_total(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = parse_message(&bytes);
    }

    #[test]
    fn header_counts_match_sections(msg in arb_message()) {
        let bytes = encode_message(&msg).unwrap();
        let count = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]) as usize;
        prop_assert_eq!(count(4), msg.questions.len());
        prop_assert_eq!(count(6), msg.answers.len());
        prop_assert_eq!(count(8), msg.authorities.len());
        prop_assert_eq!(count(10), msg.additionals.len());
    }
}

#[test]
fn opt_additional_is_carried_opaquely() {
    let mut msg = DnsMessage::query(9, "example.org".parse().unwrap(), RecordType::MX);
    msg.additionals.push(ResourceRecord {
        name: Name::root(),
        rtype: RecordType::OPT,
        rclass: 4096,
        ttl: 0,
        rdata: RData::Opaque(vec![]),
    });
    let parsed = parse_message(&encode_message(&msg).unwrap()).unwrap();
    assert_eq!(parsed.additionals[0].rtype, RecordType::OPT);
    assert_eq!(parsed.additionals[0].rclass, 4096);
    assert_eq!(parsed.questions[0].qclass, CLASS_IN);
}
