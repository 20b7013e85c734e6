//! Turns observed DNS responses into deduplicated passive-DNS records and
//! handles the JSON-lines interchange format.

use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::FieldHasher;
use crate::dnswire::{self, DnsMessage, RData, RecordType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CollectError {
    #[error("message is a query, not a response")]
    NotAResponse,
    #[error("response has no A, AAAA or MX answers")]
    NoQualifyingAnswers,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// 128-bit record key, rendered as 32 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordId(#[serde(with = "crate::hexfmt::array")] pub [u8; 16]);

impl RecordId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RecordId({})", self.to_hex())
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for RecordId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::hexfmt::decode_array(s).map(RecordId)
    }
}

/// Milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnixMillis(pub u64);

impl UnixMillis {
    pub fn seconds(self) -> u64 {
        self.0 / 1000
    }

    pub fn millis_part(self) -> u16 {
        (self.0 % 1000) as u16
    }
}

/// One passive-DNS observation. Field order here is the serialization order;
/// the last two fields are personal data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassiveDnsRecord {
    pub chain_id: String,
    pub record_id: RecordId,
    pub domain: String,
    pub answer_ip: String,
    pub ttl: u32,
    pub ts_seconds: u64,
    pub ts_millis: u16,
    pub visit_count: u64,
    pub client_ip: IpAddr,
    pub resolver_ip: IpAddr,
}

/// The eight non-personal fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicRecord {
    pub chain_id: String,
    pub record_id: RecordId,
    pub domain: String,
    pub answer_ip: String,
    pub ttl: u32,
    pub ts_seconds: u64,
    pub ts_millis: u16,
    pub visit_count: u64,
}

/// The personal fields, stored only in the private data collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateRecord {
    pub client_ip: IpAddr,
    pub resolver_ip: IpAddr,
}

pub const PUBLIC_FIELDS: [&str; 8] = [
    "chain_id",
    "record_id",
    "domain",
    "answer_ip",
    "ttl",
    "ts_seconds",
    "ts_millis",
    "visit_count",
];
pub const PRIVATE_FIELDS: [&str; 2] = ["client_ip", "resolver_ip"];

impl PassiveDnsRecord {
    pub fn split(&self) -> (PublicRecord, PrivateRecord) {
        (
            PublicRecord {
                chain_id: self.chain_id.clone(),
                record_id: self.record_id,
                domain: self.domain.clone(),
                answer_ip: self.answer_ip.clone(),
                ttl: self.ttl,
                ts_seconds: self.ts_seconds,
                ts_millis: self.ts_millis,
                visit_count: self.visit_count,
            },
            PrivateRecord {
                client_ip: self.client_ip,
                resolver_ip: self.resolver_ip,
            },
        )
    }

    pub fn join(public: PublicRecord, private: PrivateRecord) -> Self {
        PassiveDnsRecord {
            chain_id: public.chain_id,
            record_id: public.record_id,
            domain: public.domain,
            answer_ip: public.answer_ip,
            ttl: public.ttl,
            ts_seconds: public.ts_seconds,
            ts_millis: public.ts_millis,
            visit_count: public.visit_count,
            client_ip: private.client_ip,
            resolver_ip: private.resolver_ip,
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        self.split().0.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, RecordError> {
        let record: PassiveDnsRecord = serde_json::from_str(text)
            .map_err(|e| RecordError::SchemaViolation(e.to_string()))?;
        record.validate()?;
        Ok(record)
    }
}

impl PublicRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        let fail = |m: String| Err(RecordError::InvariantViolation(m));
        if self.chain_id.is_empty() {
            return fail("chain_id is empty".into());
        }
        if self.domain.is_empty() {
            return fail("domain is empty".into());
        }
        if self.answer_ip.is_empty() {
            return fail("answer_ip is empty".into());
        }
        if let Ok(ip) = self.answer_ip.parse::<IpAddr>() {
            if ip.to_string() != self.answer_ip {
                return fail(format!("answer_ip {:?} is not canonical", self.answer_ip));
            }
        }
        if self.ts_millis >= 1000 {
            return fail(format!("ts_millis {} is not below 1000", self.ts_millis));
        }
        if self.visit_count == 0 {
            return fail("visit_count must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// Dedup key for observations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationKey {
    pub client_ip: IpAddr,
    pub domain: String,
    pub rtype: RecordType,
    pub answer_ip: String,
}

impl ObservationKey {
    /// Deterministic record id: the first 128 bits of a hash over the chain
    /// namespace and the key.
    pub fn record_id(&self, chain_id: &str) -> RecordId {
        let mut h = FieldHasher::new("pdns/record-id/v1");
        h.field(chain_id.as_bytes())
            .field(self.client_ip.to_string().as_bytes())
            .field(self.domain.as_bytes())
            .field(&self.rtype.0.to_be_bytes())
            .field(self.answer_ip.as_bytes());
        let digest = h.finish();
        let mut id = [0; 16];
        id.copy_from_slice(&digest.0[..16]);
        RecordId(id)
    }
}

/// Text form of a qualifying answer, or `None` for record types that are not
/// collected.
fn answer_text(rdata: &RData) -> Option<String> {
    match rdata {
        RData::A(addr) => Some(addr.to_string()),
        RData::Aaaa(addr) => Some(addr.to_string()),
        RData::Mx { exchange, .. } => Some(exchange.to_presentation()),
        RData::Opaque(_) => None,
    }
}

/// Dedup cache plus record construction for one chain namespace.
#[derive(Debug, Clone)]
pub struct Collector {
    chain_id: String,
    seen: HashMap<ObservationKey, PassiveDnsRecord>,
}

impl Collector {
    pub fn new(chain_id: impl Into<String>) -> Self {
        Collector {
            chain_id: chain_id.into(),
            seen: HashMap::new(),
        }
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    /// Number of distinct observation keys seen so far.
    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &PassiveDnsRecord> {
        self.seen.values()
    }

    /// Records every A/AAAA/MX answer of `response`. A repeated observation
    /// bumps the existing record's visit count and moves its timestamps, TTL
    /// and resolver to the latest sighting.
    pub fn observe(
        &mut self,
        response: &DnsMessage,
        client_ip: IpAddr,
        resolver_ip: IpAddr,
        now: UnixMillis,
    ) -> Result<Vec<PassiveDnsRecord>, CollectError> {
        if !response.is_response() {
            return Err(CollectError::NotAResponse);
        }
        let qualifying: Vec<_> = response
            .answers
            .iter()
            .filter(|rr| rr.rtype.is_typed())
            .filter_map(|rr| answer_text(&rr.rdata).map(|text| (rr, text)))
            .collect();
        if qualifying.is_empty() {
            return Err(CollectError::NoQualifyingAnswers);
        }

        let mut out = Vec::with_capacity(qualifying.len());
        for (rr, answer_ip) in qualifying {
            let owner = response
                .questions
                .first()
                .map(|q| &q.qname)
                .unwrap_or(&rr.name);
            let key = ObservationKey {
                client_ip,
                domain: owner.to_presentation(),
                rtype: rr.rtype,
                answer_ip,
            };
            let record = match self.seen.get_mut(&key) {
                Some(existing) => {
                    existing.visit_count += 1;
                    existing.ttl = rr.ttl;
                    existing.ts_seconds = now.seconds();
                    existing.ts_millis = now.millis_part();
                    existing.resolver_ip = resolver_ip;
                    existing.clone()
                }
                None => {
                    let record = PassiveDnsRecord {
                        chain_id: self.chain_id.clone(),
                        record_id: key.record_id(&self.chain_id),
                        domain: key.domain.clone(),
                        answer_ip: key.answer_ip.clone(),
                        ttl: rr.ttl,
                        ts_seconds: now.seconds(),
                        ts_millis: now.millis_part(),
                        visit_count: 1,
                        client_ip,
                        resolver_ip,
                    };
                    self.seen.insert(key, record.clone());
                    record
                }
            };
            out.push(record);
        }
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("observation line needs 4 fields: client_ip resolver_ip unix_millis hex")]
    ObservationArity,
    #[error("bad address {0:?}")]
    BadAddress(String),
    #[error("bad timestamp {0:?}")]
    BadTimestamp(String),
    #[error("bad hex payload: {0}")]
    BadHex(#[from] hex::FromHexError),
    #[error("bad DNS message: {0}")]
    Wire(#[from] dnswire::WireError),
}

/// One line of an ingest file.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestLine {
    /// A ready-made record in the JSON interchange format.
    Record(PassiveDnsRecord),
    /// A raw DNS message with its capture metadata, for replay through a
    /// [`Collector`].
    Observation {
        client_ip: IpAddr,
        resolver_ip: IpAddr,
        at: UnixMillis,
        message: DnsMessage,
    },
}

/// Parses one ingest line. Lines starting with `{` are JSON records; other
/// non-blank lines are `client_ip resolver_ip unix_millis hex-message`.
/// Blank lines and `#` comments yield `None`.
pub fn parse_ingest_line(line: &str) -> Result<Option<IngestLine>, IngestError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    if line.starts_with('{') {
        return Ok(Some(IngestLine::Record(PassiveDnsRecord::from_json(line)?)));
    }
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [client, resolver, at, payload] = fields[..] else {
        return Err(IngestError::ObservationArity);
    };
    let addr = |s: &str| {
        s.parse::<IpAddr>()
            .map_err(|_| IngestError::BadAddress(s.to_string()))
    };
    let client_ip = addr(client)?;
    let resolver_ip = addr(resolver)?;
    let at = at
        .parse::<u64>()
        .map_err(|_| IngestError::BadTimestamp(at.to_string()))?;
    let message = dnswire::parse_message(&hex::decode(payload)?)?;
    Ok(Some(IngestLine::Observation {
        client_ip,
        resolver_ip,
        at: UnixMillis(at),
        message,
    }))
}

/// Formats an observation line understood by [`parse_ingest_line`].
pub fn observation_line(
    client_ip: IpAddr,
    resolver_ip: IpAddr,
    at: UnixMillis,
    message: &DnsMessage,
) -> Result<String, dnswire::WireError> {
    Ok(format!(
        "{client_ip} {resolver_ip} {} {}",
        at.0,
        hex::encode(dnswire::encode_message(message)?)
    ))
}
