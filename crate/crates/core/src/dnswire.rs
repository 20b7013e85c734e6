//! DNS message wire format (RFC 1035 section 4).
//!
//! The parser accepts name-compression pointers anywhere a name may appear in
//! the A/AAAA/MX subset it understands; the encoder never emits them. Record
//! types other than A, AAAA and MX are carried as opaque rdata so real traffic
//! (CNAME chains, OPT pseudo-records, ...) survives a parse.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::net::{Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use thiserror::Error;

pub const HEADER_LEN: usize = 12;
pub const MAX_NAME_LEN: usize = 255;
pub const MAX_LABEL_LEN: usize = 63;
/// Upper bound on compression-pointer hops while reading a single name.
pub const MAX_POINTER_HOPS: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("message truncated while reading {0}")]
    TruncatedMessage(&'static str),
    #[error("malformed name: {0}")]
    MalformedName(&'static str),
    #[error("malformed rdata for type {rtype}: {reason}")]
    MalformedRdata { rtype: RecordType, reason: &'static str },
    #[error("domain name exceeds {MAX_NAME_LEN} octets")]
    NameTooLong,
    #[error("invalid label: {0}")]
    InvalidLabel(&'static str),
    #[error("rdata for type {rtype} must be {expected} bytes, got {actual}")]
    RdataLengthMismatch {
        rtype: RecordType,
        expected: usize,
        actual: usize,
    },
    #[error("rdata variant does not match record type {0}")]
    RdataTypeMismatch(RecordType),
    #[error("section holds more than 65535 entries")]
    SectionTooLarge,
    #[error("header field out of range: {0}")]
    FieldOutOfRange(&'static str),
}

/// Record type code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordType(pub u16);

impl RecordType {
    pub const A: RecordType = RecordType(1);
    pub const NS: RecordType = RecordType(2);
    pub const CNAME: RecordType = RecordType(5);
    pub const MX: RecordType = RecordType(15);
    pub const TXT: RecordType = RecordType(16);
    pub const AAAA: RecordType = RecordType(28);
    pub const OPT: RecordType = RecordType(41);

    /// Whether this module decodes the rdata of this type.
    pub fn is_typed(self) -> bool {
        matches!(self, RecordType::A | RecordType::AAAA | RecordType::MX)
    }

    pub fn mnemonic(self) -> Option<&'static str> {
        Some(match self {
            RecordType::A => "A",
            RecordType::NS => "NS",
            RecordType::CNAME => "CNAME",
            RecordType::MX => "MX",
            RecordType::TXT => "TXT",
            RecordType::AAAA => "AAAA",
            RecordType::OPT => "OPT",
            _ => return None,
        })
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mnemonic() {
            Some(m) => f.write_str(m),
            None => write!(f, "TYPE{}", self.0),
        }
    }
}

pub const CLASS_IN: u16 = 1;

/// A domain name as a sequence of raw labels.
///
/// Label case is preserved so encode/parse round-trips are byte-exact, but
/// equality and hashing are ASCII case-insensitive and the presentation form
/// is lowercased.
#[derive(Debug, Clone, Default)]
pub struct Name {
    labels: Vec<Vec<u8>>,
}

impl Name {
    pub fn root() -> Self {
        Name::default()
    }

    pub fn from_labels<I, L>(labels: I) -> Result<Self, WireError>
    where
        I: IntoIterator<Item = L>,
        L: Into<Vec<u8>>,
    {
        let labels: Vec<Vec<u8>> = labels.into_iter().map(Into::into).collect();
        let mut wire_len = 1;
        for label in &labels {
            if label.is_empty() {
                return Err(WireError::InvalidLabel("empty label"));
            }
            if label.len() > MAX_LABEL_LEN {
                return Err(WireError::InvalidLabel("label longer than 63 octets"));
            }
            wire_len += label.len() + 1;
        }
        if wire_len > MAX_NAME_LEN {
            return Err(WireError::NameTooLong);
        }
        Ok(Name { labels })
    }

    pub fn labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    pub fn is_root(&self) -> bool {
        self.labels.is_empty()
    }

    /// Length of the uncompressed wire encoding, including the root octet.
    pub fn wire_len(&self) -> usize {
        1 + self.labels.iter().map(|l| l.len() + 1).sum::<usize>()
    }

    /// Dot-joined, lowercased form without a trailing dot (`""` for the root).
    pub fn to_presentation(&self) -> String {
        let mut out = String::new();
        for (i, label) in self.labels.iter().enumerate() {
            if i > 0 {
                out.push('.');
            }
            for &b in label {
                let b = b.to_ascii_lowercase();
                match b {
                    b'.' | b'\\' => {
                        out.push('\\');
                        out.push(b as char);
                    }
                    0x21..=0x7e => out.push(b as char),
                    _ => out.push_str(&format!("\\{b:03}")),
                }
            }
        }
        out
    }
}

impl PartialEq for Name {
    fn eq(&self, other: &Self) -> bool {
        self.labels.len() == other.labels.len()
            && self
                .labels
                .iter()
                .zip(&other.labels)
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
    }
}

impl Eq for Name {}

impl Hash for Name {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for label in &self.labels {
            state.write_usize(label.len());
            for b in label {
                state.write_u8(b.to_ascii_lowercase());
            }
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            f.write_str(".")
        } else {
            f.write_str(&self.to_presentation())
        }
    }
}

impl FromStr for Name {
    type Err = WireError;

    /// Parses presentation form. A single trailing dot is accepted; `\.`,
    /// `\\` and `\DDD` escapes are understood.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s == "." {
            return Ok(Name::root());
        }
        let bytes = s.as_bytes();
        let mut labels = Vec::new();
        let mut current = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => {
                    let rest = &bytes[i + 1..];
                    if rest.len() >= 3 && rest[..3].iter().all(u8::is_ascii_digit) {
                        let v = (rest[0] - b'0') as u16 * 100
                            + (rest[1] - b'0') as u16 * 10
                            + (rest[2] - b'0') as u16;
                        if v > 255 {
                            return Err(WireError::InvalidLabel("escape value above 255"));
                        }
                        current.push(v as u8);
                        i += 4;
                    } else if let Some(&c) = rest.first() {
                        current.push(c);
                        i += 2;
                    } else {
                        return Err(WireError::InvalidLabel("dangling escape"));
                    }
                }
                b'.' => {
                    labels.push(std::mem::take(&mut current));
                    i += 1;
                    if i == bytes.len() {
                        // trailing dot
                        return Name::from_labels(labels);
                    }
                }
                c => {
                    current.push(c);
                    i += 1;
                }
            }
        }
        labels.push(current);
        Name::from_labels(labels)
    }
}

/// Header flags (everything in the second 16-bit word except the Z bits).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags {
    /// Query (false) or response (true).
    pub qr: bool,
    pub opcode: u8,
    pub aa: bool,
    pub tc: bool,
    pub rd: bool,
    pub ra: bool,
    pub rcode: u8,
}

impl Flags {
    fn to_word(self) -> Result<u16, WireError> {
        if self.opcode > 0x0f {
            return Err(WireError::FieldOutOfRange("opcode"));
        }
        if self.rcode > 0x0f {
            return Err(WireError::FieldOutOfRange("rcode"));
        }
        Ok((self.qr as u16) << 15
            | (self.opcode as u16) << 11
            | (self.aa as u16) << 10
            | (self.tc as u16) << 9
            | (self.rd as u16) << 8
            | (self.ra as u16) << 7
            | self.rcode as u16)
    }

    fn from_word(w: u16) -> Self {
        Flags {
            qr: w & 0x8000 != 0,
            opcode: ((w >> 11) & 0x0f) as u8,
            aa: w & 0x0400 != 0,
            tc: w & 0x0200 != 0,
            rd: w & 0x0100 != 0,
            ra: w & 0x0080 != 0,
            rcode: (w & 0x000f) as u8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Question {
    pub qname: Name,
    pub qtype: RecordType,
    pub qclass: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RData {
    A(Ipv4Addr),
    Aaaa(Ipv6Addr),
    Mx { preference: u16, exchange: Name },
    /// Payload of any type this module does not interpret.
    Opaque(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResourceRecord {
    pub name: Name,
    pub rtype: RecordType,
    pub rclass: u16,
    pub ttl: u32,
    pub rdata: RData,
}

impl ResourceRecord {
    pub fn a(name: Name, ttl: u32, addr: Ipv4Addr) -> Self {
        ResourceRecord {
            name,
            rtype: RecordType::A,
            rclass: CLASS_IN,
            ttl,
            rdata: RData::A(addr),
        }
    }

    pub fn aaaa(name: Name, ttl: u32, addr: Ipv6Addr) -> Self {
        ResourceRecord {
            name,
            rtype: RecordType::AAAA,
            rclass: CLASS_IN,
            ttl,
            rdata: RData::Aaaa(addr),
        }
    }

    pub fn mx(name: Name, ttl: u32, preference: u16, exchange: Name) -> Self {
        ResourceRecord {
            name,
            rtype: RecordType::MX,
            rclass: CLASS_IN,
            ttl,
            rdata: RData::Mx {
                preference,
                exchange,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DnsMessage {
    pub id: u16,
    pub flags: Flags,
    pub questions: Vec<Question>,
    pub answers: Vec<ResourceRecord>,
    pub authorities: Vec<ResourceRecord>,
    pub additionals: Vec<ResourceRecord>,
}

impl DnsMessage {
    /// A recursion-desired query with a single IN-class question.
    pub fn query(id: u16, qname: Name, qtype: RecordType) -> Self {
        DnsMessage {
            id,
            flags: Flags {
                rd: true,
                ..Flags::default()
            },
            questions: vec![Question {
                qname,
                qtype,
                qclass: CLASS_IN,
            }],
            ..DnsMessage::default()
        }
    }

    pub fn is_response(&self) -> bool {
        self.flags.qr
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(WireError::TruncatedMessage(what))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn name(&mut self) -> Result<Name, WireError> {
        let (name, next) = read_name(self.buf, self.pos)?;
        self.pos = next;
        Ok(name)
    }

    fn question(&mut self) -> Result<Question, WireError> {
        let qname = self.name()?;
        let qtype = RecordType(self.u16("question type")?);
        let qclass = self.u16("question class")?;
        Ok(Question {
            qname,
            qtype,
            qclass,
        })
    }

    fn record(&mut self) -> Result<ResourceRecord, WireError> {
        let name = self.name()?;
        let rtype = RecordType(self.u16("record type")?);
        let rclass = self.u16("record class")?;
        let ttl = self.u32("record ttl")?;
        let rdlen = self.u16("rdata length")? as usize;
        let start = self.pos;
        let raw = self.take(rdlen, "rdata")?;
        let rdata = match rtype {
            RecordType::A => {
                let octets: [u8; 4] = raw.try_into().map_err(|_| WireError::MalformedRdata {
                    rtype,
                    reason: "A rdata must be 4 bytes",
                })?;
                RData::A(Ipv4Addr::from(octets))
            }
            RecordType::AAAA => {
                let octets: [u8; 16] = raw.try_into().map_err(|_| WireError::MalformedRdata {
                    rtype,
                    reason: "AAAA rdata must be 16 bytes",
                })?;
                RData::Aaaa(Ipv6Addr::from(octets))
            }
            RecordType::MX => {
                if raw.len() < 3 {
                    return Err(WireError::MalformedRdata {
                        rtype,
                        reason: "MX rdata shorter than preference + root name",
                    });
                }
                let preference = u16::from_be_bytes([raw[0], raw[1]]);
                // Pointers may reach anywhere in the message, but the inline
                // part of the name has to end exactly at the rdata boundary.
                let (exchange, next) = read_name(&self.buf[..start + rdlen], start + 2)?;
                if next != start + rdlen {
                    return Err(WireError::MalformedRdata {
                        rtype,
                        reason: "MX exchange does not fill rdata",
                    });
                }
                RData::Mx {
                    preference,
                    exchange,
                }
            }
            _ => RData::Opaque(raw.to_vec()),
        };
        Ok(ResourceRecord {
            name,
            rtype,
            rclass,
            ttl,
            rdata,
        })
    }
}

/// Reads a possibly-compressed name starting at `start`. Returns the name and
/// the offset just past its in-place encoding.
fn read_name(buf: &[u8], start: usize) -> Result<(Name, usize), WireError> {
    let mut pos = start;
    let mut resume_at = None;
    let mut hops = 0;
    let mut wire_len = 1;
    let mut labels = Vec::new();
    loop {
        let len = *buf.get(pos).ok_or(WireError::TruncatedMessage("name"))?;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    pos += 1;
                    break;
                }
                let len = len as usize;
                let label = buf
                    .get(pos + 1..pos + 1 + len)
                    .ok_or(WireError::TruncatedMessage("name label"))?;
                wire_len += len + 1;
                if wire_len > MAX_NAME_LEN {
                    return Err(WireError::MalformedName("name longer than 255 octets"));
                }
                labels.push(label.to_vec());
                pos += 1 + len;
            }
            0xc0 => {
                let low = *buf
                    .get(pos + 1)
                    .ok_or(WireError::TruncatedMessage("compression pointer"))?;
                let target = ((len as usize & 0x3f) << 8) | low as usize;
                if resume_at.is_none() {
                    resume_at = Some(pos + 2);
                }
                hops += 1;
                if hops > MAX_POINTER_HOPS {
                    return Err(WireError::MalformedName("compression pointer loop"));
                }
                if target >= buf.len() {
                    return Err(WireError::MalformedName("compression pointer out of range"));
                }
                pos = target;
            }
            _ => return Err(WireError::MalformedName("reserved label type")),
        }
    }
    Ok((Name { labels }, resume_at.unwrap_or(pos)))
}

/// Parses a complete DNS message. Trailing bytes after the declared sections
/// are ignored.
pub fn parse_message(bytes: &[u8]) -> Result<DnsMessage, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let id = r.u16("header")?;
    let flags = Flags::from_word(r.u16("header")?);
    let qdcount = r.u16("header")?;
    let ancount = r.u16("header")?;
    let nscount = r.u16("header")?;
    let arcount = r.u16("header")?;

    let questions = (0..qdcount)
        .map(|_| r.question())
        .collect::<Result<Vec<_>, _>>()?;
    let mut section = |count: u16| (0..count).map(|_| r.record()).collect::<Result<Vec<_>, _>>();
    let answers = section(ancount)?;
    let authorities = section(nscount)?;
    let additionals = section(arcount)?;

    Ok(DnsMessage {
        id,
        flags,
        questions,
        answers,
        authorities,
        additionals,
    })
}

fn put_name(out: &mut Vec<u8>, name: &Name) -> Result<(), WireError> {
    if name.wire_len() > MAX_NAME_LEN {
        return Err(WireError::NameTooLong);
    }
    for label in name.labels() {
        if label.is_empty() || label.len() > MAX_LABEL_LEN {
            return Err(WireError::InvalidLabel("label must be 1..=63 octets"));
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label);
    }
    out.push(0);
    Ok(())
}

fn section_count(len: usize) -> Result<u16, WireError> {
    u16::try_from(len).map_err(|_| WireError::SectionTooLarge)
}

fn put_record(out: &mut Vec<u8>, rr: &ResourceRecord) -> Result<(), WireError> {
    put_name(out, &rr.name)?;
    out.extend_from_slice(&rr.rtype.0.to_be_bytes());
    out.extend_from_slice(&rr.rclass.to_be_bytes());
    out.extend_from_slice(&rr.ttl.to_be_bytes());

    let mut rdata = Vec::new();
    match (&rr.rdata, rr.rtype) {
        (RData::A(addr), RecordType::A) => rdata.extend_from_slice(&addr.octets()),
        (RData::Aaaa(addr), RecordType::AAAA) => rdata.extend_from_slice(&addr.octets()),
        (
            RData::Mx {
                preference,
                exchange,
            },
            RecordType::MX,
        ) => {
            rdata.extend_from_slice(&preference.to_be_bytes());
            put_name(&mut rdata, exchange)?;
        }
        (RData::Opaque(bytes), RecordType::A) => {
            return Err(WireError::RdataLengthMismatch {
                rtype: rr.rtype,
                expected: 4,
                actual: bytes.len(),
            })
        }
        (RData::Opaque(bytes), RecordType::AAAA) => {
            return Err(WireError::RdataLengthMismatch {
                rtype: rr.rtype,
                expected: 16,
                actual: bytes.len(),
            })
        }
        (RData::Opaque(bytes), t) if !t.is_typed() => {
            if bytes.len() > u16::MAX as usize {
                return Err(WireError::RdataLengthMismatch {
                    rtype: t,
                    expected: u16::MAX as usize,
                    actual: bytes.len(),
                });
            }
            rdata.extend_from_slice(bytes);
        }
        _ => return Err(WireError::RdataTypeMismatch(rr.rtype)),
    }
    out.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
    out.extend_from_slice(&rdata);
    Ok(())
}

/// Encodes a message canonically: no name compression, sections in order.
pub fn encode_message(msg: &DnsMessage) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(512);
    out.extend_from_slice(&msg.id.to_be_bytes());
    out.extend_from_slice(&msg.flags.to_word()?.to_be_bytes());
    for len in [
        msg.questions.len(),
        msg.answers.len(),
        msg.authorities.len(),
        msg.additionals.len(),
    ] {
        out.extend_from_slice(&section_count(len)?.to_be_bytes());
    }
    for q in &msg.questions {
        put_name(&mut out, &q.qname)?;
        out.extend_from_slice(&q.qtype.0.to_be_bytes());
        out.extend_from_slice(&q.qclass.to_be_bytes());
    }
    for rr in msg
        .answers
        .iter()
        .chain(&msg.authorities)
        .chain(&msg.additionals)
    {
        put_record(&mut out, rr)?;
    }
    Ok(out)
}

/// Decodes a hex fixture: whitespace is ignored and `#` starts a comment that
/// runs to end of line.
pub fn decode_hex_fixture(text: &str) -> Result<Vec<u8>, hex::FromHexError> {
    let digits: String = text
        .lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(|line| line.chars().filter(|c| !c.is_whitespace()))
        .collect();
    hex::decode(digits)
}
