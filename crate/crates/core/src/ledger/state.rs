//! World state and selector ("rich") queries over public fields.
//!
//! Selector syntax (JSON object, all predicates must hold):
//!
//! ```text
//! {"domain": "example.com"}                      equality
//! {"ttl": {"$gte": 60, "$lt": 3600}}             range: $gt $gte $lt $lte $eq
//! {"domain": "example.com", "visit_count": {"$gt": 1}}
//! ```
//!
//! Text fields compare lexicographically, numeric fields numerically. Only the
//! eight public fields may be named; anything else (including the private
//! fields) is `UnknownField`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::block::TxId;
use crate::collector::{PublicRecord, RecordId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown or non-queryable field {0:?}")]
    UnknownField(String),
    #[error("value for {field} has the wrong type")]
    TypeMismatch { field: &'static str },
    #[error("malformed selector: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PublicField {
    ChainId,
    RecordId,
    Domain,
    AnswerIp,
    Ttl,
    TsSeconds,
    TsMillis,
    VisitCount,
}

impl PublicField {
    pub const ALL: [PublicField; 8] = [
        PublicField::ChainId,
        PublicField::RecordId,
        PublicField::Domain,
        PublicField::AnswerIp,
        PublicField::Ttl,
        PublicField::TsSeconds,
        PublicField::TsMillis,
        PublicField::VisitCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PublicField::ChainId => "chain_id",
            PublicField::RecordId => "record_id",
            PublicField::Domain => "domain",
            PublicField::AnswerIp => "answer_ip",
            PublicField::Ttl => "ttl",
            PublicField::TsSeconds => "ts_seconds",
            PublicField::TsMillis => "ts_millis",
            PublicField::VisitCount => "visit_count",
        }
    }

    fn is_numeric(self) -> bool {
        matches!(
            self,
            PublicField::Ttl | PublicField::TsSeconds | PublicField::TsMillis | PublicField::VisitCount
        )
    }

    pub fn value_of(self, r: &PublicRecord) -> FieldValue {
        match self {
            PublicField::ChainId => FieldValue::Text(r.chain_id.clone()),
            PublicField::RecordId => FieldValue::Text(r.record_id.to_hex()),
            PublicField::Domain => FieldValue::Text(r.domain.clone()),
            PublicField::AnswerIp => FieldValue::Text(r.answer_ip.clone()),
            PublicField::Ttl => FieldValue::Number(r.ttl as u64),
            PublicField::TsSeconds => FieldValue::Number(r.ts_seconds),
            PublicField::TsMillis => FieldValue::Number(r.ts_millis as u64),
            PublicField::VisitCount => FieldValue::Number(r.visit_count),
        }
    }
}

impl FromStr for PublicField {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PublicField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| QueryError::UnknownField(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FieldValue {
    Text(String),
    Number(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Eq(PublicField, FieldValue),
    Range {
        field: PublicField,
        lower: Bound<FieldValue>,
        upper: Bound<FieldValue>,
    },
}

impl Predicate {
    pub fn field(&self) -> PublicField {
        match self {
            Predicate::Eq(f, _) | Predicate::Range { field: f, .. } => *f,
        }
    }

    pub fn matches(&self, record: &PublicRecord) -> bool {
        let actual = self.field().value_of(record);
        match self {
            Predicate::Eq(_, want) => &actual == want,
            Predicate::Range { lower, upper, .. } => {
                let above = match lower {
                    Bound::Included(v) => actual >= *v,
                    Bound::Excluded(v) => actual > *v,
                    Bound::Unbounded => true,
                };
                let below = match upper {
                    Bound::Included(v) => actual <= *v,
                    Bound::Excluded(v) => actual < *v,
                    Bound::Unbounded => true,
                };
                above && below
            }
        }
    }
}

/// Conjunction of predicates; the empty selector matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selector {
    pub predicates: Vec<Predicate>,
}

impl Selector {
    pub fn all() -> Self {
        Selector::default()
    }

    pub fn eq(field: PublicField, value: FieldValue) -> Self {
        Selector {
            predicates: vec![Predicate::Eq(field, value)],
        }
    }

    pub fn record_id(id: RecordId) -> Self {
        Self::eq(PublicField::RecordId, FieldValue::Text(id.to_hex()))
    }

    pub fn domain(domain: &str) -> Self {
        Self::eq(PublicField::Domain, FieldValue::Text(domain.to_string()))
    }

    pub fn and(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }

    pub fn matches(&self, record: &PublicRecord) -> bool {
        self.predicates.iter().all(|p| p.matches(record))
    }

    pub fn parse_json(text: &str) -> Result<Self, QueryError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| QueryError::Malformed(e.to_string()))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self, QueryError> {
        let obj = value
            .as_object()
            .ok_or_else(|| QueryError::Malformed("selector must be a JSON object".into()))?;
        let mut predicates = Vec::new();
        for (name, cond) in obj {
            let field: PublicField = name.parse()?;
            match cond {
                Value::Object(ops) => {
                    let mut lower = Bound::Unbounded;
                    let mut upper = Bound::Unbounded;
                    for (op, v) in ops {
                        let v = literal(field, v)?;
                        match op.as_str() {
                            "$eq" => predicates.push(Predicate::Eq(field, v)),
                            "$gt" => lower = Bound::Excluded(v),
                            "$gte" => lower = Bound::Included(v),
                            "$lt" => upper = Bound::Excluded(v),
                            "$lte" => upper = Bound::Included(v),
                            other => {
                                return Err(QueryError::Malformed(format!(
                                    "unknown operator {other:?}"
                                )))
                            }
                        }
                    }
                    if lower != Bound::Unbounded || upper != Bound::Unbounded {
                        predicates.push(Predicate::Range {
                            field,
                            lower,
                            upper,
                        });
                    }
                }
                v => predicates.push(Predicate::Eq(field, literal(field, v)?)),
            }
        }
        Ok(Selector { predicates })
    }

    fn key_lookup(&self) -> Option<&str> {
        self.predicates.iter().find_map(|p| match p {
            Predicate::Eq(PublicField::RecordId, FieldValue::Text(k)) => Some(k.as_str()),
            _ => None,
        })
    }

    fn domain_lookup(&self) -> Option<&str> {
        self.predicates.iter().find_map(|p| match p {
            Predicate::Eq(PublicField::Domain, FieldValue::Text(d)) => Some(d.as_str()),
            _ => None,
        })
    }
}

fn literal(field: PublicField, v: &Value) -> Result<FieldValue, QueryError> {
    let mismatch = QueryError::TypeMismatch {
        field: field.name(),
    };
    if field.is_numeric() {
        v.as_u64().map(FieldValue::Number).ok_or(mismatch)
    } else {
        v.as_str()
            .map(|s| FieldValue::Text(s.to_string()))
            .ok_or(mismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEntry {
    pub value: PublicRecord,
    pub height: u64,
    pub tx_id: TxId,
}

/// Latest public value per record id, with a secondary index on domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<RecordId, StateEntry>,
    by_domain: BTreeMap<String, BTreeSet<RecordId>>,
}

impl WorldState {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &RecordId) -> Option<&StateEntry> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordId, &StateEntry)> {
        self.entries.iter()
    }

    pub fn put(&mut self, key: RecordId, value: PublicRecord, height: u64, tx_id: TxId) {
        if let Some(old) = self.entries.get(&key) {
            if old.value.domain != value.domain {
                if let Some(set) = self.by_domain.get_mut(&old.value.domain) {
                    set.remove(&key);
                    if set.is_empty() {
                        self.by_domain.remove(&old.value.domain);
                    }
                }
            }
        }
        self.by_domain
            .entry(value.domain.clone())
            .or_default()
            .insert(key);
        self.entries.insert(
            key,
            StateEntry {
                value,
                height,
                tx_id,
            },
        );
    }

    /// Records satisfying every predicate, ordered by key. A record-id or
    /// domain equality predicate narrows the candidate set through the key
    /// map or the domain index; the full selector is always re-checked.
    pub fn rich_query(&self, selector: &Selector) -> Vec<(RecordId, PublicRecord)> {
        let pick = |(k, e): (&RecordId, &StateEntry)| {
            selector.matches(&e.value).then(|| (*k, e.value.clone()))
        };
        if let Some(key) = selector.key_lookup() {
            let Ok(id) = key.parse::<RecordId>() else {
                return Vec::new();
            };
            return self.entries.get_key_value(&id).and_then(pick).into_iter().collect();
        }
        if let Some(domain) = selector.domain_lookup() {
            return self
                .by_domain
                .get(domain)
                .into_iter()
                .flatten()
                .filter_map(|k| self.entries.get_key_value(k).and_then(pick))
                .collect();
        }
        self.entries.iter().filter_map(pick).collect()
    }

    /// Canonical bytes for cross-replica comparison.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.entries).expect("state serializes")
    }
}
