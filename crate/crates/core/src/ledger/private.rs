use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::collector::{PrivateRecord, RecordId};
use crate::identity::Policy;

/// A private data collection: who holds the payload, who may read and write
/// it, and how long payloads live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionConfig {
    pub name: String,
    pub member_orgs: BTreeSet<String>,
    /// Blocks until a payload is purged; 0 keeps payloads forever.
    #[serde(default)]
    pub block_to_live: u64,
    pub read_policy: Policy,
    pub write_policy: Policy,
}

impl CollectionConfig {
    pub fn is_member(&self, org: &str) -> bool {
        self.member_orgs.contains(org)
    }

    /// Whether a payload committed at `commit_height` is past its lifetime at
    /// `current_height`. The boundary is inclusive: with `block_to_live = n`
    /// an entry committed at `h` is gone once the chain reaches `h + n`.
    pub fn is_expired(&self, commit_height: u64, current_height: u64) -> bool {
        self.block_to_live > 0 && current_height.saturating_sub(commit_height) >= self.block_to_live
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateEntry {
    pub collection: String,
    pub key: RecordId,
    pub value: PrivateRecord,
    pub height: u64,
}

/// Side database of private payloads, keyed by (collection, key).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrivateStore {
    collections: BTreeMap<String, CollectionConfig>,
    entries: BTreeMap<(String, RecordId), PrivateEntry>,
}

impl PrivateStore {
    pub fn new(collections: impl IntoIterator<Item = CollectionConfig>) -> Self {
        PrivateStore {
            collections: collections
                .into_iter()
                .map(|c| (c.name.clone(), c))
                .collect(),
            entries: BTreeMap::new(),
        }
    }

    pub fn collection(&self, name: &str) -> Option<&CollectionConfig> {
        self.collections.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn put(
        &mut self,
        collection: &str,
        key: RecordId,
        value: PrivateRecord,
        height: u64,
    ) -> Result<(), LedgerError> {
        if !self.collections.contains_key(collection) {
            return Err(LedgerError::UnknownCollection(collection.to_string()));
        }
        self.entries.insert(
            (collection.to_string(), key),
            PrivateEntry {
                collection: collection.to_string(),
                key,
                value,
                height,
            },
        );
        Ok(())
    }

    pub fn get(&self, collection: &str, key: &RecordId) -> Option<&PrivateRecord> {
        self.entry(collection, key).map(|e| &e.value)
    }

    pub fn entry(&self, collection: &str, key: &RecordId) -> Option<&PrivateEntry> {
        self.entries.get(&(collection.to_string(), *key))
    }

    pub fn remove(&mut self, collection: &str, key: &RecordId) -> Option<PrivateEntry> {
        self.entries.remove(&(collection.to_string(), *key))
    }

    /// Drops every entry past its collection's block-to-live. Returns the
    /// number of entries removed.
    pub fn purge_expired(&mut self, current_height: u64) -> usize {
        let before = self.entries.len();
        let collections = &self.collections;
        self.entries.retain(|(name, _), e| {
            collections
                .get(name)
                .is_some_and(|c| !c.is_expired(e.height, current_height))
        });
        before - self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = &PrivateEntry> {
        self.entries.values()
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let entries: Vec<&PrivateEntry> = self.entries.values().collect();
        serde_json::to_vec(&entries).expect("private entries serialize")
    }
}
