//! Hash-chained block store with a replayable world state and a private data
//! collection whose payloads live off-chain behind on-chain digests.
//!
//! A [`Ledger`] is one peer's replica. Blocks are appended in order; every
//! transaction is validated deterministically at commit, and invalid ones stay
//! in the block with no effect on state. Private payloads arrive beside the
//! block and are kept only when the hosting organization is a collection
//! member and the payload matches its on-chain digest.

mod block;
pub mod chainfile;
mod private;
mod state;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{
    data_hash, private_digest, validate_chain, Block, Endorsement, PrivateDigest, PrivatePayload,
    Proposal, PublicWrite, Transaction, TxId,
};
pub use private::{CollectionConfig, PrivateEntry, PrivateStore};
pub use state::{FieldValue, Predicate, PublicField, QueryError, Selector, StateEntry, WorldState};

use crate::collector::{PrivateRecord, PublicRecord, RecordId};
use crate::digest::Digest;
use crate::identity::{Msp, Policy};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("block {got} is out of order, expected {expected}")]
    OutOfOrderBlock { expected: u64, got: u64 },
    #[error("block {height} does not link to the chain")]
    HashMismatch { height: u64 },
    #[error("block {height} data hash does not match its transactions")]
    DataHashMismatch { height: u64 },
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
}

/// Chain-wide configuration every replica validates against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub msp: Msp,
    pub endorsement: Policy,
    /// Who may submit transactions at all.
    pub writers: Policy,
    /// Who may read public data.
    pub readers: Policy,
    pub collections: Vec<CollectionConfig>,
}

impl ChainConfig {
    pub fn collection(&self, name: &str) -> Option<&CollectionConfig> {
        self.collections.iter().find(|c| c.name == name)
    }
}

/// Commit-time verdict for one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxValidity {
    Valid,
    BadCreator,
    DuplicateTxId,
    WriterPolicyFailure,
    EndorsementPolicyFailure,
    UnknownCollection,
    CollectionWritePolicyFailure,
    InvalidWrite,
}

impl TxValidity {
    pub fn is_valid(self) -> bool {
        self == TxValidity::Valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub height: u64,
    pub tx_id: TxId,
    pub value: PublicRecord,
}

/// On-chain commitment for the latest private write to a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigestEntry {
    pub digest: Digest,
    pub height: u64,
}

/// Where a committed transaction landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxLocation {
    pub height: u64,
    pub index: usize,
    pub validity: TxValidity,
}

/// A missing private payload a member replica should fetch from its peers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingPrivate {
    pub collection: String,
    pub key: RecordId,
    pub digest: Digest,
    pub height: u64,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    config: ChainConfig,
    org: String,
    blocks: Vec<Block>,
    validity: Vec<Vec<TxValidity>>,
    tx_index: HashMap<TxId, TxLocation>,
    state: WorldState,
    private: PrivateStore,
    digests: BTreeMap<(String, RecordId), DigestEntry>,
    /// Member-collection keys whose latest digest has no stored payload.
    missing: BTreeSet<(String, RecordId)>,
    history: HashMap<RecordId, Vec<HistoryEntry>>,
}

impl Ledger {
    /// An empty replica hosted by a peer of `org`.
    pub fn new(config: ChainConfig, org: impl Into<String>) -> Self {
        let private = PrivateStore::new(config.collections.iter().cloned());
        Ledger {
            config,
            org: org.into(),
            blocks: Vec::new(),
            validity: Vec::new(),
            tx_index: HashMap::new(),
            state: WorldState::default(),
            private,
            digests: BTreeMap::new(),
            missing: BTreeSet::new(),
            history: HashMap::new(),
        }
    }

    /// Rebuilds a replica by re-committing `blocks`, then offering the given
    /// private payloads for reconciliation.
    pub fn replay(
        config: ChainConfig,
        org: impl Into<String>,
        blocks: impl IntoIterator<Item = Block>,
        private: &[PrivatePayload],
    ) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new(config, org);
        for block in blocks {
            ledger.append_block(block, &[])?;
        }
        for payload in private {
            ledger.reconcile_private(payload);
        }
        Ok(ledger)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn org(&self) -> &str {
        &self.org
    }

    /// Height of the last block, or `None` before genesis.
    pub fn height(&self) -> Option<u64> {
        self.blocks.len().checked_sub(1).map(|h| h as u64)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn validity(&self, height: u64) -> Option<&[TxValidity]> {
        self.validity.get(height as usize).map(Vec::as_slice)
    }

    pub fn tx_location(&self, tx_id: &TxId) -> Option<TxLocation> {
        self.tx_index.get(tx_id).copied()
    }

    pub fn world_state(&self) -> &WorldState {
        &self.state
    }

    pub fn private_store(&self) -> &PrivateStore {
        &self.private
    }

    pub fn is_member(&self, collection: &str) -> bool {
        self.config
            .collection(collection)
            .is_some_and(|c| c.is_member(&self.org))
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().map(Block::hash).unwrap_or(Digest::ZERO)
    }

    /// Checks the link and data hash of `block` against the current tip
    /// without committing it.
    pub fn check_next(&self, block: &Block) -> Result<(), LedgerError> {
        let expected = self.blocks.len() as u64;
        if block.number != expected {
            return Err(LedgerError::OutOfOrderBlock {
                expected,
                got: block.number,
            });
        }
        if block.prev_hash != self.tip_hash() {
            return Err(LedgerError::HashMismatch {
                height: block.number,
            });
        }
        if !block.data_hash_matches() {
            return Err(LedgerError::DataHashMismatch {
                height: block.number,
            });
        }
        Ok(())
    }

    /// Commits `block` and returns the new height. Private payloads that do
    /// not belong to this replica or do not match their digest are ignored.
    pub fn append_block(
        &mut self,
        block: Block,
        private: &[PrivatePayload],
    ) -> Result<u64, LedgerError> {
        self.check_next(&block)?;
        let height = block.number;

        let mut verdicts = Vec::with_capacity(block.transactions.len());
        let mut seen_in_block = HashSet::new();
        for (index, tx) in block.transactions.iter().enumerate() {
            let mut verdict = self.validate_tx(tx);
            if verdict.is_valid() && !seen_in_block.insert(tx.tx_id()) {
                verdict = TxValidity::DuplicateTxId;
            }
            if verdict.is_valid() {
                self.apply(tx, height, private);
            }
            self.tx_index.entry(tx.tx_id()).or_insert(TxLocation {
                height,
                index,
                validity: verdict,
            });
            verdicts.push(verdict);
        }
        self.validity.push(verdicts);
        self.blocks.push(block);
        self.purge_expired(height);
        Ok(height)
    }

    fn validate_tx(&self, tx: &Transaction) -> TxValidity {
        let msp = &self.config.msp;
        let creator = tx.creator();
        let proposal = tx.proposal.signing_bytes();
        if !msp.validate(creator) {
            return TxValidity::BadCreator;
        }
        if self.tx_index.contains_key(&tx.tx_id()) {
            return TxValidity::DuplicateTxId;
        }
        let creator_sig = [(creator.clone(), tx.creator_signature)];
        if !msp.evaluate_policy(&self.config.writers, &creator_sig, &proposal) {
            return TxValidity::WriterPolicyFailure;
        }
        let endorsements: Vec<_> = tx
            .endorsements
            .iter()
            .map(|e| (e.endorser.clone(), e.signature))
            .collect();
        if !msp.evaluate_policy(&self.config.endorsement, &endorsements, &proposal) {
            return TxValidity::EndorsementPolicyFailure;
        }
        for pd in &tx.proposal.private_digests {
            let Some(collection) = self.config.collection(&pd.collection) else {
                return TxValidity::UnknownCollection;
            };
            if !msp.evaluate_policy(&collection.write_policy, &creator_sig, &proposal) {
                return TxValidity::CollectionWritePolicyFailure;
            }
        }
        let writes_ok = tx
            .proposal
            .public_writes
            .iter()
            .all(|w| w.key == w.value.record_id && w.value.validate().is_ok());
        if !writes_ok {
            return TxValidity::InvalidWrite;
        }
        TxValidity::Valid
    }

    fn apply(&mut self, tx: &Transaction, height: u64, private: &[PrivatePayload]) {
        let tx_id = tx.tx_id();
        for w in &tx.proposal.public_writes {
            self.state.put(w.key, w.value.clone(), height, tx_id);
            self.history.entry(w.key).or_default().push(HistoryEntry {
                height,
                tx_id,
                value: w.value.clone(),
            });
        }
        for pd in &tx.proposal.private_digests {
            let slot = (pd.collection.clone(), pd.key);
            self.digests.insert(
                slot,
                DigestEntry {
                    digest: pd.digest,
                    height,
                },
            );
            if !self.is_member(&pd.collection) {
                continue;
            }
            self.missing.insert((pd.collection.clone(), pd.key));
            let payload = private.iter().find(|p| {
                p.collection == pd.collection && p.key == pd.key && p.digest() == pd.digest
            });
            match payload {
                Some(p) => {
                    self.private
                        .put(&p.collection, p.key, p.value.clone(), height)
                        .expect("collection validated at commit");
                    self.missing.remove(&(p.collection.clone(), p.key));
                }
                None => {
                    // an older payload for this key no longer matches the chain
                    if self
                        .private
                        .entry(&pd.collection, &pd.key)
                        .is_some_and(|e| e.height < height)
                    {
                        self.private.remove(&pd.collection, &pd.key);
                    }
                }
            }
        }
    }

    /// Private payloads this replica should hold but does not: member
    /// collections, digest on chain, not yet past block-to-live.
    pub fn missing_private(&self) -> Vec<MissingPrivate> {
        self.missing
            .iter()
            .map(|slot| {
                let entry = self.digests[slot];
                MissingPrivate {
                    collection: slot.0.clone(),
                    key: slot.1,
                    digest: entry.digest,
                    height: entry.height,
                }
            })
            .collect()
    }

    pub fn missing_private_count(&self) -> usize {
        self.missing.len()
    }

    /// Stores a payload obtained out of band (gossip reconciliation, restart)
    /// if it matches the latest on-chain digest for its key and has not
    /// expired. Returns whether it was stored.
    pub fn reconcile_private(&mut self, payload: &PrivatePayload) -> bool {
        if !self.is_member(&payload.collection) {
            return false;
        }
        let Some(entry) = self.digests.get(&(payload.collection.clone(), payload.key)) else {
            return false;
        };
        let current = self.height().unwrap_or(0);
        let expired = self
            .config
            .collection(&payload.collection)
            .is_some_and(|c| c.is_expired(entry.height, current));
        if expired || entry.digest != payload.digest() {
            return false;
        }
        let height = entry.height;
        let stored = self
            .private
            .put(&payload.collection, payload.key, payload.value.clone(), height)
            .is_ok();
        if stored {
            self.missing.remove(&(payload.collection.clone(), payload.key));
        }
        stored
    }

    pub fn get_private(&self, collection: &str, key: &RecordId) -> Option<&PrivateRecord> {
        self.private.get(collection, key)
    }

    /// Latest on-chain digest for a private key, if any was ever committed.
    pub fn private_digest(&self, collection: &str, key: &RecordId) -> Option<DigestEntry> {
        self.digests.get(&(collection.to_string(), *key)).copied()
    }

    /// Payload for `key` as a shippable unit, when held.
    pub fn private_payload(&self, collection: &str, key: &RecordId) -> Option<PrivatePayload> {
        self.get_private(collection, key).map(|value| PrivatePayload {
            collection: collection.to_string(),
            key: *key,
            value: value.clone(),
        })
    }

    pub fn purge_expired(&mut self, current_height: u64) -> usize {
        let (digests, collections) = (&self.digests, &self.config.collections);
        self.missing.retain(|slot| {
            let commit = digests[slot].height;
            collections
                .iter()
                .find(|c| c.name == slot.0)
                .is_some_and(|c| !c.is_expired(commit, current_height))
        });
        self.private.purge_expired(current_height)
    }

    pub fn rich_query(&self, selector: &Selector) -> Vec<(RecordId, PublicRecord)> {
        self.state.rich_query(selector)
    }

    pub fn history(&self, key: &RecordId) -> &[HistoryEntry] {
        self.history.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn chain_bytes(&self) -> Vec<u8> {
        chainfile::encode_chain(&self.blocks)
    }
}
