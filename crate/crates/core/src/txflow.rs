//! Identity-gated store and query API over a [`Network`]: a store request is
//! endorsed by one live peer per organization, ordered, and committed before
//! the call returns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::{PassiveDnsRecord, PrivateRecord, PublicRecord, RecordId};
use crate::identity::{request_payload, Identity, Policy, PublicKey, Signature};
use crate::ledger::{
    HistoryEntry, PrivateDigest, PrivatePayload, Proposal, PublicWrite, QueryError, Selector,
    Transaction, TxId, TxValidity,
};
use crate::network::{Fault, Message, Network, NetworkConfig, NetworkError, NodeId, PeerNode};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("policy violation: {0}")]
    PolicyViolation(String),
    #[error("endorsement failure: {0}")]
    EndorsementFailure(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("access denied")]
    AccessDenied,
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("not found")]
    NotFound,
    #[error("private data purged")]
    Purged,
    #[error("no live peer available")]
    NoLivePeer,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Committed { block_height: u64 },
    Rejected { reason: String },
    /// Endorsed but not yet ordered: no orderer is up, or the block has not
    /// reached a live peer. Resubmitted on the next call.
    Queued,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxResult {
    pub tx_id: TxId,
    #[serde(flatten)]
    pub status: TxStatus,
}

impl TxResult {
    pub fn is_committed(&self) -> bool {
        matches!(self.status, TxStatus::Committed { .. })
    }
}

/// Client-side entry point. Holds the network and the client's queue of
/// submitted but uncommitted transactions.
pub struct Gateway {
    network: Network,
    collection: String,
    nonce: u64,
    awaiting: BTreeMap<TxId, Transaction>,
}

struct Prepared {
    tx_id: TxId,
    client: NodeId,
    proposal: Proposal,
    payload: PrivatePayload,
}

impl Gateway {
    /// Builds the topology; nothing is committed until [`Gateway::init_chain`].
    pub fn new(
        config: NetworkConfig,
        ca_public_key: PublicKey,
        identities: &BTreeMap<NodeId, Identity>,
    ) -> Result<Self, TxError> {
        let collection = config
            .collections
            .first()
            .map(|c| c.name.clone())
            .ok_or_else(|| TxError::InvalidConfig("no private data collection".into()))?;
        let network = Network::new(config, ca_public_key, identities).map_err(|e| match e {
            NetworkError::Config(c) => TxError::InvalidConfig(c.to_string()),
            other => TxError::InvalidConfig(other.to_string()),
        })?;
        Ok(Gateway {
            network,
            collection,
            nonce: 0,
            awaiting: BTreeMap::new(),
        })
    }

    /// Commits the genesis block on every peer.
    pub fn init_chain(&mut self) -> Result<u64, TxError> {
        self.network.init_genesis().map_err(|e| match e {
            NetworkError::AlreadyInitialized => {
                TxError::InvalidConfig("chain already initialized".into())
            }
            other => TxError::Network(other),
        })?;
        Ok(0)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    /// Collection receiving the personal fields of every record.
    pub fn collection(&self) -> &str {
        &self.collection
    }

    pub fn height(&self) -> u64 {
        self.network.delivered_height()
    }

    pub fn pending(&self) -> usize {
        self.awaiting.len()
    }

    /// Proposal counter; persist it to keep transaction ids unique across
    /// process restarts.
    pub fn nonce(&self) -> u64 {
        self.nonce
    }

    /// Continues after peers were loaded with [`Network::load_peer`]: points
    /// the orderers at the loaded chain and restores the proposal counter.
    pub fn resume(&mut self, nonce: u64) {
        self.network.resume_orderers();
        self.nonce = self.nonce.max(nonce);
    }

    /// Signs a request and checks it against `policy`.
    fn authorized(&self, caller: &Identity, op: &str, body: &[u8], policy: &Policy) -> bool {
        let payload = request_payload(op, &caller.certificate, body);
        let sig: Signature = caller.sign(&payload);
        self.network.chain_config().msp.evaluate_policy(
            policy,
            &[(caller.certificate.clone(), sig)],
            &payload,
        )
    }

    fn prepare(&mut self, caller: &Identity, record: &PassiveDnsRecord) -> Result<Prepared, TxError> {
        record
            .validate()
            .map_err(|e| TxError::InvalidRecord(e.to_string()))?;
        if record.chain_id != self.network.config().chain_id {
            return Err(TxError::InvalidRecord(format!(
                "chain_id {:?} does not name this chain",
                record.chain_id
            )));
        }
        let body = record.to_json();
        let chain = self.network.chain_config();
        if !self.authorized(caller, "store_record", body.as_bytes(), &chain.writers) {
            return Err(TxError::PolicyViolation("caller may not write to the chain".into()));
        }
        let collection = chain
            .collection(&self.collection)
            .expect("collection configured");
        if !self.authorized(caller, "store_record", body.as_bytes(), &collection.write_policy) {
            return Err(TxError::PolicyViolation(format!(
                "caller may not write to collection {}",
                self.collection
            )));
        }
        let (public, private) = record.split();
        let payload = PrivatePayload {
            collection: self.collection.clone(),
            key: public.record_id,
            value: private,
        };
        self.nonce += 1;
        let proposal = Proposal::new(
            caller.certificate.clone(),
            self.network.now_ms(),
            self.nonce,
            vec![PublicWrite {
                key: public.record_id,
                value: public,
            }],
            vec![PrivateDigest {
                collection: payload.collection.clone(),
                key: payload.key,
                digest: payload.digest(),
            }],
        );
        Ok(Prepared {
            tx_id: proposal.tx_id,
            client: NodeId(caller.certificate.label()),
            proposal,
            payload,
        })
    }

    /// One live peer per organization, in configuration order.
    fn endorsers(&self) -> Vec<NodeId> {
        let mut seen = BTreeSet::new();
        self.network
            .peer_ids()
            .iter()
            .filter(|p| self.network.is_live(p))
            .filter(|p| seen.insert(p.org().to_string()))
            .cloned()
            .collect()
    }

    /// Returns `false` when no peer is up to endorse.
    fn request_endorsements(&mut self, prepared: &[Prepared]) -> bool {
        let endorsers = self.endorsers();
        if endorsers.is_empty() {
            return false;
        }
        let chain = self.network.chain_config().clone();
        for p in prepared {
            for peer in &endorsers {
                let member = chain
                    .collection(&p.payload.collection)
                    .is_some_and(|c| c.is_member(peer.org()));
                let private = if member {
                    vec![p.payload.clone()]
                } else {
                    Vec::new()
                };
                let msg = Message::EndorseRequest {
                    proposal: p.proposal.clone(),
                    private,
                };
                self.network.send(&p.client, peer, msg);
            }
        }
        self.network.run();
        true
    }

    fn collect_endorsements(&mut self, prepared: Vec<Prepared>, caller: &Identity) -> Vec<Result<Transaction, TxError>> {
        let client = NodeId(caller.certificate.label());
        let mut endorsements: BTreeMap<TxId, Vec<_>> = BTreeMap::new();
        let mut refusals: BTreeMap<TxId, Vec<String>> = BTreeMap::new();
        for (from, msg) in self.network.take_inbox(&client) {
            match msg {
                Message::Endorsed { tx_id, endorsement } => {
                    endorsements.entry(tx_id).or_default().push(endorsement)
                }
                Message::EndorseRefused { tx_id, reason } => {
                    refusals.entry(tx_id).or_default().push(format!("{from}: {reason}"))
                }
                _ => {}
            }
        }
        let chain = self.network.chain_config();
        prepared
            .into_iter()
            .map(|p| {
                let got = endorsements.remove(&p.tx_id).unwrap_or_default();
                let bytes = p.proposal.signing_bytes();
                let sigs: Vec<_> = got
                    .iter()
                    .map(|e| (e.endorser.clone(), e.signature))
                    .collect();
                if !chain.msp.evaluate_policy(&chain.endorsement, &sigs, &bytes) {
                    let why = refusals.remove(&p.tx_id).unwrap_or_default();
                    let why = if why.is_empty() {
                        "no valid endorsement".to_string()
                    } else {
                        why.join("; ")
                    };
                    return Err(TxError::EndorsementFailure(why));
                }
                Ok(Transaction::assemble(caller, p.proposal, got))
            })
            .collect()
    }

    /// Sends every awaiting transaction to the live orderer, if any.
    fn submit_awaiting(&mut self) -> bool {
        let Some(orderer) = self.network.active_orderer().cloned() else {
            return false;
        };
        for tx in self.awaiting.values() {
            let client = NodeId(tx.creator().label());
            self.network.send(&client, &orderer, Message::Submit { tx: tx.clone() });
        }
        !self.awaiting.is_empty()
    }

    fn committed_peer(&self) -> Option<&PeerNode> {
        let height = self.network.delivered_height();
        self.network
            .peers()
            .filter(|p| p.is_live())
            .find(|p| p.height() == Some(height))
            .or_else(|| self.network.peers().filter(|p| p.is_live()).max_by_key(|p| p.height()))
    }

    /// Resolves awaiting transactions against the ledger and the clients'
    /// rejection notices.
    fn settle(&mut self, tx_ids: &[TxId], clients: &BTreeSet<NodeId>) -> BTreeMap<TxId, TxStatus> {
        let mut out = BTreeMap::new();
        for client in clients {
            for (_, msg) in self.network.take_inbox(client) {
                if let Message::SubmitRejected { tx_id, reason } = msg {
                    self.awaiting.remove(&tx_id);
                    out.insert(tx_id, TxStatus::Rejected { reason });
                }
            }
        }
        let peer = self.committed_peer();
        let mut done = Vec::new();
        for tx_id in self.awaiting.keys() {
            if let Some(loc) = peer.and_then(|p| p.ledger().tx_location(tx_id)) {
                let status = match loc.validity {
                    TxValidity::Valid => TxStatus::Committed {
                        block_height: loc.height,
                    },
                    other => TxStatus::Rejected {
                        reason: format!("{other:?}"),
                    },
                };
                out.insert(*tx_id, status);
                done.push(*tx_id);
            }
        }
        for tx_id in done {
            self.awaiting.remove(&tx_id);
        }
        for tx_id in tx_ids {
            out.entry(*tx_id).or_insert(TxStatus::Queued);
        }
        out
    }

    /// Stores one observation: split, endorse, order, commit.
    pub fn store_record(&mut self, caller: &Identity, record: &PassiveDnsRecord) -> Result<TxResult, TxError> {
        self.store_batch(caller, std::slice::from_ref(record))
            .pop()
            .expect("one result per record")
    }

    /// Stores many observations, letting the orderer cut full blocks.
    pub fn store_batch(&mut self, caller: &Identity, records: &[PassiveDnsRecord]) -> Vec<Result<TxResult, TxError>> {
        let mut results: Vec<Option<Result<TxResult, TxError>>> = Vec::with_capacity(records.len());
        let mut prepared = Vec::new();
        let mut slots = Vec::new();
        for (i, r) in records.iter().enumerate() {
            match self.prepare(caller, r) {
                Ok(p) => {
                    prepared.push(p);
                    slots.push(i);
                    results.push(None);
                }
                Err(e) => results.push(Some(Err(e))),
            }
        }
        if !prepared.is_empty() && !self.request_endorsements(&prepared) {
            for &i in &slots {
                results[i] = Some(Err(TxError::NoLivePeer));
            }
            return results.into_iter().map(|r| r.expect("filled")).collect();
        }
        let txs = self.collect_endorsements(prepared, caller);
        let mut tx_ids = Vec::new();
        let mut tx_slots = Vec::new();
        for (i, tx) in slots.into_iter().zip(txs) {
            match tx {
                Ok(tx) => {
                    tx_ids.push(tx.tx_id());
                    tx_slots.push(i);
                    self.awaiting.insert(tx.tx_id(), tx);
                }
                Err(e) => results[i] = Some(Err(e)),
            }
        }
        if self.submit_awaiting() {
            self.network.run();
        }
        let clients = BTreeSet::from([NodeId(caller.certificate.label())]);
        let statuses = self.settle(&tx_ids, &clients);
        for (tx_id, i) in tx_ids.into_iter().zip(tx_slots) {
            let status = statuses.get(&tx_id).cloned().unwrap_or(TxStatus::Queued);
            results[i] = Some(Ok(TxResult { tx_id, status }));
        }
        results.into_iter().map(|r| r.expect("filled")).collect()
    }

    /// Injects a fault, then lets the network settle and resubmits anything
    /// still awaiting order.
    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), TxError> {
        self.network.inject_fault(fault)?;
        self.network.run();
        self.flush();
        Ok(())
    }

    /// Resubmits awaiting transactions and returns those that committed.
    pub fn flush(&mut self) -> Vec<TxResult> {
        if self.awaiting.is_empty() {
            return Vec::new();
        }
        let clients: BTreeSet<NodeId> = self
            .awaiting
            .values()
            .map(|t| NodeId(t.creator().label()))
            .collect();
        if self.submit_awaiting() {
            self.network.run();
        }
        self.settle(&[], &clients)
            .into_iter()
            .map(|(tx_id, status)| TxResult { tx_id, status })
            .collect()
    }

    /// A live peer to answer reads, preferring the caller's organization
    /// and restricted to `orgs` when given.
    fn reader(&self, caller_org: &str, orgs: Option<&BTreeSet<String>>) -> Option<&PeerNode> {
        let allowed = |p: &&PeerNode| p.is_live() && orgs.is_none_or(|o| o.contains(p.org()));
        self.network
            .peers()
            .filter(allowed)
            .find(|p| p.org() == caller_org)
            .or_else(|| self.network.peers().find(allowed))
    }

    pub fn query_public(&self, caller: &Identity, selector: &Selector) -> Result<Vec<PublicRecord>, TxError> {
        let readers = &self.network.chain_config().readers;
        let body = format!("{selector:?}");
        if !self.authorized(caller, "query_public", body.as_bytes(), readers) {
            return Err(TxError::AccessDenied);
        }
        let peer = self
            .reader(&caller.certificate.org, None)
            .ok_or(TxError::NoLivePeer)?;
        Ok(peer
            .ledger()
            .rich_query(selector)
            .into_iter()
            .map(|(_, r)| r)
            .collect())
    }

    /// Parses a JSON selector (`{"domain": "example.com", "ttl": {"$gte": 60}}`)
    /// and runs it.
    pub fn query_public_json(&self, caller: &Identity, selector: &str) -> Result<Vec<PublicRecord>, TxError> {
        let selector = Selector::parse_json(selector)?;
        self.query_public(caller, &selector)
    }

    pub fn query_private(&self, caller: &Identity, record_id: &RecordId) -> Result<PrivateRecord, TxError> {
        let chain = self.network.chain_config();
        let collection = chain
            .collection(&self.collection)
            .expect("collection configured");
        let body = record_id.to_hex();
        if !self.authorized(caller, "query_private", body.as_bytes(), &collection.read_policy) {
            return Err(TxError::AccessDenied);
        }
        let peer = self
            .reader(&caller.certificate.org, Some(&collection.member_orgs))
            .ok_or(TxError::NoLivePeer)?;
        let ledger = peer.ledger();
        if let Some(value) = ledger.get_private(&self.collection, record_id) {
            return Ok(value.clone());
        }
        match (ledger.private_digest(&self.collection, record_id), ledger.height()) {
            (Some(d), Some(h)) if collection.is_expired(d.height, h) => Err(TxError::Purged),
            _ => Err(TxError::NotFound),
        }
    }

    pub fn get_history(&self, caller: &Identity, record_id: &RecordId) -> Result<Vec<HistoryEntry>, TxError> {
        let readers = &self.network.chain_config().readers;
        let body = record_id.to_hex();
        if !self.authorized(caller, "get_history", body.as_bytes(), readers) {
            return Err(TxError::AccessDenied);
        }
        let peer = self
            .reader(&caller.certificate.org, None)
            .ok_or(TxError::NoLivePeer)?;
        let history = peer.ledger().history(record_id);
        if history.is_empty() {
            return Err(TxError::NotFound);
        }
        Ok(history.to_vec())
    }
}
