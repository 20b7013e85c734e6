use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::config::NodeId;
use super::message::{CommitPath, Message, PrivateKeyRef, TranscriptEvent};
use super::Ctx;
use crate::identity::Identity;
use crate::ledger::{Block, Endorsement, Ledger, PrivatePayload, Proposal, TxId};

/// Outcome of the most recent anti-entropy round on one peer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncReport {
    /// Blocks appended from peer responses.
    pub fetched: u64,
    /// (responder, height) of every block rejected for a broken link.
    pub rejected: Vec<(NodeId, u64)>,
    pub complete: bool,
}

#[derive(Debug, Clone)]
struct SyncState {
    target: u64,
    responder: NodeId,
    tried: BTreeSet<NodeId>,
}

/// A peer: one ledger replica plus the volatile state of its gossip and
/// endorsement roles. Only the ledger survives a crash.
#[derive(Debug, Clone)]
pub struct PeerNode {
    id: NodeId,
    identity: Identity,
    ledger: Ledger,
    pub(super) live: bool,
    suspects: BTreeSet<NodeId>,
    tamper_height: Option<u64>,
    future: BTreeMap<u64, Block>,
    pool: Vec<PrivatePayload>,
    transient: HashMap<TxId, Vec<PrivatePayload>>,
    sync: Option<SyncState>,
    report: SyncReport,
}

impl PeerNode {
    pub(super) fn new(identity: Identity, ledger: Ledger) -> Self {
        PeerNode {
            id: NodeId(identity.certificate.label()),
            identity,
            ledger,
            live: true,
            suspects: BTreeSet::new(),
            tamper_height: None,
            future: BTreeMap::new(),
            pool: Vec::new(),
            transient: HashMap::new(),
            sync: None,
            report: SyncReport::default(),
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn org(&self) -> &str {
        &self.identity.certificate.org
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    pub fn height(&self) -> Option<u64> {
        self.ledger.height()
    }

    pub fn suspects(&self) -> &BTreeSet<NodeId> {
        &self.suspects
    }

    pub fn last_sync(&self) -> &SyncReport {
        &self.report
    }

    pub fn is_syncing(&self) -> bool {
        self.sync.is_some()
    }

    pub(super) fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    /// Serve a corrupted copy of block `height` to anti-entropy requests.
    pub(super) fn set_tamper(&mut self, height: Option<u64>) {
        self.tamper_height = height;
    }

    pub(super) fn crash(&mut self) {
        self.live = false;
        self.suspects.clear();
        self.future.clear();
        self.pool.clear();
        self.transient.clear();
        self.sync = None;
    }

    fn next_height(&self) -> u64 {
        self.ledger.height().map_or(0, |h| h + 1)
    }

    pub(super) fn handle(&mut self, from: &NodeId, msg: Message, ctx: &mut Ctx) {
        match msg {
            Message::EndorseRequest { proposal, private } => {
                let reply = self.endorse(from, proposal, private);
                ctx.send(from.clone(), reply);
            }
            Message::Deliver { block } => self.on_deliver(from, block, ctx),
            Message::BlockRequest { from: lo, to: hi } => {
                let blocks = self.serve_blocks(lo, hi);
                ctx.send(from.clone(), Message::BlockResponse { blocks });
            }
            Message::BlockResponse { blocks } => self.on_blocks(from, blocks, ctx),
            Message::PrivatePush { payloads } | Message::PrivateResponse { payloads } => {
                self.accept_private(payloads)
            }
            Message::PrivateRequest { wanted } => {
                let requester_org = from.org();
                let payloads: Vec<PrivatePayload> = wanted
                    .iter()
                    .filter(|w| {
                        self.ledger
                            .config()
                            .collection(&w.collection)
                            .is_some_and(|c| c.is_member(requester_org))
                    })
                    .filter_map(|w| self.ledger.private_payload(&w.collection, &w.key))
                    .collect();
                if !payloads.is_empty() {
                    ctx.send(from.clone(), Message::PrivateResponse { payloads });
                }
            }
            _ => {}
        }
    }

    fn endorse(&mut self, from: &NodeId, proposal: Proposal, private: Vec<PrivatePayload>) -> Message {
        let tx_id = proposal.tx_id;
        let refuse = |reason: &str| Message::EndorseRefused {
            tx_id,
            reason: reason.to_string(),
        };
        let config = self.ledger.config();
        if !config.msp.validate(&proposal.creator) {
            return refuse("creator certificate does not validate");
        }
        if proposal.creator.label() != from.0 {
            return refuse("creator does not match sender");
        }
        if self.ledger.tx_location(&tx_id).is_some() {
            return refuse("duplicate transaction id");
        }
        let writes_ok = proposal
            .public_writes
            .iter()
            .all(|w| w.key == w.value.record_id && w.value.validate().is_ok());
        if !writes_ok {
            return refuse("invalid public write");
        }
        let mut keep = Vec::new();
        for d in &proposal.private_digests {
            let Some(collection) = config.collection(&d.collection) else {
                return refuse("unknown collection");
            };
            if !collection.is_member(self.org()) {
                continue;
            }
            let payload = private
                .iter()
                .find(|p| p.collection == d.collection && p.key == d.key && p.digest() == d.digest);
            match payload {
                Some(p) => keep.push(p.clone()),
                None => return refuse("private payload does not match digest"),
            }
        }
        if keep.len() != private.len() {
            return refuse("unexpected private payload");
        }
        let signature = self.identity.sign(&proposal.signing_bytes());
        if !keep.is_empty() {
            self.transient.insert(tx_id, keep);
        }
        Message::Endorsed {
            tx_id,
            endorsement: Endorsement {
                endorser: self.identity.certificate.clone(),
                signature,
            },
        }
    }

    fn serve_blocks(&self, lo: u64, hi: u64) -> Vec<Block> {
        let top = match self.ledger.height() {
            Some(h) => hi.min(h),
            None => return Vec::new(),
        };
        (lo..=top)
            .filter_map(|h| self.ledger.block(h).cloned())
            .map(|mut b| {
                if self.tamper_height == Some(b.number) {
                    match b.transactions.first_mut() {
                        Some(tx) => tx.proposal.timestamp ^= 1,
                        None => b.prev_hash.0[0] ^= 1,
                    }
                }
                b
            })
            .collect()
    }

    fn on_deliver(&mut self, from: &NodeId, block: Block, ctx: &mut Ctx) {
        let next = self.next_height();
        if block.number < next {
            return;
        }
        if block.number > next {
            let target = block.number - 1;
            self.future.insert(block.number, block);
            if self.sync.is_none() {
                self.start_sync(target, ctx);
            }
            return;
        }
        if self.ledger.check_next(&block).is_err() {
            ctx.event(TranscriptEvent::Rejected {
                at_ms: ctx.now,
                peer: self.id.clone(),
                responder: from.clone(),
                height: block.number,
            });
            return;
        }
        self.append(block, CommitPath::Delivery, ctx);
    }

    /// Appends a block already checked by `check_next`, then any buffered
    /// successors.
    fn append(&mut self, block: Block, via: CommitPath, ctx: &mut Ctx) {
        let mut candidates = self.pool.clone();
        for tx in &block.transactions {
            if let Some(p) = self.transient.get(&tx.tx_id()) {
                candidates.extend(p.iter().cloned());
            }
        }
        let txs: Vec<TxId> = block.transactions.iter().map(|t| t.tx_id()).collect();
        let height = match self.ledger.append_block(block, &candidates) {
            Ok(h) => h,
            Err(_) => return,
        };
        ctx.event(TranscriptEvent::Committed {
            at_ms: ctx.now,
            peer: self.id.clone(),
            height,
            via,
        });
        for tx_id in txs {
            let Some(payloads) = self.transient.remove(&tx_id) else {
                continue;
            };
            let valid = self
                .ledger
                .tx_location(&tx_id)
                .is_some_and(|l| l.height == height && l.validity.is_valid());
            if valid {
                self.disseminate(payloads, ctx);
            }
        }
        let ledger = &self.ledger;
        self.pool
            .retain(|p| ledger.private_digest(&p.collection, &p.key).is_none());

        let next = height + 1;
        self.future.retain(|&n, _| n >= next);
        if let Some(b) = self.future.remove(&next) {
            if self.ledger.check_next(&b).is_ok() {
                self.append(b, CommitPath::Delivery, ctx);
            }
        }
    }

    fn disseminate(&self, payloads: Vec<PrivatePayload>, ctx: &mut Ctx) {
        let config = self.ledger.config();
        let targets: Vec<NodeId> = ctx
            .peers
            .iter()
            .filter(|p| **p != self.id)
            .cloned()
            .collect();
        for target in targets {
            let for_target: Vec<PrivatePayload> = payloads
                .iter()
                .filter(|p| {
                    config
                        .collection(&p.collection)
                        .is_some_and(|c| c.is_member(target.org()))
                })
                .cloned()
                .collect();
            if !for_target.is_empty() {
                ctx.send(target, Message::PrivatePush { payloads: for_target });
            }
        }
    }

    fn accept_private(&mut self, payloads: Vec<PrivatePayload>) {
        for p in payloads {
            if !self.ledger.is_member(&p.collection) {
                continue;
            }
            if self.ledger.reconcile_private(&p) {
                continue;
            }
            if self.ledger.private_digest(&p.collection, &p.key).is_none() {
                // block not committed here yet
                self.pool.push(p);
            }
        }
    }

    fn pick_responder(&self, tried: &BTreeSet<NodeId>, ctx: &Ctx) -> Option<NodeId> {
        ctx.peers
            .iter()
            .find(|p| {
                **p != self.id
                    && ctx.live.contains(*p)
                    && !self.suspects.contains(*p)
                    && !tried.contains(*p)
            })
            .cloned()
    }

    /// Starts fetching blocks up to `target` from other peers. Returns
    /// `false` when nothing needs fetching or no peer can serve.
    pub(super) fn start_sync(&mut self, target: u64, ctx: &mut Ctx) -> bool {
        self.report = SyncReport::default();
        if self.ledger.height().is_some_and(|h| h >= target) {
            self.report.complete = true;
            return false;
        }
        let tried = BTreeSet::new();
        let Some(responder) = self.pick_responder(&tried, ctx) else {
            return false;
        };
        ctx.send(
            responder.clone(),
            Message::BlockRequest {
                from: self.next_height(),
                to: target,
            },
        );
        self.sync = Some(SyncState {
            target,
            responder,
            tried,
        });
        true
    }

    fn on_blocks(&mut self, from: &NodeId, blocks: Vec<Block>, ctx: &mut Ctx) {
        let Some(mut sync) = self.sync.take() else {
            return;
        };
        if sync.responder != *from {
            self.sync = Some(sync);
            return;
        }
        for block in blocks {
            let next = self.next_height();
            if block.number < next {
                continue;
            }
            if block.number > next {
                break;
            }
            if self.ledger.check_next(&block).is_err() {
                self.suspects.insert(from.clone());
                self.report.rejected.push((from.clone(), block.number));
                ctx.event(TranscriptEvent::Rejected {
                    at_ms: ctx.now,
                    peer: self.id.clone(),
                    responder: from.clone(),
                    height: block.number,
                });
                break;
            }
            self.report.fetched += 1;
            self.append(block, CommitPath::Gossip, ctx);
        }
        if self.ledger.height().is_some_and(|h| h >= sync.target) {
            self.report.complete = true;
            self.request_missing_private(ctx);
            return;
        }
        sync.tried.insert(from.clone());
        if let Some(next) = self.pick_responder(&sync.tried, ctx) {
            ctx.send(
                next.clone(),
                Message::BlockRequest {
                    from: self.next_height(),
                    to: sync.target,
                },
            );
            sync.responder = next;
            self.sync = Some(sync);
        }
    }

    /// Asks live member peers for private payloads this replica lacks.
    /// Returns whether any request was sent.
    pub(super) fn request_missing_private(&mut self, ctx: &mut Ctx) -> bool {
        let missing = self.ledger.missing_private();
        if missing.is_empty() {
            return false;
        }
        let config = self.ledger.config();
        let mut sent = false;
        let targets: Vec<NodeId> = ctx
            .peers
            .iter()
            .filter(|p| **p != self.id && ctx.live.contains(*p))
            .cloned()
            .collect();
        for target in targets {
            let wanted: Vec<PrivateKeyRef> = missing
                .iter()
                .filter(|m| {
                    config
                        .collection(&m.collection)
                        .is_some_and(|c| c.is_member(target.org()))
                })
                .map(|m| PrivateKeyRef {
                    collection: m.collection.clone(),
                    key: m.key,
                })
                .collect();
            if !wanted.is_empty() {
                ctx.send(target, Message::PrivateRequest { wanted });
                sent = true;
            }
        }
        sent
    }
}
