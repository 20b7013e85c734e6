use std::collections::HashSet;

use super::config::{BatchConfig, NodeId};
use super::message::{Message, Replication};
use super::Ctx;
use crate::digest::Digest;
use crate::identity::{Identity, Msp};
use crate::ledger::{Block, Transaction, TxId};

/// Batches submitted transactions into blocks. Standbys mirror the active
/// orderer's queue and tip so a failover resumes at the next height.
#[derive(Debug, Clone)]
pub struct OrdererNode {
    id: NodeId,
    identity: Identity,
    msp: Msp,
    batch: BatchConfig,
    pending: Vec<Transaction>,
    ordered: HashSet<TxId>,
    height: u64,
    tip: Digest,
    batch_seq: u64,
    pub(super) active: bool,
    pub(super) live: bool,
}

impl OrdererNode {
    pub(super) fn new(identity: Identity, msp: Msp, batch: BatchConfig, genesis: &Block) -> Self {
        OrdererNode {
            id: NodeId(identity.certificate.label()),
            identity,
            msp,
            batch,
            pending: Vec::new(),
            ordered: HashSet::new(),
            height: genesis.number,
            tip: genesis.hash(),
            batch_seq: 0,
            active: false,
            live: true,
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    /// Height of the last block cut.
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Adopt an existing chain tip (restart from disk).
    pub(super) fn resume_at(&mut self, height: u64, tip: Digest, ordered: impl IntoIterator<Item = TxId>) {
        self.height = height;
        self.tip = tip;
        self.ordered = ordered.into_iter().collect();
    }

    pub(super) fn promote(&mut self, ctx: &mut Ctx) {
        self.active = true;
        if !self.pending.is_empty() {
            self.arm_timer(ctx);
        }
    }

    fn arm_timer(&self, ctx: &mut Ctx) {
        ctx.timer(
            self.id.clone(),
            self.batch.max_wait_ms,
            Message::CutTimer {
                batch: self.batch_seq,
            },
        );
    }

    pub(super) fn handle(&mut self, from: &NodeId, msg: Message, ctx: &mut Ctx) {
        match msg {
            Message::Submit { tx } if self.active => self.on_submit(from, tx, ctx),
            Message::CutTimer { batch } if self.active => {
                if batch == self.batch_seq && !self.pending.is_empty() {
                    self.cut(ctx);
                }
            }
            Message::Replicate { event } if !self.active => match event {
                Replication::Enqueued { tx } => {
                    if self.ordered.insert(tx.tx_id()) {
                        self.pending.push(tx);
                    }
                }
                Replication::Cut {
                    number,
                    hash,
                    count,
                } => {
                    self.pending.drain(..count.min(self.pending.len()));
                    self.height = number;
                    self.tip = hash;
                    self.batch_seq += 1;
                }
            },
            _ => {}
        }
    }

    fn on_submit(&mut self, from: &NodeId, tx: Transaction, ctx: &mut Ctx) {
        if !self.msp.validate(tx.creator()) {
            ctx.send(
                from.clone(),
                Message::SubmitRejected {
                    tx_id: tx.tx_id(),
                    reason: "creator certificate does not validate".into(),
                },
            );
            return;
        }
        if !self.ordered.insert(tx.tx_id()) {
            return;
        }
        self.replicate(Replication::Enqueued { tx: tx.clone() }, ctx);
        self.pending.push(tx);
        if self.pending.len() >= self.batch.max_count {
            self.cut(ctx);
        } else if self.pending.len() == 1 {
            self.arm_timer(ctx);
        }
    }

    fn cut(&mut self, ctx: &mut Ctx) {
        let count = self.pending.len().min(self.batch.max_count);
        let txs: Vec<Transaction> = self.pending.drain(..count).collect();
        let block = Block::new(self.height + 1, self.tip, txs);
        self.height = block.number;
        self.tip = block.hash();
        self.batch_seq += 1;
        self.replicate(
            Replication::Cut {
                number: self.height,
                hash: self.tip,
                count,
            },
            ctx,
        );
        let peers = ctx.peers;
        for peer in peers {
            ctx.send(peer.clone(), Message::Deliver { block: block.clone() });
        }
        if !self.pending.is_empty() {
            self.arm_timer(ctx);
        }
    }

    fn replicate(&self, event: Replication, ctx: &mut Ctx) {
        let orderers = ctx.orderers;
        for o in orderers {
            if *o != self.id {
                ctx.send(o.clone(), Message::Replicate { event: event.clone() });
            }
        }
    }
}
