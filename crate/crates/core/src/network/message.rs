use serde::{Deserialize, Serialize};

use super::config::NodeId;
use crate::collector::RecordId;
use crate::digest::Digest;
use crate::ledger::{Block, Endorsement, PrivatePayload, Proposal, Transaction, TxId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateKeyRef {
    pub collection: String,
    pub key: RecordId,
}

/// Orderer state mirrored to standbys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replication {
    Enqueued { tx: Transaction },
    Cut { number: u64, hash: Digest, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    /// Client → peer. `private` carries payloads only when the peer's
    /// organization is a member of their collection.
    EndorseRequest {
        proposal: Proposal,
        private: Vec<PrivatePayload>,
    },
    Endorsed {
        tx_id: TxId,
        endorsement: Endorsement,
    },
    EndorseRefused {
        tx_id: TxId,
        reason: String,
    },
    /// Client → orderer.
    Submit { tx: Transaction },
    SubmitRejected { tx_id: TxId, reason: String },
    /// Orderer → itself, after `max_wait`.
    CutTimer { batch: u64 },
    /// Active orderer → standby orderers.
    Replicate { event: Replication },
    /// Orderer → peer.
    Deliver { block: Block },
    /// Peer → peer anti-entropy: inclusive height range.
    BlockRequest { from: u64, to: u64 },
    BlockResponse { blocks: Vec<Block> },
    /// Member peer → member peer after committing a block it endorsed.
    PrivatePush { payloads: Vec<PrivatePayload> },
    PrivateRequest { wanted: Vec<PrivateKeyRef> },
    PrivateResponse { payloads: Vec<PrivatePayload> },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::EndorseRequest { .. } => "endorse_request",
            Message::Endorsed { .. } => "endorsed",
            Message::EndorseRefused { .. } => "endorse_refused",
            Message::Submit { .. } => "submit",
            Message::SubmitRejected { .. } => "submit_rejected",
            Message::CutTimer { .. } => "cut_timer",
            Message::Replicate { .. } => "replicate",
            Message::Deliver { .. } => "deliver",
            Message::BlockRequest { .. } => "block_request",
            Message::BlockResponse { .. } => "block_response",
            Message::PrivatePush { .. } => "private_push",
            Message::PrivateRequest { .. } => "private_request",
            Message::PrivateResponse { .. } => "private_response",
        }
    }
}

/// Fault-injection commands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", content = "node", rename_all = "snake_case")]
pub enum Fault {
    Crash(NodeId),
    Recover(NodeId),
    OrdererFailover,
}

/// One line of the scenario transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Message {
        seq: u64,
        at_ms: u64,
        from: NodeId,
        to: NodeId,
        message: Message,
    },
    Fault {
        at_ms: u64,
        #[serde(flatten)]
        fault: Fault,
    },
    /// A peer rejected a block served during anti-entropy.
    Rejected {
        at_ms: u64,
        peer: NodeId,
        responder: NodeId,
        height: u64,
    },
    Committed {
        at_ms: u64,
        peer: NodeId,
        height: u64,
        via: CommitPath,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitPath {
    Delivery,
    Gossip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLine {
    /// Destination of a message line; `None` for non-message events.
    pub to: Option<NodeId>,
    pub json: String,
}

impl TranscriptLine {
    pub fn new(event: &TranscriptEvent) -> Self {
        let to = match event {
            TranscriptEvent::Message { to, .. } => Some(to.clone()),
            _ => None,
        };
        TranscriptLine {
            to,
            json: serde_json::to_string(event).expect("transcript event serializes"),
        }
    }
}
