use std::fmt;

use serde::{Deserialize, Serialize};

use crate::collector::{PrivateRecord, PublicRecord, RecordId};
use crate::digest::{Digest, FieldHasher};
use crate::identity::{Certificate, Identity, Signature};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub Digest);

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", self.0.to_hex())
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicWrite {
    pub key: RecordId,
    pub value: PublicRecord,
}

/// On-chain commitment to a private payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateDigest {
    pub collection: String,
    pub key: RecordId,
    pub digest: Digest,
}

/// Off-chain private payload, shipped only to collection members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivatePayload {
    pub collection: String,
    pub key: RecordId,
    pub value: PrivateRecord,
}

/// Digest of a private value: SHA-256 over its canonical JSON.
pub fn private_digest(value: &PrivateRecord) -> Digest {
    Digest::of(&serde_json::to_vec(value).expect("private record serializes"))
}

impl PrivatePayload {
    pub fn digest(&self) -> Digest {
        private_digest(&self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endorsement {
    pub endorser: Certificate,
    pub signature: Signature,
}

/// The part of a transaction that endorsers and the creator sign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proposal {
    pub tx_id: TxId,
    pub creator: Certificate,
    pub timestamp: u64,
    pub public_writes: Vec<PublicWrite>,
    pub private_digests: Vec<PrivateDigest>,
}

impl Proposal {
    /// Builds a proposal whose id is derived from its content and `nonce`.
    pub fn new(
        creator: Certificate,
        timestamp: u64,
        nonce: u64,
        public_writes: Vec<PublicWrite>,
        private_digests: Vec<PrivateDigest>,
    ) -> Self {
        let mut h = FieldHasher::new("pdns/tx-id/v1");
        h.field(&creator.fingerprint().0)
            .field(&timestamp.to_be_bytes())
            .field(&nonce.to_be_bytes())
            .field(&serde_json::to_vec(&public_writes).expect("writes serialize"))
            .field(&serde_json::to_vec(&private_digests).expect("digests serialize"));
        Proposal {
            tx_id: TxId(h.finish()),
            creator,
            timestamp,
            public_writes,
            private_digests,
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("proposal serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub proposal: Proposal,
    /// Creator's signature over the proposal.
    pub creator_signature: Signature,
    pub endorsements: Vec<Endorsement>,
}

impl Transaction {
    pub fn assemble(creator: &Identity, proposal: Proposal, endorsements: Vec<Endorsement>) -> Self {
        let creator_signature = creator.sign(&proposal.signing_bytes());
        Transaction {
            proposal,
            creator_signature,
            endorsements,
        }
    }

    pub fn tx_id(&self) -> TxId {
        self.proposal.tx_id
    }

    pub fn creator(&self) -> &Certificate {
        &self.proposal.creator
    }
}

/// A block. Only `number`, `prev_hash` and `data_hash` enter the header
/// digest; `data_hash` commits to the transaction list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub number: u64,
    pub prev_hash: Digest,
    pub data_hash: Digest,
    pub transactions: Vec<Transaction>,
}

pub fn data_hash(transactions: &[Transaction]) -> Digest {
    Digest::of(&serde_json::to_vec(transactions).expect("transactions serialize"))
}

impl Block {
    pub fn new(number: u64, prev_hash: Digest, transactions: Vec<Transaction>) -> Self {
        Block {
            number,
            prev_hash,
            data_hash: data_hash(&transactions),
            transactions,
        }
    }

    pub fn genesis() -> Self {
        Block::new(0, Digest::ZERO, Vec::new())
    }

    /// Fixed-width header encoding: big-endian number, prev_hash, data_hash.
    pub fn header_bytes(&self) -> [u8; 72] {
        let mut out = [0; 72];
        out[..8].copy_from_slice(&self.number.to_be_bytes());
        out[8..40].copy_from_slice(&self.prev_hash.0);
        out[40..].copy_from_slice(&self.data_hash.0);
        out
    }

    pub fn hash(&self) -> Digest {
        Digest::of(&self.header_bytes())
    }

    pub fn data_hash_matches(&self) -> bool {
        data_hash(&self.transactions) == self.data_hash
    }
}

/// Checks every link of `chain`, returning the first height whose number,
/// data hash or previous-hash link is wrong.
pub fn validate_chain(chain: &[Block]) -> Result<(), u64> {
    let mut prev = Digest::ZERO;
    for (height, block) in chain.iter().enumerate() {
        let height = height as u64;
        if block.number != height || block.prev_hash != prev || !block.data_hash_matches() {
            return Err(height);
        }
        prev = block.hash();
    }
    Ok(())
}
