//! Deterministic in-process network: peers, orderers and clients exchange
//! [`Message`]s over a simulated bus. Every link delay is drawn from a
//! seeded generator, links are FIFO, and each node handles one message at a
//! time, so a run is a pure function of the config, the seed and the
//! sequence of API calls.
//!
//! Messages addressed to a crashed node are held and handed over when it
//! recovers; a recovering peer first catches up through anti-entropy.

mod config;
mod message;
mod orderer;
mod peer;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{
    BatchConfig, CollectionSpec, ConfigError, LinkConfig, NetworkConfig, NodeId, NodeSpec,
    OrgSpec, DEFAULT_COLLECTION,
};
pub use message::{
    CommitPath, Fault, Message, PrivateKeyRef, Replication, TranscriptEvent, TranscriptLine,
};
pub use orderer::OrdererNode;
pub use peer::{PeerNode, SyncReport};

use crate::identity::{CertificateAuthority, Identity, IdentityError, PublicKey, Role};
use crate::ledger::{Block, ChainConfig, Ledger, LedgerError, PrivatePayload};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no valid {role:?} identity for {node}")]
    MissingIdentity { node: NodeId, role: Role },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is down")]
    NodeDown(NodeId),
    #[error("no live peer can serve {0}")]
    NoLivePeer(NodeId),
    #[error("{responder} served a tampered block {height} to {peer}")]
    TamperedBlockFromPeer {
        peer: NodeId,
        responder: NodeId,
        height: u64,
    },
    #[error("no live standby orderer")]
    NoStandbyOrderer,
    #[error("chain already initialized")]
    AlreadyInitialized,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Issues a fresh identity for every node and client the topology names.
pub fn enroll_topology<R: RngCore + CryptoRng>(
    config: &NetworkConfig,
    ca: &mut CertificateAuthority,
    rng: &mut R,
) -> Result<BTreeMap<NodeId, Identity>, IdentityError> {
    config
        .node_specs()
        .into_iter()
        .map(|s| Ok((s.id(), ca.enroll(&s.subject, &s.org, s.role, rng)?)))
        .collect()
}

enum Delay {
    Link,
    Fixed(u64),
}

/// Per-dispatch view handed to a node, collecting what it sends.
pub(crate) struct Ctx<'a> {
    pub now: u64,
    pub peers: &'a [NodeId],
    pub orderers: &'a [NodeId],
    pub live: &'a BTreeSet<NodeId>,
    out: Vec<(NodeId, Message, Delay)>,
    events: Vec<TranscriptEvent>,
}

impl Ctx<'_> {
    pub fn send(&mut self, to: NodeId, msg: Message) {
        self.out.push((to, msg, Delay::Link));
    }

    pub fn timer(&mut self, to: NodeId, delay_ms: u64, msg: Message) {
        self.out.push((to, msg, Delay::Fixed(delay_ms)));
    }

    pub fn event(&mut self, e: TranscriptEvent) {
        self.events.push(e);
    }
}

#[derive(Debug, Clone)]
struct Envelope {
    from: NodeId,
    to: NodeId,
    msg: Message,
}

pub struct Network {
    config: NetworkConfig,
    chain: ChainConfig,
    peer_ids: Vec<NodeId>,
    orderer_ids: Vec<NodeId>,
    peers: BTreeMap<NodeId, PeerNode>,
    orderers: BTreeMap<NodeId, OrdererNode>,
    live: BTreeSet<NodeId>,
    queue: BTreeMap<(u64, u64), Envelope>,
    link_clock: HashMap<(NodeId, NodeId), u64>,
    held: BTreeMap<NodeId, Vec<Envelope>>,
    deferred: BTreeMap<NodeId, Vec<Envelope>>,
    inbox: BTreeMap<NodeId, Vec<(NodeId, Message)>>,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    recording: bool,
    transcript: Vec<TranscriptLine>,
    anti_entropy_mark: BTreeMap<NodeId, (u64, usize)>,
    dropped_links: BTreeSet<(NodeId, NodeId)>,
}

impl Network {
    /// Builds the topology from already-issued identities keyed by node id.
    /// Nothing is committed until [`Network::init_genesis`] or
    /// [`Network::load_peer`].
    pub fn new(
        config: NetworkConfig,
        ca_public_key: PublicKey,
        identities: &BTreeMap<NodeId, Identity>,
    ) -> Result<Self, NetworkError> {
        config.validate()?;
        let chain = config.chain_config(ca_public_key);
        let identity_for = |spec: &NodeSpec| {
            let id = spec.id();
            identities
                .get(&id)
                .filter(|i| i.certificate.role == spec.role && chain.msp.validate(&i.certificate))
                .filter(|i| i.certificate.label() == id.0)
                .cloned()
                .ok_or(NetworkError::MissingIdentity {
                    node: id,
                    role: spec.role,
                })
        };
        let genesis = Block::genesis();
        let mut peers = BTreeMap::new();
        let mut orderers = BTreeMap::new();
        for spec in config.node_specs() {
            match spec.role {
                Role::Peer => {
                    let ledger = Ledger::new(chain.clone(), spec.org.clone());
                    peers.insert(spec.id(), PeerNode::new(identity_for(&spec)?, ledger));
                }
                Role::Orderer => {
                    let node = OrdererNode::new(
                        identity_for(&spec)?,
                        chain.msp.clone(),
                        config.batch,
                        &genesis,
                    );
                    orderers.insert(spec.id(), node);
                }
                _ => {}
            }
        }
        let peer_ids = config.peer_ids();
        let orderer_ids = config.orderer_ids();
        if let Some(first) = orderer_ids.first() {
            orderers.get_mut(first).expect("orderer built").active = true;
        }
        let live = peer_ids.iter().chain(&orderer_ids).cloned().collect();
        Ok(Network {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            chain,
            peer_ids,
            orderer_ids,
            peers,
            orderers,
            live,
            queue: BTreeMap::new(),
            link_clock: HashMap::new(),
            held: BTreeMap::new(),
            deferred: BTreeMap::new(),
            inbox: BTreeMap::new(),
            now: 0,
            seq: 0,
            recording: true,
            transcript: Vec::new(),
            anti_entropy_mark: BTreeMap::new(),
            dropped_links: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn chain_config(&self) -> &ChainConfig {
        &self.chain
    }

    pub fn now_ms(&self) -> u64 {
        self.now
    }

    /// Commits the genesis block on every peer.
    pub fn init_genesis(&mut self) -> Result<(), NetworkError> {
        if self.peers.values().any(|p| p.height().is_some()) {
            return Err(NetworkError::AlreadyInitialized);
        }
        for peer in self.peers.values_mut() {
            peer.ledger_mut().append_block(Block::genesis(), &[])?;
        }
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.peers.values().any(|p| p.height().is_some())
    }

    /// Replaces a peer's replica by replaying a persisted chain.
    pub fn load_peer(
        &mut self,
        id: &NodeId,
        blocks: Vec<Block>,
        private: &[PrivatePayload],
    ) -> Result<(), NetworkError> {
        let peer = self
            .peers
            .get_mut(id)
            .ok_or_else(|| NetworkError::UnknownNode(id.clone()))?;
        let org = peer.org().to_string();
        *peer.ledger_mut() = Ledger::replay(self.chain.clone(), org, blocks, private)?;
        Ok(())
    }

    /// Points every orderer at the longest peer chain, after loading peers.
    pub fn resume_orderers(&mut self) {
        let Some(longest) = self.peers.values().max_by_key(|p| p.height()) else {
            return;
        };
        let ledger = longest.ledger();
        let Some(height) = ledger.height() else {
            return;
        };
        let tip = ledger.tip_hash();
        let ordered: Vec<_> = ledger
            .blocks()
            .iter()
            .flat_map(|b| b.transactions.iter().map(|t| t.tx_id()))
            .collect();
        for o in self.orderers.values_mut() {
            o.resume_at(height, tip, ordered.iter().copied());
        }
    }

    pub fn peer_ids(&self) -> &[NodeId] {
        &self.peer_ids
    }

    pub fn orderer_ids(&self) -> &[NodeId] {
        &self.orderer_ids
    }

    pub fn peer(&self, id: &NodeId) -> Option<&PeerNode> {
        self.peers.get(id)
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerNode> {
        self.peers.values()
    }

    pub fn orderer(&self, id: &NodeId) -> Option<&OrdererNode> {
        self.orderers.get(id)
    }

    pub fn is_live(&self, id: &NodeId) -> bool {
        self.live.contains(id)
    }

    /// The orderer currently accepting submissions, if it is up.
    pub fn active_orderer(&self) -> Option<&NodeId> {
        self.orderers
            .values()
            .find(|o| o.active && o.live)
            .map(OrdererNode::id)
    }

    /// Height of the last block any orderer cut.
    pub fn delivered_height(&self) -> u64 {
        self.orderers.values().map(OrdererNode::height).max().unwrap_or(0)
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn transcript(&self) -> &[TranscriptLine] {
        &self.transcript
    }

    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|l| format!("{}\n", l.json))
            .collect()
    }

    pub fn clear_transcript(&mut self) {
        self.transcript.clear();
    }

    /// Makes `peer` serve a corrupted copy of block `height` to anti-entropy
    /// requests; `None` restores honest behavior.
    pub fn set_byzantine(&mut self, peer: &NodeId, height: Option<u64>) -> Result<(), NetworkError> {
        self.peers
            .get_mut(peer)
            .ok_or_else(|| NetworkError::UnknownNode(peer.clone()))?
            .set_tamper(height);
        Ok(())
    }

    /// Silently discards every message from `from` to `to` while `down`.
    pub fn set_link_down(&mut self, from: &NodeId, to: &NodeId, down: bool) {
        let link = (from.clone(), to.clone());
        if down {
            self.dropped_links.insert(link);
        } else {
            self.dropped_links.remove(&link);
        }
    }

    /// Sends a client-originated message.
    pub fn send(&mut self, from: &NodeId, to: &NodeId, msg: Message) {
        self.enqueue(from.clone(), to.clone(), msg, Delay::Link);
    }

    /// Drains messages delivered to a client.
    pub fn take_inbox(&mut self, client: &NodeId) -> Vec<(NodeId, Message)> {
        self.inbox.remove(client).unwrap_or_default()
    }

    fn record(&mut self, event: TranscriptEvent) {
        if self.recording {
            self.transcript.push(TranscriptLine::new(&event));
        }
    }

    fn enqueue(&mut self, from: NodeId, to: NodeId, msg: Message, delay: Delay) {
        if self.dropped_links.contains(&(from.clone(), to.clone())) {
            return;
        }
        let at = match delay {
            Delay::Fixed(d) => self.now + d,
            Delay::Link => {
                let d = self
                    .rng
                    .gen_range(self.config.link.min_delay_ms..=self.config.link.max_delay_ms);
                let last = self.link_clock.entry((from.clone(), to.clone())).or_insert(0);
                let at = (self.now + d).max(*last);
                *last = at;
                at
            }
        };
        self.seq += 1;
        if from != to && self.recording {
            let event = TranscriptEvent::Message {
                seq: self.seq,
                at_ms: at,
                from: from.clone(),
                to: to.clone(),
                message: msg.clone(),
            };
            self.record(event);
        }
        self.queue.insert((at, self.seq), Envelope { from, to, msg });
    }

    fn is_node(&self, id: &NodeId) -> bool {
        self.peers.contains_key(id) || self.orderers.contains_key(id)
    }

    /// Runs until no message or timer is pending and no live peer lags
    /// behind the orderer. Returns the number of messages handled.
    pub fn run(&mut self) -> usize {
        let mut handled = 0;
        loop {
            while let Some(((at, _), env)) = self.queue.pop_first() {
                self.now = self.now.max(at);
                self.dispatch(env);
                handled += 1;
            }
            if !self.anti_entropy() {
                return handled;
            }
        }
    }

    fn dispatch(&mut self, env: Envelope) {
        let Envelope { from, to, msg } = env;
        if self.is_node(&to) && !self.live.contains(&to) {
            self.held.entry(to.clone()).or_default().push(Envelope { from, to, msg });
            return;
        }
        let mut ctx = Ctx {
            now: self.now,
            peers: &self.peer_ids,
            orderers: &self.orderer_ids,
            live: &self.live,
            out: Vec::new(),
            events: Vec::new(),
        };
        let mut release = false;
        if let Some(peer) = self.peers.get_mut(&to) {
            peer.handle(&from, msg, &mut ctx);
            release = !peer.is_syncing();
        } else if let Some(orderer) = self.orderers.get_mut(&to) {
            orderer.handle(&from, msg, &mut ctx);
        } else {
            self.inbox.entry(to.clone()).or_default().push((from, msg));
        }
        self.flush(to.clone(), ctx.out, ctx.events);
        if release {
            self.release_deferred(&to);
        }
    }

    fn flush(&mut self, from: NodeId, out: Vec<(NodeId, Message, Delay)>, events: Vec<TranscriptEvent>) {
        for e in events {
            self.record(e);
        }
        for (to, msg, delay) in out {
            self.enqueue(from.clone(), to, msg, delay);
        }
    }

    fn release_deferred(&mut self, id: &NodeId) {
        if let Some(envs) = self.deferred.remove(id) {
            for env in envs {
                self.enqueue(env.from, id.clone(), env.msg, Delay::Link);
            }
        }
    }

    /// Starts catch-up on lagging live peers and private reconciliation on
    /// member peers with gaps. Each (peer, height, gap) state is acted on
    /// once, so an unservable gap does not spin.
    fn anti_entropy(&mut self) -> bool {
        let target = self.delivered_height();
        let mut any = false;
        for id in self.peer_ids.clone() {
            let peer = &self.peers[&id];
            if !peer.is_live() || peer.is_syncing() {
                continue;
            }
            let height = peer.height().unwrap_or(0);
            let missing = peer.ledger().missing_private_count();
            let mark = (height.max(target), if height < target { usize::MAX } else { missing });
            if self.anti_entropy_mark.get(&id) == Some(&mark) {
                continue;
            }
            self.anti_entropy_mark.insert(id.clone(), mark);
            let mut ctx = Ctx {
                now: self.now,
                peers: &self.peer_ids,
                orderers: &self.orderer_ids,
                live: &self.live,
                out: Vec::new(),
                events: Vec::new(),
            };
            let peer = self.peers.get_mut(&id).expect("peer exists");
            let started = if height < target && peer.height().is_some() {
                peer.start_sync(target, &mut ctx)
            } else if missing > 0 {
                peer.request_missing_private(&mut ctx)
            } else {
                false
            };
            any |= started;
            self.flush(id, ctx.out, ctx.events);
        }
        any
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), NetworkError> {
        match &fault {
            Fault::Crash(id) => {
                if let Some(peer) = self.peers.get_mut(id) {
                    peer.crash();
                } else if let Some(o) = self.orderers.get_mut(id) {
                    o.live = false;
                } else {
                    return Err(NetworkError::UnknownNode(id.clone()));
                }
                self.live.remove(id);
                if let Some(mut earlier) = self.deferred.remove(id) {
                    let held = self.held.entry(id.clone()).or_default();
                    earlier.append(held);
                    *held = earlier;
                }
            }
            Fault::Recover(id) => {
                if !self.is_node(id) {
                    return Err(NetworkError::UnknownNode(id.clone()));
                }
                if self.live.contains(id) {
                    return Ok(());
                }
                self.live.insert(id.clone());
                let held = self.held.remove(id).unwrap_or_default();
                self.record(TranscriptEvent::Fault {
                    at_ms: self.now,
                    fault: fault.clone(),
                });
                if let Some(o) = self.orderers.get_mut(id) {
                    o.live = true;
                    let active = o.is_active();
                    for env in held {
                        self.enqueue(env.from, id.clone(), env.msg, Delay::Link);
                    }
                    if active {
                        self.rearm(id);
                    }
                    return Ok(());
                }
                self.deferred.insert(id.clone(), held);
                let target = self.delivered_height();
                let mut ctx = Ctx {
                    now: self.now,
                    peers: &self.peer_ids,
                    orderers: &self.orderer_ids,
                    live: &self.live,
                    out: Vec::new(),
                    events: Vec::new(),
                };
                let peer = self.peers.get_mut(id).expect("peer exists");
                peer.live = true;
                let started = peer.start_sync(target, &mut ctx);
                if !started {
                    peer.request_missing_private(&mut ctx);
                }
                self.flush(id.clone(), ctx.out, ctx.events);
                if !started {
                    self.release_deferred(id);
                }
                return Ok(());
            }
            Fault::OrdererFailover => {
                let standby = self
                    .orderer_ids
                    .iter()
                    .find(|o| self.live.contains(*o) && !self.orderers[*o].is_active())
                    .cloned()
                    .ok_or(NetworkError::NoStandbyOrderer)?;
                for o in self.orderers.values_mut() {
                    if o.active {
                        o.active = false;
                        o.live = false;
                        self.live.remove(o.id());
                    }
                }
                self.record(TranscriptEvent::Fault {
                    at_ms: self.now,
                    fault: fault.clone(),
                });
                self.rearm(&standby);
                return Ok(());
            }
        }
        self.record(TranscriptEvent::Fault {
            at_ms: self.now,
            fault,
        });
        Ok(())
    }

    fn rearm(&mut self, orderer: &NodeId) {
        let mut ctx = Ctx {
            now: self.now,
            peers: &self.peer_ids,
            orderers: &self.orderer_ids,
            live: &self.live,
            out: Vec::new(),
            events: Vec::new(),
        };
        self.orderers
            .get_mut(orderer)
            .expect("orderer exists")
            .promote(&mut ctx);
        self.flush(orderer.clone(), ctx.out, ctx.events);
    }

    /// Catches `peer` up with the orderer's delivered height through
    /// anti-entropy and returns what it fetched.
    pub fn gossip_sync(&mut self, peer: &NodeId) -> Result<SyncReport, NetworkError> {
        let node = self
            .peers
            .get(peer)
            .ok_or_else(|| NetworkError::UnknownNode(peer.clone()))?;
        if !node.is_live() {
            return Err(NetworkError::NodeDown(peer.clone()));
        }
        let target = self.delivered_height();
        let mut ctx = Ctx {
            now: self.now,
            peers: &self.peer_ids,
            orderers: &self.orderer_ids,
            live: &self.live,
            out: Vec::new(),
            events: Vec::new(),
        };
        let node = self.peers.get_mut(peer).expect("peer exists");
        let started = node.start_sync(target, &mut ctx);
        if !started {
            node.request_missing_private(&mut ctx);
        }
        self.flush(peer.clone(), ctx.out, ctx.events);
        self.run();
        let report = self.peers[peer].last_sync().clone();
        if report.complete {
            return Ok(report);
        }
        match report.rejected.last() {
            Some((responder, height)) => Err(NetworkError::TamperedBlockFromPeer {
                peer: peer.clone(),
                responder: responder.clone(),
                height: *height,
            }),
            None => Err(NetworkError::NoLivePeer(peer.clone())),
        }
    }

    /// All live peers hold the delivered height with byte-identical chains
    /// and world states.
    pub fn converged(&self) -> bool {
        let target = self.delivered_height();
        let live: Vec<&PeerNode> = self.peers.values().filter(|p| p.is_live()).collect();
        let Some(first) = live.first() else {
            return true;
        };
        let chain = first.ledger().chain_bytes();
        let state = first.ledger().world_state().canonical_bytes();
        live.iter().all(|p| {
            p.height() == Some(target)
                && p.ledger().chain_bytes() == chain
                && p.ledger().world_state().canonical_bytes() == state
        })
    }
}
