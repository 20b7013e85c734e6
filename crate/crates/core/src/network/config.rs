use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{Msp, Policy, PolicyKind, PublicKey, Role};
use crate::ledger::{ChainConfig, CollectionConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid network config: {0}")]
    Invalid(String),
    #[error("cannot parse network config: {0}")]
    Parse(String),
}

/// Node address on the bus: `subject@org`, the certificate label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(subject: &str, org: &str) -> Self {
        NodeId(format!("{subject}@{org}"))
    }

    pub fn subject(&self) -> &str {
        self.0.split_once('@').map_or(&self.0, |(s, _)| s)
    }

    pub fn org(&self) -> &str {
        self.0.split_once('@').map_or("", |(_, o)| o)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgSpec {
    pub name: String,
    pub peers: Vec<String>,
    #[serde(default = "default_clients")]
    pub clients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionSpec {
    pub name: String,
    pub member_orgs: BTreeSet<String>,
    #[serde(default)]
    pub block_to_live: u64,
    /// Defaults to "any member of `member_orgs`".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_policy: Option<Policy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_policy: Option<Policy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub max_count: usize,
    pub max_wait_ms: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            max_count: 50,
            max_wait_ms: 200,
        }
    }
}

/// Simulated one-way latency, drawn uniformly per message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub min_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            min_delay_ms: 1,
            max_delay_ms: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_chain_id")]
    pub chain_id: String,
    /// Scheduler seed: fixes every simulated link delay.
    #[serde(default)]
    pub seed: u64,
    pub orgs: Vec<OrgSpec>,
    #[serde(default = "default_orderer_org")]
    pub orderer_org: String,
    /// First entry starts active; the rest are standbys.
    #[serde(default = "default_orderers")]
    pub orderers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endorsement: Option<Policy>,
    #[serde(default)]
    pub collections: Vec<CollectionSpec>,
    #[serde(default)]
    pub batch: BatchConfig,
    #[serde(default)]
    pub link: LinkConfig,
}

fn default_chain_id() -> String {
    "pdns".into()
}

fn default_orderer_org() -> String {
    "OrdererOrg".into()
}

fn default_orderers() -> Vec<String> {
    vec!["orderer0".into()]
}

fn default_clients() -> Vec<String> {
    vec!["client".into()]
}

pub const DEFAULT_COLLECTION: &str = "pdnsPrivate";

impl Default for NetworkConfig {
    /// Two organizations of two peers each, one orderer, and a private
    /// collection held by the first organization.
    fn default() -> Self {
        let org = |name: &str| OrgSpec {
            name: name.into(),
            peers: vec!["peer0".into(), "peer1".into()],
            clients: default_clients(),
        };
        NetworkConfig {
            chain_id: default_chain_id(),
            seed: 0,
            orgs: vec![org("Org1"), org("Org2")],
            orderer_org: default_orderer_org(),
            orderers: default_orderers(),
            endorsement: None,
            collections: vec![CollectionSpec {
                name: DEFAULT_COLLECTION.into(),
                member_orgs: ["Org1".to_string()].into(),
                block_to_live: 0,
                read_policy: None,
                write_policy: None,
            }],
            batch: BatchConfig::default(),
            link: LinkConfig::default(),
        }
    }
}

/// One identity the topology needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub subject: String,
    pub org: String,
    pub role: Role,
}

impl NodeSpec {
    pub fn id(&self) -> NodeId {
        NodeId::new(&self.subject, &self.org)
    }
}

impl NetworkConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: NetworkConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network config serializes")
    }

    pub fn org_names(&self) -> impl Iterator<Item = &str> {
        self.orgs.iter().map(|o| o.name.as_str())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.chain_id.is_empty() {
            return bad("chain_id is empty".into());
        }
        if self.orgs.is_empty() {
            return bad("no organizations".into());
        }
        let mut orgs = BTreeSet::new();
        for org in &self.orgs {
            if org.name.is_empty() || org.name.contains(['@', '/', '\\']) {
                return bad(format!("bad organization name {:?}", org.name));
            }
            if !orgs.insert(org.name.as_str()) {
                return bad(format!("duplicate organization {}", org.name));
            }
            if org.peers.is_empty() {
                return bad(format!("organization {} has no peers", org.name));
            }
        }
        if orgs.contains(self.orderer_org.as_str()) {
            return bad("orderer organization must not be an application organization".into());
        }
        if self.orderers.is_empty() {
            return bad("no orderers".into());
        }
        let mut ids = BTreeSet::new();
        for spec in self.node_specs() {
            if spec.subject.is_empty() || spec.subject.contains(['@', '/', '\\', '.']) {
                return bad(format!("bad node name {:?}", spec.subject));
            }
            if !ids.insert(spec.id()) {
                return bad(format!("duplicate node {}", spec.id()));
            }
        }
        let mut names = BTreeSet::new();
        for c in &self.collections {
            if !names.insert(c.name.as_str()) {
                return bad(format!("duplicate collection {}", c.name));
            }
            if c.member_orgs.is_empty() {
                return bad(format!("collection {} has no member organizations", c.name));
            }
            if let Some(o) = c.member_orgs.iter().find(|o| !orgs.contains(o.as_str())) {
                return bad(format!("collection {} names unknown organization {o}", c.name));
            }
        }
        if self.batch.max_count == 0 {
            return bad("batch.max_count must be at least 1".into());
        }
        if self.link.min_delay_ms > self.link.max_delay_ms {
            return bad("link.min_delay_ms exceeds link.max_delay_ms".into());
        }
        let chain = self.chain_config(PublicKey([0; 32]));
        let policies = [&chain.endorsement, &chain.writers, &chain.readers]
            .into_iter()
            .chain(chain.collections.iter().flat_map(|c| [&c.read_policy, &c.write_policy]));
        for p in policies {
            if !chain.msp.policy_is_well_formed(p) {
                return bad("policy references an organization outside the consortium".into());
            }
        }
        Ok(())
    }

    /// Every identity the topology needs: peers, orderers, then clients.
    pub fn node_specs(&self) -> Vec<NodeSpec> {
        let mut out = Vec::new();
        for org in &self.orgs {
            for p in &org.peers {
                out.push(NodeSpec {
                    subject: p.clone(),
                    org: org.name.clone(),
                    role: Role::Peer,
                });
            }
        }
        for o in &self.orderers {
            out.push(NodeSpec {
                subject: o.clone(),
                org: self.orderer_org.clone(),
                role: Role::Orderer,
            });
        }
        for org in &self.orgs {
            for c in &org.clients {
                out.push(NodeSpec {
                    subject: c.clone(),
                    org: org.name.clone(),
                    role: Role::Client,
                });
            }
        }
        out
    }

    pub fn peer_ids(&self) -> Vec<NodeId> {
        self.orgs
            .iter()
            .flat_map(|o| o.peers.iter().map(|p| NodeId::new(p, &o.name)))
            .collect()
    }

    pub fn orderer_ids(&self) -> Vec<NodeId> {
        self.orderers
            .iter()
            .map(|o| NodeId::new(o, &self.orderer_org))
            .collect()
    }

    /// The ledger-level configuration. Application organizations may read
    /// and write; the ordering organization is a consortium member only so
    /// its certificates validate.
    pub fn chain_config(&self, ca_public_key: PublicKey) -> ChainConfig {
        let app_orgs: Vec<&str> = self.org_names().collect();
        let msp = Msp::new(
            ca_public_key,
            app_orgs.iter().copied().chain([self.orderer_org.as_str()]),
        );
        ChainConfig {
            msp,
            endorsement: self
                .endorsement
                .clone()
                .unwrap_or_else(Policy::any_peer_endorsement),
            writers: Policy::member_of(PolicyKind::Write, app_orgs.iter().copied()),
            readers: Policy::member_of(PolicyKind::Read, app_orgs.iter().copied()),
            collections: self
                .collections
                .iter()
                .map(|c| CollectionConfig {
                    name: c.name.clone(),
                    member_orgs: c.member_orgs.clone(),
                    block_to_live: c.block_to_live,
                    read_policy: c.read_policy.clone().unwrap_or_else(|| {
                        Policy::member_of(PolicyKind::Read, c.member_orgs.iter().cloned())
                    }),
                    write_policy: c.write_policy.clone().unwrap_or_else(|| {
                        Policy::member_of(PolicyKind::Write, c.member_orgs.iter().cloned())
                    }),
                })
                .collect(),
        }
    }
}
