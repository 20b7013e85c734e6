//! On-disk layout:
//!
//! ```text
//! <data-dir>/network.toml
//! <data-dir>/gateway.json              proposal counter
//! <data-dir>/crypto/ca.{key,pub}
//! <data-dir>/crypto/<org>/<subject>.{key,cert}
//! <data-dir>/peers/<subject@org>/chain.bin
//! <data-dir>/peers/<subject@org>/private.jsonl
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pdns_core::identity::{store, CertificateAuthority, Identity};
use pdns_core::ledger::chainfile::{read_chain, write_chain};
use pdns_core::ledger::PrivatePayload;
use pdns_core::network::{enroll_topology, NetworkConfig, NodeId};
use pdns_core::txflow::Gateway;
use rand::{CryptoRng, RngCore};
use serde_json::json;

use crate::error::CliError;

pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn crypto(&self) -> PathBuf {
        self.root.join("crypto")
    }

    fn network_toml(&self) -> PathBuf {
        self.root.join("network.toml")
    }

    fn gateway_state(&self) -> PathBuf {
        self.root.join("gateway.json")
    }

    fn peer_dir(&self, id: &NodeId) -> PathBuf {
        self.root.join("peers").join(&id.0)
    }

    pub fn is_initialized(&self) -> bool {
        self.network_toml().is_file()
    }

    /// Creates the CA, enrolls every node and client, commits genesis and
    /// writes it all out. Returns the saved certificate paths.
    pub fn init<R: RngCore + CryptoRng>(
        &self,
        config: &NetworkConfig,
        rng: &mut R,
    ) -> Result<(Gateway, Vec<PathBuf>), CliError> {
        let occupied = match fs::read_dir(&self.root) {
            Ok(mut entries) => entries.next().is_some(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
            Err(e) => return Err(e.into()),
        };
        if occupied {
            return Err(CliError::Usage(format!(
                "DirNotEmpty: {} already has content",
                self.root.display()
            )));
        }
        config
            .validate()
            .map_err(|e| CliError::Usage(format!("invalid network config: {e}")))?;
        let mut ca = CertificateAuthority::generate(rng);
        let identities = enroll_topology(config, &mut ca, rng)?;
        let mut gateway = Gateway::new(config.clone(), ca.public_key(), &identities)?;
        gateway.init_chain()?;

        fs::create_dir_all(&self.root)?;
        store::save_ca(&self.crypto(), &ca)?;
        let mut certs = Vec::new();
        for id in identities.values() {
            certs.push(store::save_identity(&self.crypto(), id)?);
        }
        fs::write(self.network_toml(), config.to_toml())?;
        self.save(&gateway)?;
        Ok((gateway, certs))
    }

    pub fn load_config(&self, override_path: Option<&Path>) -> Result<NetworkConfig, CliError> {
        if !self.is_initialized() {
            return Err(CliError::Usage(format!(
                "{} is not an initialized data directory (run init first)",
                self.root.display()
            )));
        }
        let path = override_path.map_or_else(|| self.network_toml(), Path::to_path_buf);
        read_config(&path)
    }

    /// Rebuilds the network from disk: identities, every peer's chain and
    /// private payloads, and the proposal counter.
    pub fn open(&self, override_path: Option<&Path>) -> Result<Gateway, CliError> {
        let config = self.load_config(override_path)?;
        let crypto = self.crypto();
        let ca_public = store::load_ca_public(&crypto)?;
        let mut identities = BTreeMap::new();
        for spec in config.node_specs() {
            let (key, _) = store::identity_paths(&crypto, &spec.org, &spec.subject);
            let id = store::load_identity(&key)
                .map_err(|e| CliError::Internal(format!("identity for {}: {e}", spec.id())))?;
            identities.insert(spec.id(), id);
        }
        let mut gateway = Gateway::new(config, ca_public, &identities)?;
        let peers = gateway.network().peer_ids().to_vec();
        for peer in &peers {
            let dir = self.peer_dir(peer);
            let blocks = read_chain(&dir.join("chain.bin"))
                .map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
            let private = read_private(&dir.join("private.jsonl"))?;
            gateway
                .network_mut()
                .load_peer(peer, blocks, &private)
                .map_err(|e| CliError::Internal(format!("replaying {peer}: {e}")))?;
        }
        let nonce = match fs::read_to_string(self.gateway_state()) {
            Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v["nonce"].as_u64())
                .ok_or_else(|| CliError::Internal("gateway.json: missing nonce".into()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e.into()),
        };
        gateway.resume(nonce);
        gateway.network_mut().clear_transcript();
        Ok(gateway)
    }

    /// Writes every peer's replica. Files are replaced atomically.
    pub fn save(&self, gateway: &Gateway) -> Result<(), CliError> {
        for peer in gateway.network().peers() {
            let dir = self.peer_dir(peer.id());
            fs::create_dir_all(&dir)?;
            let ledger = peer.ledger();
            let chain = dir.join("chain.bin.tmp");
            write_chain(&chain, ledger.blocks())?;
            fs::rename(&chain, dir.join("chain.bin"))?;

            let private = dir.join("private.jsonl.tmp");
            let mut out = std::io::BufWriter::new(fs::File::create(&private)?);
            for entry in ledger.private_store().entries() {
                let payload = PrivatePayload {
                    collection: entry.collection.clone(),
                    key: entry.key,
                    value: entry.value.clone(),
                };
                serde_json::to_writer(&mut out, &payload).map_err(|e| CliError::Internal(e.to_string()))?;
                out.write_all(b"\n")?;
            }
            out.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
            fs::rename(&private, dir.join("private.jsonl"))?;
        }
        fs::write(
            self.gateway_state(),
            json!({ "nonce": gateway.nonce() }).to_string() + "\n",
        )?;
        Ok(())
    }

    /// Loads the acting identity and checks it against the configured CA
    /// and organizations.
    pub fn identity(&self, path: &Path, gateway: &Gateway) -> Result<Identity, CliError> {
        let id = store::load_identity(path)
            .map_err(|e| CliError::Usage(format!("identity {}: {e}", path.display())))?;
        if !gateway.network().chain_config().msp.validate(&id.certificate) {
            return Err(CliError::Denied(format!(
                "identity {} does not verify against this network's CA",
                id.certificate.label()
            )));
        }
        Ok(id)
    }
}

pub fn read_config(path: &Path) -> Result<NetworkConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    NetworkConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn read_private(path: &Path) -> Result<Vec<PrivatePayload>, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Internal(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}
