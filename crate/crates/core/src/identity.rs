//! Certificate authority, membership service and policy evaluation.
//!
//! Certificates are a minimal semantic stand-in for X.509: subject, owning
//! organization, role and an Ed25519 public key, signed by the CA over a
//! length-prefixed encoding of those fields in declaration order.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{Digest, FieldHasher};

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("certificate for {subject}@{org} already issued")]
    DuplicateSubject { subject: String, org: String },
    #[error("malformed key material: {0}")]
    Malformed(String),
    #[error("private key does not match certificate")]
    KeyMismatch,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Peer,
    Orderer,
    Admin,
    Client,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Peer => "peer",
            Role::Orderer => "orderer",
            Role::Admin => "admin",
            Role::Client => "client",
        }
    }

    fn from_str(s: &str) -> Option<Role> {
        Some(match s {
            "peer" => Role::Peer,
            "orderer" => Role::Orderer,
            "admin" => Role::Admin,
            "client" => Role::Client,
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "crate::hexfmt::array")] pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "crate::hexfmt::array")] pub [u8; 64]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.0))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(self.0))
    }
}

fn verify_raw(key: &PublicKey, payload: &[u8], sig: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&key.0) else {
        return false;
    };
    key.verify(payload, &ed25519_dalek::Signature::from_bytes(&sig.0))
        .is_ok()
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take_field<'a>(input: &mut &'a [u8]) -> Option<&'a [u8]> {
    let len = u32::from_be_bytes(input.get(..4)?.try_into().ok()?) as usize;
    let field = input.get(4..4 + len)?;
    *input = &input[4 + len..];
    Some(field)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub subject: String,
    pub org: String,
    pub role: Role,
    pub public_key: PublicKey,
    pub ca_signature: Signature,
}

impl Certificate {
    /// Bytes covered by the CA signature.
    pub fn signed_payload(&self) -> Vec<u8> {
        signed_payload(&self.subject, &self.org, self.role, &self.public_key)
    }

    /// Wire form: the signed payload followed by the length-prefixed CA
    /// signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_payload();
        put_field(&mut out, &self.ca_signature.0);
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Option<Certificate> {
        let input = &mut bytes;
        let subject = String::from_utf8(take_field(input)?.to_vec()).ok()?;
        let org = String::from_utf8(take_field(input)?.to_vec()).ok()?;
        let role = Role::from_str(std::str::from_utf8(take_field(input)?).ok()?)?;
        let public_key = PublicKey(take_field(input)?.try_into().ok()?);
        let ca_signature = Signature(take_field(input)?.try_into().ok()?);
        if !input.is_empty() {
            return None;
        }
        Some(Certificate {
            subject,
            org,
            role,
            public_key,
            ca_signature,
        })
    }

    pub fn fingerprint(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }

    /// `subject@org`, used as a node or caller label.
    pub fn label(&self) -> String {
        format!("{}@{}", self.subject, self.org)
    }
}

fn signed_payload(subject: &str, org: &str, role: Role, key: &PublicKey) -> Vec<u8> {
    let mut out = Vec::with_capacity(subject.len() + org.len() + 64);
    put_field(&mut out, subject.as_bytes());
    put_field(&mut out, org.as_bytes());
    put_field(&mut out, role.as_str().as_bytes());
    put_field(&mut out, &key.0);
    out
}

/// True iff `cert.ca_signature` is a valid CA signature over the other fields.
pub fn verify_certificate(cert: &Certificate, ca_public_key: &PublicKey) -> bool {
    verify_raw(ca_public_key, &cert.signed_payload(), &cert.ca_signature)
}

pub fn verify_signature(cert: &Certificate, payload: &[u8], sig: &Signature) -> bool {
    verify_raw(&cert.public_key, payload, sig)
}

/// A certificate together with the matching signing key.
#[derive(Clone)]
pub struct Identity {
    pub certificate: Certificate,
    signing_key: SigningKey,
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity")
            .field("certificate", &self.certificate)
            .finish_non_exhaustive()
    }
}

impl Identity {
    pub fn new(certificate: Certificate, secret: [u8; 32]) -> Result<Self, IdentityError> {
        let signing_key = SigningKey::from_bytes(&secret);
        if signing_key.verifying_key().to_bytes() != certificate.public_key.0 {
            return Err(IdentityError::KeyMismatch);
        }
        Ok(Identity {
            certificate,
            signing_key,
        })
    }

    pub fn sign(&self, payload: &[u8]) -> Signature {
        Signature(self.signing_key.sign(payload).to_bytes())
    }

    /// Signs `payload` and pairs the signature with this identity's
    /// certificate, the shape consumed by policy evaluation.
    pub fn endorse(&self, payload: &[u8]) -> (Certificate, Signature) {
        (self.certificate.clone(), self.sign(payload))
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing_key.to_bytes()
    }

    pub fn org(&self) -> &str {
        &self.certificate.org
    }
}

pub fn keypair_from_secret(secret: [u8; 32]) -> ([u8; 32], PublicKey) {
    let key = SigningKey::from_bytes(&secret);
    (secret, PublicKey(key.verifying_key().to_bytes()))
}

pub fn generate_secret<R: RngCore + CryptoRng>(rng: &mut R) -> [u8; 32] {
    let mut secret = [0; 32];
    rng.fill_bytes(&mut secret);
    secret
}

/// Issues certificates. The registry of issued (subject, org) pairs is
/// append-only.
pub struct CertificateAuthority {
    key: SigningKey,
    issued: BTreeSet<(String, String)>,
}

impl CertificateAuthority {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        CertificateAuthority {
            key: SigningKey::from_bytes(&secret),
            issued: BTreeSet::new(),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::from_secret(generate_secret(rng))
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.key.verifying_key().to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn is_issued(&self, subject: &str, org: &str) -> bool {
        self.issued.contains(&(subject.to_string(), org.to_string()))
    }

    /// Marks a pair as issued without signing, for registries restored from
    /// disk.
    pub fn register_existing(&mut self, cert: &Certificate) {
        self.issued.insert((cert.subject.clone(), cert.org.clone()));
    }

    pub fn issue(
        &mut self,
        subject: &str,
        org: &str,
        role: Role,
        public_key: PublicKey,
    ) -> Result<Certificate, IdentityError> {
        if self.is_issued(subject, org) {
            return Err(IdentityError::DuplicateSubject {
                subject: subject.to_string(),
                org: org.to_string(),
            });
        }
        let payload = signed_payload(subject, org, role, &public_key);
        let ca_signature = Signature(self.key.sign(&payload).to_bytes());
        self.issued.insert((subject.to_string(), org.to_string()));
        Ok(Certificate {
            subject: subject.to_string(),
            org: org.to_string(),
            role,
            public_key,
            ca_signature,
        })
    }

    /// Generates a key pair and issues a certificate for it.
    pub fn enroll<R: RngCore + CryptoRng>(
        &mut self,
        subject: &str,
        org: &str,
        role: Role,
        rng: &mut R,
    ) -> Result<Identity, IdentityError> {
        let (secret, public) = keypair_from_secret(generate_secret(rng));
        let certificate = self.issue(subject, org, role, public)?;
        Identity::new(certificate, secret)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Endorsement,
    Read,
    Write,
}

/// Which organizations a signature may come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrgScope {
    /// Any organization of the consortium.
    Any,
    Listed(BTreeSet<String>),
}

impl OrgScope {
    fn admits(&self, org: &str) -> bool {
        match self {
            OrgScope::Any => true,
            OrgScope::Listed(orgs) => orgs.contains(org),
        }
    }
}

/// A monotone membership expression over verified signatures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// At least `min` distinct valid signers from `orgs`, optionally
    /// restricted to one role.
    SignedBy {
        min: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<Role>,
        orgs: OrgScope,
    },
    AllOf(Vec<Rule>),
    AnyOf(Vec<Rule>),
}

impl Rule {
    fn satisfied_by(&self, signers: &[&Certificate]) -> bool {
        match self {
            Rule::SignedBy { min, role, orgs } => {
                let count = signers
                    .iter()
                    .filter(|c| role.is_none_or(|r| c.role == r) && orgs.admits(&c.org))
                    .count();
                count >= *min
            }
            Rule::AllOf(rules) => rules.iter().all(|r| r.satisfied_by(signers)),
            Rule::AnyOf(rules) => rules.iter().any(|r| r.satisfied_by(signers)),
        }
    }

    fn collect_orgs<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Rule::SignedBy {
                orgs: OrgScope::Listed(orgs),
                ..
            } => out.extend(orgs.iter().map(String::as_str)),
            Rule::SignedBy { .. } => {}
            Rule::AllOf(rules) | Rule::AnyOf(rules) => {
                rules.iter().for_each(|r| r.collect_orgs(out))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub rule: Rule,
}

impl Policy {
    /// At least one valid peer signature from any consortium organization.
    pub fn any_peer_endorsement() -> Self {
        Policy {
            kind: PolicyKind::Endorsement,
            rule: Rule::SignedBy {
                min: 1,
                role: Some(Role::Peer),
                orgs: OrgScope::Any,
            },
        }
    }

    /// Satisfied by a valid signature from any member of `orgs`.
    pub fn member_of<I, S>(kind: PolicyKind, orgs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Policy {
            kind,
            rule: Rule::SignedBy {
                min: 1,
                role: None,
                orgs: OrgScope::Listed(orgs.into_iter().map(Into::into).collect()),
            },
        }
    }

    /// Satisfied by a valid signature from any consortium member.
    pub fn any_member(kind: PolicyKind) -> Self {
        Policy {
            kind,
            rule: Rule::SignedBy {
                min: 1,
                role: None,
                orgs: OrgScope::Any,
            },
        }
    }

    pub fn referenced_orgs(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.rule.collect_orgs(&mut out);
        out
    }
}

/// Membership service: maps certificates to consortium identities.
///
/// Certificates whose CA signature has verified are remembered by
/// fingerprint, so each one is checked against the CA key once.
#[derive(Debug, Clone)]
pub struct Msp {
    ca_public_key: PublicKey,
    orgs: BTreeSet<String>,
    verified: Arc<Mutex<HashSet<Digest>>>,
}

impl PartialEq for Msp {
    fn eq(&self, other: &Self) -> bool {
        self.ca_public_key == other.ca_public_key && self.orgs == other.orgs
    }
}

impl Eq for Msp {}

impl Msp {
    pub fn new<I, S>(ca_public_key: PublicKey, orgs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Msp {
            ca_public_key,
            orgs: orgs.into_iter().map(Into::into).collect(),
            verified: Arc::default(),
        }
    }

    pub fn ca_public_key(&self) -> &PublicKey {
        &self.ca_public_key
    }

    pub fn orgs(&self) -> &BTreeSet<String> {
        &self.orgs
    }

    /// CA signature verifies and the organization belongs to the consortium.
    pub fn validate(&self, cert: &Certificate) -> bool {
        if !self.orgs.contains(&cert.org) {
            return false;
        }
        let fp = cert.fingerprint();
        let mut verified = self.verified.lock().unwrap_or_else(|e| e.into_inner());
        if verified.contains(&fp) {
            return true;
        }
        let ok = verify_certificate(cert, &self.ca_public_key);
        if ok {
            verified.insert(fp);
        }
        ok
    }

    /// Evaluates `policy` over the signatures that verify on `payload` under
    /// certificates this MSP accepts. Each certificate counts once.
    pub fn evaluate_policy(
        &self,
        policy: &Policy,
        signatures: &[(Certificate, Signature)],
        payload: &[u8],
    ) -> bool {
        let mut seen = HashSet::new();
        let signers: Vec<&Certificate> = signatures
            .iter()
            .filter(|(cert, sig)| self.validate(cert) && verify_signature(cert, payload, sig))
            .filter(|(cert, _)| seen.insert(cert.fingerprint()))
            .map(|(cert, _)| cert)
            .collect();
        policy.rule.satisfied_by(&signers)
    }

    pub fn policy_is_well_formed(&self, policy: &Policy) -> bool {
        policy
            .referenced_orgs()
            .iter()
            .all(|org| self.orgs.contains(*org))
    }
}

/// Binds a request to its caller so the same bytes cannot be replayed as a
/// different operation.
pub fn request_payload(operation: &str, caller: &Certificate, body: &[u8]) -> Vec<u8> {
    let mut h = FieldHasher::new("pdns/request/v1");
    h.field(operation.as_bytes())
        .field(&caller.fingerprint().0)
        .field(body);
    h.finish().0.to_vec()
}

/// Hex-encoded key material on disk:
/// `ca.key`, `ca.pub`, `<org>/<subject>.key`, `<org>/<subject>.cert`.
pub mod store {
    use super::*;

    fn read_hex(path: &Path) -> Result<Vec<u8>, IdentityError> {
        let text = fs::read_to_string(path)?;
        hex::decode(text.trim())
            .map_err(|e| IdentityError::Malformed(format!("{}: {e}", path.display())))
    }

    fn read_secret(path: &Path) -> Result<[u8; 32], IdentityError> {
        read_hex(path)?
            .try_into()
            .map_err(|_| IdentityError::Malformed(format!("{}: expected 32 bytes", path.display())))
    }

    pub fn save_ca(dir: &Path, ca: &CertificateAuthority) -> Result<(), IdentityError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("ca.key"), hex::encode(ca.secret_bytes()) + "\n")?;
        fs::write(dir.join("ca.pub"), hex::encode(ca.public_key().0) + "\n")?;
        Ok(())
    }

    /// Loads the CA and re-registers every certificate found under `dir`.
    pub fn load_ca(dir: &Path) -> Result<CertificateAuthority, IdentityError> {
        let mut ca = CertificateAuthority::from_secret(read_secret(&dir.join("ca.key"))?);
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            for file in fs::read_dir(entry.path())? {
                let path = file?.path();
                if path.extension().is_some_and(|e| e == "cert") {
                    ca.register_existing(&load_certificate(&path)?);
                }
            }
        }
        Ok(ca)
    }

    pub fn load_ca_public(dir: &Path) -> Result<PublicKey, IdentityError> {
        read_hex(&dir.join("ca.pub"))?
            .try_into()
            .map(PublicKey)
            .map_err(|_| IdentityError::Malformed("ca.pub: expected 32 bytes".into()))
    }

    pub fn identity_paths(dir: &Path, org: &str, subject: &str) -> (PathBuf, PathBuf) {
        let base = dir.join(org);
        (
            base.join(format!("{subject}.key")),
            base.join(format!("{subject}.cert")),
        )
    }

    pub fn save_identity(dir: &Path, id: &Identity) -> Result<PathBuf, IdentityError> {
        let cert = &id.certificate;
        let (key_path, cert_path) = identity_paths(dir, &cert.org, &cert.subject);
        fs::create_dir_all(key_path.parent().expect("identity path has a parent"))?;
        fs::write(&key_path, hex::encode(id.secret_bytes()) + "\n")?;
        fs::write(&cert_path, hex::encode(cert.to_bytes()) + "\n")?;
        Ok(cert_path)
    }

    pub fn load_certificate(path: &Path) -> Result<Certificate, IdentityError> {
        Certificate::from_bytes(&read_hex(path)?)
            .ok_or_else(|| IdentityError::Malformed(format!("{}: bad certificate", path.display())))
    }

    /// Loads an identity from either its `.cert` or `.key` path; the sibling
    /// file is found by swapping the extension.
    pub fn load_identity(path: &Path) -> Result<Identity, IdentityError> {
        let cert = load_certificate(&path.with_extension("cert"))?;
        let secret = read_secret(&path.with_extension("key"))?;
        Identity::new(cert, secret)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn issued_certificate_verifies() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let id = ca.enroll("peer0", "Org1", Role::Peer, &mut rng).unwrap();
        assert!(verify_certificate(&id.certificate, &ca.public_key()));
    }

    #[test]
    fn duplicate_subject_rejected() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        ca.enroll("peer0", "Org1", Role::Peer, &mut rng).unwrap();
        assert!(matches!(
            ca.enroll("peer0", "Org1", Role::Client, &mut rng),
            Err(IdentityError::DuplicateSubject { .. })
        ));
        // same subject in another org is a different identity
        ca.enroll("peer0", "Org2", Role::Peer, &mut rng).unwrap();
    }

    #[test]
    fn tampered_org_fails_verification() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let mut cert = ca.enroll("peer0", "Org1", Role::Peer, &mut rng).unwrap().certificate;
        cert.org = "Org2".into();
        assert!(!verify_certificate(&cert, &ca.public_key()));
    }

    #[test]
    fn other_ca_rejects() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let other = CertificateAuthority::generate(&mut rng);
        let cert = ca.enroll("p", "Org1", Role::Peer, &mut rng).unwrap().certificate;
        assert!(!verify_certificate(&cert, &other.public_key()));
    }

    #[test]
    fn certificate_bytes_round_trip() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let cert = ca.enroll("c", "Org1", Role::Client, &mut rng).unwrap().certificate;
        assert_eq!(Certificate::from_bytes(&cert.to_bytes()), Some(cert.clone()));
        let mut bytes = cert.to_bytes();
        bytes.push(0);
        assert_eq!(Certificate::from_bytes(&bytes), None);
    }

    #[test]
    fn identity_rejects_wrong_key() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let cert = ca.enroll("c", "Org1", Role::Client, &mut rng).unwrap().certificate;
        assert!(matches!(
            Identity::new(cert, [1; 32]),
            Err(IdentityError::KeyMismatch)
        ));
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let id = ca.enroll("peer0", "Org1", Role::Peer, &mut rng).unwrap();
        store::save_ca(dir.path(), &ca).unwrap();
        let cert_path = store::save_identity(dir.path(), &id).unwrap();
        assert!(cert_path.ends_with("Org1/peer0.cert"));

        let loaded = store::load_identity(&cert_path.with_extension("key")).unwrap();
        assert_eq!(loaded.certificate, id.certificate);
        assert_eq!(store::load_ca_public(dir.path()).unwrap(), ca.public_key());
        let restored = store::load_ca(dir.path()).unwrap();
        assert!(restored.is_issued("peer0", "Org1"));
    }

    #[test]
    fn member_of_policy() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let msp = Msp::new(ca.public_key(), ["Org1", "Org2"]);
        let o1 = ca.enroll("c1", "Org1", Role::Client, &mut rng).unwrap();
        let o2 = ca.enroll("c2", "Org2", Role::Client, &mut rng).unwrap();
        let policy = Policy::member_of(PolicyKind::Read, ["Org1"]);
        assert!(msp.evaluate_policy(&policy, &[o1.endorse(b"q")], b"q"));
        assert!(!msp.evaluate_policy(&policy, &[o2.endorse(b"q")], b"q"));
        // signature over a different payload does not count
        assert!(!msp.evaluate_policy(&policy, &[o1.endorse(b"other")], b"q"));
        assert!(msp.policy_is_well_formed(&policy));
        assert!(!msp.policy_is_well_formed(&Policy::member_of(PolicyKind::Read, ["Org9"])));
    }

    #[test]
    fn repeated_signer_counts_once() {
        let mut rng = rng();
        let mut ca = CertificateAuthority::generate(&mut rng);
        let msp = Msp::new(ca.public_key(), ["Org1"]);
        let p = ca.enroll("p", "Org1", Role::Peer, &mut rng).unwrap();
        let policy = Policy {
            kind: PolicyKind::Endorsement,
            rule: Rule::SignedBy {
                min: 2,
                role: Some(Role::Peer),
                orgs: OrgScope::Any,
            },
        };
        let e = p.endorse(b"x");
        assert!(!msp.evaluate_policy(&policy, &[e.clone(), e], b"x"));
    }

    #[test]
    fn policy_serializes_to_toml() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            policy: Policy,
        }
        let w = Wrap {
            policy: Policy::member_of(PolicyKind::Write, ["Org1"]),
        };
        let text = toml::to_string(&w).unwrap();
        let back: Wrap = toml::from_str(&text).unwrap();
        assert_eq!(back.policy, w.policy);
    }
}
