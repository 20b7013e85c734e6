//! Conventional comparison store: an append-ordered table whose personal
//! columns are encrypted with ChaCha20-Poly1305.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::Path;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::{PassiveDnsRecord, PrivateRecord, PublicRecord};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("column decryption failed for row {row}")]
    Decrypt { row: u64 },
    #[error("corrupt table line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    ClientIp = 1,
    ResolverIp = 2,
}

impl Column {
    fn name(self) -> &'static str {
        match self {
            Column::ClientIp => "client_ip",
            Column::ResolverIp => "resolver_ip",
        }
    }
}

/// One stored row: public columns in clear, personal columns sealed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub row: u64,
    #[serde(flatten)]
    pub public: PublicRecord,
    #[serde(with = "hex::serde")]
    pub client_ip_sealed: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub resolver_ip_sealed: Vec<u8>,
}

/// Encrypts one cell. The nonce is the row number and column, unique
/// because rows are never rewritten; the associated data binds the cell to
/// its record id and column.
pub fn seal_cell(cipher: &ChaCha20Poly1305, row: u64, column: Column, record_id: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let aad = cell_aad(record_id, column);
    cipher
        .encrypt(
            &cell_nonce(row, column),
            Payload {
                msg: plaintext,
                aad: &aad,
            },
        )
        .expect("in-memory encryption cannot fail")
}

pub fn open_cell(
    cipher: &ChaCha20Poly1305,
    row: u64,
    column: Column,
    record_id: &[u8],
    sealed: &[u8],
) -> Option<Vec<u8>> {
    let aad = cell_aad(record_id, column);
    cipher
        .decrypt(
            &cell_nonce(row, column),
            Payload {
                msg: sealed,
                aad: &aad,
            },
        )
        .ok()
}

fn cell_nonce(row: u64, column: Column) -> Nonce {
    let mut n = [0u8; 12];
    n[..8].copy_from_slice(&row.to_be_bytes());
    n[8..].copy_from_slice(&(column as u32).to_be_bytes());
    n.into()
}

fn cell_aad(record_id: &[u8], column: Column) -> Vec<u8> {
    let mut aad = record_id.to_vec();
    aad.extend_from_slice(column.name().as_bytes());
    aad
}

pub struct BaselineStore {
    cipher: ChaCha20Poly1305,
    rows: Vec<BaselineRow>,
    index: Option<HashMap<String, Vec<usize>>>,
    file: Option<BufWriter<File>>,
}

impl BaselineStore {
    /// In-memory table; `indexed` adds a domain index.
    pub fn new(key: [u8; 32], indexed: bool) -> Self {
        BaselineStore {
            cipher: ChaCha20Poly1305::new(Key::from_slice(&key)),
            rows: Vec::new(),
            index: indexed.then(HashMap::new),
            file: None,
        }
    }

    /// Table persisted as JSON lines at `path`; existing rows are loaded.
    pub fn open(path: &Path, key: [u8; 32], indexed: bool) -> Result<Self, BaselineError> {
        let mut store = BaselineStore::new(key, indexed);
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let row: BaselineRow = serde_json::from_str(&line).map_err(|e| BaselineError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                if row.row != store.rows.len() as u64 {
                    return Err(BaselineError::Corrupt {
                        line: i + 1,
                        reason: format!("row {} out of order", row.row),
                    });
                }
                store.push(row);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.file = Some(BufWriter::new(file));
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_indexed(&self) -> bool {
        self.index.is_some()
    }

    pub fn rows(&self) -> &[BaselineRow] {
        &self.rows
    }

    /// Single-row insert. Repeated observations are new rows, as in an
    /// append-only log table.
    pub fn insert(&mut self, record: &PassiveDnsRecord) -> Result<(), BaselineError> {
        let (public, private) = record.split();
        let row = self.rows.len() as u64;
        let id = public.record_id.0;
        let sealed = BaselineRow {
            row,
            client_ip_sealed: seal_cell(
                &self.cipher,
                row,
                Column::ClientIp,
                &id,
                private.client_ip.to_string().as_bytes(),
            ),
            resolver_ip_sealed: seal_cell(
                &self.cipher,
                row,
                Column::ResolverIp,
                &id,
                private.resolver_ip.to_string().as_bytes(),
            ),
            public,
        };
        if let Some(file) = &mut self.file {
            serde_json::to_writer(&mut *file, &sealed).map_err(io::Error::from)?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        self.push(sealed);
        Ok(())
    }

    fn push(&mut self, row: BaselineRow) {
        if let Some(index) = &mut self.index {
            index
                .entry(row.public.domain.clone())
                .or_default()
                .push(self.rows.len());
        }
        self.rows.push(row);
    }

    /// Every row for `domain`, personal columns decrypted. Without an index
    /// this is a full table scan.
    pub fn find_by_domain(&self, domain: &str) -> Result<Vec<PassiveDnsRecord>, BaselineError> {
        let hits: Vec<&BaselineRow> = match &self.index {
            Some(index) => index
                .get(domain)
                .into_iter()
                .flatten()
                .map(|&i| &self.rows[i])
                .collect(),
            None => self.rows.iter().filter(|r| r.public.domain == domain).collect(),
        };
        hits.into_iter().map(|r| self.decrypt_row(r)).collect()
    }

    pub fn decrypt_row(&self, row: &BaselineRow) -> Result<PassiveDnsRecord, BaselineError> {
        let id = row.public.record_id.0;
        let ip = |column: Column, sealed: &[u8]| -> Result<IpAddr, BaselineError> {
            let plain = open_cell(&self.cipher, row.row, column, &id, sealed)
                .ok_or(BaselineError::Decrypt { row: row.row })?;
            std::str::from_utf8(&plain)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or(BaselineError::Decrypt { row: row.row })
        };
        let private = PrivateRecord {
            client_ip: ip(Column::ClientIp, &row.client_ip_sealed)?,
            resolver_ip: ip(Column::ResolverIp, &row.resolver_ip_sealed)?,
        };
        Ok(PassiveDnsRecord::join(row.public.clone(), private))
    }
}
