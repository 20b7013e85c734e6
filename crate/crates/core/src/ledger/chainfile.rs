//! Append-only chain file: each block is a big-endian `u32` length followed by
//! the block's canonical JSON.
//!
//! Decoding insists that every record re-serializes to exactly the bytes it
//! was read from, so any in-place corruption either fails to decode or
//! changes a hashed value.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::block::Block;

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("corrupt block record at height {height}: {reason}")]
    Corrupt { height: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ChainFileError {
    /// Height of the first record that could not be decoded, if any.
    pub fn height(&self) -> Option<u64> {
        match self {
            ChainFileError::Corrupt { height, .. } => Some(*height),
            ChainFileError::Io(_) => None,
        }
    }
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let json = serde_json::to_vec(block).expect("block serializes");
    let mut out = Vec::with_capacity(json.len() + 4);
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(&json);
    out
}

pub fn encode_chain(chain: &[Block]) -> Vec<u8> {
    chain.iter().flat_map(encode_block).collect()
}

/// Byte ranges occupied by each block record in an encoded chain.
pub fn record_spans(chain: &[Block]) -> Vec<std::ops::Range<usize>> {
    let mut spans = Vec::with_capacity(chain.len());
    let mut at = 0;
    for block in chain {
        let len = encode_block(block).len();
        spans.push(at..at + len);
        at += len;
    }
    spans
}

pub fn decode_chain(mut bytes: &[u8]) -> Result<Vec<Block>, ChainFileError> {
    let mut chain = Vec::new();
    while !bytes.is_empty() {
        let height = chain.len() as u64;
        let corrupt = |reason: String| ChainFileError::Corrupt { height, reason };
        let len_bytes: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| corrupt("truncated length prefix".into()))?;
        let len = u32::from_be_bytes(len_bytes) as usize;
        let record = bytes
            .get(4..4 + len)
            .ok_or_else(|| corrupt(format!("record of {len} bytes runs past end of file")))?;
        let block: Block =
            serde_json::from_slice(record).map_err(|e| corrupt(e.to_string()))?;
        if serde_json::to_vec(&block).expect("block serializes") != record {
            return Err(corrupt("record is not in canonical form".into()));
        }
        chain.push(block);
        bytes = &bytes[4 + len..];
    }
    Ok(chain)
}

pub fn append_block(path: &Path, block: &Block) -> io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&encode_block(block))
}

pub fn write_chain(path: &Path, chain: &[Block]) -> io::Result<()> {
    std::fs::write(path, encode_chain(chain))
}

pub fn read_chain(path: &Path) -> Result<Vec<Block>, ChainFileError> {
    let mut bytes = Vec::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    }
    decode_chain(&bytes)
}
