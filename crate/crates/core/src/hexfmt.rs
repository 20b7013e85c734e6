//! Strict lowercase-hex serde adapters.
//!
//! Decoding refuses uppercase digits so every value has exactly one textual
//! form; hashed JSON therefore cannot be altered without changing its value.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

pub(crate) fn decode_strict(s: &str) -> Result<Vec<u8>, String> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(format!("hex must be lowercase: {s:?}"));
    }
    hex::decode(s).map_err(|e| e.to_string())
}

pub(crate) fn decode_array<const N: usize>(s: &str) -> Result<[u8; N], String> {
    let bytes = decode_strict(s)?;
    let len = bytes.len();
    bytes
        .try_into()
        .map_err(|_| format!("expected {N} bytes, got {len}"))
}

pub(crate) mod array {
    use super::*;

    pub fn serialize<S: Serializer, const N: usize>(v: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        decode_array(&s).map_err(D::Error::custom)
    }
}
