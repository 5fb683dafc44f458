//! Canonical binary encoding.
//!
//! Every state, effector and message type encodes through `bincode`'s default
//! configuration over its serde derive: integers are fixed-width little
//! endian, sequences and byte strings carry a `u64` length prefix, enum
//! variants a `u32` tag, and struct fields appear in declaration order. All
//! maps and sets are ordered, so equal values encode to identical bytes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("malformed encoding: {0}")]
pub struct CodecError(#[from] bincode::Error);

pub fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    bincode::serialize(value).expect("in-memory encoding of plain data cannot fail")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CodecError> {
    Ok(bincode::deserialize(bytes)?)
}
