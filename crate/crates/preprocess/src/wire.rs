use ckks::{Ciphertext, FheContext};
use serde::{de::DeserializeOwned, Serialize};

use crate::{PrepError, Result};

pub fn encode<T: Serialize>(v: &T) -> Vec<u8> {
    bincode::serialize(v).expect("in-memory serialization")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| PrepError::Encoding(e.to_string()))
}

pub fn ct_bytes(ctx: &FheContext, cts: &[Ciphertext]) -> Vec<Vec<u8>> {
    cts.iter().map(|c| c.to_bytes(ctx)).collect()
}

pub fn cts_from(ctx: &FheContext, raw: &[Vec<u8>]) -> Result<Vec<Ciphertext>> {
    Ok(raw.iter().map(|b| Ciphertext::from_bytes(ctx, b)).collect::<ckks::Result<_>>()?)
}
