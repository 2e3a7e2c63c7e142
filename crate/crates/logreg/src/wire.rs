use ckks::{Ciphertext, FheContext};
use serde::{de::DeserializeOwned, Serialize};

use crate::{LrError, Result};

pub fn encode<T: Serialize>(v: &T) -> Vec<u8> {
    bincode::serialize(v).expect("in-memory serialization")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| LrError::Encoding(e.to_string()))
}

pub fn encode_cts(ctx: &FheContext, cts: &[Ciphertext]) -> Vec<u8> {
    encode(&cts.iter().map(|c| c.to_bytes(ctx)).collect::<Vec<_>>())
}

pub fn decode_cts(ctx: &FheContext, bytes: &[u8]) -> Result<Vec<Ciphertext>> {
    let raw: Vec<Vec<u8>> = decode(bytes)?;
    Ok(raw.iter().map(|b| Ciphertext::from_bytes(ctx, b)).collect::<ckks::Result<_>>()?)
}

pub fn decode_ct(ctx: &FheContext, bytes: &[u8]) -> Result<Ciphertext> {
    let mut v = decode_cts(ctx, bytes)?;
    if v.len() != 1 {
        return Err(LrError::Protocol(format!("expected one ciphertext, got {}", v.len())));
    }
    Ok(v.remove(0))
}

/// SHA-256 over the little-endian batch indices.
pub fn batch_digest(idx: &[usize]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for &i in idx {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().into()
}
