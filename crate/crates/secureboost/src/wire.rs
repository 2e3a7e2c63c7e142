use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::{Result, SbError};

pub(crate) fn encode<T: Serialize>(v: &T) -> Vec<u8> {
    bincode::serialize(v).expect("in-memory serialization")
}

pub(crate) fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| SbError::Protocol(format!("bad payload: {e}")))
}

/// Instance set as a little-endian bitmap over `n` samples.
pub fn to_bitmap(instances: &[usize], n: usize) -> Vec<u8> {
    let mut out = vec![0u8; n.div_ceil(8)];
    for &i in instances {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn from_bitmap(bits: &[u8], n: usize) -> Result<Vec<usize>> {
    if bits.len() != n.div_ceil(8) {
        return Err(SbError::Protocol(format!("bitmap of {} bytes for {n} samples", bits.len())));
    }
    Ok((0..n).filter(|&i| bits[i / 8] >> (i % 8) & 1 == 1).collect())
}

#[derive(Serialize, Deserialize)]
pub(crate) struct GhMsg {
    pub tree: u32,
    pub cts: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct NodeReq {
    pub node: u32,
    pub instances: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct HistMsg {
    pub node: u32,
    pub cts: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct SplitReq {
    pub node: u32,
    pub feature: u32,
    pub bucket: u32,
    pub instances: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct SplitAck {
    pub accepted: bool,
    pub record_id: u32,
    pub left: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct InfReq {
    pub sample: u32,
    pub record: u32,
}
