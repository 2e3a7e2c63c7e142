use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{tags, PartyId, HEADER_BYTES};

/// One delivered message as it appears in the transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub tag: u16,
    pub tag_name: String,
    pub payload_bytes: u64,
    pub framed_bytes: u64,
    /// Hex SHA-256 of the payload.
    pub digest: String,
    #[serde(skip)]
    pub payload: Option<Vec<u8>>,
}

/// Ordered message log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub messages: Vec<MessageRecord>,
}

/// Which messages an [`Transcript::account`] call looks at.
#[derive(Clone, Debug, Default)]
pub struct Filter {
    /// Keep messages sent or received by any of these parties.
    pub parties: Option<Vec<PartyId>>,
    /// Keep messages carrying any of these tags.
    pub tags: Option<Vec<u16>>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn tags(tags: &[u16]) -> Self {
        Self { parties: None, tags: Some(tags.to_vec()) }
    }

    fn keeps(&self, m: &MessageRecord) -> bool {
        self.parties.as_ref().is_none_or(|ps| ps.contains(&m.from) || ps.contains(&m.to))
            && self.tags.as_ref().is_none_or(|ts| ts.contains(&m.tag))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAccount {
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub messages: u64,
    pub rounds: u64,
    pub bytes: u64,
    pub per_tag: BTreeMap<String, TagAccount>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Framed bytes (payload plus header) over every message.
    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.framed_bytes).sum()
    }

    pub fn bytes_by_direction(&self) -> BTreeMap<(PartyId, PartyId), u64> {
        let mut out = BTreeMap::new();
        for m in &self.messages {
            *out.entry((m.from, m.to)).or_insert(0) += m.framed_bytes;
        }
        out
    }

    /// Interaction rounds: per channel, every request run plus the reply run
    /// that answers it counts once.
    pub fn rounds(&self) -> u64 {
        rounds_of(self.messages.iter())
    }

    /// Messages from index `start` on, e.g. those of one protocol phase.
    pub fn since(&self, start: usize) -> Transcript {
        Transcript { messages: self.messages[start.min(self.messages.len())..].to_vec() }
    }

    pub fn account(&self, filter: &Filter) -> Account {
        let kept: Vec<&MessageRecord> = self.messages.iter().filter(|m| filter.keeps(m)).collect();
        let mut per_tag: BTreeMap<String, TagAccount> = BTreeMap::new();
        for m in &kept {
            let e = per_tag.entry(m.tag_name.clone()).or_default();
            e.messages += 1;
            e.bytes += m.framed_bytes;
        }
        Account {
            messages: kept.len() as u64,
            rounds: rounds_of(kept.iter().copied()),
            bytes: kept.iter().map(|m| m.framed_bytes).sum(),
            per_tag,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let messages = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<MessageRecord>, _>>()?;
        Ok(Self { messages })
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_jsonl().as_bytes()).into()
    }

    /// Binary dump of every captured payload with its frame header.
    pub fn dump_payloads<W: Write>(&self, mut w: W) -> io::Result<()> {
        for m in &self.messages {
            let Some(p) = &m.payload else {
                return Err(io::Error::other("payload capture was not enabled"));
            };
            w.write_all(&(p.len() as u32).to_le_bytes())?;
            w.write_all(&m.tag.to_le_bytes())?;
            w.write_all(&m.seq.to_le_bytes())?;
            w.write_all(p)?;
        }
        Ok(())
    }

    pub(crate) fn record(&mut self, seq: u64, from: PartyId, to: PartyId, tag: u16, payload: &[u8], keep: bool) {
        self.messages.push(MessageRecord {
            seq,
            from,
            to,
            tag,
            tag_name: tags::name(tag),
            payload_bytes: payload.len() as u64,
            framed_bytes: (payload.len() + HEADER_BYTES) as u64,
            digest: hex::encode(Sha256::digest(payload)),
            payload: keep.then(|| payload.to_vec()),
        });
    }
}

fn rounds_of<'a>(messages: impl Iterator<Item = &'a MessageRecord>) -> u64 {
    // (last direction, number of direction runs) per unordered pair.
    let mut runs: BTreeMap<(PartyId, PartyId), (PartyId, u64)> = BTreeMap::new();
    for m in messages {
        let key = if m.from < m.to { (m.from, m.to) } else { (m.to, m.from) };
        let e = runs.entry(key).or_insert((m.from, 0));
        if e.1 == 0 || e.0 != m.from {
            e.0 = m.from;
            e.1 += 1;
        }
    }
    runs.values().map(|&(_, r)| r.div_ceil(2)).sum()
}
