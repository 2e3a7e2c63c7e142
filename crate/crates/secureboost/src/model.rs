use std::collections::BTreeMap;
use std::path::Path;

use packed_matrix::SlotMatrix;
use serde::{Deserialize, Serialize};
use simnet::PartyId;

use crate::{sigmoid, Result, SbError};

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Internal { owner: PartyId, record_id: u32, left: usize, right: usize },
    Leaf { weight: f64 },
}

/// Shared view of one node; the split itself lives in the owner's table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedTreeNode {
    pub id: usize,
    pub kind: NodeKind,
}

/// Nodes in level order; `nodes[i].id == i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FedTree {
    pub nodes: Vec<FedTreeNode>,
}

impl FedTree {
    pub fn node(&self, id: usize) -> Result<&FedTreeNode> {
        self.nodes.get(id).ok_or_else(|| SbError::Protocol(format!("unknown node {id}")))
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.nodes[id].kind, NodeKind::Leaf { .. })
    }

    pub fn weight(&self, id: usize) -> Option<f64> {
        match self.nodes[id].kind {
            NodeKind::Leaf { weight } => Some(weight),
            NodeKind::Internal { .. } => None,
        }
    }

    /// 1-based position of a leaf among all leaves in level order (`w_k`).
    pub fn leaf_label(&self, id: usize) -> Option<usize> {
        if !self.is_leaf(id) {
            return None;
        }
        Some(self.nodes[..=id].iter().filter(|n| matches!(n.kind, NodeKind::Leaf { .. })).count())
    }

    /// `id` and every node below it.
    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            if let NodeKind::Internal { left, right, .. } = self.nodes[n].kind {
                stack.push(right);
                stack.push(left);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn depth(&self) -> usize {
        fn go(t: &FedTree, id: usize) -> usize {
            match t.nodes[id].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Internal { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            go(self, 0)
        }
    }

    /// Builds a tree from `(id, children)` pairs; convenient for fixtures.
    pub fn from_parts(parts: Vec<NodeKind>) -> Result<Self> {
        let nodes: Vec<FedTreeNode> = parts.into_iter().enumerate().map(|(id, kind)| FedTreeNode { id, kind }).collect();
        for n in &nodes {
            if let NodeKind::Internal { left, right, .. } = n.kind {
                if left <= n.id || right <= n.id || left >= nodes.len() || right >= nodes.len() {
                    return Err(SbError::Input(format!("node {} has invalid children", n.id)));
                }
            }
        }
        Ok(Self { nodes })
    }
}

/// Shared model document: topology, owners, record ids and leaf weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedTreeModel {
    pub version: u32,
    pub learning_rate: f64,
    pub base_score: f64,
    pub trees: Vec<FedTree>,
}

impl FedTreeModel {
    pub fn new(learning_rate: f64) -> Self {
        Self { version: MODEL_VERSION, learning_rate, base_score: 0.0, trees: Vec::new() }
    }

    pub fn score(&self, leaves: &[usize]) -> f64 {
        self.base_score + self.trees.iter().zip(leaves).map(|(t, &l)| t.weight(l).unwrap_or(0.0)).sum::<f64>()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        if m.version != MODEL_VERSION {
            return Err(SbError::Input(format!("model version {} is not supported", m.version)));
        }
        Ok(m)
    }
}

/// One private split: local feature index and threshold (`x <= t` goes left).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub feature: usize,
    pub threshold: f64,
}

/// A party's private lookup table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub version: u32,
    pub party: PartyId,
    pub records: BTreeMap<u32, Record>,
}

impl LookupTable {
    pub fn new(party: PartyId) -> Self {
        Self { version: MODEL_VERSION, party, records: BTreeMap::new() }
    }

    pub fn insert(&mut self, record: Record) -> u32 {
        let id = self.records.len() as u32;
        self.records.insert(id, record);
        id
    }

    pub fn go_left(&self, record_id: u32, row: &[f64]) -> Result<bool> {
        let r = self.records.get(&record_id).ok_or_else(|| SbError::Protocol(format!("unknown record {record_id}")))?;
        Ok(row[r.feature] <= r.threshold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| SbError::Input(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| SbError::Io(e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| SbError::Io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| SbError::Input(e.to_string()))
}

/// Feature shards of every party for a common set of samples.
#[derive(Clone, Debug)]
pub struct Shards<'a> {
    pub parties: Vec<(PartyId, &'a SlotMatrix)>,
}

impl<'a> Shards<'a> {
    pub fn of(&self, party: PartyId) -> Result<&'a SlotMatrix> {
        self.parties.iter().find(|(p, _)| *p == party).map(|(_, m)| *m).ok_or(SbError::Protocol(format!("no shard for {party}")))
    }
}

fn table_of(tables: &[LookupTable], party: PartyId) -> Result<&LookupTable> {
    tables.iter().find(|t| t.party == party).ok_or_else(|| SbError::Protocol(format!("no lookup table for {party}")))
}

/// Single-machine walk with every table and shard at hand.
pub fn predict_centralized(model: &FedTreeModel, tables: &[LookupTable], shards: &Shards, sample: usize) -> Result<(Vec<usize>, f64)> {
    let mut leaves = Vec::with_capacity(model.trees.len());
    for tree in &model.trees {
        let mut id = 0;
        while let NodeKind::Internal { owner, record_id, left, right } = tree.node(id)?.kind {
            let row = shards.of(owner)?.row(sample);
            id = if table_of(tables, owner)?.go_left(record_id, row)? { left } else { right };
        }
        leaves.push(id);
    }
    let s = model.score(&leaves);
    Ok((leaves, s))
}

pub fn predict_proba(score: f64) -> f64 {
    sigmoid(score)
}
