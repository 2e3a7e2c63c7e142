use std::collections::BTreeSet;

use psi::{psi_receiver, psi_sender, PsiSet};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simnet::{tags, Network, PartyId, Transcript};

use crate::wire::{self, InfReq};
use crate::{FedTree, FedTreeModel, LookupTable, NodeKind, Result, SbError, Shards};

#[derive(Clone, Debug)]
pub struct InferOutput {
    /// Leaf id per sample and tree.
    pub leaves: Vec<Vec<usize>>,
    /// Raw score per sample.
    pub scores: Vec<f64>,
    /// Realized root-to-leaf path per sample and tree.
    pub paths: Vec<Vec<Vec<usize>>>,
    /// Transcript index where each sample's traffic starts.
    pub sample_marks: Vec<usize>,
    pub transcript: Transcript,
}

impl InferOutput {
    /// Messages belonging to sample `k`.
    pub fn sample_transcript(&self, k: usize) -> Transcript {
        let end = self.sample_marks.get(k + 1).copied().unwrap_or(self.transcript.len());
        let mut t = self.transcript.since(self.sample_marks[k]);
        t.messages.truncate(end - self.sample_marks[k]);
        t.messages.retain(|m| m.tag != tags::INF_DONE);
        t
    }
}

fn table_of(tables: &[LookupTable], party: PartyId) -> Result<&LookupTable> {
    tables.iter().find(|t| t.party == party).ok_or_else(|| SbError::Protocol(format!("no lookup table for {party}")))
}

fn passives_of(shards: &Shards) -> Vec<PartyId> {
    shards.parties.iter().map(|(p, _)| *p).filter(|p| !p.is_active()).collect()
}

fn network(shards: &Shards, seed: u64) -> Network {
    let mut ids = vec![PartyId::ACTIVE];
    ids.extend(passives_of(shards));
    Network::new(&ids, seed)
}

/// Node-by-node walk coordinated by the active party; every passive-owned
/// node on the path costs one request and one response.
pub fn classic_infer(
    model: &FedTreeModel,
    tables: &[LookupTable],
    shards: &Shards,
    samples: &[usize],
    seed: u64,
) -> Result<InferOutput> {
    let net = network(shards, seed);
    let passives = passives_of(shards);
    let mut out = None;
    {
        let mut tasks: Vec<simnet::Task<SbError>> = Vec::new();
        let ep = net.endpoint(PartyId::ACTIVE);
        let slot = &mut out;
        let own = table_of(tables, PartyId::ACTIVE)?;
        let rows = shards.of(PartyId::ACTIVE)?;
        let ps = &passives;
        tasks.push(Box::pin(async move {
            let mut leaves = Vec::new();
            let mut paths = Vec::new();
            let mut marks = Vec::new();
            for &s in samples {
                marks.push(ep.mark());
                let mut ls = Vec::new();
                let mut ps_paths = Vec::new();
                for tree in &model.trees {
                    let mut id = 0;
                    let mut path = vec![0];
                    while let NodeKind::Internal { owner, record_id, left, right } = tree.node(id)?.kind {
                        let go_left = if owner.is_active() {
                            own.go_left(record_id, rows.row(s))?
                        } else {
                            let req = InfReq { sample: s as u32, record: record_id };
                            ep.send(owner, tags::INF_NODE_REQ, wire::encode(&req))?;
                            let resp = ep.expect(owner, tags::INF_NODE_RESP).await?;
                            resp.first() == Some(&1)
                        };
                        id = if go_left { left } else { right };
                        path.push(id);
                    }
                    ls.push(id);
                    ps_paths.push(path);
                }
                leaves.push(ls);
                paths.push(ps_paths);
            }
            for &p in ps {
                ep.send(p, tags::INF_DONE, Vec::new())?;
            }
            *slot = Some((leaves, paths, marks));
            Ok(())
        }));
        for &p in &passives {
            let ep = net.endpoint(p);
            let table = table_of(tables, p)?;
            let rows = shards.of(p)?;
            tasks.push(Box::pin(async move {
                loop {
                    let m = ep.recv(PartyId::ACTIVE).await?;
                    match m.tag {
                        tags::INF_NODE_REQ => {
                            let req: InfReq = wire::decode(&m.payload)?;
                            let sample = req.sample as usize;
                            if sample >= rows.rows {
                                return Err(SbError::Protocol(format!("unknown sample {sample}")));
                            }
                            let left = table.go_left(req.record, rows.row(sample))?;
                            ep.send(PartyId::ACTIVE, tags::INF_NODE_RESP, vec![u8::from(left)])?;
                        }
                        tags::INF_DONE => return Ok(()),
                        other => return Err(SbError::Protocol(format!("unexpected {}", tags::name(other)))),
                    }
                }
            }));
        }
        net.run(tasks)?;
    }
    let (leaves, paths, sample_marks) = out.expect("active finished");
    let scores = leaves.iter().map(|l: &Vec<usize>| model.score(l)).collect();
    Ok(InferOutput { leaves, scores, paths, sample_marks, transcript: net.transcript() })
}

/// Nodes of `tree` that `party` cannot rule out for `row`: for every node it
/// owns, the subtree on the untaken side is removed.
pub fn node_list(tree: &FedTree, party: PartyId, table: &LookupTable, row: &[f64]) -> Result<Vec<usize>> {
    let mut keep = vec![true; tree.nodes.len()];
    for node in &tree.nodes {
        if let NodeKind::Internal { owner, record_id, left, right } = node.kind {
            if owner == party {
                let drop = if table.go_left(record_id, row)? { right } else { left };
                for d in tree.subtree(drop) {
                    keep[d] = false;
                }
            }
        }
    }
    Ok((0..tree.nodes.len()).filter(|&i| keep[i]).collect())
}

/// Checks that `nodes` is exactly one root-to-leaf path and returns the leaf.
pub fn check_chain(tree: &FedTree, nodes: &[usize]) -> Result<usize> {
    let set: BTreeSet<usize> = nodes.iter().copied().collect();
    let bad = || SbError::Protocol(format!("intersection {nodes:?} is not a root-to-leaf chain"));
    if !set.contains(&0) {
        return Err(bad());
    }
    let mut id = 0;
    let mut len = 1;
    while let NodeKind::Internal { left, right, .. } = tree.node(id)?.kind {
        id = match (set.contains(&left), set.contains(&right)) {
            (true, false) => left,
            (false, true) => right,
            _ => return Err(bad()),
        };
        len += 1;
    }
    if len != set.len() {
        return Err(bad());
    }
    Ok(id)
}

fn encode_nodes(per_tree: &[Vec<usize>]) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for (t, nodes) in per_tree.iter().enumerate() {
        for &n in nodes {
            let mut e = (t as u16).to_be_bytes().to_vec();
            e.extend_from_slice(&(n as u32).to_be_bytes());
            out.push(e);
        }
    }
    out
}

fn decode_node(e: &[u8]) -> (usize, usize) {
    (u16::from_be_bytes([e[0], e[1]]) as usize, u32::from_be_bytes([e[2], e[3], e[4], e[5]]) as usize)
}

fn lists(model: &FedTreeModel, party: PartyId, table: &LookupTable, row: &[f64]) -> Result<Vec<Vec<usize>>> {
    model.trees.iter().map(|t| node_list(t, party, table, row)).collect()
}

/// Path-hiding inference: every party prunes the nodes it owns and the
/// active party intersects its list with each passive's by one PSI session.
pub fn psi_infer(
    model: &FedTreeModel,
    tables: &[LookupTable],
    shards: &Shards,
    samples: &[usize],
    seed: u64,
) -> Result<InferOutput> {
    let net = network(shards, seed);
    let passives = passives_of(shards);
    let mut out = None;
    {
        let mut tasks: Vec<simnet::Task<SbError>> = Vec::new();
        let ep = net.endpoint(PartyId::ACTIVE);
        let slot = &mut out;
        let own = table_of(tables, PartyId::ACTIVE)?;
        let rows = shards.of(PartyId::ACTIVE)?;
        let ps = &passives;
        tasks.push(Box::pin(async move {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (mut leaves, mut paths, mut marks) = (Vec::new(), Vec::new(), Vec::new());
            for &s in samples {
                marks.push(ep.mark());
                if model.trees.is_empty() {
                    leaves.push(Vec::new());
                    paths.push(Vec::new());
                    continue;
                }
                let mine = lists(model, PartyId::ACTIVE, own, rows.row(s))?;
                let set = PsiSet::new(encode_nodes(&mine))?;
                let mut common: BTreeSet<Vec<u8>> = set.elements().iter().cloned().collect();
                for &p in ps {
                    let got: BTreeSet<Vec<u8>> = psi_receiver(&ep, p, &set, &mut rng).await?.into_iter().collect();
                    common = common.intersection(&got).cloned().collect();
                }
                let mut per_tree = vec![Vec::new(); model.trees.len()];
                for e in &common {
                    let (t, n) = decode_node(e);
                    per_tree[t].push(n);
                }
                let ls = model.trees.iter().zip(&per_tree).map(|(t, nodes)| check_chain(t, nodes)).collect::<Result<Vec<_>>>()?;
                leaves.push(ls);
                paths.push(per_tree);
            }
            *slot = Some((leaves, paths, marks));
            Ok(())
        }));
        for (j, &p) in passives.iter().enumerate() {
            let ep = net.endpoint(p);
            let table = table_of(tables, p)?;
            let rows = shards.of(p)?;
            tasks.push(Box::pin(async move {
                let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (0x9e37_79b9 + j as u64));
                for &s in samples {
                    if model.trees.is_empty() {
                        break;
                    }
                    let set = PsiSet::new(encode_nodes(&lists(model, p, table, rows.row(s))?))?;
                    psi_sender(&ep, PartyId::ACTIVE, &set, &mut rng).await?;
                }
                Ok(())
            }));
        }
        net.run(tasks)?;
    }
    let (leaves, paths, sample_marks) = out.expect("active finished");
    let scores = leaves.iter().map(|l: &Vec<usize>| model.score(l)).collect();
    Ok(InferOutput { leaves, scores, paths, sample_marks, transcript: net.transcript() })
}
