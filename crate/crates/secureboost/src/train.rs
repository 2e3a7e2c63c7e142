use std::collections::HashMap;
use std::sync::Arc;

use ckks::{keygen, rotation_key_steps, Ciphertext, EvalKeys, Evaluator, FheContext, FheParams, KeySet};
use packed_matrix::{pack_gh_pairs, Backend, FheBackend, SlotMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simnet::{tags, Endpoint, Network, PartyId, Transcript};

use crate::histogram::{aggregate_encrypted_gh, sibling_subtract_encrypted, HistLayout};
use crate::wire::{self, from_bitmap, to_bitmap, GhMsg, HistMsg, NodeReq, SplitAck, SplitReq};
use crate::{
    compute_gh, leaf_weight, plain_histogram, rank_splits, sibling_subtract, Buckets, FedTree, FedTreeModel, FedTreeNode,
    GhPair, HistogramPair, LookupTable, NodeKind, Record, Result, SbError, SplitConfig,
};

/// The label holder's training inputs.
#[derive(Clone, Copy, Debug)]
pub struct ActiveData<'a> {
    pub features: &'a SlotMatrix,
    pub labels: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: FedTreeModel,
    /// Active table first, then one per passive party.
    pub tables: Vec<LookupTable>,
    pub transcript: Transcript,
    /// Raw training scores after the last tree.
    pub train_scores: Vec<f64>,
}

/// Runs the federated protocol between the active party and `passives`
/// (parties `passive1..`), all holding the same aligned samples.
pub fn train_ensemble(
    active: ActiveData,
    passives: &[&SlotMatrix],
    config: &SplitConfig,
    params: &FheParams,
    seed: u64,
) -> Result<TrainOutput> {
    config.validate()?;
    let n = active.features.rows;
    if active.labels.len() != n || passives.iter().any(|p| p.rows != n) {
        return Err(SbError::Input("parties hold different sample counts".into()));
    }
    let ids: Vec<PartyId> = (1..=passives.len()).map(|j| PartyId::passive(j as u16)).collect();
    let mut all = vec![PartyId::ACTIVE];
    all.extend(&ids);
    let net = Network::new(&all, seed);

    let mut active_out = None;
    let mut passive_out: Vec<Option<LookupTable>> = vec![None; passives.len()];
    {
        let mut tasks: Vec<simnet::Task<SbError>> = Vec::new();
        let ep = net.endpoint(PartyId::ACTIVE);
        let slot = &mut active_out;
        let ids_ref = &ids;
        tasks.push(Box::pin(async move {
            *slot = Some(active_train(&ep, ids_ref, active, config, params, seed).await?);
            Ok(())
        }));
        for ((out, id), feats) in passive_out.iter_mut().zip(&ids).zip(passives) {
            let ep = net.endpoint(*id);
            tasks.push(Box::pin(async move {
                *out = Some(passive_train(&ep, feats, config, params).await?);
                Ok(())
            }));
        }
        net.run(tasks)?;
    }
    let (model, table, train_scores) = active_out.expect("active finished");
    let mut tables = vec![table];
    tables.extend(passive_out.into_iter().map(|t| t.expect("passive finished")));
    Ok(TrainOutput { model, tables, transcript: net.transcript(), train_scores })
}

struct Pending {
    instances: Vec<usize>,
    depth: usize,
    /// `Some(left sibling)` for right children.
    left_sibling: Option<usize>,
    parent: Option<usize>,
}

struct ActiveState<'a> {
    ep: &'a Endpoint,
    passives: &'a [PartyId],
    keys: KeySet,
    layouts: Vec<HistLayout>,
    buckets: Buckets,
    data: ActiveData<'a>,
    config: &'a SplitConfig,
    enc: HashMap<(usize, usize), Vec<Ciphertext>>,
    own: HashMap<usize, HistogramPair>,
}

impl ActiveState<'_> {
    fn ctx(&self) -> &Arc<FheContext> {
        self.keys.context()
    }

    async fn request(&mut self, node: usize, instances: &[usize]) -> Result<()> {
        let n = self.data.features.rows;
        let req = wire::encode(&NodeReq { node: node as u32, instances: to_bitmap(instances, n) });
        for &p in self.passives {
            self.ep.send(p, tags::SB_NODE_REQ, req.clone())?;
        }
        for (j, &p) in self.passives.iter().enumerate() {
            let msg: HistMsg = wire::decode(&self.ep.expect(p, tags::SB_HISTOGRAMS).await?)?;
            if msg.node as usize != node {
                return Err(SbError::Protocol(format!("histograms for node {} instead of {node}", msg.node)));
            }
            let cts = msg.cts.iter().map(|b| Ciphertext::from_bytes(self.ctx(), b)).collect::<ckks::Result<Vec<_>>>()?;
            self.enc.insert((node, j), cts);
        }
        Ok(())
    }

    /// Decrypted histograms of every passive for `node`, plus the active one.
    async fn histograms(&mut self, node: usize, nodes: &[Pending], gh: &[GhPair]) -> Result<Vec<HistogramPair>> {
        let p = &nodes[node];
        match (p.left_sibling, p.parent) {
            (Some(left), Some(parent)) => {
                if !self.enc.contains_key(&(left, 0)) && !self.passives.is_empty() {
                    self.request(left, &nodes[left].instances).await?;
                }
                let eval = Evaluator::new(self.ctx().clone(), EvalKeys::default());
                let b = FheBackend::new(eval);
                for j in 0..self.passives.len() {
                    let right = sibling_subtract_encrypted(&b, &self.enc[&(parent, j)], &self.enc[&(left, j)])?;
                    self.enc.insert((node, j), right);
                }
                let left_own = match self.own.get(&left) {
                    Some(h) => h.clone(),
                    None => plain_histogram(self.data.features, &self.buckets, &nodes[left].instances, gh),
                };
                let right_own = sibling_subtract(&self.own[&parent], &left_own)?;
                self.own.insert(node, right_own);
            }
            _ => {
                if !self.passives.is_empty() {
                    self.request(node, &p.instances).await?;
                }
                self.own.insert(node, plain_histogram(self.data.features, &self.buckets, &p.instances, gh));
            }
        }
        let mut out = Vec::with_capacity(self.passives.len() + 1);
        for j in 0..self.passives.len() {
            let slots: Vec<Vec<f64>> = self.enc[&(node, j)].iter().map(|ct| self.keys.decrypt_values(ct)).collect();
            out.push(self.layouts[j].decode(&slots)?);
        }
        out.push(self.own[&node].clone());
        Ok(out)
    }

    /// Tries candidates best-first; returns the owner, record id and left set.
    async fn choose_split(
        &mut self,
        node: usize,
        instances: &[usize],
        hists: &[HistogramPair],
        table: &mut LookupTable,
    ) -> Result<Option<(PartyId, u32, Vec<usize>)>> {
        let n = self.data.features.rows;
        let mut cands: Vec<(usize, crate::SplitCandidate)> = Vec::new();
        for (pos, h) in hists.iter().enumerate() {
            cands.extend(rank_splits(h, self.config).into_iter().map(|c| (pos, c)));
        }
        cands.sort_by(|a, b| b.1.gain.total_cmp(&a.1.gain));
        let min = self.config.min_leaf;
        for (pos, c) in cands.into_iter().take_while(|(_, c)| c.gain > 0.0) {
            if pos == self.passives.len() {
                let left: Vec<usize> = instances
                    .iter()
                    .copied()
                    .filter(|&i| self.buckets.bucket_of(c.feature, self.data.features.get(i, c.feature)) <= c.bucket)
                    .collect();
                if left.len() >= min && instances.len() - left.len() >= min {
                    let rec = Record { feature: c.feature, threshold: self.buckets.threshold(c.feature, c.bucket) };
                    return Ok(Some((PartyId::ACTIVE, table.insert(rec), left)));
                }
            } else {
                let p = self.passives[pos];
                let req = SplitReq {
                    node: node as u32,
                    feature: c.feature as u32,
                    bucket: c.bucket as u32,
                    instances: to_bitmap(instances, n),
                };
                self.ep.send(p, tags::SB_SPLIT, wire::encode(&req))?;
                let ack: SplitAck = wire::decode(&self.ep.expect(p, tags::SB_SPLIT_ACK).await?)?;
                if ack.accepted {
                    return Ok(Some((p, ack.record_id, from_bitmap(&ack.left, n)?)));
                }
            }
        }
        Ok(None)
    }
}

async fn active_train(
    ep: &Endpoint,
    passives: &[PartyId],
    data: ActiveData<'_>,
    config: &SplitConfig,
    params: &FheParams,
    seed: u64,
) -> Result<(FedTreeModel, LookupTable, Vec<f64>)> {
    let keys = keygen(params, seed)?;
    let slots = keys.context().slot_count();
    let mut layouts = Vec::new();
    for &p in passives {
        let counts: Vec<usize> = wire::decode(&ep.expect(p, tags::SB_LAYOUT).await?)?;
        let layout = HistLayout::new(&counts, slots)?;
        let steps = rotation_key_steps(&layout.rotation_steps(), slots);
        ep.send(p, tags::KEYS_EVAL, keys.eval_keys_for(&steps, false)?.to_bytes(keys.context()))?;
        layouts.push(layout);
    }
    let mut st = ActiveState {
        ep,
        passives,
        keys,
        layouts,
        buckets: Buckets::fit(data.features, config.epsilon),
        data,
        config,
        enc: HashMap::new(),
        own: HashMap::new(),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xa11c_e5ec);
    let n = data.features.rows;
    let mut scores = vec![0.0; n];
    let mut model = FedTreeModel::new(config.learning_rate);
    let mut table = LookupTable::new(PartyId::ACTIVE);

    for t in 0..config.num_trees {
        let gh = compute_gh(data.labels, &scores)?;
        if !passives.is_empty() {
            let (g, h): (Vec<f64>, Vec<f64>) = gh.iter().map(|p| (p.g, p.h)).unzip();
            let half = slots / 2;
            let mut cts = Vec::new();
            for lo in (0..n).step_by(half) {
                let hi = (lo + half).min(n);
                let v = pack_gh_pairs(&g[lo..hi], &h[lo..hi], slots)?;
                cts.push(st.keys.encrypt_values(&v, &mut rng)?.to_bytes(st.ctx()));
            }
            let msg = wire::encode(&GhMsg { tree: t as u32, cts });
            for &p in passives {
                ep.send(p, tags::SB_GH, msg.clone())?;
            }
        }
        st.enc.clear();
        st.own.clear();

        let mut pending = vec![Pending { instances: (0..n).collect(), depth: 0, left_sibling: None, parent: None }];
        let mut kinds: Vec<NodeKind> = Vec::new();
        let mut id = 0;
        while id < pending.len() {
            let (depth, instances) = (pending[id].depth, pending[id].instances.clone());
            let mut kind = None;
            if depth < config.max_depth && instances.len() >= 2 * config.min_leaf {
                let hists = st.histograms(id, &pending, &gh).await?;
                if let Some((owner, record_id, left)) = st.choose_split(id, &instances, &hists, &mut table).await? {
                    let mut is_left = vec![false; n];
                    for &i in &left {
                        is_left[i] = true;
                    }
                    let right: Vec<usize> = instances.iter().copied().filter(|&i| !is_left[i]).collect();
                    let (l, r) = (pending.len(), pending.len() + 1);
                    pending.push(Pending { instances: left, depth: depth + 1, left_sibling: None, parent: Some(id) });
                    pending.push(Pending { instances: right, depth: depth + 1, left_sibling: Some(l), parent: Some(id) });
                    kind = Some(NodeKind::Internal { owner, record_id, left: l, right: r });
                }
            }
            let kind = match kind {
                Some(k) => k,
                None => {
                    let w = config.learning_rate * leaf_weight(&instances, &gh, config.lambda)?;
                    for &i in &instances {
                        scores[i] += w;
                    }
                    NodeKind::Leaf { weight: w }
                }
            };
            kinds.push(kind);
            id += 1;
        }
        let nodes = kinds.into_iter().enumerate().map(|(id, kind)| FedTreeNode { id, kind }).collect();
        model.trees.push(FedTree { nodes });
    }
    for &p in passives {
        ep.send(p, tags::SB_DONE, Vec::new())?;
    }
    Ok((model, table, scores))
}

async fn passive_train(ep: &Endpoint, features: &SlotMatrix, config: &SplitConfig, params: &FheParams) -> Result<LookupTable> {
    let active = PartyId::ACTIVE;
    let n = features.rows;
    let buckets = Buckets::fit(features, config.epsilon);
    let ctx = FheContext::new(params)?;
    let layout = HistLayout::new(&buckets.counts(), ctx.slot_count())?;
    ep.send(active, tags::SB_LAYOUT, wire::encode(&buckets.counts()))?;
    let ek = EvalKeys::from_bytes(&ctx, &ep.expect(active, tags::KEYS_EVAL).await?)?;
    let backend = FheBackend::new(Evaluator::new(ctx.clone(), ek));
    let mut table = LookupTable::new(ep.id());
    let mut gh: Vec<Ciphertext> = Vec::new();
    loop {
        let msg = ep.recv(active).await?;
        match msg.tag {
            tags::SB_GH => {
                let m: GhMsg = wire::decode(&msg.payload)?;
                gh = m.cts.iter().map(|b| Ciphertext::from_bytes(&ctx, b)).collect::<ckks::Result<_>>()?;
            }
            tags::SB_NODE_REQ => {
                let m: NodeReq = wire::decode(&msg.payload)?;
                let instances = from_bitmap(&m.instances, n)?;
                let cts = aggregate_encrypted_gh(&backend, features, &buckets, &layout, &instances, &gh)?;
                let cts = cts
                    .iter()
                    .map(|ct| backend.mod_drop(ct, 0).map(|c| c.to_bytes(&ctx)))
                    .collect::<ckks::Result<Vec<_>>>()?;
                ep.send(active, tags::SB_HISTOGRAMS, wire::encode(&HistMsg { node: m.node, cts }))?;
            }
            tags::SB_SPLIT => {
                let m: SplitReq = wire::decode(&msg.payload)?;
                let (k, v) = (m.feature as usize, m.bucket as usize);
                if k >= buckets.features() || v + 1 >= buckets.count(k) {
                    return Err(SbError::Protocol(format!("split ({k}, {v}) outside the bucket layout")));
                }
                let instances = from_bitmap(&m.instances, n)?;
                let left: Vec<usize> =
                    instances.iter().copied().filter(|&i| buckets.bucket_of(k, features.get(i, k)) <= v).collect();
                let ok = left.len() >= config.min_leaf && instances.len() - left.len() >= config.min_leaf;
                let record_id = if ok { table.insert(Record { feature: k, threshold: buckets.threshold(k, v) }) } else { 0 };
                let ack = SplitAck { accepted: ok, record_id, left: if ok { to_bitmap(&left, n) } else { Vec::new() } };
                ep.send(active, tags::SB_SPLIT_ACK, wire::encode(&ack))?;
            }
            tags::SB_DONE => return Ok(table),
            other => {
                return Err(simnet::NetError::UnexpectedTag {
                    from: active,
                    expected: "a training message".into(),
                    got: tags::name(other),
                }
                .into())
            }
        }
    }
}
