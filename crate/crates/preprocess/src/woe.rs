use ckks::{keygen, rotation_key_steps, EvalKeys, Evaluator, FheContext, FheParams, PublicKey};
use packed_matrix::{col_sum_rotate, Backend, FheBackend, Layout};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use simnet::{tags, Endpoint, Network, PartyId, Transcript};

use crate::wire::{ct_bytes, cts_from, decode, encode};
use crate::{BinMatrix, BinSpec, PrepError, Result};

/// Count substituted for an empty good or bad cell.
pub const SMOOTHING: f64 = 0.5;

/// Widest column group packed into one ciphertext set.
const MAX_GROUP_WIDTH: usize = 256;

/// The encrypted products need one rescale; fresh ciphertexts sit one level
/// above the bottom to keep messages small.
const WORK_LEVEL: usize = 1;

const A: PartyId = PartyId::ACTIVE;
const B: PartyId = PartyId::passive(1);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WoeTable {
    pub good: Vec<u64>,
    pub bad: Vec<u64>,
    pub good_total: u64,
    pub bad_total: u64,
    pub woe: Vec<f64>,
}

/// WOE from per-bin positive counts and bin populations.
pub fn woe_from_counts(good: &[u64], totals: &[u64]) -> Result<WoeTable> {
    if good.len() != totals.len() {
        return Err(PrepError::Input(format!("{} good counts for {} bins", good.len(), totals.len())));
    }
    if let Some(i) = good.iter().zip(totals).position(|(g, t)| g > t) {
        return Err(PrepError::Input(format!("bin {i} has more positives than rows")));
    }
    let bad: Vec<u64> = totals.iter().zip(good).map(|(t, g)| t - g).collect();
    let good_total: u64 = good.iter().sum();
    let bad_total: u64 = bad.iter().sum();
    if good_total == 0 || bad_total == 0 {
        return Err(PrepError::Input("WOE needs both positive and negative samples".into()));
    }
    let smooth = |c: u64| if c == 0 { SMOOTHING } else { c as f64 };
    let woe = good
        .iter()
        .zip(&bad)
        .map(|(&g, &b)| ((smooth(g) / good_total as f64) / (smooth(b) / bad_total as f64)).ln())
        .collect();
    Ok(WoeTable { good: good.to_vec(), bad, good_total, bad_total, woe })
}

/// Plaintext WOE with labels in `{0, 1}`.
pub fn woe_plain(bins: &BinMatrix, y: &[f64]) -> Result<WoeTable> {
    check_labels(y, bins.rows())?;
    let mut good = vec![0u64; bins.bins];
    for (&b, &label) in bins.index.iter().zip(y) {
        good[b] += (label == 1.0) as u64;
    }
    woe_from_counts(&good, &bins.column_sums())
}

fn check_labels(y: &[f64], rows: usize) -> Result<()> {
    if y.len() != rows {
        return Err(PrepError::Input(format!("{} labels for {rows} rows", y.len())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(PrepError::Input("labels must be 0 or 1".into()));
    }
    Ok(())
}

impl WoeTable {
    /// Replaces each value by the WOE of its bin.
    pub fn encode(&self, spec: &BinSpec, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.woe[spec.bin_of(v)]).collect()
    }
}

/// What B learns from [`woe_fhe`]: per feature, the positive count of
/// every bin and the bin populations it already had.
#[derive(Clone, Debug)]
pub struct WoeFheOutput {
    pub good: Vec<Vec<u64>>,
    pub totals: Vec<Vec<u64>>,
    pub transcript: Transcript,
}

impl WoeFheOutput {
    pub fn tables(&self) -> Result<Vec<WoeTable>> {
        self.good.iter().zip(&self.totals).map(|(g, t)| woe_from_counts(g, t)).collect()
    }
}

/// Bin matrices of several features side by side.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Group {
    features: Vec<usize>,
    widths: Vec<usize>,
    layout: (usize, usize),
}

impl Group {
    fn layout(&self) -> Layout {
        Layout { rows: self.layout.0, cols: self.layout.1 }
    }

    fn chunks(&self, n: usize) -> usize {
        n.div_ceil(self.layout.0)
    }
}

#[derive(Serialize, Deserialize)]
struct BinsMsg {
    rows: usize,
    groups: Vec<Group>,
    cts: Vec<Vec<Vec<u8>>>,
}

fn plan_groups(bins: &[BinMatrix], slots: usize) -> Result<Vec<Group>> {
    let mut groups: Vec<Group> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut width = 0;
    let close = |cur: &mut Vec<usize>, groups: &mut Vec<Group>| {
        if cur.is_empty() {
            return;
        }
        let widths: Vec<usize> = cur.iter().map(|&f| bins[f].bins).collect();
        let cols = widths.iter().sum::<usize>().next_power_of_two();
        groups.push(Group { features: std::mem::take(cur), widths, layout: (slots / cols, cols) });
    };
    for (f, b) in bins.iter().enumerate() {
        if b.bins > MAX_GROUP_WIDTH.min(slots) {
            return Err(PrepError::Input(format!("feature {f} has {} bins, more than {MAX_GROUP_WIDTH}", b.bins)));
        }
        if width + b.bins > MAX_GROUP_WIDTH.min(slots) {
            close(&mut cur, &mut groups);
            width = 0;
        }
        cur.push(f);
        width += b.bins;
    }
    close(&mut cur, &mut groups);
    Ok(groups)
}

/// Slot vectors of one group, row chunk by row chunk.
fn pack_group(g: &Group, n: usize, cell: impl Fn(usize, usize, usize) -> f64, slots: usize) -> Vec<Vec<f64>> {
    let l = g.layout();
    (0..g.chunks(n))
        .map(|c| {
            let mut v = vec![0.0; slots];
            for r in 0..l.rows {
                let i = c * l.rows + r;
                if i >= n {
                    break;
                }
                let mut col = 0;
                for (k, &w) in g.widths.iter().enumerate() {
                    for j in 0..w {
                        v[r * l.cols + col + j] = cell(i, k, j);
                    }
                    col += w;
                }
            }
            v
        })
        .collect()
}

/// Encrypted WOE counting. B (`passive1`) holds the binned features and the
/// keys; A (`active`) holds labels in `{0, 1}`. A learns nothing about the
/// bins; B learns only the positive count of each of its bins.
pub fn woe_fhe(y: &[f64], bins: &[BinMatrix], params: &FheParams, seed: u64) -> Result<WoeFheOutput> {
    let n = y.len();
    check_labels(y, n)?;
    if bins.is_empty() || n == 0 {
        return Err(PrepError::Input("nothing to bin".into()));
    }
    if let Some(b) = bins.iter().find(|b| b.rows() != n) {
        return Err(PrepError::Input(format!("bin matrix has {} rows, labels {n}", b.rows())));
    }
    let net = Network::new(&[A, B], seed);
    let mut good = None;
    {
        let (ea, eb) = (net.endpoint(A), net.endpoint(B));
        let out = &mut good;
        let tasks: Vec<simnet::Task<PrepError>> = vec![
            Box::pin(async move {
                *out = Some(woe_b(&eb, bins, params, seed).await?);
                Ok(())
            }),
            Box::pin(woe_a(ea, y, params, seed)),
        ];
        net.run(tasks)?;
    }
    let totals = bins.iter().map(BinMatrix::column_sums).collect();
    Ok(WoeFheOutput { good: good.expect("B finished"), totals, transcript: net.transcript() })
}

async fn woe_b(ep: &Endpoint, bins: &[BinMatrix], params: &FheParams, seed: u64) -> Result<Vec<Vec<u64>>> {
    let keys = keygen(params, seed)?;
    let ctx = keys.context().clone();
    let slots = ctx.slot_count();
    let n = bins[0].rows();
    let groups = plan_groups(bins, slots)?;
    let steps: Vec<i64> =
        groups.iter().flat_map(|g| (0..g.layout().log_rows()).map(move |j| (g.layout.1 << j) as i64)).collect();
    ep.send(A, tags::KEYS_PUBLIC, keys.public_key.to_bytes(&ctx))?;
    ep.send(A, tags::KEYS_EVAL, keys.eval_keys_for(&rotation_key_steps(&steps, slots), true)?.to_bytes(&ctx))?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xb1e5);
    let mut cts = Vec::with_capacity(groups.len());
    for g in &groups {
        let cell = |i: usize, k: usize, j: usize| (bins[g.features[k]].index[i] == j) as u8 as f64;
        let enc = pack_group(g, n, cell, slots)
            .iter()
            .map(|v| Ok(keys.public_key.encrypt(&ctx, &ctx.encode(v, ctx.params().scale_bits, WORK_LEVEL)?, &mut rng)?))
            .collect::<Result<Vec<_>>>()?;
        cts.push(ct_bytes(&ctx, &enc));
    }
    ep.send(A, tags::WOE_BINS, encode(&BinsMsg { rows: n, groups: groups.clone(), cts }))?;

    let replies: Vec<Vec<u8>> = decode(&ep.expect(A, tags::WOE_GOOD).await?)?;
    let sums = cts_from(&ctx, &replies)?;
    if sums.len() != groups.len() {
        return Err(PrepError::Protocol(format!("{} sums for {} groups", sums.len(), groups.len())));
    }
    let mut good = vec![Vec::new(); bins.len()];
    for (g, ct) in groups.iter().zip(&sums) {
        let v = keys.decrypt_values(ct);
        let mut col = 0;
        for (&f, &w) in g.features.iter().zip(&g.widths) {
            good[f] = v[col..col + w].iter().map(|c| c.round().max(0.0) as u64).collect();
            col += w;
        }
    }
    Ok(good)
}

async fn woe_a(ep: Endpoint, y: &[f64], params: &FheParams, seed: u64) -> Result<()> {
    let ctx = FheContext::new(params)?;
    let pk = PublicKey::from_bytes(&ctx, &ep.expect(B, tags::KEYS_PUBLIC).await?)?;
    let ek = EvalKeys::from_bytes(&ctx, &ep.expect(B, tags::KEYS_EVAL).await?)?;
    let b = FheBackend::new(Evaluator::new(ctx.clone(), ek));
    let msg: BinsMsg = decode(&ep.expect(B, tags::WOE_BINS).await?)?;
    if msg.rows != y.len() || msg.cts.len() != msg.groups.len() {
        return Err(PrepError::Protocol("bin chunks do not match the label vector".into()));
    }
    let slots = ctx.slot_count();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xa1);
    let mut out = Vec::with_capacity(msg.groups.len());
    for (g, raw) in msg.groups.iter().zip(&msg.cts) {
        let l = g.layout();
        if !l.cols.is_power_of_two() || l.slots() != slots || raw.len() != g.chunks(y.len()) {
            return Err(PrepError::Protocol("chunk misalignment".into()));
        }
        let chunks = cts_from(&ctx, raw)?;
        let cell = |i: usize, _: usize, _: usize| y[i];
        let mut parts = Vec::with_capacity(chunks.len());
        for (ct, yv) in chunks.iter().zip(pack_group(g, y.len(), cell, slots)) {
            let ey = pk.encrypt(&ctx, &ctx.encode(&yv, ctx.params().scale_bits, ct.level())?, &mut rng)?;
            let p = b.scale_bits(ct);
            parts.push(b.rescale(&b.mult(&ey, ct)?, p)?);
        }
        out.push(col_sum_rotate(&b, &b.add_many(&parts)?, l)?);
    }
    ep.send(B, tags::WOE_GOOD, encode(&ct_bytes(&ctx, &out)))?;
    Ok(())
}
