use std::collections::BTreeMap;

use ckks::{keygen, rotation_key_steps, Ciphertext, EvalKeys, Evaluator, FheContext, FheParams, PublicKey};
use packed_matrix::{Backend, FheBackend, SlotMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use simnet::{tags, Endpoint, Network, PartyId, Transcript};

use crate::wire::{ct_bytes, cts_from, decode, encode};
use crate::{PrepError, Result};

/// Masks are uniform on `(-MASK_RANGE, MASK_RANGE)`.
pub const MASK_RANGE: f64 = 1024.0;

const MASK_BITS: u32 = 40;
const WORK_LEVEL: usize = 1;

const A: PartyId = PartyId::ACTIVE;
const B: PartyId = PartyId::passive(1);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    /// Neighbours per minority row.
    pub k: usize,
    /// Number of synthetic rows to emit.
    pub synthetic: usize,
    pub seed: u64,
    /// Fixed interpolation weight instead of random draws.
    pub lambda: Option<f64>,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self { k: 5, synthetic: 0, seed: 0, lambda: None }
    }
}

/// Which rows each synthetic row interpolates, as indices into the full
/// row set, and its weight on the neighbour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmotePlan {
    pub orig: Vec<usize>,
    pub neig: Vec<usize>,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoteOutput {
    pub rows: SlotMatrix,
    pub plan: SmotePlan,
}

/// Minority (label 1) rows and, for each, its `k` nearest minority rows by
/// Euclidean distance; ties go to the lower row index.
pub fn nearest_minority(x: &SlotMatrix, y: &[f64], k: usize) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    if y.len() != x.rows {
        return Err(PrepError::Input(format!("{} labels for {} rows", y.len(), x.rows)));
    }
    let minority: Vec<usize> = (0..x.rows).filter(|&i| y[i] == 1.0).collect();
    if minority.is_empty() {
        return Err(PrepError::Input("no minority rows".into()));
    }
    if k == 0 || k >= minority.len() {
        return Err(PrepError::Input(format!("k = {k} needs 0 < k < {} minority rows", minority.len())));
    }
    let dist = |a: usize, b: usize| -> f64 { x.row(a).iter().zip(x.row(b)).map(|(p, q)| (p - q).powi(2)).sum() };
    let neighbours = minority
        .iter()
        .map(|&i| {
            let mut cand: Vec<(f64, usize)> = minority.iter().filter(|&&j| j != i).map(|&j| (dist(i, j), j)).collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    Ok((minority, neighbours))
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

/// Synthetic row `j` starts from minority row `j mod m` and moves towards
/// its `(j / m) mod k`-th neighbour, with `m` minority rows.
pub fn smote_plan(x_knn: &SlotMatrix, y: &[f64], config: &SmoteConfig) -> Result<SmotePlan> {
    let (minority, nn) = nearest_minority(x_knn, y, config.k)?;
    if let Some(l) = config.lambda {
        if !(0.0..=1.0).contains(&l) {
            return Err(PrepError::Input(format!("lambda {l} outside [0, 1]")));
        }
    }
    let m = minority.len();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut plan = SmotePlan { orig: Vec::new(), neig: Vec::new(), lambda: Vec::new() };
    for j in 0..config.synthetic {
        plan.orig.push(minority[j % m]);
        plan.neig.push(nn[j % m][(j / m) % config.k]);
        plan.lambda.push(config.lambda.unwrap_or_else(|| open_unit(&mut rng)));
    }
    Ok(plan)
}

/// `lambda * neig + (1 - lambda) * orig` for every planned row.
pub fn apply_plan(x: &SlotMatrix, plan: &SmotePlan) -> SlotMatrix {
    let mut out = SlotMatrix::zeros(plan.orig.len(), x.cols);
    for (j, ((&o, &n), &l)) in plan.orig.iter().zip(&plan.neig).zip(&plan.lambda).enumerate() {
        for c in 0..x.cols {
            out.set(j, c, l * x.get(n, c) + (1.0 - l) * x.get(o, c));
        }
    }
    out
}

/// Classic SMOTE with neighbours measured on all columns of `x`.
pub fn smote_plain(x: &SlotMatrix, y: &[f64], config: &SmoteConfig) -> Result<SmoteOutput> {
    let plan = smote_plan(x, y, config)?;
    Ok(SmoteOutput { rows: apply_plan(x, &plan), plan })
}

/// Row-major packing of joint rows: `rows` rows of `width` slots fill one
/// ciphertext exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct RowPacking {
    width: usize,
    rows: usize,
}

impl RowPacking {
    fn new(cols: usize, slots: usize) -> Result<Self> {
        let width = cols.max(1).next_power_of_two();
        if width > slots {
            return Err(PrepError::Input(format!("{cols} joint features exceed {slots} slots")));
        }
        Ok(Self { width, rows: slots / width })
    }

    /// Zero-filled joint rows with `block` at column `offset`.
    fn pack(&self, block: &SlotMatrix, offset: usize) -> Vec<Vec<f64>> {
        (0..block.rows.div_ceil(self.rows))
            .map(|c| {
                let mut v = vec![0.0; self.rows * self.width];
                for r in 0..self.rows {
                    let i = c * self.rows + r;
                    if i >= block.rows {
                        break;
                    }
                    v[r * self.width + offset..r * self.width + offset + block.cols].copy_from_slice(block.row(i));
                }
                v
            })
            .collect()
    }

    fn rotation_steps(&self) -> Vec<i64> {
        (1..self.rows).map(|d| (d * self.width) as i64).collect()
    }
}

/// Gathers `lambda * neig + (1 - lambda) * orig` into fresh row-major
/// chunks. Each source chunk is rotated once per distinct row shift and
/// then masked per output chunk with the interpolation weights.
fn gather<B: Backend>(b: &B, p: RowPacking, chunks: &[B::Ct], plan: &SmotePlan) -> Result<Vec<B::Ct>> {
    let slots = p.rows * p.width;
    let out_chunks = plan.orig.len().div_ceil(p.rows);
    // (source chunk, shift) -> output chunk -> mask
    let mut groups: BTreeMap<(usize, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for j in 0..plan.orig.len() {
        let (o, t) = (j / p.rows, j % p.rows);
        for (src, w) in [(plan.orig[j], 1.0 - plan.lambda[j]), (plan.neig[j], plan.lambda[j])] {
            let (c, r) = (src / p.rows, src % p.rows);
            if c >= chunks.len() {
                return Err(PrepError::Input(format!("row {src} outside the encrypted data")));
            }
            let d = (r + p.rows - t) % p.rows;
            let mask = groups.entry((c, d)).or_default().entry(o).or_insert_with(|| vec![0.0; slots]);
            for s in &mut mask[t * p.width..(t + 1) * p.width] {
                *s += w;
            }
        }
    }
    let mut acc: Vec<Option<B::Ct>> = vec![None; out_chunks];
    for ((c, d), masks) in groups {
        let rotated = b.rotate(&chunks[c], (d * p.width) as i64)?;
        for (o, mask) in masks {
            let term = b.cmult(&rotated, &mask, MASK_BITS)?;
            acc[o] = Some(match acc[o].take() {
                Some(a) => b.add(&a, &term)?,
                None => term,
            });
        }
    }
    acc.into_iter()
        .map(|a| Ok(b.rescale(&a.expect("every output row has terms"), MASK_BITS)?))
        .collect()
}

/// Label holder: its feature block (used alone for neighbour search) and
/// labels in `{0, 1}`.
#[derive(Clone, Copy, Debug)]
pub struct SmoteActive<'a> {
    pub x: &'a SlotMatrix,
    pub y: &'a [f64],
}

/// Key holder with the other feature block.
#[derive(Clone, Copy, Debug)]
pub struct SmotePassive<'a> {
    pub x: &'a SlotMatrix,
}

#[derive(Clone, Debug)]
pub struct SmoteFheOutput {
    /// A's synthetic block, unmasked.
    pub a_rows: SlotMatrix,
    /// B's synthetic block as B stores it: still masked by `r_b`.
    pub b_rows_masked: SlotMatrix,
    /// B's mask, kept by A for the training-time correction.
    pub r_b: SlotMatrix,
    pub plan: SmotePlan,
    pub transcript: Transcript,
}

struct ActiveResult {
    a_rows: SlotMatrix,
    r_b: SlotMatrix,
    plan: SmotePlan,
}

/// Encrypted SMOTE over vertically split rows. A picks neighbours on its own
/// features, interpolates the encrypted joint rows and masks them; B
/// decrypts, keeps its masked block and returns A's.
pub fn smote_fhe(a: SmoteActive, b: SmotePassive, config: &SmoteConfig, params: &FheParams) -> Result<SmoteFheOutput> {
    if a.x.rows != b.x.rows {
        return Err(PrepError::Input(format!("A has {} rows, B {}", a.x.rows, b.x.rows)));
    }
    let packing = RowPacking::new(a.x.cols + b.x.cols, params.slot_count())?;
    let net = Network::new(&[A, B], config.seed);
    let (mut ra, mut rb) = (None, None);
    {
        let (ea, eb) = (net.endpoint(A), net.endpoint(B));
        let (oa, ob) = (&mut ra, &mut rb);
        let fa = a.x.cols;
        let tasks: Vec<simnet::Task<PrepError>> = vec![
            Box::pin(async move {
                *ob = Some(smote_b(&eb, b.x, fa, packing, config, params).await?);
                Ok(())
            }),
            Box::pin(async move {
                *oa = Some(smote_a(&ea, a, b.x.cols, packing, config, params).await?);
                Ok(())
            }),
        ];
        net.run(tasks)?;
    }
    let ActiveResult { a_rows, r_b, plan } = ra.expect("A finished");
    Ok(SmoteFheOutput { a_rows, b_rows_masked: rb.expect("B finished"), r_b, plan, transcript: net.transcript() })
}

fn encrypt_rows(ctx: &FheContext, pk: &PublicKey, vs: &[Vec<f64>], rng: &mut ChaCha20Rng) -> Result<Vec<Ciphertext>> {
    vs.iter()
        .map(|v| Ok(pk.encrypt(ctx, &ctx.encode(v, ctx.params().scale_bits, WORK_LEVEL)?, rng)?))
        .collect()
}

async fn smote_b(
    ep: &Endpoint,
    x: &SlotMatrix,
    fa: usize,
    p: RowPacking,
    config: &SmoteConfig,
    params: &FheParams,
) -> Result<SlotMatrix> {
    let keys = keygen(params, config.seed)?;
    let ctx = keys.context().clone();
    ep.send(A, tags::KEYS_PUBLIC, keys.public_key.to_bytes(&ctx))?;
    let steps = rotation_key_steps(&p.rotation_steps(), ctx.slot_count());
    ep.send(A, tags::KEYS_EVAL, keys.eval_keys_for(&steps, false)?.to_bytes(&ctx))?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0xb0b);
    let cts = encrypt_rows(&ctx, &keys.public_key, &p.pack(x, fa), &mut rng)?;
    ep.send(A, tags::SMOTE_DATA, encode(&ct_bytes(&ctx, &cts)))?;

    let (count, raw): (u64, Vec<Vec<u8>>) = decode(&ep.expect(A, tags::SMOTE_MASKED).await?)?;
    let masked = cts_from(&ctx, &raw)?;
    let count = count as usize;
    if masked.len() != count.div_ceil(p.rows) {
        return Err(PrepError::Protocol("synthetic chunk count mismatch".into()));
    }
    let mut a_block = Vec::with_capacity(count * fa);
    let mut b_block = SlotMatrix::zeros(count, x.cols);
    for (c, ct) in masked.iter().enumerate() {
        let v = keys.decrypt_values(ct);
        for r in 0..p.rows.min(count - c * p.rows) {
            let row = &v[r * p.width..r * p.width + fa + x.cols];
            a_block.extend_from_slice(&row[..fa]);
            for (j, val) in row[fa..].iter().enumerate() {
                b_block.set(c * p.rows + r, j, *val);
            }
        }
    }
    ep.send(A, tags::SMOTE_A_BLOCK, encode(&a_block))?;
    Ok(b_block)
}

async fn smote_a(
    ep: &Endpoint,
    a: SmoteActive<'_>,
    fb: usize,
    p: RowPacking,
    config: &SmoteConfig,
    params: &FheParams,
) -> Result<ActiveResult> {
    let plan = smote_plan(a.x, a.y, config)?;
    let ctx = FheContext::new(params)?;
    let pk = PublicKey::from_bytes(&ctx, &ep.expect(B, tags::KEYS_PUBLIC).await?)?;
    let ek = EvalKeys::from_bytes(&ctx, &ep.expect(B, tags::KEYS_EVAL).await?)?;
    let b = FheBackend::new(Evaluator::new(ctx.clone(), ek));
    let theirs = cts_from(&ctx, &decode::<Vec<Vec<u8>>>(&ep.expect(B, tags::SMOTE_DATA).await?)?)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0xa11ce);
    let ours = encrypt_rows(&ctx, &pk, &p.pack(a.x, 0), &mut rng)?;
    if ours.len() != theirs.len() {
        return Err(PrepError::Protocol("data chunk counts differ".into()));
    }
    let joint = ours.iter().zip(&theirs).map(|(x, y)| b.add(x, y)).collect::<ckks::Result<Vec<_>>>()?;
    let fresh = gather(&b, p, &joint, &plan)?;

    let n = plan.orig.len();
    let fa = a.x.cols;
    let mut r = SlotMatrix::zeros(n, fa + fb);
    for v in r.data.iter_mut() {
        *v = rng.random_range(-MASK_RANGE..MASK_RANGE);
    }
    let masks = p.pack(&r, 0);
    let masked = fresh.iter().zip(&masks).map(|(ct, m)| b.add_plain(ct, m)).collect::<ckks::Result<Vec<_>>>()?;
    ep.send(B, tags::SMOTE_MASKED, encode(&(n as u64, ct_bytes(&ctx, &masked))))?;

    let a_masked: Vec<f64> = decode(&ep.expect(B, tags::SMOTE_A_BLOCK).await?)?;
    if a_masked.len() != n * fa {
        return Err(PrepError::Protocol("A block has the wrong size".into()));
    }
    let mut a_rows = SlotMatrix::zeros(n, fa);
    let mut r_b = SlotMatrix::zeros(n, fb);
    for i in 0..n {
        for j in 0..fa {
            a_rows.set(i, j, a_masked[i * fa + j] - r.get(i, j));
        }
        for j in 0..fb {
            r_b.set(i, j, r.get(i, fa + j));
        }
    }
    Ok(ActiveResult { a_rows, r_b, plan })
}
