use ckks::{keygen, rotation_key_steps, Ciphertext, EvalKeys, Evaluator, FheContext, FheParams, PublicKey};
use packed_matrix::{col_sum_rotate, mask_first_column, row_sum_rotate, Backend, FheBackend, SlotMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use simnet::{tags, Endpoint, Network, PartyId, Transcript};

use crate::wire::{batch_digest, decode, decode_ct, decode_cts, encode, encode_cts};
use crate::{batch_indices, BatchShape, LrConfig, LrError, Procedure, Result, CONST_BITS};

/// Decrypted scores within this band of zero are ties: CKKS noise makes an
/// exact zero unobservable.
pub const TIE_BAND: f64 = 1.0 / (1u64 << 20) as f64;

const A: PartyId = PartyId::ACTIVE;
const B: PartyId = PartyId::passive(1);

/// Label holder. Features exclude the bias; labels are `-1/+1`.
#[derive(Clone, Copy, Debug)]
pub struct VflActive<'a> {
    pub x: &'a SlotMatrix,
    pub y: &'a [f64],
    pub batch_seed: u64,
    /// Values A adds into B's block before encrypting, row-aligned with
    /// `x`: the negated masks of synthetic rows B stores masked.
    pub b_correction: Option<&'a SlotMatrix>,
}

/// Key and model holder.
#[derive(Clone, Copy, Debug)]
pub struct VflPassive<'a> {
    pub x: &'a SlotMatrix,
    pub batch_seed: u64,
}

#[derive(Clone, Debug)]
pub struct VflOutput {
    /// Over `[bias, A features, B features]`.
    pub theta: Vec<f64>,
    pub transcript: Transcript,
}

#[derive(Clone, Debug)]
pub struct VflEval {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub transcript: Transcript,
}

fn check(a: &VflActive, b: &VflPassive) -> Result<()> {
    if a.x.rows != b.x.rows || a.y.len() != a.x.rows {
        return Err(LrError::Input("parties hold different sample counts".into()));
    }
    if a.x.rows == 0 {
        return Err(LrError::Input("no aligned samples".into()));
    }
    if let Some(c) = a.b_correction {
        if c.rows != a.x.rows || c.cols != b.x.cols {
            return Err(LrError::Input("correction must match B's block".into()));
        }
    }
    if a.y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(LrError::Input("labels must be -1 or +1".into()));
    }
    Ok(())
}

/// Rows `idx` placed in the joint `[bias, A, B]` schema with the other
/// party's block zero.
fn joint_rows(x: &SlotMatrix, idx: &[usize], offset: usize, width: usize, bias: bool) -> Result<SlotMatrix> {
    let mut m = SlotMatrix::zeros(idx.len(), width);
    for (r, &i) in idx.iter().enumerate() {
        if bias {
            m.set(r, 0, 1.0);
        }
        for (j, v) in x.row(i).iter().enumerate() {
            m.set(r, offset + j, *v);
        }
    }
    Ok(m)
}

/// A's plaintext share of the joint rows: bias, its block, and the
/// correction (if any) in B's block.
fn active_rows(a: &VflActive, idx: &[usize], width: usize) -> Result<SlotMatrix> {
    let mut m = joint_rows(a.x, idx, 1, width, true)?;
    if let Some(c) = a.b_correction {
        let off = 1 + a.x.cols;
        for (r, &i) in idx.iter().enumerate() {
            for (j, v) in c.row(i).iter().enumerate() {
                m.set(r, off + j, *v);
            }
        }
    }
    Ok(m)
}

fn encrypt_chunks<R: Rng>(
    ctx: &FheContext,
    pk: &PublicKey,
    shape: &BatchShape,
    rows: &SlotMatrix,
    rng: &mut R,
) -> Result<Vec<Ciphertext>> {
    let scale = ctx.params().scale_bits;
    shape
        .pack_rows(rows, 1.0)?
        .iter()
        .map(|v| Ok(pk.encrypt(ctx, &ctx.encode(v, scale, ctx.max_level())?, rng)?))
        .collect()
}

/// Encrypted surrogate gradient over encrypted joint rows, transposed
/// packing: `(1/n) sum_i (theta.x_i / 4 - y_i / 2) x_i` in column 0.
pub(crate) fn joint_gradient<B: Backend>(
    b: &B,
    shape: &BatchShape,
    theta: &B::Ct,
    x: &[B::Ct],
    y: &[f64],
) -> Result<B::Ct> {
    let l = shape.layout;
    let minus_2y: Vec<f64> = y.iter().map(|v| -2.0 * v).collect();
    let mut parts = Vec::with_capacity(x.len());
    for (c, xc) in x.iter().enumerate() {
        let p = b.scale_bits(theta);
        let u = col_sum_rotate(b, &b.rescale(&b.mult(xc, theta)?, p)?, l)?;
        let d = b.add_plain(&u, &shape.sample_vector(c, &minus_2y, true)?)?;
        let xl = b.mod_drop(xc, b.level(&d))?;
        parts.push(b.rescale(&b.mult(&d, &xl)?, p)?);
    }
    let sum = row_sum_rotate(b, &b.add_many(&parts)?, l)?;
    Ok(mask_first_column(b, &sum, l, 0.25 / shape.samples as f64, CONST_BITS)?)
}

/// Masked evaluation: row 0 of each column holds `R_i * y_i * theta.x_i / 4`.
pub(crate) fn masked_scores<B: Backend>(
    b: &B,
    shape: &BatchShape,
    theta: &B::Ct,
    c: usize,
    x: &B::Ct,
    y_r: &[f64],
) -> Result<B::Ct> {
    let p = b.scale_bits(theta);
    let wx = col_sum_rotate(b, &b.rescale(&b.mult(x, theta)?, p)?, shape.layout)?;
    let quarter: Vec<f64> = y_r.iter().map(|v| 0.25 * v).collect();
    Ok(b.rescale(&b.cmult(&wx, &shape.sample_vector(c, &quarter, false)?, CONST_BITS)?, CONST_BITS)?)
}

/// A uniform draw from the open interval (0, 1).
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

fn network(seed: u64) -> Network {
    Network::new(&[A, B], seed)
}

/// Party `passive1` (B) holds keys and the model and encrypts its feature
/// block each round; party `active` (A) adds its own encrypted block and
/// returns the encrypted gradient. Batches come from each party's seeded
/// sequence and are checked by digest.
pub fn vfl_train(a: VflActive, b: VflPassive, config: &LrConfig, params: &FheParams) -> Result<VflOutput> {
    config.validate()?;
    check(&a, &b)?;
    let width = 1 + a.x.cols + b.x.cols;
    let slots = params.slot_count();
    let shape = BatchShape::with_chunk_rows(Procedure::Improved, 1, width, slots, config.batch_size)?;
    let net = network(config.seed);
    let mut theta = None;
    {
        let (ea, eb) = (net.endpoint(A), net.endpoint(B));
        let out = &mut theta;
        let shape = &shape;
        let tasks: Vec<simnet::Task<LrError>> = vec![
            Box::pin(async move {
                *out = Some(train_b(&eb, b, shape, width, config, params).await?);
                Ok(())
            }),
            Box::pin(train_a(ea, a, width, config, params)),
        ];
        net.run(tasks)?;
    }
    Ok(VflOutput { theta: theta.expect("B finished"), transcript: net.transcript() })
}

async fn send_keys(ep: &Endpoint, params: &FheParams, seed: u64, steps: &[i64]) -> Result<ckks::KeySet> {
    let keys = keygen(params, seed)?;
    let ctx = keys.context().clone();
    ep.send(A, tags::KEYS_PUBLIC, keys.public_key.to_bytes(&ctx))?;
    let steps = rotation_key_steps(steps, ctx.slot_count());
    ep.send(A, tags::KEYS_EVAL, keys.eval_keys_for(&steps, true)?.to_bytes(&ctx))?;
    Ok(keys)
}

async fn recv_keys(ep: &Endpoint, params: &FheParams) -> Result<(std::sync::Arc<FheContext>, PublicKey, FheBackend)> {
    let ctx = FheContext::new(params)?;
    let pk = PublicKey::from_bytes(&ctx, &ep.expect(B, tags::KEYS_PUBLIC).await?)?;
    let ek = EvalKeys::from_bytes(&ctx, &ep.expect(B, tags::KEYS_EVAL).await?)?;
    let backend = FheBackend::new(Evaluator::new(ctx.clone(), ek));
    Ok((ctx, pk, backend))
}

async fn train_b(
    ep: &Endpoint,
    b: VflPassive<'_>,
    shape: &BatchShape,
    width: usize,
    config: &LrConfig,
    params: &FheParams,
) -> Result<Vec<f64>> {
    let keys = send_keys(ep, params, config.seed, &shape.rotation_steps()).await?;
    let ctx = keys.context().clone();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0xb0b);
    let offset = width - b.x.cols;
    let mut theta = vec![0.0; width];
    for t in 0..config.iterations {
        let idx = batch_indices(b.batch_seed, 0, t, b.x.rows, config.batch_size);
        ep.send(A, tags::LR_BATCH_DIGEST, batch_digest(&idx).to_vec())?;
        let model = keys.encrypt_values(&shape.pack_weights(&theta)?, &mut rng)?;
        ep.send(A, tags::LR_MODEL, encode_cts(&ctx, &[model]))?;
        let bs = BatchShape::with_chunk_rows(Procedure::Improved, idx.len(), width, shape.slots, config.batch_size)?;
        let rows = joint_rows(b.x, &idx, offset, width, false)?;
        let cts = encrypt_chunks(&ctx, &keys.public_key, &bs, &rows, &mut rng)?;
        ep.send(A, tags::LR_DATA, encode_cts(&ctx, &cts))?;
        let g = decode_ct(&ctx, &ep.expect(A, tags::LR_GRADIENT).await?)?;
        let g = bs.unpack_weights(&keys.decrypt_values(&g));
        let a = config.learning_rate.at(t);
        for (th, gj) in theta.iter_mut().zip(g) {
            *th -= a * gj;
        }
    }
    Ok(theta)
}

async fn train_a(ep: Endpoint, a: VflActive<'_>, width: usize, config: &LrConfig, params: &FheParams) -> Result<()> {
    let (ctx, pk, backend) = recv_keys(&ep, params).await?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0xa11ce);
    for t in 0..config.iterations {
        let idx = batch_indices(a.batch_seed, 0, t, a.x.rows, config.batch_size);
        let theirs = ep.expect(B, tags::LR_BATCH_DIGEST).await?;
        if theirs != batch_digest(&idx) {
            return Err(LrError::Protocol(format!("batch sequences diverge at round {t}")));
        }
        let theta = decode_ct(&ctx, &ep.expect(B, tags::LR_MODEL).await?)?;
        let xb = decode_cts(&ctx, &ep.expect(B, tags::LR_DATA).await?)?;
        let shape = BatchShape::with_chunk_rows(Procedure::Improved, idx.len(), width, ctx.slot_count(), config.batch_size)?;
        let xa = encrypt_chunks(&ctx, &pk, &shape, &active_rows(&a, &idx, width)?, &mut rng)?;
        if xb.len() != xa.len() {
            return Err(LrError::Protocol("chunk counts differ".into()));
        }
        let x = xa.iter().zip(&xb).map(|(p, q)| backend.add(p, q)).collect::<ckks::Result<Vec<_>>>()?;
        let y: Vec<f64> = idx.iter().map(|&i| a.y[i]).collect();
        let g = joint_gradient(&backend, &shape, &theta, &x, &y)?;
        ep.send(B, tags::LR_GRADIENT, encode_cts(&ctx, &[g]))?;
    }
    Ok(())
}

/// Encrypted evaluation on aligned test rows. A learns only the accuracy;
/// B learns only the signs of randomly scaled scores.
pub fn vfl_evaluate(a: VflActive, b: VflPassive, theta: &[f64], params: &FheParams, seed: u64) -> Result<VflEval> {
    check(&a, &b)?;
    let width = 1 + a.x.cols + b.x.cols;
    if theta.len() != width {
        return Err(LrError::Input(format!("{} weights for {width} joint features", theta.len())));
    }
    let n = a.x.rows;
    let shape = BatchShape::new(Procedure::Improved, n, width, params.slot_count())?;
    let net = network(seed);
    let mut result = None;
    {
        let (ea, eb) = (net.endpoint(A), net.endpoint(B));
        let out = &mut result;
        let shape = &shape;
        let tasks: Vec<simnet::Task<LrError>> = vec![
            Box::pin(async move {
                let steps: Vec<i64> = shape.rotation_steps();
                let keys = send_keys(&eb, params, seed, &steps).await?;
                let ctx = keys.context().clone();
                let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xb0b);
                let model = keys.encrypt_values(&shape.pack_weights(theta)?, &mut rng)?;
                eb.send(A, tags::LR_MODEL, encode_cts(&ctx, &[model]))?;
                let idx: Vec<usize> = (0..n).collect();
                let rows = joint_rows(b.x, &idx, width - b.x.cols, width, false)?;
                eb.send(A, tags::LR_DATA, encode_cts(&ctx, &encrypt_chunks(&ctx, &keys.public_key, shape, &rows, &mut rng)?))?;
                let preds = decode_cts(&ctx, &eb.expect(A, tags::LR_EVAL).await?)?;
                let mut correct = 0usize;
                for (c, ct) in preds.iter().enumerate() {
                    correct += shape.unpack_samples(c, &keys.decrypt_values(ct)).iter().filter(|&&v| v > TIE_BAND).count();
                }
                eb.send(A, tags::LR_ACCURACY, encode(&(correct as u64, n as u64)))?;
                Ok(())
            }),
            Box::pin(async move {
                let (ctx, pk, backend) = recv_keys(&ea, params).await?;
                let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xa11ce);
                let theta = decode_ct(&ctx, &ea.expect(B, tags::LR_MODEL).await?)?;
                let xb = decode_cts(&ctx, &ea.expect(B, tags::LR_DATA).await?)?;
                let idx: Vec<usize> = (0..n).collect();
                let xa = encrypt_chunks(&ctx, &pk, shape, &active_rows(&a, &idx, width)?, &mut rng)?;
                let y_r: Vec<f64> = a.y.iter().map(|&y| y * open_unit(&mut rng)).collect();
                let mut preds = Vec::with_capacity(xa.len());
                for (c, (p, q)) in xa.iter().zip(&xb).enumerate() {
                    let x = backend.add(p, q)?;
                    preds.push(masked_scores(&backend, shape, &theta, c, &x, &y_r)?);
                }
                ea.send(B, tags::LR_EVAL, encode_cts(&ctx, &preds))?;
                let (correct, total): (u64, u64) = decode(&ea.expect(B, tags::LR_ACCURACY).await?)?;
                *out = Some((correct as usize, total as usize));
                Ok(())
            }),
        ];
        net.run(tasks)?;
    }
    let (correct, total) = result.expect("A finished");
    Ok(VflEval { correct, total, accuracy: correct as f64 / total as f64, transcript: net.transcript() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use packed_matrix::PlainBackend;

    #[test]
    fn open_unit_never_returns_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| {
            let r = open_unit(&mut rng);
            r > 0.0 && r < 1.0
        }));
    }

    #[test]
    fn joint_rows_zero_fill() {
        let x = SlotMatrix::new(2, 1, vec![5.0, 6.0]).unwrap();
        let m = joint_rows(&x, &[1], 2, 3, true).unwrap();
        assert_eq!(m.data, vec![1.0, 0.0, 6.0]);
    }

    #[test]
    fn masked_scores_keep_signs() {
        let params = FheParams::desk();
        let b = PlainBackend::with_slots(&params, 64);
        let x = SlotMatrix::new(3, 2, vec![1.0, 2.0, 1.0, -3.0, 1.0, 0.5]).unwrap();
        let shape = BatchShape::new(Procedure::Improved, 3, 2, 64).unwrap();
        let theta = b.fresh(&shape.pack_weights(&[0.1, 0.4]).unwrap()).unwrap();
        let xc = b.fresh(&shape.pack_rows(&x, 1.0).unwrap()[0]).unwrap();
        let y_r = [0.3, -0.9, -0.01];
        let out = masked_scores(&b, &shape, &theta, 0, &xc, &y_r).unwrap();
        let v = shape.unpack_samples(0, &out.values);
        let want = [0.25 * 0.3 * 0.9, 0.25 * -0.9 * -1.1, 0.25 * -0.01 * 0.3];
        for (g, w) in v.iter().zip(want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn masking_keeps_the_count(seed in proptest::prelude::any::<u64>(), n in 1usize..40, f in 1usize..8) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let params = FheParams::desk();
            let b = PlainBackend::new(&params);
            let data: Vec<f64> = (0..n * f).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = SlotMatrix::new(n, f, data).unwrap();
            let theta: Vec<f64> = (0..f).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let y_r: Vec<f64> = y.iter().map(|v| v * open_unit(&mut rng)).collect();
            let shape = BatchShape::new(Procedure::Improved, n, f, b.slot_count()).unwrap();
            let ct_theta = b.fresh(&shape.pack_weights(&theta).unwrap()).unwrap();
            let xc = b.fresh(&shape.pack_rows(&x, 1.0).unwrap()[0]).unwrap();
            let masked = masked_scores(&b, &shape, &ct_theta, 0, &xc, &y_r).unwrap();
            let got = shape.unpack_samples(0, &masked.values).iter().filter(|&&v| v > 0.0).count();
            let want = (0..n)
                .filter(|&i| x.row(i).iter().zip(&theta).map(|(a, t)| a * t).sum::<f64>() * y[i] > 0.0)
                .count();
            proptest::prop_assert_eq!(got, want);
        }
    }
}
