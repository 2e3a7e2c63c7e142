use ckks::{keygen, rotation_key_steps, Ciphertext, EvalKeys, Evaluator, FheContext, FheParams, PublicKey};
use packed_matrix::{col_sum_rotate, mask_first_column, row_sum_rotate, Backend, FheBackend, SlotMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simnet::{tags, Endpoint, Network, PartyId, Transcript};

use crate::wire::{decode_ct, encode_cts};
use crate::{accuracy, batch_indices, with_bias, BatchShape, LrConfig, LrError, Procedure, Result, CONST_BITS};

/// One client's shard: standardized features without the bias, labels in
/// `{-1, +1}`.
#[derive(Clone, Copy, Debug)]
pub struct ClientData<'a> {
    pub x: &'a SlotMatrix,
    pub y: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct HflOutput {
    /// Bias first.
    pub theta: Vec<f64>,
    pub transcript: Transcript,
}

const SERVER: PartyId = PartyId::ACTIVE;

fn check_labels(y: &[f64], rows: usize) -> Result<()> {
    if y.len() != rows {
        return Err(LrError::Input(format!("{} labels for {rows} rows", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(LrError::Input("labels must be -1 or +1".into()));
    }
    Ok(())
}

/// Server `active` holds the keys and the model; clients `passive1..` hold
/// shards with the same features. Each round the server ships the encrypted
/// model, every client returns the encrypted surrogate gradient of a random
/// local batch, and the server applies the mean.
pub fn hfl_train(clients: &[ClientData], config: &LrConfig, params: &FheParams) -> Result<HflOutput> {
    config.validate()?;
    let first = clients.first().ok_or_else(|| LrError::Input("no clients".into()))?;
    let f = first.x.cols;
    for c in clients {
        if c.x.cols != f {
            return Err(LrError::Input(format!("schema mismatch: {} vs {f} features", c.x.cols)));
        }
        if c.x.rows == 0 {
            return Err(LrError::Input("empty client shard".into()));
        }
        check_labels(c.y, c.x.rows)?;
    }
    let slots = params.slot_count();
    let shape = BatchShape::with_chunk_rows(Procedure::Improved, 1, f + 1, slots, config.batch_size)?;
    let ids: Vec<PartyId> = (1..=clients.len()).map(|k| PartyId::passive(k as u16)).collect();
    let mut all = vec![SERVER];
    all.extend(&ids);
    let net = Network::new(&all, config.seed);

    let mut theta = None;
    {
        let mut tasks: Vec<simnet::Task<LrError>> = Vec::new();
        let ep = net.endpoint(SERVER);
        let (out, ids_ref, shape_ref) = (&mut theta, &ids, &shape);
        tasks.push(Box::pin(async move {
            *out = Some(server(&ep, ids_ref, shape_ref, config, params).await?);
            Ok(())
        }));
        for (k, (c, id)) in clients.iter().zip(&ids).enumerate() {
            let ep = net.endpoint(*id);
            tasks.push(Box::pin(client(ep, k, *c, config, params)));
        }
        net.run(tasks)?;
    }
    Ok(HflOutput { theta: theta.expect("server finished"), transcript: net.transcript() })
}

async fn server(
    ep: &Endpoint,
    clients: &[PartyId],
    shape: &BatchShape,
    config: &LrConfig,
    params: &FheParams,
) -> Result<Vec<f64>> {
    let keys = keygen(params, config.seed)?;
    let ctx = keys.context().clone();
    let steps = rotation_key_steps(&shape.rotation_steps(), shape.slots);
    let ek = keys.eval_keys_for(&steps, false)?.to_bytes(&ctx);
    for &c in clients {
        ep.send(c, tags::KEYS_PUBLIC, keys.public_key.to_bytes(&ctx))?;
        ep.send(c, tags::KEYS_EVAL, ek.clone())?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x5e4e);
    let mut theta = vec![0.0; shape.features];
    for t in 0..config.iterations {
        let ct = keys.encrypt_values(&shape.pack_weights(&theta)?, &mut rng)?;
        let msg = encode_cts(&ctx, &[ct]);
        for &c in clients {
            ep.send(c, tags::LR_MODEL, msg.clone())?;
        }
        let mut mean = vec![0.0; theta.len()];
        for &c in clients {
            let g = decode_ct(&ctx, &ep.expect(c, tags::LR_GRADIENT).await?)?;
            let g = shape.unpack_weights(&keys.decrypt_values(&g));
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / clients.len() as f64;
            }
        }
        let a = config.learning_rate.at(t);
        for (th, g) in theta.iter_mut().zip(mean) {
            *th -= a * g;
        }
    }
    Ok(theta)
}

async fn client(ep: Endpoint, k: usize, data: ClientData<'_>, config: &LrConfig, params: &FheParams) -> Result<()> {
    let ctx = FheContext::new(params)?;
    // The client never encrypts; the key is checked against the parameters.
    let pk = PublicKey::from_bytes(&ctx, &ep.expect(SERVER, tags::KEYS_PUBLIC).await?)?;
    if pk.params_digest() != ctx.digest() {
        return Err(LrError::Protocol("public key under different parameters".into()));
    }
    let ek = EvalKeys::from_bytes(&ctx, &ep.expect(SERVER, tags::KEYS_EVAL).await?)?;
    let b = FheBackend::new(Evaluator::new(ctx.clone(), ek));
    let xb = with_bias(data.x);
    for t in 0..config.iterations {
        let theta: Ciphertext = decode_ct(&ctx, &ep.expect(SERVER, tags::LR_MODEL).await?)?;
        let idx = batch_indices(config.seed, k as u64 + 1, t, xb.rows, config.batch_size);
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| xb.row(i).to_vec()).collect();
        let y: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();
        let shape = BatchShape::with_chunk_rows(Procedure::Improved, idx.len(), xb.cols, ctx.slot_count(), config.batch_size)?;
        let g = client_gradient(&b, &shape, &theta, &SlotMatrix::from_rows(&rows)?, &y)?;
        ep.send(SERVER, tags::LR_GRADIENT, encode_cts(&ctx, &[g]))?;
    }
    Ok(())
}

/// Encrypted surrogate gradient of plaintext rows `xb` (bias included)
/// against the encrypted model, in the transposed packing. Column 0 of row
/// `j` ends up holding gradient component `j`.
pub(crate) fn client_gradient<B: Backend>(
    b: &B,
    shape: &BatchShape,
    theta: &B::Ct,
    xb: &SlotMatrix,
    y: &[f64],
) -> Result<B::Ct> {
    let l = shape.layout;
    let quarter = shape.pack_rows(xb, 0.25)?;
    let data = shape.pack_rows(xb, 1.0)?;
    let half_y: Vec<f64> = y.iter().map(|v| -0.5 * v).collect();
    let mut parts = Vec::with_capacity(shape.chunks);
    for c in 0..shape.chunks {
        let p = b.rescale(&b.cmult(theta, &quarter[c], CONST_BITS)?, CONST_BITS)?;
        let u = col_sum_rotate(b, &p, l)?;
        let d = b.add_plain(&u, &shape.sample_vector(c, &half_y, true)?)?;
        parts.push(b.rescale(&b.cmult(&d, &data[c], CONST_BITS)?, CONST_BITS)?);
    }
    let sum = row_sum_rotate(b, &b.add_many(&parts)?, l)?;
    Ok(mask_first_column(b, &sum, l, 1.0 / shape.samples as f64, CONST_BITS)?)
}

/// Server-side scoring with the plaintext model.
pub fn hfl_evaluate(theta: &[f64], x: &SlotMatrix, y: &[f64]) -> Result<f64> {
    check_labels(y, x.rows)?;
    accuracy(theta, &with_bias(x), y)
}
