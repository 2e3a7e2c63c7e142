use packed_matrix::SlotMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::sigmoid::sigmoid;
use crate::{ClientData, LrConfig, LrError, Result};

/// Prepends a column of ones.
pub fn with_bias(x: &SlotMatrix) -> SlotMatrix {
    let mut data = Vec::with_capacity(x.rows * (x.cols + 1));
    for r in 0..x.rows {
        data.push(1.0);
        data.extend_from_slice(x.row(r));
    }
    SlotMatrix { rows: x.rows, cols: x.cols + 1, data }
}

/// Maps `1` to `+1` and anything else to `-1`.
pub fn signed_labels(labels: &[f64]) -> Vec<f64> {
    labels.iter().map(|&l| if l == 1.0 { 1.0 } else { -1.0 }).collect()
}

/// Rows drawn in `round` from a set of `n`; every row when `size >= n`.
/// Parties sharing `seed` and `stream` draw the same sequence.
pub fn batch_indices(seed: u64, stream: u64, round: usize, n: usize, size: usize) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((round as u128) << 32);
    rand::seq::index::sample(&mut rng, n, size).into_vec()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1/n) sum_i (theta.x_i / 4 - y_i / 2) x_i` over rows `idx` of `xb`
/// (bias included).
pub fn surrogate_gradient(xb: &SlotMatrix, y: &[f64], theta: &[f64], idx: &[usize]) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    for &i in idx {
        let row = xb.row(i);
        let d = 0.25 * dot(theta, row) - 0.5 * y[i];
        for (acc, v) in g.iter_mut().zip(row) {
            *acc += d * v;
        }
    }
    g.iter().map(|v| v / idx.len() as f64).collect()
}

/// Second-order Taylor expansion of the log loss whose gradient is
/// [`surrogate_gradient`].
pub fn surrogate_loss(xb: &SlotMatrix, y: &[f64], theta: &[f64], idx: &[usize]) -> f64 {
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let u = dot(theta, xb.row(i));
            std::f64::consts::LN_2 - 0.5 * y[i] * u + u * u / 8.0
        })
        .sum();
    total / idx.len() as f64
}

/// Share of rows whose sign of `theta.x` matches the label; a score of
/// exactly zero counts as wrong.
pub fn accuracy(theta: &[f64], xb: &SlotMatrix, y: &[f64]) -> Result<f64> {
    if xb.rows == 0 {
        return Err(LrError::Input("empty evaluation set".into()));
    }
    let correct = (0..xb.rows).filter(|&i| dot(theta, xb.row(i)) * y[i] > 0.0).count();
    Ok(correct as f64 / xb.rows as f64)
}

/// Centralized full-batch gradient descent on the exact log loss.
pub fn train_plain(x: &SlotMatrix, y: &[f64], config: &LrConfig) -> Vec<f64> {
    let xb = with_bias(x);
    let mut theta = vec![0.0; xb.cols];
    for t in 0..config.iterations {
        let mut g = vec![0.0; xb.cols];
        for i in 0..xb.rows {
            let row = xb.row(i);
            let d = sigmoid(dot(&theta, row)) - (y[i] + 1.0) / 2.0;
            for (acc, v) in g.iter_mut().zip(row) {
                *acc += d * v;
            }
        }
        let a = config.learning_rate.at(t) / xb.rows as f64;
        for (th, gj) in theta.iter_mut().zip(g) {
            *th -= a * gj;
        }
    }
    theta
}

/// Plaintext replay of the horizontal protocol: same batches, same
/// surrogate gradient, unweighted mean over clients.
pub fn shadow_hfl(clients: &[ClientData], config: &LrConfig) -> Vec<f64> {
    let shards: Vec<SlotMatrix> = clients.iter().map(|c| with_bias(c.x)).collect();
    let mut theta = vec![0.0; shards[0].cols];
    for t in 0..config.iterations {
        let mut mean = vec![0.0; theta.len()];
        for (k, (c, xb)) in clients.iter().zip(&shards).enumerate() {
            let idx = batch_indices(config.seed, k as u64 + 1, t, xb.rows, config.batch_size);
            for (m, g) in mean.iter_mut().zip(surrogate_gradient(xb, c.y, &theta, &idx)) {
                *m += g / clients.len() as f64;
            }
        }
        let a = config.learning_rate.at(t);
        for (th, g) in theta.iter_mut().zip(mean) {
            *th -= a * g;
        }
    }
    theta
}

/// Plaintext replay of the vertical protocol on `[bias, x_a, x_b]`.
pub fn shadow_vfl(xa: &SlotMatrix, xb: &SlotMatrix, y: &[f64], config: &LrConfig, batch_seed: u64) -> Vec<f64> {
    let joint: Vec<Vec<f64>> = (0..xa.rows).map(|i| [xa.row(i), xb.row(i)].concat()).collect();
    let x = with_bias(&SlotMatrix::from_rows(&joint).expect("aligned rows"));
    let mut theta = vec![0.0; x.cols];
    for t in 0..config.iterations {
        let idx = batch_indices(batch_seed, 0, t, x.rows, config.batch_size);
        let g = surrogate_gradient(&x, y, &theta, &idx);
        let a = config.learning_rate.at(t);
        for (th, gj) in theta.iter_mut().zip(g) {
            *th -= a * gj;
        }
    }
    theta
}
