#![allow(dead_code)]

use packed_matrix::SlotMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Two Gaussian-ish blobs with labels in {-1, +1}; feature values stay
/// well inside the sigmoid fit range.
pub fn blobs(n: usize, f: usize, seed: u64) -> (SlotMatrix, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = Vec::with_capacity(n * f);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for d in &dir {
            let noise: f64 = (0..3).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() / 1.5;
            data.push((0.8 * label * d + noise).clamp(-3.0, 3.0));
        }
        y.push(label);
    }
    (SlotMatrix::new(n, f, data).unwrap(), y)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn columns(x: &SlotMatrix, range: std::ops::Range<usize>) -> SlotMatrix {
    let rows: Vec<Vec<f64>> = (0..x.rows).map(|r| x.row(r)[range.clone()].to_vec()).collect();
    SlotMatrix::from_rows(&rows).unwrap()
}
