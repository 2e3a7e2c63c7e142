mod common;

use std::time::Instant;

use ckks::{keygen, Ciphertext, FheParams, KeySet};
use common::{blobs, max_diff};
use logreg::*;
use packed_matrix::{Backend, FheBackend, PlainBackend, SlotMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

struct Batch {
    z: SlotMatrix,
    beta: Vec<f64>,
}

fn batch(n: usize, f: usize, seed: u64, beta_scale: f64) -> Batch {
    let (x, y) = blobs(n, f, seed);
    let z = signed_rows(&with_bias(&x), &y).unwrap();
    let beta = (0..=f).map(|j| beta_scale * (((j as u64 * 7919 + seed) % 13) as f64 / 6.0 - 1.0)).collect();
    Batch { z, beta }
}

fn run_plain(b: &PlainBackend, procedure: Procedure, data: &Batch, poly: &SigmoidPoly, alpha: f64) -> Vec<f64> {
    let shape = BatchShape::new(procedure, data.z.rows, data.z.cols, b.slot_count()).unwrap();
    let m = data_scale(poly).unwrap();
    let w: Vec<_> = shape.pack_rows(&data.z, m).unwrap().iter().map(|v| b.fresh(v).unwrap()).collect();
    let beta = b.fresh(&shape.pack_weights(&data.beta).unwrap()).unwrap();
    let out = match procedure {
        Procedure::Baseline => grad_step_baseline(b, &shape, &w, &beta, poly, alpha),
        Procedure::Improved => grad_step_improved(b, &shape, &w, &beta, poly, alpha),
    }
    .unwrap();
    shape.unpack_weights(&out.values)
}

struct Fhe {
    keys: KeySet,
    backend: FheBackend,
    rng: ChaCha20Rng,
}

impl Fhe {
    fn new(seed: u64) -> Self {
        let keys = keygen(&FheParams::desk(), seed).unwrap();
        let backend = FheBackend::new(keys.evaluator());
        Self { keys, backend, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    fn enc(&mut self, v: &[f64]) -> Ciphertext {
        self.keys.encrypt_values(v, &mut self.rng).unwrap()
    }

    /// Returns the decrypted slots and the shape used.
    fn step(&mut self, procedure: Procedure, data: &Batch, poly: &SigmoidPoly, alpha: f64) -> (Vec<f64>, BatchShape) {
        let shape = BatchShape::new(procedure, data.z.rows, data.z.cols, self.backend.slot_count()).unwrap();
        let m = data_scale(poly).unwrap();
        let w: Vec<_> = shape.pack_rows(&data.z, m).unwrap().iter().map(|v| self.enc(v)).collect();
        let beta = self.enc(&shape.pack_weights(&data.beta).unwrap());
        let out = match procedure {
            Procedure::Baseline => grad_step_baseline(&self.backend, &shape, &w, &beta, poly, alpha),
            Procedure::Improved => grad_step_improved(&self.backend, &shape, &w, &beta, poly, alpha),
        }
        .unwrap();
        (self.keys.decrypt_values(&out), shape)
    }
}

fn poly() -> SigmoidPoly {
    fit_sigmoid_poly(3, (-8.0, 8.0)).unwrap()
}

#[test]
fn encrypted_steps_match_the_plaintext_replica() {
    let mut fhe = Fhe::new(11);
    let poly = poly();
    let data = batch(200, 9, 3, 0.3);
    let want = plain_step(&data.z, &data.beta, &poly, 0.1);
    for procedure in [Procedure::Baseline, Procedure::Improved] {
        let (slots, shape) = fhe.step(procedure, &data, &poly, 0.1);
        let got = shape.unpack_weights(&slots);
        assert!(max_diff(&got, &want) <= 1e-3, "{procedure:?}: {got:?} vs {want:?}");
        assert!(shape.weight_spread(&slots) <= 1e-4, "{procedure:?} lost the replication");
    }
}

#[test]
fn multi_chunk_batches_agree() {
    let mut fhe = Fhe::new(12);
    let poly = poly();
    // 600 x 20 pads to 1024 x 32, more than one ciphertext.
    let data = batch(600, 19, 4, 0.2);
    let want = plain_step(&data.z, &data.beta, &poly, 0.5);
    let (slots, shape) = fhe.step(Procedure::Improved, &data, &poly, 0.5);
    assert!(shape.chunks > 1);
    assert!(max_diff(&shape.unpack_weights(&slots), &want) <= 1e-3);
    let (slots, shape) = fhe.step(Procedure::Baseline, &data, &poly, 0.5);
    assert!(max_diff(&shape.unpack_weights(&slots), &want) <= 1e-3);
}

#[test]
fn zero_weights_step_along_the_plain_gradient() {
    let mut fhe = Fhe::new(13);
    let poly = poly();
    let mut data = batch(128, 7, 5, 0.0);
    data.beta = vec![0.0; 8];
    let alpha = 1.0;
    let mut grad = vec![0.0; 8];
    for i in 0..data.z.rows {
        for (g, v) in grad.iter_mut().zip(data.z.row(i)) {
            *g += poly.eval(0.0) * v / data.z.rows as f64;
        }
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    for procedure in [Procedure::Baseline, Procedure::Improved] {
        let (slots, shape) = fhe.step(procedure, &data, &poly, alpha);
        let got = shape.unpack_weights(&slots);
        let err = got.iter().zip(&grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm <= 2f64.powi(-10), "{procedure:?}: relative error {}", err / norm);
    }
}

#[test]
fn zero_learning_rate_is_the_identity() {
    let mut fhe = Fhe::new(14);
    let poly = poly();
    let data = batch(64, 5, 6, 0.5);
    for procedure in [Procedure::Baseline, Procedure::Improved] {
        let (slots, shape) = fhe.step(procedure, &data, &poly, 0.0);
        assert!(max_diff(&shape.unpack_weights(&slots), &data.beta) <= 1e-6);
    }
}

#[test]
fn procedures_agree_over_fifty_seeds() {
    let poly = poly();
    let b = PlainBackend::new(&FheParams::desk());
    for seed in 0..50u64 {
        let n = 8 + (seed as usize * 37) % 300;
        let f = 1 + (seed as usize * 11) % 30;
        let data = batch(n, f, seed, 0.4);
        let base = run_plain(&b, Procedure::Baseline, &data, &poly, 0.1);
        let imp = run_plain(&b, Procedure::Improved, &data, &poly, 0.1);
        let want = plain_step(&data.z, &data.beta, &poly, 0.1);
        assert!(max_diff(&base, &imp) <= 1e-3, "seed {seed}");
        assert!(max_diff(&imp, &want) <= 1e-6, "seed {seed}");
    }
}

#[test]
fn encrypted_procedures_agree_on_random_batches() {
    let mut fhe = Fhe::new(15);
    let poly = poly();
    for seed in 0..3u64 {
        let data = batch(50 + 40 * seed as usize, 3 + 4 * seed as usize, 100 + seed, 0.4);
        let (a, sa) = fhe.step(Procedure::Baseline, &data, &poly, 0.1);
        let (b, sb) = fhe.step(Procedure::Improved, &data, &poly, 0.1);
        assert!(max_diff(&sa.unpack_weights(&a), &sb.unpack_weights(&b)) <= 1e-3);
    }
}

#[test]
fn multiplications_and_depth_match_the_table() {
    for (n, f) in [(1, 0), (2, 1), (16, 3), (128, 31), (1024, 31), (64, 255)] {
        let base = count_ops(Procedure::Baseline, n, f).unwrap();
        let imp = count_ops(Procedure::Improved, n, f).unwrap();
        assert_eq!((base.mul, base.depth), (4, 5), "baseline n={n} f={f}");
        assert_eq!((imp.mul, imp.depth), (3, 4), "improved n={n} f={f}");
    }
}

#[test]
fn rotations_follow_the_packing() {
    let lg = |v: usize| v.trailing_zeros() as usize;
    for (n, f) in [(2, 1), (16, 3), (128, 31), (1024, 31)] {
        let base = count_ops(Procedure::Baseline, n, f).unwrap();
        let imp = count_ops(Procedure::Improved, n, f).unwrap();
        assert_eq!(base.rot, 2 * lg(f + 1) + lg(n));
        assert_eq!(imp.rot, lg(f + 1) + 2 * lg(n));
    }
}

#[test]
fn degree_three_fit_error_is_measured() {
    let poly = poly();
    let worst = (0..=10_000)
        .map(|i| -8.0 + 16.0 * i as f64 / 10_000.0)
        .map(|x| (poly.eval(x) - 1.0 / (1.0 + (-x as f64).exp())).abs())
        .fold(0.0, f64::max);
    assert!((0.10..0.12).contains(&worst), "{worst}");
}

#[test]
#[ignore = "no odd cubic reaches 0.05 on [-8, 8]; see the decisions ledger"]
fn degree_three_fit_within_five_hundredths() {
    let poly = poly();
    let worst = (0..=10_000)
        .map(|i| -8.0 + 16.0 * i as f64 / 10_000.0)
        .map(|x| (poly.eval(x) - 1.0 / (1.0 + (-x as f64).exp())).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.05, "{worst}");
}

#[test]
fn fits_are_odd_plus_half() {
    for degree in [3, 5, 7] {
        let poly = fit_sigmoid_poly(degree, (-8.0, 8.0)).unwrap();
        assert_eq!(poly.eval(0.0), 0.5);
        for i in 0..=10_000 {
            let x = -8.0 + 16.0 * i as f64 / 10_000.0;
            assert!((poly.eval(x) + poly.eval(-x) - 1.0).abs() < 1e-12);
        }
    }
    assert!(fit_sigmoid_poly(4, (-8.0, 8.0)).is_err());
}

#[test]
fn full_batch_step_fits_the_time_budget() {
    let mut fhe = Fhe::new(16);
    let poly = poly();
    let data = batch(1024, 31, 7, 0.1);
    let shape = BatchShape::new(Procedure::Improved, 1024, 32, fhe.backend.slot_count()).unwrap();
    let m = data_scale(&poly).unwrap();
    let w: Vec<_> = shape.pack_rows(&data.z, m).unwrap().iter().map(|v| fhe.enc(v)).collect();
    let beta = fhe.enc(&shape.pack_weights(&data.beta).unwrap());
    let start = Instant::now();
    let out = grad_step_improved(&fhe.backend, &shape, &w, &beta, &poly, 0.1).unwrap();
    let took = start.elapsed();
    assert!(took.as_secs_f64() <= 5.0, "{took:?}");
    let want = plain_step(&data.z, &data.beta, &poly, 0.1);
    assert!(max_diff(&shape.unpack_weights(&fhe.keys.decrypt_values(&out)), &want) <= 1e-3);
}

#[test]
fn short_chains_are_rejected() {
    let poly = poly();
    let b = PlainBackend::new(&FheParams::desk());
    let data = batch(16, 3, 1, 0.1);
    let shape = BatchShape::new(Procedure::Improved, 16, 4, b.slot_count()).unwrap();
    let w: Vec<_> = shape.pack_rows(&data.z, 0.05).unwrap().iter().map(|v| b.fresh_at(v, 3, 40).unwrap()).collect();
    let beta = b.fresh_at(&shape.pack_weights(&data.beta).unwrap(), 3, 40).unwrap();
    assert!(grad_step_improved(&b, &shape, &w, &beta, &poly, 0.1).is_err());
    let base = BatchShape::new(Procedure::Baseline, 16, 4, b.slot_count()).unwrap();
    assert!(grad_step_improved(&b, &base, &w, &beta, &poly, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plain_backend_tracks_the_replica(n in 1usize..200, f in 0usize..20, seed in any::<u64>(), alpha in 0.0f64..2.0) {
        let poly = poly();
        let b = PlainBackend::new(&FheParams::desk());
        let data = batch(n, f, seed, 0.3);
        let want = plain_step(&data.z, &data.beta, &poly, alpha);
        for procedure in [Procedure::Baseline, Procedure::Improved] {
            prop_assert!(max_diff(&run_plain(&b, procedure, &data, &poly, alpha), &want) <= 1e-6);
        }
    }
}
