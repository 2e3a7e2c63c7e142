use ckks::FheParams;
use packed_matrix::SlotMatrix;
use preprocess::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use simnet::tags;

fn data(n: usize, f: usize, seed: u64) -> (SlotMatrix, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * f).map(|_| rng.random_range(-4.0..4.0)).collect();
    let mut y: Vec<f64> = (0..n).map(|_| rng.random_bool(0.15) as u8 as f64).collect();
    for v in y.iter_mut().take(8) {
        *v = 1.0;
    }
    (SlotMatrix::new(n, f, x).unwrap(), y)
}

fn split(x: &SlotMatrix, at: usize) -> (SlotMatrix, SlotMatrix) {
    let a: Vec<Vec<f64>> = (0..x.rows).map(|i| x.row(i)[..at].to_vec()).collect();
    let b: Vec<Vec<f64>> = (0..x.rows).map(|i| x.row(i)[at..].to_vec()).collect();
    (SlotMatrix::from_rows(&a).unwrap(), SlotMatrix::from_rows(&b).unwrap())
}

fn max_diff(a: &SlotMatrix, b: &SlotMatrix) -> f64 {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    a.data.iter().zip(&b.data).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

#[test]
fn fixed_lambdas_copy_endpoints() {
    let (x, y) = data(40, 3, 1);
    for (l, pick) in [(0.0, 0), (1.0, 1)] {
        let cfg = SmoteConfig { k: 3, synthetic: 20, seed: 2, lambda: Some(l) };
        let out = smote_plain(&x, &y, &cfg).unwrap();
        for j in 0..20 {
            let src = if pick == 0 { out.plan.orig[j] } else { out.plan.neig[j] };
            assert_eq!(out.rows.row(j), x.row(src));
        }
    }
}

#[test]
fn encrypted_smote_matches_the_joint_oracle() {
    let (x, y) = data(150, 7, 3);
    let (xa, xb) = split(&x, 4);
    let cfg = SmoteConfig { k: 3, synthetic: 45, seed: 9, lambda: None };
    let out = smote_fhe(SmoteActive { x: &xa, y: &y }, SmotePassive { x: &xb }, &cfg, &FheParams::desk()).unwrap();
    // Same neighbour choice: search on A's block only.
    let plan = smote_plan(&xa, &y, &cfg).unwrap();
    assert_eq!(out.plan, plan);
    let want = apply_plan(&x, &plan);
    let (wa, wb) = split(&want, 4);
    assert!(max_diff(&out.a_rows, &wa) <= 1e-3);
    let mut b = out.b_rows_masked.clone();
    for (v, r) in b.data.iter_mut().zip(&out.r_b.data) {
        *v -= r;
    }
    assert!(max_diff(&b, &wb) <= 1e-3);
    // B's stored block really is masked.
    assert!(max_diff(&out.b_rows_masked, &wb) > 1.0);
    assert!(out.r_b.data.iter().all(|v| v.abs() < MASK_RANGE));

    let order: Vec<u16> = out.transcript.messages.iter().map(|m| m.tag).collect();
    assert_eq!(
        order,
        vec![tags::KEYS_PUBLIC, tags::KEYS_EVAL, tags::SMOTE_DATA, tags::SMOTE_MASKED, tags::SMOTE_A_BLOCK]
    );
    // A receives B's features only inside ciphertexts.
    let to_a: Vec<u16> = out.transcript.messages.iter().filter(|m| m.to == simnet::PartyId::ACTIVE).map(|m| m.tag).collect();
    assert!(!to_a.contains(&tags::SMOTE_MASKED));
}

#[test]
fn zero_lambda_reproduces_originals_after_unmasking() {
    let (x, y) = data(64, 4, 4);
    let (xa, xb) = split(&x, 2);
    let cfg = SmoteConfig { k: 2, synthetic: 10, seed: 1, lambda: Some(0.0) };
    let out = smote_fhe(SmoteActive { x: &xa, y: &y }, SmotePassive { x: &xb }, &cfg, &FheParams::desk()).unwrap();
    for j in 0..10 {
        let o = out.plan.orig[j];
        for c in 0..2 {
            assert!((out.a_rows.get(j, c) - xa.get(o, c)).abs() < 1e-3);
            assert!((out.b_rows_masked.get(j, c) - out.r_b.get(j, c) - xb.get(o, c)).abs() < 1e-3);
        }
    }
}

#[test]
fn synthetic_rows_span_several_chunks() {
    // 30 joint features pad to 32 slots per row: 128 rows per ciphertext.
    let (x, y) = data(300, 30, 5);
    let (xa, xb) = split(&x, 20);
    let cfg = SmoteConfig { k: 4, synthetic: 300, seed: 3, lambda: None };
    let out = smote_fhe(SmoteActive { x: &xa, y: &y }, SmotePassive { x: &xb }, &cfg, &FheParams::desk()).unwrap();
    let want = apply_plan(&x, &out.plan);
    let (wa, _) = split(&want, 20);
    assert_eq!(out.a_rows.rows, 300);
    assert!(max_diff(&out.a_rows, &wa) <= 1e-3);
}

#[test]
fn no_minority_rows_is_an_error() {
    let x = SlotMatrix::zeros(10, 2);
    let (xa, xb) = split(&x, 1);
    let cfg = SmoteConfig { k: 1, synthetic: 3, ..Default::default() };
    let err = smote_fhe(SmoteActive { x: &xa, y: &[0.0; 10] }, SmotePassive { x: &xb }, &cfg, &FheParams::desk());
    assert!(err.is_err());
}

#[test]
fn bankruptcy_sized_plan_reaches_the_target() {
    // 6819 rows with 220 positives, expanded to 13731 rows.
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let x = SlotMatrix::new(6819, 3, (0..6819 * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y: Vec<f64> = (0..6819).map(|i| (i % 31 == 0) as u8 as f64).collect();
    let cfg = SmoteConfig { k: 5, synthetic: 13731 - 6819, seed: 1, lambda: None };
    let out = smote_plain(&x, &y, &cfg).unwrap();
    assert_eq!(x.rows + out.rows.rows, 13731);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn synthetic_rows_lie_on_segments(seed in any::<u64>(), n in 12usize..60, f in 1usize..6, k in 1usize..4) {
        let (x, y) = data(n, f, seed);
        let cfg = SmoteConfig { k, synthetic: 2 * n, seed, lambda: None };
        let out = smote_plain(&x, &y, &cfg).unwrap();
        for j in 0..out.rows.rows {
            let (o, m, l) = (out.plan.orig[j], out.plan.neig[j], out.plan.lambda[j]);
            prop_assert!(l > 0.0 && l < 1.0);
            prop_assert!(y[o] == 1.0 && y[m] == 1.0 && o != m);
            for c in 0..f {
                let v = out.rows.get(j, c);
                prop_assert!((v - (l * x.get(m, c) + (1.0 - l) * x.get(o, c))).abs() < 1e-12);
                let (lo, hi) = (x.get(o, c).min(x.get(m, c)), x.get(o, c).max(x.get(m, c)));
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
