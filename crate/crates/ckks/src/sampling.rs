use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::context::FheContext;
use crate::poly::RnsPoly;

pub(crate) fn ternary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Rounded Gaussian, truncated at six standard deviations.
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<i64> {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let bound = 6.0 * sigma;
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= bound {
                break x.round() as i64;
            }
        })
        .collect()
}

/// Uniform element over the listed moduli (uniform in NTT form too).
pub(crate) fn uniform<R: Rng + ?Sized>(ctx: &FheContext, idx: &[usize], rng: &mut R) -> RnsPoly {
    let n = ctx.ring_degree();
    let mut p = RnsPoly::zero(n, idx.len());
    for (limb, &i) in idx.iter().enumerate() {
        let q = ctx.moduli[i].value();
        for x in p.limb_mut(limb) {
            *x = rng.random_range(0..q);
        }
    }
    p
}
