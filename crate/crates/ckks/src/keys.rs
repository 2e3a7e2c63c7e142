use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::context::FheContext;
use crate::poly::RnsPoly;
use crate::sampling::{gaussian, ternary, uniform};
use crate::{Ciphertext, FheError, FheParams, Plaintext, Result};

/// Ternary secret, kept in NTT form over every modulus (chain and special).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) ntt: RnsPoly,
}

/// `(b, a)` with `b = -a*s + e` over every modulus, special primes included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
    pub(crate) digest: [u8; 32],
}

/// One `(b_i, a_i)` pair per chain prime, each over the full key basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchingKey {
    pub(crate) digits: Vec<(RnsPoly, RnsPoly)>,
}

/// The public evaluation material a computing party needs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalKeys {
    pub relin: Option<Arc<SwitchingKey>>,
    pub rotations: BTreeMap<i64, Arc<SwitchingKey>>,
}

#[derive(Clone, Debug)]
pub struct KeySet {
    ctx: Arc<FheContext>,
    pub secret_key: SecretKey,
    pub public_key: PublicKey,
    pub relin_key: Arc<SwitchingKey>,
    pub rotation_keys: BTreeMap<i64, Arc<SwitchingKey>>,
}

impl PartialEq for KeySet {
    fn eq(&self, other: &Self) -> bool {
        self.ctx.digest() == other.ctx.digest()
            && self.secret_key == other.secret_key
            && self.public_key == other.public_key
            && self.relin_key == other.relin_key
            && self.rotation_keys == other.rotation_keys
    }
}

/// Every power-of-two step `±2^j`, `2^j < slots`.
pub fn power_of_two_steps(slots: usize) -> Vec<i64> {
    let mut out = Vec::new();
    let mut s = 1i64;
    while (s as usize) < slots {
        out.push(s);
        out.push(-s);
        s <<= 1;
    }
    out
}

/// Galois element `5^(step mod slots) mod 2N` realising a left rotation by `step`.
pub fn galois_element(step: i64, ring_degree: usize) -> usize {
    let slots = (ring_degree / 2) as i64;
    let two_n = 2 * ring_degree;
    let e = step.rem_euclid(slots) as u64;
    let mut acc = 1usize;
    let mut base = 5usize;
    let mut e2 = e;
    while e2 > 0 {
        if e2 & 1 == 1 {
            acc = acc * base % two_n;
        }
        base = base * base % two_n;
        e2 >>= 1;
    }
    acc
}

/// Deterministic key generation; every power-of-two rotation is included.
pub fn keygen(params: &FheParams, seed: u64) -> Result<KeySet> {
    let ctx = FheContext::new(params)?;
    KeySet::generate(ctx, seed)
}

impl KeySet {
    pub fn generate(ctx: Arc<FheContext>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = ctx.ring_degree();
        let all = ctx.key_indices();
        let s_coeffs = ternary(&mut rng, n);
        let secret_key = SecretKey { ntt: ctx.small_to_ntt(&s_coeffs, &all) };

        let all_mods: Vec<_> = all.iter().map(|&i| &ctx.moduli[i]).collect();
        let a = uniform(&ctx, &all, &mut rng);
        let e = ctx.small_to_ntt(&gaussian(&mut rng, n, ctx.params.error_stddev), &all);
        let mut b = a.mul(&secret_key.ntt, &all_mods);
        b.neg_assign(&all_mods);
        b.add_assign(&e, &all_mods);
        let public_key = PublicKey { b, a, digest: *ctx.digest() };

        let s2 = secret_key.ntt.mul(&secret_key.ntt, &all_mods);
        let relin_key = Arc::new(switching_key(&ctx, &secret_key, &s2, &mut rng));

        let mut rotation_keys: BTreeMap<i64, Arc<SwitchingKey>> = BTreeMap::new();
        let mut by_galois: BTreeMap<usize, Arc<SwitchingKey>> = BTreeMap::new();
        for step in power_of_two_steps(ctx.slot_count()) {
            let g = galois_element(step, n);
            let key = by_galois
                .entry(g)
                .or_insert_with(|| {
                    let perm = ctx.automorphism_perm(g);
                    let target = ctx.apply_automorphism(&secret_key.ntt, &perm);
                    Arc::new(switching_key(&ctx, &secret_key, &target, &mut rng))
                })
                .clone();
            rotation_keys.insert(step, key);
        }
        Ok(Self { ctx, secret_key, public_key, relin_key, rotation_keys })
    }

    pub fn context(&self) -> &Arc<FheContext> {
        &self.ctx
    }

    /// All evaluation keys (relinearization and every rotation).
    pub fn eval_keys(&self) -> EvalKeys {
        EvalKeys { relin: Some(self.relin_key.clone()), rotations: self.rotation_keys.clone() }
    }

    /// A subset of the evaluation keys, e.g. for shipping to another party.
    pub fn eval_keys_for(&self, steps: &[i64], relin: bool) -> Result<EvalKeys> {
        let mut rotations = BTreeMap::new();
        for &s in steps {
            let key = self.rotation_keys.get(&s).ok_or(FheError::MissingRotationKey(s))?;
            rotations.insert(s, key.clone());
        }
        Ok(EvalKeys { relin: relin.then(|| self.relin_key.clone()), rotations })
    }

    pub fn evaluator(&self) -> crate::Evaluator {
        crate::Evaluator::new(self.ctx.clone(), self.eval_keys())
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Result<Ciphertext> {
        self.public_key.encrypt(&self.ctx, pt, rng)
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Plaintext {
        self.secret_key.decrypt(&self.ctx, ct)
    }

    /// Encode, encrypt at the top level.
    pub fn encrypt_values<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Result<Ciphertext> {
        let pt = self.ctx.encode(values, self.ctx.params.scale_bits, self.ctx.max_level())?;
        self.encrypt(&pt, rng)
    }

    pub fn decrypt_values(&self, ct: &Ciphertext) -> Vec<f64> {
        self.ctx.decode(&self.decrypt(ct))
    }
}

fn switching_key<R: Rng + ?Sized>(ctx: &FheContext, sk: &SecretKey, target: &RnsPoly, rng: &mut R) -> SwitchingKey {
    let n = ctx.ring_degree();
    let all = ctx.key_indices();
    let mods: Vec<_> = all.iter().map(|&i| &ctx.moduli[i]).collect();
    let digits = (0..=ctx.max_level())
        .map(|i| {
            let a = uniform(ctx, &all, rng);
            let e = ctx.small_to_ntt(&gaussian(rng, n, ctx.params.error_stddev), &all);
            let mut b = a.mul(&sk.ntt, &mods);
            b.neg_assign(&mods);
            b.add_assign(&e, &mods);
            let m = &ctx.moduli[i];
            let factor = ctx.p_mod_q[i];
            let t = target.limb(i);
            for (dst, &s) in b.limb_mut(i).iter_mut().zip(t) {
                *dst = m.add(*dst, m.mul(factor, s));
            }
            (b, a)
        })
        .collect();
    SwitchingKey { digits }
}

impl PublicKey {
    pub fn params_digest(&self) -> &[u8; 32] {
        &self.digest
    }

    /// Encrypts at the plaintext's level.
    ///
    /// The encryption of zero is formed over the extended basis and divided by
    /// `P`, which leaves only rounding noise.
    pub fn encrypt<R: Rng + ?Sized>(&self, ctx: &FheContext, pt: &Plaintext, rng: &mut R) -> Result<Ciphertext> {
        if &self.digest != ctx.digest() {
            return Err(FheError::ParamsMismatch);
        }
        let level = pt.level;
        let ext = ctx.extended_indices(level);
        let mods: Vec<_> = ext.iter().map(|&i| &ctx.moduli[i]).collect();
        let n = ctx.ring_degree();
        let sigma = ctx.params.error_stddev;
        let u = ctx.small_to_ntt(&ternary(rng, n), &ext);
        let e0 = ctx.small_to_ntt(&gaussian(rng, n, sigma), &ext);
        let e1 = ctx.small_to_ntt(&gaussian(rng, n, sigma), &ext);
        let mut c0 = self.b.select(&ext).mul(&u, &mods);
        c0.add_assign(&e0, &mods);
        let mut c1 = self.a.select(&ext).mul(&u, &mods);
        c1.add_assign(&e1, &mods);
        let mut c0 = ctx.mod_down(c0, level);
        let c1 = ctx.mod_down(c1, level);
        c0.add_assign(&pt.poly, &mods[..=level]);
        Ok(Ciphertext { c0, c1, level, scale_bits: pt.scale_bits })
    }
}

impl SecretKey {
    pub fn decrypt(&self, ctx: &FheContext, ct: &Ciphertext) -> Plaintext {
        let idx = ctx.level_indices(ct.level);
        let mods: Vec<_> = idx.iter().map(|&i| &ctx.moduli[i]).collect();
        let mut m = ct.c1.mul(&self.ntt.select(&idx), &mods);
        m.add_assign(&ct.c0, &mods);
        Plaintext { poly: m, level: ct.level, scale_bits: ct.scale_bits }
    }
}
