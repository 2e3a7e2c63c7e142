use std::sync::Arc;

use crate::arith::Modulus;
use crate::context::FheContext;
use crate::keys::{galois_element, EvalKeys, SwitchingKey};
use crate::poly::RnsPoly;
use crate::{Ciphertext, FheError, Plaintext, Result};

/// Homomorphic operations with a fixed set of evaluation keys.
#[derive(Clone, Debug)]
pub struct Evaluator {
    ctx: Arc<FheContext>,
    keys: EvalKeys,
}

impl Evaluator {
    pub fn new(ctx: Arc<FheContext>, keys: EvalKeys) -> Self {
        Self { ctx, keys }
    }

    pub fn context(&self) -> &Arc<FheContext> {
        &self.ctx
    }

    pub fn keys(&self) -> &EvalKeys {
        &self.keys
    }

    fn mods(&self, level: usize) -> Vec<&Modulus> {
        self.ctx.moduli[..=level].iter().collect()
    }

    fn same_shape(a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        if a.level != b.level {
            return Err(FheError::LevelMismatch(a.level, b.level));
        }
        if a.scale_bits != b.scale_bits {
            return Err(FheError::ScaleMismatch(a.scale_bits, b.scale_bits));
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        Self::same_shape(a, b)?;
        let mods = self.mods(a.level);
        let mut out = a.clone();
        out.c0.add_assign(&b.c0, &mods);
        out.c1.add_assign(&b.c1, &mods);
        Ok(out)
    }

    pub fn add_assign(&self, a: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        Self::same_shape(a, b)?;
        let mods = self.mods(a.level);
        a.c0.add_assign(&b.c0, &mods);
        a.c1.add_assign(&b.c1, &mods);
        Ok(())
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        Self::same_shape(a, b)?;
        let mods = self.mods(a.level);
        let mut out = a.clone();
        out.c0.sub_assign(&b.c0, &mods);
        out.c1.sub_assign(&b.c1, &mods);
        Ok(out)
    }

    pub fn negate(&self, a: &Ciphertext) -> Ciphertext {
        let mods = self.mods(a.level);
        let mut out = a.clone();
        out.c0.neg_assign(&mods);
        out.c1.neg_assign(&mods);
        out
    }

    fn plain_at(&self, pt: &Plaintext, level: usize) -> Result<RnsPoly> {
        if pt.level < level {
            return Err(FheError::LevelMismatch(pt.level, level));
        }
        Ok(pt.poly.truncated(level + 1))
    }

    pub fn add_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if a.scale_bits != pt.scale_bits {
            return Err(FheError::ScaleMismatch(a.scale_bits, pt.scale_bits));
        }
        let p = self.plain_at(pt, a.level)?;
        let mut out = a.clone();
        out.c0.add_assign(&p, &self.mods(a.level));
        Ok(out)
    }

    pub fn sub_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if a.scale_bits != pt.scale_bits {
            return Err(FheError::ScaleMismatch(a.scale_bits, pt.scale_bits));
        }
        let p = self.plain_at(pt, a.level)?;
        let mut out = a.clone();
        out.c0.sub_assign(&p, &self.mods(a.level));
        Ok(out)
    }

    fn check_product_scale(&self, sa: u32, sb: u32, level: usize) -> Result<u32> {
        let scale = sa + sb;
        if scale + 1 >= self.ctx.log_q(level) {
            return Err(if level == 0 {
                FheError::LevelExhausted
            } else {
                FheError::ScaleOverflow { scale, level }
            });
        }
        Ok(scale)
    }

    /// Ciphertext product, relinearized but not rescaled.
    pub fn mult(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.level != b.level {
            return Err(FheError::LevelMismatch(a.level, b.level));
        }
        let scale_bits = self.check_product_scale(a.scale_bits, b.scale_bits, a.level)?;
        let relin = self.keys.relin.as_ref().ok_or(FheError::MissingRelinKey)?;
        let mods = self.mods(a.level);
        let mut d0 = a.c0.mul(&b.c0, &mods);
        let mut d1 = a.c0.mul(&b.c1, &mods);
        d1.add_assign(&a.c1.mul(&b.c0, &mods), &mods);
        let d2 = a.c1.mul(&b.c1, &mods);
        let (k0, k1) = self.key_switch(&d2, a.level, relin);
        d0.add_assign(&k0, &mods);
        d1.add_assign(&k1, &mods);
        Ok(Ciphertext { c0: d0, c1: d1, level: a.level, scale_bits })
    }

    /// Product with an encoded plaintext; scales add.
    pub fn cmult(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        let scale_bits = self.check_product_scale(a.scale_bits, pt.scale_bits, a.level)?;
        let p = self.plain_at(pt, a.level)?;
        let mods = self.mods(a.level);
        let mut out = a.clone();
        out.c0.mul_assign(&p, &mods);
        out.c1.mul_assign(&p, &mods);
        out.scale_bits = scale_bits;
        Ok(out)
    }

    /// Product with the constant `round(c * 2^bits)`; the scale grows by `bits`.
    pub fn mul_const(&self, a: &Ciphertext, c: f64, bits: u32) -> Result<Ciphertext> {
        let scale_bits = self.check_product_scale(a.scale_bits, bits, a.level)?;
        let k = scaled_integer(c, bits)?;
        let mods = self.mods(a.level);
        let scalars: Vec<u64> = mods.iter().map(|m| m.from_i128(k)).collect();
        let mut out = a.clone();
        out.c0.mul_scalar_assign(&scalars, &mods);
        out.c1.mul_scalar_assign(&scalars, &mods);
        out.scale_bits = scale_bits;
        Ok(out)
    }

    /// Product with an integer; the scale is unchanged.
    pub fn mul_integer(&self, a: &Ciphertext, k: i64) -> Ciphertext {
        let mods = self.mods(a.level);
        let scalars: Vec<u64> = mods.iter().map(|m| m.from_i64(k)).collect();
        let mut out = a.clone();
        out.c0.mul_scalar_assign(&scalars, &mods);
        out.c1.mul_scalar_assign(&scalars, &mods);
        out
    }

    /// Adds the constant `c` to every slot.
    pub fn add_const(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let k = scaled_integer(c, a.scale_bits)?;
        let mods = self.mods(a.level);
        let scalars: Vec<u64> = mods.iter().map(|m| m.from_i128(k)).collect();
        let mut out = a.clone();
        out.c0.add_scalar_assign(&scalars, &mods);
        Ok(out)
    }

    /// Divides the scale by `2^bits` and drops the last prime.
    ///
    /// When `q_l` is not close to `2^bits`, the ciphertext is first multiplied
    /// by `round(q_l / 2^bits)` so the division by `q_l` nets out to `2^bits`.
    pub fn rescale(&self, a: &Ciphertext, bits: u32) -> Result<Ciphertext> {
        let l = a.level;
        if l == 0 {
            return Err(FheError::LevelExhausted);
        }
        if bits == 0 || bits > a.scale_bits {
            return Err(FheError::InvalidRescale(bits));
        }
        let ql = self.ctx.moduli[l];
        let k = (ql.value() as f64 / 2f64.powi(bits as i32)).round();
        if k < 1.0 {
            return Err(FheError::InvalidRescale(bits));
        }
        let k = k as u64;
        let src = if k == 1 { a.clone() } else { self.mul_integer(a, k as i64) };
        let c0 = self.divide_by_last(&src.c0, l);
        let c1 = self.divide_by_last(&src.c1, l);
        Ok(Ciphertext { c0, c1, level: l - 1, scale_bits: a.scale_bits - bits })
    }

    fn divide_by_last(&self, p: &RnsPoly, l: usize) -> RnsPoly {
        let ctx = &self.ctx;
        let ql = ctx.moduli[l];
        let mut last = p.limb(l).to_vec();
        ctx.ntt[l].inverse(&mut last);
        let centered: Vec<i64> = last.iter().map(|&v| ql.center(v)).collect();
        let mut out = p.truncated(l);
        let mut tmp = vec![0u64; p.n()];
        for j in 0..l {
            let m = ctx.moduli[j];
            for (t, &c) in tmp.iter_mut().zip(&centered) {
                *t = m.from_i64(c);
            }
            ctx.ntt[j].forward(&mut tmp);
            let inv = ctx.rescale_inv[l][j];
            let inv_s = m.shoup(inv);
            for (dst, &t) in out.limb_mut(j).iter_mut().zip(&tmp) {
                *dst = m.mul_shoup(m.sub(*dst, t), inv, inv_s);
            }
        }
        out
    }

    /// Drops primes down to `level` without changing the scale.
    pub fn mod_drop(&self, a: &Ciphertext, level: usize) -> Result<Ciphertext> {
        if level > a.level {
            return Err(FheError::LevelMismatch(a.level, level));
        }
        Ok(Ciphertext {
            c0: a.c0.truncated(level + 1),
            c1: a.c1.truncated(level + 1),
            level,
            scale_bits: a.scale_bits,
        })
    }

    /// Cyclic left rotation by `k` slots (negative `k` rotates right), composed
    /// from the available power-of-two keys.
    pub fn rotate(&self, a: &Ciphertext, k: i64) -> Result<Ciphertext> {
        let slots = self.ctx.slot_count() as i64;
        let mut r = k.rem_euclid(slots);
        if r == 0 {
            return Ok(a.clone());
        }
        if self.keys.rotations.contains_key(&r) && r.count_ones() == 1 {
            return self.rotate_with_key(a, r);
        }
        if r > slots / 2 {
            r -= slots;
        }
        let mut out = a.clone();
        for step in signed_binary_digits(r) {
            out = self.rotate_with_key(&out, step)?;
        }
        Ok(out)
    }

    fn rotate_with_key(&self, a: &Ciphertext, step: i64) -> Result<Ciphertext> {
        let key = self.keys.rotations.get(&step).ok_or(FheError::MissingRotationKey(step))?;
        let g = galois_element(step, self.ctx.ring_degree());
        let perm = self.ctx.automorphism_perm(g);
        let mut c0 = self.ctx.apply_automorphism(&a.c0, &perm);
        let c1 = self.ctx.apply_automorphism(&a.c1, &perm);
        let (k0, k1) = self.key_switch(&c1, a.level, key);
        c0.add_assign(&k0, &self.mods(a.level));
        Ok(Ciphertext { c0, c1: k1, level: a.level, scale_bits: a.scale_bits })
    }

    /// Hybrid key switch with one digit per chain prime, followed by division by `P`.
    fn key_switch(&self, d: &RnsPoly, level: usize, key: &SwitchingKey) -> (RnsPoly, RnsPoly) {
        let ctx = &self.ctx;
        let n = ctx.ring_degree();
        let ext = ctx.extended_indices(level);
        let mut acc0 = vec![0u128; ext.len() * n];
        let mut acc1 = vec![0u128; ext.len() * n];
        let mut coeffs = vec![0u64; n];
        let mut lifted = vec![0u64; n];
        for i in 0..=level {
            coeffs.copy_from_slice(d.limb(i));
            ctx.ntt[i].inverse(&mut coeffs);
            let (kb, ka) = &key.digits[i];
            for (t, &mi) in ext.iter().enumerate() {
                let src: &[u64] = if mi == i {
                    d.limb(i)
                } else {
                    let m = &ctx.moduli[mi];
                    for (dst, &c) in lifted.iter_mut().zip(&coeffs) {
                        *dst = m.reduce(c);
                    }
                    ctx.ntt[mi].forward(&mut lifted);
                    &lifted
                };
                let (b, a) = (kb.limb(mi), ka.limb(mi));
                let o0 = &mut acc0[t * n..(t + 1) * n];
                let o1 = &mut acc1[t * n..(t + 1) * n];
                for x in 0..n {
                    let v = src[x] as u128;
                    o0[x] += v * b[x] as u128;
                    o1[x] += v * a[x] as u128;
                }
            }
        }
        let reduce = |acc: &[u128]| {
            let mut p = RnsPoly::zero(n, ext.len());
            for (t, &mi) in ext.iter().enumerate() {
                let m = &ctx.moduli[mi];
                for (dst, &v) in p.limb_mut(t).iter_mut().zip(&acc[t * n..(t + 1) * n]) {
                    *dst = m.reduce_u128(v);
                }
            }
            p
        };
        (ctx.mod_down(reduce(&acc0), level), ctx.mod_down(reduce(&acc1), level))
    }
}

/// Power-of-two key steps [`Evaluator::rotate`] uses for `steps` when it
/// holds exactly those keys.
pub fn rotation_key_steps(steps: &[i64], slots: usize) -> Vec<i64> {
    let n = slots as i64;
    let mut out = std::collections::BTreeSet::new();
    for &k in steps {
        let mut r = k.rem_euclid(n);
        if r == 0 {
            continue;
        }
        if r.count_ones() == 1 {
            out.insert(r);
            continue;
        }
        if r > n / 2 {
            r -= n;
        }
        out.extend(signed_binary_digits(r));
    }
    out.into_iter().collect()
}

fn scaled_integer(c: f64, bits: u32) -> Result<i128> {
    let v = (c * 2f64.powi(bits as i32)).round();
    if !v.is_finite() || v.abs() >= 2f64.powi(120) {
        return Err(FheError::ValueOverflow(c));
    }
    Ok(v as i128)
}

/// Non-adjacent form of `r` as signed powers of two, low to high.
fn signed_binary_digits(r: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut x = r;
    let mut bit = 1i64;
    while x != 0 {
        if x & 1 != 0 {
            let d = if x.rem_euclid(4) == 3 { -1 } else { 1 };
            out.push(d * bit);
            x -= d;
        }
        x >>= 1;
        bit <<= 1;
    }
    out
}
