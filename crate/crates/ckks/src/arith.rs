//! Word-sized modular arithmetic and NTT-friendly prime search.

/// A prime modulus below 2^62 with precomputed Barrett constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    q: u64,
    ratio: [u64; 2],
}

impl Modulus {
    pub fn new(q: u64) -> Self {
        assert!(q > 2 && q < (1 << 62), "modulus out of range: {q}");
        let r = u128::MAX / q as u128;
        Self { q, ratio: [r as u64, (r >> 64) as u64] }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.q
    }

    pub fn bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    /// Barrett reduction of a 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, z: u128) -> u64 {
        let z0 = z as u64;
        let z1 = (z >> 64) as u64;
        let [r0, r1] = self.ratio;
        let carry = ((z0 as u128 * r0 as u128) >> 64) as u64;
        let t = z0 as u128 * r1 as u128;
        let (tmp1, c1) = (t as u64).overflowing_add(carry);
        let tmp3 = ((t >> 64) as u64).wrapping_add(c1 as u64);
        let t = z1 as u128 * r0 as u128;
        let (_, c2) = tmp1.overflowing_add(t as u64);
        let carry = ((t >> 64) as u64).wrapping_add(c2 as u64);
        let est = z1.wrapping_mul(r1).wrapping_add(tmp3).wrapping_add(carry);
        let r = z0.wrapping_sub(est.wrapping_mul(self.q));
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        if a >= self.q {
            a % self.q
        } else {
            a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    pub fn pow(&self, mut base: u64, mut e: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Inverse modulo a prime; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.q - 2))
        }
    }

    /// Shoup companion `floor(w * 2^64 / q)` for a fixed multiplicand `w < q`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.q as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let r = mul_shoup_lazy(a, w, w_shoup, self.q);
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    pub fn from_i64(&self, x: i64) -> u64 {
        let r = (x as i128).rem_euclid(self.q as i128);
        r as u64
    }

    pub fn from_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.q as i128) as u64
    }

    /// Representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.q / 2 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }
}

/// `a * w mod q` up to one extra `q` (result in `[0, 2q)`).
#[inline(always)]
pub fn mul_shoup_lazy(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
    a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(q))
}

fn mul_mod_u128(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u128(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u128(acc, b, m);
        }
        b = mul_mod_u128(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for a in BASES {
        let mut x = pow_mod_u128(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u128(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// The `count` primes `≡ 1 mod step` closest to `2^bits` (either side), nearest first.
pub fn primes_near_pow2(bits: u32, step: u64, count: usize, exclude: &[u64]) -> Vec<u64> {
    let center = 1u64 << bits;
    let mut below = center + 1 - step;
    let mut above = center + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let d_above = above - center;
        let d_below = center - below;
        let cand = if d_above <= d_below {
            let c = above;
            above += step;
            c
        } else {
            let c = below;
            below -= step;
            c
        };
        if is_prime(cand) && !exclude.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

/// The `count` largest primes `≡ 1 mod step` below `2^bits`, largest first.
pub fn primes_below_pow2(bits: u32, step: u64, count: usize, exclude: &[u64]) -> Vec<u64> {
    let mut cand = (1u64 << bits) + 1 - step;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if is_prime(cand) && !exclude.contains(&cand) {
            out.push(cand);
        }
        cand -= step;
    }
    out
}

/// A primitive `order`-th root of unity modulo prime `q` (order a power of two dividing q-1).
pub fn primitive_root(q: u64, order: u64) -> Option<u64> {
    if (q - 1) % order != 0 {
        return None;
    }
    let m = Modulus::new(q);
    let cofactor = (q - 1) / order;
    (2..q).map(|x| m.pow(x, cofactor)).find(|&c| m.pow(c, order / 2) == q - 1)
}

#[inline]
pub fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q60: u64 = 1152921504606830593; // 2^60 - 2^14 + 1

    #[test]
    fn known_primes() {
        assert!(is_prime(Q60));
        assert!(is_prime(65537));
        assert!(!is_prime(65537 * 3));
        assert!(!is_prime(1));
        assert!(is_prime(2));
    }

    #[test]
    fn prime_search_is_ntt_friendly() {
        let ps = primes_near_pow2(40, 1 << 14, 5, &[]);
        assert_eq!(ps.len(), 5);
        for p in &ps {
            assert!(is_prime(*p));
            assert_eq!(p % (1 << 14), 1);
            let dev = (*p as i128 - (1i128 << 40)).abs() as f64 / (1u64 << 40) as f64;
            assert!(dev < 1e-5, "prime {p} too far from 2^40");
        }
        let big = primes_below_pow2(60, 1 << 14, 3, &[]);
        assert!(big.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn root_has_exact_order() {
        let m = Modulus::new(Q60);
        let r = primitive_root(Q60, 1 << 14).unwrap();
        assert_eq!(m.pow(r, 1 << 14), 1);
        assert_eq!(m.pow(r, 1 << 13), Q60 - 1);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128(a in 0u64..Q60, b in 0u64..Q60) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.mul(a, b), mul_mod_u128(a, b, Q60));
        }

        #[test]
        fn barrett_wide_input(z in any::<u128>()) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.reduce_u128(z), (z % Q60 as u128) as u64);
        }

        #[test]
        fn shoup_matches(a in any::<u64>(), w in 0u64..Q60) {
            let m = Modulus::new(Q60);
            let ws = m.shoup(w);
            prop_assert_eq!(m.mul_shoup(a, w, ws), mul_mod_u128(a, w, Q60));
        }

        #[test]
        fn inverse_roundtrip(a in 1u64..Q60) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.mul(a, m.inv(a).unwrap()), 1);
        }
    }
}
