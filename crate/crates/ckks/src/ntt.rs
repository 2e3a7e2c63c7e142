//! Negacyclic number-theoretic transform over `Z_q[X]/(X^N + 1)`.
//!
//! Forward output index `k` holds the evaluation at `psi^(2*bitrev(k)+1)`.

use crate::arith::{bit_reverse, mul_shoup_lazy, primitive_root, Modulus};

#[derive(Clone, Debug)]
pub struct NttTable {
    n: usize,
    log_n: u32,
    modulus: Modulus,
    psi: u64,
    psi_br: Vec<u64>,
    psi_br_shoup: Vec<u64>,
    ipsi_br: Vec<u64>,
    ipsi_br_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl NttTable {
    pub fn new(n: usize, modulus: Modulus) -> Option<Self> {
        if !n.is_power_of_two() || n < 2 {
            return None;
        }
        let log_n = n.trailing_zeros();
        let q = modulus.value();
        let psi = primitive_root(q, 2 * n as u64)?;
        let ipsi = modulus.inv(psi)?;
        let mut psi_br = vec![0; n];
        let mut ipsi_br = vec![0; n];
        let (mut p, mut ip) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_br[r] = p;
            ipsi_br[r] = ip;
            p = modulus.mul(p, psi);
            ip = modulus.mul(ip, ipsi);
        }
        let psi_br_shoup = psi_br.iter().map(|&w| modulus.shoup(w)).collect();
        let ipsi_br_shoup = ipsi_br.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64)?;
        Some(Self {
            n,
            log_n,
            modulus,
            psi,
            psi_br,
            psi_br_shoup,
            ipsi_br,
            ipsi_br_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn log_degree(&self) -> u32 {
        self.log_n
    }

    /// In-place forward transform; input and output in `[0, q)`.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let w = self.psi_br[m + i];
                let ws = self.psi_br_shoup[m + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = mul_shoup_lazy(*y, w, ws, q);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// In-place inverse transform; input and output in `[0, q)`.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.ipsi_br[h + i];
                let ws = self.ipsi_br_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let mut s = u + v;
                    if s >= two_q {
                        s -= two_q;
                    }
                    *x = s;
                    *y = mul_shoup_lazy(u + two_q - v, w, ws, q);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            let v = mul_shoup_lazy(*x, self.n_inv, self.n_inv_shoup, q);
            *x = if v >= q { v - q } else { v };
        }
    }

    /// Exponent `e` such that forward output `k` is the evaluation at `psi^e`.
    pub fn eval_exponent(&self, k: usize) -> usize {
        2 * bit_reverse(k, self.log_n) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::primes_near_pow2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn table(n: usize) -> NttTable {
        let q = primes_near_pow2(40, 2 * n as u64, 1, &[])[0];
        NttTable::new(n, Modulus::new(q)).unwrap()
    }

    #[test]
    fn roundtrip() {
        let t = table(1024);
        let q = t.modulus().value();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a: Vec<u64> = (0..1024).map(|_| rng.random_range(0..q)).collect();
        let mut b = a.clone();
        t.forward(&mut b);
        t.inverse(&mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn matches_direct_evaluation() {
        let n = 16;
        let t = table(n);
        let m = *t.modulus();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..m.value())).collect();
        let mut b = a.clone();
        t.forward(&mut b);
        for (k, &bk) in b.iter().enumerate() {
            let x = m.pow(t.psi(), t.eval_exponent(k) as u64);
            let mut acc = 0;
            for &c in a.iter().rev() {
                acc = m.add(m.mul(acc, x), c);
            }
            assert_eq!(acc, bk, "index {k}");
        }
    }

    #[test]
    fn pointwise_product_is_negacyclic() {
        let n = 32;
        let t = table(n);
        let m = *t.modulus();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..m.value())).collect();
        let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..m.value())).collect();
        let mut want = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a[i], b[j]);
                if i + j < n {
                    want[i + j] = m.add(want[i + j], p);
                } else {
                    want[i + j - n] = m.sub(want[i + j - n], p);
                }
            }
        }
        let (mut fa, mut fb) = (a.clone(), b.clone());
        t.forward(&mut fa);
        t.forward(&mut fb);
        let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| m.mul(x, y)).collect();
        t.inverse(&mut prod);
        assert_eq!(prod, want);
    }
}
