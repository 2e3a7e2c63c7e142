//! RNS polynomials stored limb-major in one flat buffer.

use crate::arith::Modulus;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    n: usize,
    data: Vec<u64>,
}

impl RnsPoly {
    pub fn zero(n: usize, limbs: usize) -> Self {
        Self { n, data: vec![0; n * limbs] }
    }

    pub fn from_data(n: usize, data: Vec<u64>) -> Self {
        debug_assert_eq!(data.len() % n, 0);
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn limb_count(&self) -> usize {
        self.data.len() / self.n
    }

    #[inline]
    pub fn limb(&self, i: usize) -> &[u64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn limb_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn truncate(&mut self, limbs: usize) {
        self.data.truncate(limbs * self.n);
    }

    pub fn truncated(&self, limbs: usize) -> Self {
        Self { n: self.n, data: self.data[..limbs * self.n].to_vec() }
    }

    /// Keeps the listed limbs, in order.
    pub fn select(&self, limbs: &[usize]) -> Self {
        let mut data = Vec::with_capacity(limbs.len() * self.n);
        for &l in limbs {
            data.extend_from_slice(self.limb(l));
        }
        Self { n: self.n, data }
    }

    pub fn add_assign(&mut self, other: &Self, moduli: &[&Modulus]) {
        for (l, m) in moduli.iter().enumerate() {
            let q = m.value();
            let o = other.limb(l);
            for (a, &b) in self.limb_mut(l).iter_mut().zip(o) {
                let s = *a + b;
                *a = if s >= q { s - q } else { s };
            }
        }
    }

    pub fn sub_assign(&mut self, other: &Self, moduli: &[&Modulus]) {
        for (l, m) in moduli.iter().enumerate() {
            let q = m.value();
            let o = other.limb(l);
            for (a, &b) in self.limb_mut(l).iter_mut().zip(o) {
                *a = if *a >= b { *a - b } else { *a + q - b };
            }
        }
    }

    pub fn neg_assign(&mut self, moduli: &[&Modulus]) {
        for (l, m) in moduli.iter().enumerate() {
            for a in self.limb_mut(l) {
                *a = m.neg(*a);
            }
        }
    }

    /// Pointwise product (NTT domain).
    pub fn mul(&self, other: &Self, moduli: &[&Modulus]) -> Self {
        let mut out = Self::zero(self.n, moduli.len());
        for (l, m) in moduli.iter().enumerate() {
            let (a, b) = (self.limb(l), other.limb(l));
            for ((d, &x), &y) in out.limb_mut(l).iter_mut().zip(a).zip(b) {
                *d = m.mul(x, y);
            }
        }
        out
    }

    pub fn mul_assign(&mut self, other: &Self, moduli: &[&Modulus]) {
        for (l, m) in moduli.iter().enumerate() {
            let o = other.limb(l);
            for (a, &b) in self.limb_mut(l).iter_mut().zip(o) {
                *a = m.mul(*a, b);
            }
        }
    }

    /// Multiply limb `l` by `scalars[l]`.
    pub fn mul_scalar_assign(&mut self, scalars: &[u64], moduli: &[&Modulus]) {
        for (l, m) in moduli.iter().enumerate() {
            let w = scalars[l];
            let ws = m.shoup(w);
            for a in self.limb_mut(l) {
                *a = m.mul_shoup(*a, w, ws);
            }
        }
    }

    /// Add `scalars[l]` to every entry of limb `l`.
    pub fn add_scalar_assign(&mut self, scalars: &[u64], moduli: &[&Modulus]) {
        for (l, m) in moduli.iter().enumerate() {
            let w = scalars[l];
            for a in self.limb_mut(l) {
                *a = m.add(*a, w);
            }
        }
    }
}
