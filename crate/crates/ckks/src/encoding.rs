//! Canonical-embedding FFT between slot vectors and ring coefficients.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::arith::bit_reverse;

/// Slot `j` is the evaluation at `zeta^(5^j mod 2N)`, `zeta = exp(i*pi/N)`.
#[derive(Clone, Debug)]
pub struct SlotFft {
    slots: usize,
    m: usize,
    rot_group: Vec<usize>,
    ksi: Vec<Complex64>,
}

impl SlotFft {
    pub fn new(ring_degree: usize) -> Self {
        let slots = ring_degree / 2;
        let m = 2 * ring_degree;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % m;
        }
        let ksi = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect();
        Self { slots, m, rot_group, ksi }
    }

    fn bit_reverse_in_place(v: &mut [Complex64]) {
        let bits = v.len().trailing_zeros();
        for i in 0..v.len() {
            let j = bit_reverse(i, bits);
            if i < j {
                v.swap(i, j);
            }
        }
    }

    /// Coefficient-side values to slot values.
    pub fn forward(&self, v: &mut [Complex64]) {
        let n = v.len();
        debug_assert_eq!(n, self.slots);
        Self::bit_reverse_in_place(v);
        let mut len = 2;
        while len <= n {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = self.m / lenq;
            for i in (0..n).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = v[i + j];
                    let t = v[i + j + lenh] * self.ksi[idx];
                    v[i + j] = u + t;
                    v[i + j + lenh] = u - t;
                }
            }
            len <<= 1;
        }
    }

    /// Slot values to coefficient-side values.
    pub fn inverse(&self, v: &mut [Complex64]) {
        let n = v.len();
        debug_assert_eq!(n, self.slots);
        let mut len = n;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = self.m / lenq;
            for i in (0..n).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - self.rot_group[j] % lenq) * gap;
                    let u = v[i + j] + v[i + j + lenh];
                    let t = (v[i + j] - v[i + j + lenh]) * self.ksi[idx];
                    v[i + j] = u;
                    v[i + j + lenh] = t;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse_in_place(v);
        let inv = 1.0 / n as f64;
        for x in v.iter_mut() {
            *x *= inv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the real polynomial at the slot roots.
    fn direct_slots(coeffs: &[f64], ring_degree: usize) -> Vec<Complex64> {
        let m = 2 * ring_degree;
        let mut g = 1usize;
        (0..ring_degree / 2)
            .map(|_| {
                let root = Complex64::from_polar(1.0, PI * g as f64 / ring_degree as f64);
                g = g * 5 % m;
                coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * root + c)
            })
            .collect()
    }

    #[test]
    fn forward_is_canonical_embedding() {
        let n = 32;
        let fft = SlotFft::new(n);
        let coeffs: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let mut v: Vec<Complex64> =
            (0..n / 2).map(|i| Complex64::new(coeffs[i], coeffs[i + n / 2])).collect();
        fft.forward(&mut v);
        let want = direct_slots(&coeffs, n);
        for (a, b) in v.iter().zip(&want) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let fft = SlotFft::new(64);
        let orig: Vec<Complex64> =
            (0..32).map(|i| Complex64::new(i as f64 * 0.25 - 3.0, (i % 5) as f64)).collect();
        let mut v = orig.clone();
        fft.inverse(&mut v);
        fft.forward(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
