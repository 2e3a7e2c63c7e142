use std::sync::Arc;

use crate::arith::Modulus;
use crate::encoding::SlotFft;
use crate::ntt::NttTable;
use crate::params::FheParams;
use crate::poly::RnsPoly;
use crate::FheError;

/// Precomputed tables shared by every key, plaintext and ciphertext of one parameter set.
///
/// Modulus index `i <= L` is `modulus_chain[i]`; index `L + 1 + k` is special prime `k`.
#[derive(Debug)]
pub struct FheContext {
    pub(crate) params: FheParams,
    pub(crate) moduli: Vec<Modulus>,
    pub(crate) ntt: Vec<NttTable>,
    pub(crate) fft: SlotFft,
    pub(crate) digest: [u8; 32],
    /// `q_l^{-1} mod q_j` for `j < l`, indexed `[l][j]`.
    pub(crate) rescale_inv: Vec<Vec<u64>>,
    /// `(P mod q_j)` for every chain prime.
    pub(crate) p_mod_q: Vec<u64>,
    /// `P^{-1} mod q_j`.
    pub(crate) p_inv_mod_q: Vec<u64>,
    /// `(P / p_k)^{-1} mod p_k`.
    pub(crate) phat_inv_mod_p: Vec<u64>,
    /// `q_j^{-1} mod q_i` for `j < i`, indexed `[i][j]`.
    pub(crate) garner_inv: Vec<Vec<u64>>,
    /// Mixed-radix digits of `(Q_l - 1) / 2`, indexed `[l]`.
    pub(crate) half_digits: Vec<Vec<u64>>,
    /// Product `P` of the special primes.
    pub(crate) special_product: u128,
    /// `P / p_k` as integers.
    pub(crate) phat: Vec<u128>,
}

impl FheContext {
    pub fn new(params: &FheParams) -> Result<Arc<Self>, FheError> {
        params.validate()?;
        let n = params.ring_degree;
        let primes: Vec<u64> =
            params.modulus_chain.iter().chain(&params.special_primes).copied().collect();
        let moduli: Vec<Modulus> = primes.iter().map(|&q| Modulus::new(q)).collect();
        let ntt = moduli
            .iter()
            .map(|m| {
                NttTable::new(n, *m)
                    .ok_or_else(|| FheError::InvalidParams(format!("no 2N-th root modulo {}", m.value())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let chain = params.modulus_chain.len();
        let specials = params.special_primes.len();

        let rescale_inv = (0..chain)
            .map(|l| (0..l).map(|j| moduli[j].inv(primes[l]).expect("distinct primes")).collect())
            .collect();

        let p_mod_q: Vec<u64> = (0..chain)
            .map(|j| params.special_primes.iter().fold(1, |acc, &p| moduli[j].mul(acc, p % primes[j])))
            .collect();
        let p_inv_mod_q = (0..chain).map(|j| moduli[j].inv(p_mod_q[j]).expect("coprime")).collect();
        let phat_inv_mod_p = (0..specials)
            .map(|k| {
                let mk = moduli[chain + k];
                let phat = (0..specials)
                    .filter(|&o| o != k)
                    .fold(1, |acc, o| mk.mul(acc, params.special_primes[o] % mk.value()));
                mk.inv(phat).expect("coprime")
            })
            .collect();
        let garner_inv: Vec<Vec<u64>> = (0..chain)
            .map(|i| (0..i).map(|j| moduli[i].inv(primes[j] % primes[i]).expect("coprime")).collect())
            .collect();
        let half_digits = (0..chain)
            .map(|l| {
                // (Q_l - 1)/2 ≡ -1/2 modulo every q_i of the level.
                let residues: Vec<u64> = (0..=l)
                    .map(|i| moduli[i].mul(primes[i] - 1, moduli[i].inv(2).expect("odd prime")))
                    .collect();
                mixed_radix(&residues, &moduli, &garner_inv)
            })
            .collect();

        let special_product = params.special_primes.iter().map(|&p| p as u128).product::<u128>();
        let phat = params.special_primes.iter().map(|&p| special_product / p as u128).collect();

        Ok(Arc::new(Self {
            params: params.clone(),
            moduli,
            ntt,
            fft: SlotFft::new(n),
            digest: params.digest(),
            rescale_inv,
            p_mod_q,
            p_inv_mod_q,
            phat_inv_mod_p,
            garner_inv,
            half_digits,
            special_product,
            phat,
        }))
    }

    pub fn params(&self) -> &FheParams {
        &self.params
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn ring_degree(&self) -> usize {
        self.params.ring_degree
    }

    pub fn slot_count(&self) -> usize {
        self.params.ring_degree / 2
    }

    pub fn max_level(&self) -> usize {
        self.params.modulus_chain.len() - 1
    }

    pub(crate) fn special_count(&self) -> usize {
        self.params.special_primes.len()
    }

    /// Modulus indices of a chain polynomial at `level`.
    pub(crate) fn level_indices(&self, level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    /// Chain indices up to `level` followed by every special prime.
    pub(crate) fn extended_indices(&self, level: usize) -> Vec<usize> {
        let top = self.max_level();
        (0..=level).chain(top + 1..top + 1 + self.special_count()).collect()
    }

    /// Every modulus index (full key basis).
    pub(crate) fn key_indices(&self) -> Vec<usize> {
        (0..self.moduli.len()).collect()
    }

    /// Sum of prime bit lengths up to `level`.
    pub fn log_q(&self, level: usize) -> u32 {
        self.moduli[..=level].iter().map(Modulus::bits).sum()
    }

    pub(crate) fn to_ntt(&self, p: &mut RnsPoly, idx: &[usize]) {
        for (limb, &i) in idx.iter().enumerate() {
            self.ntt[i].forward(p.limb_mut(limb));
        }
    }

    pub(crate) fn from_ntt(&self, p: &mut RnsPoly, idx: &[usize]) {
        for (limb, &i) in idx.iter().enumerate() {
            self.ntt[i].inverse(p.limb_mut(limb));
        }
    }

    /// Small signed coefficients reduced into every listed modulus, in NTT form.
    pub(crate) fn small_to_ntt(&self, coeffs: &[i64], idx: &[usize]) -> RnsPoly {
        let n = self.ring_degree();
        let mut p = RnsPoly::zero(n, idx.len());
        for (limb, &i) in idx.iter().enumerate() {
            let m = &self.moduli[i];
            for (dst, &c) in p.limb_mut(limb).iter_mut().zip(coeffs) {
                *dst = m.from_i64(c);
            }
            self.ntt[i].forward(p.limb_mut(limb));
        }
        p
    }

    /// Permutation of NTT slots realising `X -> X^galois`.
    pub(crate) fn automorphism_perm(&self, galois: usize) -> Vec<usize> {
        let n = self.ring_degree();
        let two_n = 2 * n;
        let t = &self.ntt[0];
        let mut index_of_exp = vec![usize::MAX; two_n];
        for k in 0..n {
            index_of_exp[t.eval_exponent(k)] = k;
        }
        (0..n).map(|k| index_of_exp[t.eval_exponent(k) * galois % two_n]).collect()
    }

    pub(crate) fn apply_automorphism(&self, p: &RnsPoly, perm: &[usize]) -> RnsPoly {
        let mut out = RnsPoly::zero(p.n(), p.limb_count());
        for limb in 0..p.limb_count() {
            let src = p.limb(limb);
            for (dst, &k) in out.limb_mut(limb).iter_mut().zip(perm) {
                *dst = src[k];
            }
        }
        out
    }

    /// `round(x / P)` from the extended basis at `level` back to the chain basis.
    ///
    /// `x mod P` is lifted exactly to its centered representative, so the
    /// rounding error is at most one half per coefficient.
    pub(crate) fn mod_down(&self, mut p: RnsPoly, level: usize) -> RnsPoly {
        let n = self.ring_degree();
        let top = self.max_level();
        let big_p = self.special_product;
        let mut lifted = vec![0u128; n];
        for k in 0..self.special_count() {
            let mi = top + 1 + k;
            let m = &self.moduli[mi];
            let mut v = p.limb(level + 1 + k).to_vec();
            self.ntt[mi].inverse(&mut v);
            let w = self.phat_inv_mod_p[k];
            for (acc, &x) in lifted.iter_mut().zip(&v) {
                *acc += m.mul(x, w) as u128 * self.phat[k];
            }
        }
        for x in lifted.iter_mut() {
            while *x >= big_p {
                *x -= big_p;
            }
        }
        let half = big_p / 2;
        let mut conv = vec![0u64; n];
        for j in 0..=level {
            let m = &self.moduli[j];
            let p_mod = self.p_mod_q[j];
            for (dst, &x) in conv.iter_mut().zip(&lifted) {
                let r = m.reduce_u128(x);
                *dst = if x > half { m.sub(r, p_mod) } else { r };
            }
            self.ntt[j].forward(&mut conv);
            let inv = self.p_inv_mod_q[j];
            let inv_s = m.shoup(inv);
            for (dst, &c) in p.limb_mut(j).iter_mut().zip(&conv) {
                *dst = m.mul_shoup(m.sub(*dst, c), inv, inv_s);
            }
        }
        p.truncate(level + 1);
        p
    }

    /// Centered CRT lift of one coefficient, as a float.
    pub(crate) fn crt_to_f64(&self, residues: &[u64]) -> f64 {
        let level = residues.len() - 1;
        let digits = mixed_radix(residues, &self.moduli, &self.garner_inv);
        let negative = {
            let half = &self.half_digits[level];
            let mut gt = false;
            for i in (0..=level).rev() {
                if digits[i] != half[i] {
                    gt = digits[i] > half[i];
                    break;
                }
            }
            gt
        };
        if negative {
            let neg: Vec<u64> =
                residues.iter().enumerate().map(|(i, &r)| self.moduli[i].neg(r)).collect();
            -radix_to_f64(&mixed_radix(&neg, &self.moduli, &self.garner_inv), &self.moduli)
        } else {
            radix_to_f64(&digits, &self.moduli)
        }
    }
}

/// Garner mixed-radix digits of the value with the given residues.
fn mixed_radix(residues: &[u64], moduli: &[Modulus], garner_inv: &[Vec<u64>]) -> Vec<u64> {
    let mut digits = Vec::with_capacity(residues.len());
    for (i, &r) in residues.iter().enumerate() {
        let m = &moduli[i];
        let mut t = r;
        for (j, &d) in digits.iter().enumerate() {
            t = m.mul(m.sub(t, m.reduce(d)), garner_inv[i][j]);
        }
        digits.push(t);
    }
    digits
}

fn radix_to_f64(digits: &[u64], moduli: &[Modulus]) -> f64 {
    let mut acc = 0.0;
    for i in (0..digits.len()).rev() {
        acc = acc * moduli[i].value() as f64 + digits[i] as f64;
    }
    acc
}
