//! Leveled approximate-arithmetic homomorphic encryption over packed real slots.
//!
//! RNS representation with one NTT per prime, hybrid key switching over two
//! special primes, and power-of-two scale bookkeeping. `rotate(+k)` moves slot
//! `i` to slot `i - k`.

pub mod arith;
mod context;
mod encoding;
mod eval;
mod keys;
pub mod ntt;
mod params;
mod poly;
mod sampling;
mod serialize;

pub use context::FheContext;
pub use eval::{rotation_key_steps, Evaluator};
pub use keys::{keygen, EvalKeys, KeySet, PublicKey, SecretKey, SwitchingKey};
pub use params::{FheParams, SecurityProfile, DEFAULT_DEPTH};
pub use poly::RnsPoly;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FheError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),
    #[error("scale mismatch: 2^{0} vs 2^{1}")]
    ScaleMismatch(u32, u32),
    #[error("no modulus levels left")]
    LevelExhausted,
    #[error("scale 2^{scale} does not fit the modulus at level {level}")]
    ScaleOverflow { scale: u32, level: usize },
    #[error("cannot rescale by {0} bits")]
    InvalidRescale(u32),
    #[error("no rotation key for step {0}")]
    MissingRotationKey(i64),
    #[error("no relinearization key")]
    MissingRelinKey,
    #[error("{got} values exceed the {slots} available slots")]
    TooManyValues { got: usize, slots: usize },
    #[error("value {0} overflows the encoding range")]
    ValueOverflow(f64),
    #[error("object was produced under different parameters")]
    ParamsMismatch,
    #[error("malformed encoding: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, FheError>;

/// Encoded slot vector in NTT form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plaintext {
    pub(crate) poly: RnsPoly,
    pub(crate) level: usize,
    pub(crate) scale_bits: u32,
}

impl Plaintext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }
}

/// Encryption of a slot vector: `c0 + c1*s ≈ m * 2^scale_bits` modulo `Q_level`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub(crate) level: usize,
    pub(crate) scale_bits: u32,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn slot_count(&self) -> usize {
        self.c0.n() / 2
    }

    pub fn body(&self) -> (&RnsPoly, &RnsPoly) {
        (&self.c0, &self.c1)
    }
}

impl FheContext {
    /// Encodes `values` (zero-padded to the slot count) at scale `2^scale_bits` on `level`.
    pub fn encode(&self, values: &[f64], scale_bits: u32, level: usize) -> Result<Plaintext> {
        let slots = self.slot_count();
        if values.len() > slots {
            return Err(FheError::TooManyValues { got: values.len(), slots });
        }
        if level > self.max_level() {
            return Err(FheError::InvalidParams(format!("level {level} above the chain top")));
        }
        let limit = 2f64.powi(60 - scale_bits as i32);
        if let Some(&bad) = values.iter().find(|v| !v.is_finite() || v.abs() > limit) {
            return Err(FheError::ValueOverflow(bad));
        }
        let mut v: Vec<num_complex::Complex64> =
            (0..slots).map(|i| num_complex::Complex64::new(values.get(i).copied().unwrap_or(0.0), 0.0)).collect();
        self.fft.inverse(&mut v);
        let scale = 2f64.powi(scale_bits as i32);
        let n = self.ring_degree();
        let mut coeffs = vec![0i128; n];
        for (i, z) in v.iter().enumerate() {
            coeffs[i] = (z.re * scale).round() as i128;
            coeffs[i + slots] = (z.im * scale).round() as i128;
        }
        let idx = self.level_indices(level);
        let mut poly = RnsPoly::zero(n, idx.len());
        for (limb, &i) in idx.iter().enumerate() {
            let m = &self.moduli[i];
            for (dst, &c) in poly.limb_mut(limb).iter_mut().zip(&coeffs) {
                *dst = m.from_i128(c);
            }
        }
        self.to_ntt(&mut poly, &idx);
        Ok(Plaintext { poly, level, scale_bits })
    }

    /// Slotwise sum of two plaintexts with equal scale.
    pub fn add_plaintexts(&self, a: &Plaintext, b: &Plaintext) -> Result<Plaintext> {
        if a.scale_bits != b.scale_bits {
            return Err(FheError::ScaleMismatch(a.scale_bits, b.scale_bits));
        }
        let level = a.level.min(b.level);
        let mods: Vec<_> = self.moduli[..=level].iter().collect();
        let mut poly = a.poly.truncated(level + 1);
        poly.add_assign(&b.poly.truncated(level + 1), &mods);
        Ok(Plaintext { poly, level, scale_bits: a.scale_bits })
    }

    /// Decodes every slot back to a real vector.
    pub fn decode(&self, pt: &Plaintext) -> Vec<f64> {
        let idx = self.level_indices(pt.level);
        let mut poly = pt.poly.clone();
        self.from_ntt(&mut poly, &idx);
        let n = self.ring_degree();
        let slots = self.slot_count();
        let inv_scale = 2f64.powi(-(pt.scale_bits as i32));
        let mut residues = vec![0u64; idx.len()];
        let mut coeff = |i: usize| {
            for (l, r) in residues.iter_mut().enumerate() {
                *r = poly.limb(l)[i];
            }
            self.crt_to_f64(&residues) * inv_scale
        };
        let mut v: Vec<num_complex::Complex64> = (0..slots).map(|i| num_complex::Complex64::new(coeff(i), 0.0)).collect();
        for (i, z) in v.iter_mut().enumerate() {
            z.im = coeff(i + slots);
        }
        debug_assert_eq!(n, 2 * slots);
        self.fft.forward(&mut v);
        v.into_iter().map(|z| z.re).collect()
    }
}
