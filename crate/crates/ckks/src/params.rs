use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{is_prime, primes_below_pow2, primes_near_pow2};
use crate::FheError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecurityProfile {
    /// Fast parameters for experiments; not sized for a security level.
    Desk,
    /// Ring degree 2^14 with a modulus budget inside the 128-bit bound.
    Std128,
}

impl std::str::FromStr for SecurityProfile {
    type Err = FheError;
    fn from_str(s: &str) -> Result<Self, FheError> {
        match s {
            "desk" => Ok(Self::Desk),
            "std128" => Ok(Self::Std128),
            other => Err(FheError::InvalidParams(format!("unknown profile {other:?}"))),
        }
    }
}

/// Ring dimension, RNS modulus chain and scaling configuration.
///
/// `modulus_chain[0]` is the base prime kept at level 0; level `l` uses
/// `modulus_chain[..=l]`. `special_primes` only appear inside key-switching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FheParams {
    pub ring_degree: usize,
    pub modulus_chain: Vec<u64>,
    pub special_primes: Vec<u64>,
    pub scale_bits: u32,
    pub aux_scale_bits: u32,
    pub error_stddev: f64,
    pub security_profile: SecurityProfile,
}

/// Multiplicative depth provided by both built-in profiles.
pub const DEFAULT_DEPTH: usize = 5;

impl FheParams {
    pub fn desk() -> Self {
        Self::build(1 << 13, DEFAULT_DEPTH, SecurityProfile::Desk)
    }

    pub fn std128() -> Self {
        Self::build(1 << 14, DEFAULT_DEPTH, SecurityProfile::Std128)
    }

    pub fn for_profile(profile: SecurityProfile) -> Self {
        match profile {
            SecurityProfile::Desk => Self::desk(),
            SecurityProfile::Std128 => Self::std128(),
        }
    }

    /// A 60-bit base prime, `depth` primes next to `2^40`, and two 60-bit special primes.
    pub fn build(ring_degree: usize, depth: usize, profile: SecurityProfile) -> Self {
        let step = 2 * ring_degree as u64;
        let base = primes_below_pow2(60, step, 3, &[]);
        let mut chain = vec![base[0]];
        chain.extend(primes_near_pow2(40, step, depth, &[]));
        Self {
            ring_degree,
            modulus_chain: chain,
            special_primes: vec![base[1], base[2]],
            scale_bits: 40,
            aux_scale_bits: 20,
            error_stddev: 3.2,
            security_profile: profile,
        }
    }

    pub fn max_level(&self) -> usize {
        self.modulus_chain.len() - 1
    }

    pub fn slot_count(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn validate(&self) -> Result<(), FheError> {
        let n = self.ring_degree;
        if !n.is_power_of_two() || n < 8 {
            return Err(FheError::InvalidParams(format!("ring degree {n} is not a power of two ≥ 8")));
        }
        if self.security_profile == SecurityProfile::Std128 && n < (1 << 12) {
            return Err(FheError::InvalidParams("std128 requires ring degree ≥ 2^12".into()));
        }
        if self.modulus_chain.len() < 6 {
            return Err(FheError::InvalidParams(format!(
                "modulus chain has {} primes; at least 6 are required",
                self.modulus_chain.len()
            )));
        }
        if self.special_primes.is_empty() {
            return Err(FheError::InvalidParams("no special primes".into()));
        }
        let all: Vec<u64> = self.modulus_chain.iter().chain(&self.special_primes).copied().collect();
        for (i, &q) in all.iter().enumerate() {
            if q >= 1 << 61 || !is_prime(q) || q % (2 * n as u64) != 1 {
                return Err(FheError::InvalidParams(format!("{q} is not an NTT-friendly prime below 2^61")));
            }
            if all[..i].contains(&q) {
                return Err(FheError::InvalidParams(format!("duplicate prime {q}")));
            }
        }
        let special_bits: u32 = self.special_primes.iter().map(|q| 64 - q.leading_zeros()).sum();
        if special_bits > 124 {
            return Err(FheError::InvalidParams("special primes exceed 124 bits in total".into()));
        }
        let base_bits = 64 - self.modulus_chain[0].leading_zeros();
        if self.scale_bits == 0 || self.scale_bits + 2 >= base_bits {
            return Err(FheError::InvalidParams("scale must leave headroom in the base prime".into()));
        }
        if self.aux_scale_bits == 0 || self.aux_scale_bits > self.scale_bits {
            return Err(FheError::InvalidParams("aux scale must be in 1..=scale_bits".into()));
        }
        if !(self.error_stddev > 0.0) {
            return Err(FheError::InvalidParams("error stddev must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over a canonical little-endian encoding.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"fedfhe-params-v1");
        h.update((self.ring_degree as u64).to_le_bytes());
        h.update((self.modulus_chain.len() as u32).to_le_bytes());
        for q in &self.modulus_chain {
            h.update(q.to_le_bytes());
        }
        h.update((self.special_primes.len() as u32).to_le_bytes());
        for q in &self.special_primes {
            h.update(q.to_le_bytes());
        }
        h.update(self.scale_bits.to_le_bytes());
        h.update(self.aux_scale_bits.to_le_bytes());
        h.update(self.error_stddev.to_le_bytes());
        h.update([self.security_profile as u8]);
        h.finalize().into()
    }

    /// Total bit length of the ciphertext modulus at the top level plus special primes.
    pub fn log_qp(&self) -> u32 {
        self.modulus_chain
            .iter()
            .chain(&self.special_primes)
            .map(|q| 64 - q.leading_zeros())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        let d = FheParams::desk();
        d.validate().unwrap();
        assert_eq!(d.max_level(), 5);
        assert_eq!(d.slot_count(), 4096);
        let s = FheParams::std128();
        s.validate().unwrap();
        // Homomorphic-encryption standard bound for N = 2^14, ternary secret.
        assert!(s.log_qp() <= 438);
    }

    #[test]
    fn rejects_bad_chains() {
        let mut p = FheParams::desk();
        p.modulus_chain.truncate(5);
        assert!(matches!(p.validate(), Err(FheError::InvalidParams(_))));
        let mut p = FheParams::desk();
        p.modulus_chain[2] += 2;
        assert!(p.validate().is_err());
        let mut p = FheParams::std128();
        p.ring_degree = 1 << 11;
        assert!(p.validate().is_err());
    }

    #[test]
    fn digest_tracks_fields() {
        let a = FheParams::desk();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.aux_scale_bits = 21;
        assert_ne!(a.digest(), b.digest());
    }
}
