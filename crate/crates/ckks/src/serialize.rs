//! Byte formats for ciphertexts, public keys and evaluation keys.
//!
//! Ciphertext: `"FHE1"`, 32-byte parameter digest, level `u8`, scale exponent
//! `u16` LE, limb count `u32` LE, then every limb as LE `u64` words, `c0` first.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::context::FheContext;
use crate::keys::{EvalKeys, PublicKey, SwitchingKey};
use crate::poly::RnsPoly;
use crate::{Ciphertext, FheError, Result};

const CT_MAGIC: &[u8; 4] = b"FHE1";
const PK_MAGIC: &[u8; 4] = b"FHP1";
const EK_MAGIC: &[u8; 4] = b"FHK1";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.buf.len() {
            return Err(FheError::Malformed("truncated input".into()));
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn header(&mut self, magic: &[u8; 4], ctx: &FheContext) -> Result<()> {
        if self.take(4)? != magic {
            return Err(FheError::Malformed("bad magic".into()));
        }
        if self.take(32)? != ctx.digest() {
            return Err(FheError::ParamsMismatch);
        }
        Ok(())
    }
    fn words(&mut self, count: usize, n: usize, moduli: &[u64]) -> Result<RnsPoly> {
        let bytes = self.take(count * n * 8)?;
        let data: Vec<u64> = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        for (l, q) in moduli.iter().enumerate() {
            if data[l * n..(l + 1) * n].iter().any(|&x| x >= *q) {
                return Err(FheError::Malformed("limb word out of range".into()));
            }
        }
        Ok(RnsPoly::from_data(n, data))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(FheError::Malformed("trailing bytes".into()));
        }
        Ok(())
    }
}

fn put_poly(out: &mut Vec<u8>, p: &RnsPoly) {
    out.reserve(p.data().len() * 8);
    for w in p.data() {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

impl Ciphertext {
    pub fn to_bytes(&self, ctx: &FheContext) -> Vec<u8> {
        let limbs = 2 * (self.level + 1);
        let mut out = Vec::with_capacity(43 + limbs * ctx.ring_degree() * 8);
        out.extend_from_slice(CT_MAGIC);
        out.extend_from_slice(ctx.digest());
        out.push(self.level as u8);
        out.extend_from_slice(&(self.scale_bits as u16).to_le_bytes());
        out.extend_from_slice(&(limbs as u32).to_le_bytes());
        put_poly(&mut out, &self.c0);
        put_poly(&mut out, &self.c1);
        out
    }

    pub fn from_bytes(ctx: &FheContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        r.header(CT_MAGIC, ctx)?;
        let level = r.u8()? as usize;
        let scale_bits = r.u16()? as u32;
        let limbs = r.u32()? as usize;
        if level > ctx.max_level() || limbs != 2 * (level + 1) {
            return Err(FheError::Malformed(format!("level {level} with {limbs} limbs")));
        }
        let n = ctx.ring_degree();
        let qs: Vec<u64> = ctx.moduli[..=level].iter().map(|m| m.value()).collect();
        let c0 = r.words(level + 1, n, &qs)?;
        let c1 = r.words(level + 1, n, &qs)?;
        r.finish()?;
        Ok(Self { c0, c1, level, scale_bits })
    }
}

impl PublicKey {
    pub fn to_bytes(&self, ctx: &FheContext) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PK_MAGIC);
        out.extend_from_slice(ctx.digest());
        put_poly(&mut out, &self.b);
        put_poly(&mut out, &self.a);
        out
    }

    pub fn from_bytes(ctx: &FheContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        r.header(PK_MAGIC, ctx)?;
        let qs: Vec<u64> = ctx.moduli.iter().map(|m| m.value()).collect();
        let limbs = qs.len();
        let b = r.words(limbs, ctx.ring_degree(), &qs)?;
        let a = r.words(limbs, ctx.ring_degree(), &qs)?;
        r.finish()?;
        Ok(Self { b, a, digest: *ctx.digest() })
    }
}

fn put_switching_key(out: &mut Vec<u8>, k: &SwitchingKey) {
    for (b, a) in &k.digits {
        put_poly(out, b);
        put_poly(out, a);
    }
}

fn read_switching_key(r: &mut Reader, ctx: &FheContext) -> Result<SwitchingKey> {
    let qs: Vec<u64> = ctx.moduli.iter().map(|m| m.value()).collect();
    let digits = (0..=ctx.max_level())
        .map(|_| Ok((r.words(qs.len(), ctx.ring_degree(), &qs)?, r.words(qs.len(), ctx.ring_degree(), &qs)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SwitchingKey { digits })
}

impl EvalKeys {
    pub fn to_bytes(&self, ctx: &FheContext) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(EK_MAGIC);
        out.extend_from_slice(ctx.digest());
        out.push(self.relin.is_some() as u8);
        if let Some(k) = &self.relin {
            put_switching_key(&mut out, k);
        }
        out.extend_from_slice(&(self.rotations.len() as u32).to_le_bytes());
        for (step, k) in &self.rotations {
            out.extend_from_slice(&step.to_le_bytes());
            put_switching_key(&mut out, k);
        }
        out
    }

    pub fn from_bytes(ctx: &FheContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        r.header(EK_MAGIC, ctx)?;
        let relin = match r.u8()? {
            0 => None,
            1 => Some(Arc::new(read_switching_key(&mut r, ctx)?)),
            _ => return Err(FheError::Malformed("bad relin flag".into())),
        };
        let count = r.u32()?;
        let mut rotations = BTreeMap::new();
        for _ in 0..count {
            let step = r.i64()?;
            rotations.insert(step, Arc::new(read_switching_key(&mut r, ctx)?));
        }
        r.finish()?;
        Ok(Self { relin, rotations })
    }
}

#[cfg(test)]
mod tests {
    use crate::{keygen, Ciphertext, EvalKeys, FheParams, PublicKey, SecurityProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn ciphertext_roundtrip_and_layout() {
        let keys = keygen(&FheParams::build(64, 5, SecurityProfile::Desk), 1).unwrap();
        let ctx = keys.context();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let ct = keys.encrypt_values(&[1.0, 2.0], &mut rng).unwrap();
        let bytes = ct.to_bytes(ctx);
        assert_eq!(&bytes[..4], b"FHE1");
        assert_eq!(&bytes[4..36], ctx.digest());
        assert_eq!(bytes[36], 5);
        assert_eq!(u16::from_le_bytes([bytes[37], bytes[38]]), 40);
        assert_eq!(u32::from_le_bytes(bytes[39..43].try_into().unwrap()), 12);
        assert_eq!(bytes.len(), 43 + 12 * 64 * 8);
        assert_eq!(Ciphertext::from_bytes(ctx, &bytes).unwrap(), ct);
        assert!(Ciphertext::from_bytes(ctx, &bytes[..bytes.len() - 1]).is_err());

        let pk = PublicKey::from_bytes(ctx, &keys.public_key.to_bytes(ctx)).unwrap();
        assert_eq!(pk, keys.public_key);
        let ek = keys.eval_keys_for(&[1, -2], true).unwrap();
        assert_eq!(EvalKeys::from_bytes(ctx, &ek.to_bytes(ctx)).unwrap(), ek);
    }

    #[test]
    fn foreign_params_rejected() {
        let a = keygen(&FheParams::build(64, 5, SecurityProfile::Desk), 1).unwrap();
        let b = keygen(&FheParams::build(128, 5, SecurityProfile::Desk), 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let ct = a.encrypt_values(&[1.0], &mut rng).unwrap();
        assert_eq!(Ciphertext::from_bytes(b.context(), &ct.to_bytes(a.context())), Err(crate::FheError::ParamsMismatch));
    }
}
