use std::cell::Cell;
use std::ops::Sub;

use ckks::{Ciphertext, Evaluator, FheError, FheParams};

type FheResult<T> = ckks::Result<T>;

/// Which counters products and additions go to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Section {
    /// Operations that are steps of the protocol.
    #[default]
    Step,
    /// Operations inside a polynomial evaluation.
    Poly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Ciphertext and plaintext products outside polynomial evaluation.
    pub mul: usize,
    /// Products inside polynomial evaluation.
    pub poly_mul: usize,
    /// Additions, subtractions and constant/plaintext additions.
    pub add: usize,
    /// Additions inside polynomial evaluation.
    pub poly_add: usize,
    /// Rotation calls (one per requested step, however it is composed).
    pub rot: usize,
    pub rescale: usize,
}

impl Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            mul: self.mul - o.mul,
            poly_mul: self.poly_mul - o.poly_mul,
            add: self.add - o.add,
            poly_add: self.poly_add - o.poly_add,
            rot: self.rot - o.rot,
            rescale: self.rescale - o.rescale,
        }
    }
}

/// Interior-mutable operation counters shared by every backend.
#[derive(Debug, Default)]
pub struct OpTally {
    counts: Cell<OpCounts>,
    section: Cell<Section>,
}

impl OpTally {
    pub fn snapshot(&self) -> OpCounts {
        self.counts.get()
    }

    pub fn reset(&self) {
        self.counts.set(OpCounts::default());
    }

    /// Runs `f` with products and additions counted under `section`.
    pub fn with_section<T>(&self, section: Section, f: impl FnOnce() -> T) -> T {
        let prev = self.section.replace(section);
        let out = f();
        self.section.set(prev);
        out
    }

    fn bump(&self, f: impl FnOnce(&mut OpCounts)) {
        let mut c = self.counts.get();
        f(&mut c);
        self.counts.set(c);
    }

    fn mul(&self) {
        let poly = self.section.get() == Section::Poly;
        self.bump(|c| if poly { c.poly_mul += 1 } else { c.mul += 1 });
    }

    fn add(&self) {
        let poly = self.section.get() == Section::Poly;
        self.bump(|c| if poly { c.poly_add += 1 } else { c.add += 1 });
    }

    fn rot(&self) {
        self.bump(|c| c.rot += 1);
    }

    fn rescale(&self) {
        self.bump(|c| c.rescale += 1);
    }
}

/// Leveled slot arithmetic. Plaintext operands are given as slot values and
/// encoded on the fly at the operand's level.
pub trait Backend {
    type Ct: Clone;

    fn tally(&self) -> &OpTally;
    fn slot_count(&self) -> usize;
    fn level(&self, a: &Self::Ct) -> usize;
    fn scale_bits(&self, a: &Self::Ct) -> u32;

    fn add(&self, a: &Self::Ct, b: &Self::Ct) -> FheResult<Self::Ct>;
    fn sub(&self, a: &Self::Ct, b: &Self::Ct) -> FheResult<Self::Ct>;
    /// Adds slot values encoded at `a`'s scale.
    fn add_plain(&self, a: &Self::Ct, values: &[f64]) -> FheResult<Self::Ct>;
    fn add_const(&self, a: &Self::Ct, c: f64) -> FheResult<Self::Ct>;
    fn mult(&self, a: &Self::Ct, b: &Self::Ct) -> FheResult<Self::Ct>;
    /// Product with slot values encoded at scale `2^bits`.
    fn cmult(&self, a: &Self::Ct, values: &[f64], bits: u32) -> FheResult<Self::Ct>;
    fn mul_const(&self, a: &Self::Ct, c: f64, bits: u32) -> FheResult<Self::Ct>;
    fn rescale(&self, a: &Self::Ct, bits: u32) -> FheResult<Self::Ct>;
    fn mod_drop(&self, a: &Self::Ct, level: usize) -> FheResult<Self::Ct>;
    fn rotate(&self, a: &Self::Ct, k: i64) -> FheResult<Self::Ct>;

    /// Sum of a non-empty list.
    fn add_many(&self, items: &[Self::Ct]) -> FheResult<Self::Ct> {
        let (first, rest) = items.split_first().ok_or_else(|| FheError::Malformed("empty sum".into()))?;
        rest.iter().try_fold(first.clone(), |acc, x| self.add(&acc, x))
    }
}

/// Runs kernels on real ciphertexts.
#[derive(Debug)]
pub struct FheBackend {
    eval: Evaluator,
    tally: OpTally,
}

impl FheBackend {
    pub fn new(eval: Evaluator) -> Self {
        Self { eval, tally: OpTally::default() }
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.eval
    }
}

impl Backend for FheBackend {
    type Ct = Ciphertext;

    fn tally(&self) -> &OpTally {
        &self.tally
    }

    fn slot_count(&self) -> usize {
        self.eval.context().slot_count()
    }

    fn level(&self, a: &Ciphertext) -> usize {
        a.level()
    }

    fn scale_bits(&self, a: &Ciphertext) -> u32 {
        a.scale_bits()
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> FheResult<Ciphertext> {
        self.tally.add();
        self.eval.add(a, b)
    }

    fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> FheResult<Ciphertext> {
        self.tally.add();
        self.eval.sub(a, b)
    }

    fn add_plain(&self, a: &Ciphertext, values: &[f64]) -> FheResult<Ciphertext> {
        self.tally.add();
        let pt = self.eval.context().encode(values, a.scale_bits(), a.level())?;
        self.eval.add_plain(a, &pt)
    }

    fn add_const(&self, a: &Ciphertext, c: f64) -> FheResult<Ciphertext> {
        self.tally.add();
        self.eval.add_const(a, c)
    }

    fn mult(&self, a: &Ciphertext, b: &Ciphertext) -> FheResult<Ciphertext> {
        self.tally.mul();
        self.eval.mult(a, b)
    }

    fn cmult(&self, a: &Ciphertext, values: &[f64], bits: u32) -> FheResult<Ciphertext> {
        self.tally.mul();
        let pt = self.eval.context().encode(values, bits, a.level())?;
        self.eval.cmult(a, &pt)
    }

    fn mul_const(&self, a: &Ciphertext, c: f64, bits: u32) -> FheResult<Ciphertext> {
        self.tally.mul();
        self.eval.mul_const(a, c, bits)
    }

    fn rescale(&self, a: &Ciphertext, bits: u32) -> FheResult<Ciphertext> {
        self.tally.rescale();
        self.eval.rescale(a, bits)
    }

    fn mod_drop(&self, a: &Ciphertext, level: usize) -> FheResult<Ciphertext> {
        self.eval.mod_drop(a, level)
    }

    fn rotate(&self, a: &Ciphertext, k: i64) -> FheResult<Ciphertext> {
        self.tally.rot();
        self.eval.rotate(a, k)
    }
}

/// Plain slot vector carrying the level and scale a ciphertext would have.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainCt {
    pub values: Vec<f64>,
    pub level: usize,
    pub scale_bits: u32,
}

/// Exact slot arithmetic with the same level, scale and error rules as
/// [`FheBackend`]; plaintext operands are quantized at their encoding scale.
#[derive(Debug)]
pub struct PlainBackend {
    slots: usize,
    chain: Vec<u64>,
    default_scale: u32,
    tally: OpTally,
}

impl PlainBackend {
    pub fn new(params: &FheParams) -> Self {
        Self::with_slots(params, params.slot_count())
    }

    /// Same modulus chain with an arbitrary power-of-two slot count, for
    /// counting operations on layouts larger than one ciphertext.
    pub fn with_slots(params: &FheParams, slots: usize) -> Self {
        assert!(slots.is_power_of_two(), "slot count must be a power of two");
        Self { slots, chain: params.modulus_chain.clone(), default_scale: params.scale_bits, tally: OpTally::default() }
    }

    pub fn max_level(&self) -> usize {
        self.chain.len() - 1
    }

    /// A fresh top-level "ciphertext" at the default scale.
    pub fn fresh(&self, values: &[f64]) -> FheResult<PlainCt> {
        self.fresh_at(values, self.max_level(), self.default_scale)
    }

    pub fn fresh_at(&self, values: &[f64], level: usize, scale_bits: u32) -> FheResult<PlainCt> {
        if values.len() > self.slots {
            return Err(FheError::TooManyValues { got: values.len(), slots: self.slots });
        }
        if level > self.max_level() {
            return Err(FheError::InvalidParams(format!("level {level} above the chain top")));
        }
        let mut v = values.to_vec();
        v.resize(self.slots, 0.0);
        Ok(PlainCt { values: v, level, scale_bits })
    }

    fn log_q(&self, level: usize) -> u32 {
        self.chain[..=level].iter().map(|q| 64 - q.leading_zeros()).sum()
    }

    fn product_scale(&self, sa: u32, sb: u32, level: usize) -> FheResult<u32> {
        let scale = sa + sb;
        if scale + 1 >= self.log_q(level) {
            return Err(if level == 0 { FheError::LevelExhausted } else { FheError::ScaleOverflow { scale, level } });
        }
        Ok(scale)
    }

    fn same_shape(a: &PlainCt, b: &PlainCt) -> FheResult<()> {
        if a.level != b.level {
            return Err(FheError::LevelMismatch(a.level, b.level));
        }
        if a.scale_bits != b.scale_bits {
            return Err(FheError::ScaleMismatch(a.scale_bits, b.scale_bits));
        }
        Ok(())
    }

    fn operand(&self, values: &[f64], bits: u32) -> FheResult<Vec<f64>> {
        if values.len() > self.slots {
            return Err(FheError::TooManyValues { got: values.len(), slots: self.slots });
        }
        let limit = 2f64.powi(60 - bits as i32);
        if let Some(&bad) = values.iter().find(|v| !v.is_finite() || v.abs() > limit) {
            return Err(FheError::ValueOverflow(bad));
        }
        let s = 2f64.powi(bits as i32);
        let mut v: Vec<f64> = values.iter().map(|x| (x * s).round() / s).collect();
        v.resize(self.slots, 0.0);
        Ok(v)
    }

    fn zip(a: &PlainCt, b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        a.values.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }
}

impl Backend for PlainBackend {
    type Ct = PlainCt;

    fn tally(&self) -> &OpTally {
        &self.tally
    }

    fn slot_count(&self) -> usize {
        self.slots
    }

    fn level(&self, a: &PlainCt) -> usize {
        a.level
    }

    fn scale_bits(&self, a: &PlainCt) -> u32 {
        a.scale_bits
    }

    fn add(&self, a: &PlainCt, b: &PlainCt) -> FheResult<PlainCt> {
        self.tally.add();
        Self::same_shape(a, b)?;
        Ok(PlainCt { values: Self::zip(a, &b.values, |x, y| x + y), level: a.level, scale_bits: a.scale_bits })
    }

    fn sub(&self, a: &PlainCt, b: &PlainCt) -> FheResult<PlainCt> {
        self.tally.add();
        Self::same_shape(a, b)?;
        Ok(PlainCt { values: Self::zip(a, &b.values, |x, y| x - y), level: a.level, scale_bits: a.scale_bits })
    }

    fn add_plain(&self, a: &PlainCt, values: &[f64]) -> FheResult<PlainCt> {
        self.tally.add();
        let v = self.operand(values, a.scale_bits)?;
        Ok(PlainCt { values: Self::zip(a, &v, |x, y| x + y), level: a.level, scale_bits: a.scale_bits })
    }

    fn add_const(&self, a: &PlainCt, c: f64) -> FheResult<PlainCt> {
        self.tally.add();
        let v = self.operand(&[c], a.scale_bits)?[0];
        Ok(PlainCt { values: a.values.iter().map(|x| x + v).collect(), level: a.level, scale_bits: a.scale_bits })
    }

    fn mult(&self, a: &PlainCt, b: &PlainCt) -> FheResult<PlainCt> {
        self.tally.mul();
        if a.level != b.level {
            return Err(FheError::LevelMismatch(a.level, b.level));
        }
        let scale_bits = self.product_scale(a.scale_bits, b.scale_bits, a.level)?;
        Ok(PlainCt { values: Self::zip(a, &b.values, |x, y| x * y), level: a.level, scale_bits })
    }

    fn cmult(&self, a: &PlainCt, values: &[f64], bits: u32) -> FheResult<PlainCt> {
        self.tally.mul();
        let scale_bits = self.product_scale(a.scale_bits, bits, a.level)?;
        let v = self.operand(values, bits)?;
        Ok(PlainCt { values: Self::zip(a, &v, |x, y| x * y), level: a.level, scale_bits })
    }

    fn mul_const(&self, a: &PlainCt, c: f64, bits: u32) -> FheResult<PlainCt> {
        self.tally.mul();
        let scale_bits = self.product_scale(a.scale_bits, bits, a.level)?;
        let s = 2f64.powi(bits as i32);
        let k = (c * s).round() / s;
        Ok(PlainCt { values: a.values.iter().map(|x| x * k).collect(), level: a.level, scale_bits })
    }

    fn rescale(&self, a: &PlainCt, bits: u32) -> FheResult<PlainCt> {
        self.tally.rescale();
        if a.level == 0 {
            return Err(FheError::LevelExhausted);
        }
        if bits == 0 || bits > a.scale_bits || (self.chain[a.level] as f64) < 2f64.powi(bits as i32) / 2.0 {
            return Err(FheError::InvalidRescale(bits));
        }
        Ok(PlainCt { values: a.values.clone(), level: a.level - 1, scale_bits: a.scale_bits - bits })
    }

    fn mod_drop(&self, a: &PlainCt, level: usize) -> FheResult<PlainCt> {
        if level > a.level {
            return Err(FheError::LevelMismatch(a.level, level));
        }
        Ok(PlainCt { values: a.values.clone(), level, scale_bits: a.scale_bits })
    }

    fn rotate(&self, a: &PlainCt, k: i64) -> FheResult<PlainCt> {
        self.tally.rot();
        let n = self.slots;
        let r = k.rem_euclid(n as i64) as usize;
        let mut values = a.values.clone();
        values.rotate_left(r);
        Ok(PlainCt { values, level: a.level, scale_bits: a.scale_bits })
    }
}
