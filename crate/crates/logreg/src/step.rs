use ckks::FheParams;
use packed_matrix::{
    col_sum_rotate, mask_first_column, replicate_first_column, row_sum_rotate, Backend, Layout, PlainBackend, Section,
    SlotMatrix,
};

use crate::{fit_sigmoid_poly, LrError, Result, SigmoidPoly};

/// Scale of plaintext constants and masks. Rescaling by a full prime keeps
/// them exact.
pub const CONST_BITS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Procedure {
    /// Samples on rows: row sums, mask, replication, column sums.
    Baseline,
    /// Samples on columns: column sums first, fused mask and learning rate.
    Improved,
}

/// How a batch of `samples x features` rows is split into ciphertexts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchShape {
    pub procedure: Procedure,
    pub samples: usize,
    /// Columns including the bias.
    pub features: usize,
    /// Samples per ciphertext.
    pub chunk_rows: usize,
    pub chunks: usize,
    pub layout: Layout,
    pub slots: usize,
}

impl BatchShape {
    pub fn new(procedure: Procedure, samples: usize, features: usize, slots: usize) -> Result<Self> {
        Self::with_chunk_rows(procedure, samples, features, slots, samples)
    }

    /// Like [`BatchShape::new`] with room for `capacity` samples per chunk,
    /// so that batches of different sizes share one layout.
    pub fn with_chunk_rows(
        procedure: Procedure,
        samples: usize,
        features: usize,
        slots: usize,
        capacity: usize,
    ) -> Result<Self> {
        if samples == 0 || features == 0 {
            return Err(LrError::Input("empty batch".into()));
        }
        let fp = features.next_power_of_two();
        if fp > slots {
            return Err(LrError::Input(format!("{features} features exceed {slots} slots")));
        }
        let chunk_rows = capacity.max(1).next_power_of_two().min(slots / fp);
        let layout = match procedure {
            Procedure::Baseline => Layout { rows: chunk_rows, cols: fp },
            Procedure::Improved => Layout { rows: fp, cols: chunk_rows },
        };
        Ok(Self { procedure, samples, features, chunk_rows, chunks: samples.div_ceil(chunk_rows), layout, slots })
    }

    fn chunk(&self, rows: &SlotMatrix, c: usize, scale: f64) -> Result<Vec<f64>> {
        let lo = c * self.chunk_rows;
        let hi = (lo + self.chunk_rows).min(self.samples);
        let block: Vec<f64> = rows.data[lo * rows.cols..hi * rows.cols].iter().map(|v| v * scale).collect();
        let m = SlotMatrix::new(hi - lo, rows.cols, block)?;
        let m = if self.procedure == Procedure::Improved { m.transpose() } else { m };
        Ok(m.pack(self.layout, self.slots)?)
    }

    /// One slot vector per chunk, every value multiplied by `scale`.
    pub fn pack_rows(&self, rows: &SlotMatrix, scale: f64) -> Result<Vec<Vec<f64>>> {
        if rows.rows != self.samples || rows.cols != self.features {
            return Err(LrError::Input(format!(
                "batch is {}x{}, shape expects {}x{}",
                rows.rows, rows.cols, self.samples, self.features
            )));
        }
        (0..self.chunks).map(|c| self.chunk(rows, c, scale)).collect()
    }

    /// Weights copied onto every sample.
    pub fn pack_weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.features {
            return Err(LrError::Input(format!("{} weights for {} features", beta.len(), self.features)));
        }
        let rows = vec![beta.to_vec(); self.chunk_rows];
        let m = SlotMatrix::from_rows(&rows)?;
        let m = if self.procedure == Procedure::Improved { m.transpose() } else { m };
        Ok(m.pack(self.layout, self.slots)?)
    }

    /// Weights as seen by sample 0 of the first tile.
    pub fn unpack_weights(&self, values: &[f64]) -> Vec<f64> {
        (0..self.features).map(|j| values[self.weight_slot(0, j)]).collect()
    }

    /// Largest difference between any copy of a weight and its first copy.
    pub fn weight_spread(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.chunk_rows {
            for j in 0..self.features {
                worst = worst.max((values[self.weight_slot(i, j)] - values[self.weight_slot(0, j)]).abs());
            }
        }
        worst
    }

    fn weight_slot(&self, sample: usize, feature: usize) -> usize {
        match self.procedure {
            Procedure::Baseline => sample * self.layout.cols + feature,
            Procedure::Improved => feature * self.layout.cols + sample,
        }
    }

    /// Per-sample values of chunk `c` placed in each sample's column
    /// (improved layout), on every row or on row 0 only.
    pub fn sample_vector(&self, c: usize, values: &[f64], every_row: bool) -> Result<Vec<f64>> {
        if self.procedure != Procedure::Improved || values.len() != self.samples {
            return Err(LrError::Input("per-sample vectors need the improved layout and one value per sample".into()));
        }
        let mut one = vec![0.0; self.layout.slots()];
        let lo = c * self.chunk_rows;
        let hi = (lo + self.chunk_rows).min(self.samples);
        let rows = if every_row { self.layout.rows } else { 1 };
        for r in 0..rows {
            for (i, v) in values[lo..hi].iter().enumerate() {
                one[r * self.layout.cols + i] = *v;
            }
        }
        Ok(self.layout.tile(&one, self.slots)?)
    }

    /// Reads row 0 of chunk `c` back as one value per sample.
    pub fn unpack_samples(&self, c: usize, values: &[f64]) -> Vec<f64> {
        let lo = c * self.chunk_rows;
        let hi = (lo + self.chunk_rows).min(self.samples);
        values[..hi - lo].to_vec()
    }

    /// Rotation steps used by either gradient step on this shape.
    pub fn rotation_steps(&self) -> Vec<i64> {
        let l = self.layout;
        let mut s: Vec<i64> = (0..l.log_cols()).flat_map(|j| [1i64 << j, -(1i64 << j)]).collect();
        s.extend((0..l.log_rows()).map(|j| (l.cols << j) as i64));
        s
    }
}

/// `z_i = y_i * x_i` for rows `x` that already carry the bias column.
pub fn signed_rows(x: &SlotMatrix, y: &[f64]) -> Result<SlotMatrix> {
    if y.len() != x.rows {
        return Err(LrError::Input(format!("{} labels for {} rows", y.len(), x.rows)));
    }
    let data = x.data.chunks(x.cols).zip(y).flat_map(|(r, &yi)| r.iter().map(move |v| v * yi)).collect();
    Ok(SlotMatrix::new(x.rows, x.cols, data)?)
}

/// Factor the data owner applies to `z` before encryption: `m = sqrt(-a3)`.
pub fn data_scale(poly: &SigmoidPoly) -> Result<f64> {
    Ok((-poly.cubic()?.1).sqrt())
}

/// `m^2 * g(-x) * z` slotwise from `s = m x` and `w = m z`, with
/// `g(x) = 1/2 + a1 x + a3 x^3` and `m^2 = -a3`:
/// `m^2 g(-x) z = m/2 * w + (s^2 - a1) * (s w)`. Two levels below `s`; the
/// last product is the step's multiplication, the rest is polynomial work.
fn weighted_sigmoid<B: Backend>(b: &B, s: &B::Ct, w: &B::Ct, a1: f64, m: f64) -> Result<B::Ct> {
    let p = b.scale_bits(s);
    let (t, sw, half) = b.tally().with_section(Section::Poly, || -> Result<_> {
        let s2 = b.rescale(&b.mult(s, s)?, p)?;
        let t = b.add_const(&s2, -a1)?;
        let wl = b.mod_drop(w, b.level(s))?;
        let sw = b.rescale(&b.mult(s, &wl)?, p)?;
        let half = b.rescale(&b.mul_const(w, 0.5 * m, CONST_BITS)?, CONST_BITS)?;
        Ok((t, sw, half))
    })?;
    let prod = b.rescale(&b.mult(&t, &sw)?, p)?;
    let half = b.tally().with_section(Section::Poly, || b.mod_drop(&half, b.level(&prod)))?;
    Ok(b.tally().with_section(Section::Poly, || b.add(&half, &prod))?)
}

fn check_inputs<B: Backend>(b: &B, shape: &BatchShape, want: Procedure, ct_w: &[B::Ct]) -> Result<()> {
    if shape.procedure != want {
        return Err(LrError::Input(format!("shape is packed for {:?}", shape.procedure)));
    }
    if ct_w.len() != shape.chunks {
        return Err(LrError::Input(format!("{} data ciphertexts for {} chunks", ct_w.len(), shape.chunks)));
    }
    if b.slot_count() != shape.slots {
        return Err(LrError::Input("backend slot count differs from the shape".into()));
    }
    Ok(())
}

fn lower<B: Backend>(b: &B, x: &B::Ct, y: &B::Ct) -> Result<(B::Ct, B::Ct)> {
    let l = b.level(x).min(b.level(y));
    Ok((b.mod_drop(x, l)?, b.mod_drop(y, l)?))
}

/// One gradient-ascent step in the row-major packing: `ct_w` holds
/// `m * z` per chunk (see [`data_scale`]), `ct_beta` the replicated weights.
/// Consumes five levels of `ct_beta`.
pub fn grad_step_baseline<B: Backend>(
    b: &B,
    shape: &BatchShape,
    ct_w: &[B::Ct],
    ct_beta: &B::Ct,
    poly: &SigmoidPoly,
    alpha: f64,
) -> Result<B::Ct> {
    check_inputs(b, shape, Procedure::Baseline, ct_w)?;
    let (a1, a3) = poly.cubic()?;
    let m = (-a3).sqrt();
    let l = shape.layout;
    let mut parts = Vec::with_capacity(ct_w.len());
    for w in ct_w {
        let (w, beta) = lower(b, w, ct_beta)?;
        let p = b.scale_bits(&beta);
        let ct1 = b.rescale(&b.mult(&w, &beta)?, p)?;
        let ct2 = row_sum_rotate(b, &ct1, l)?;
        let ct3 = mask_first_column(b, &ct2, l, 1.0, CONST_BITS)?;
        let ct4 = replicate_first_column(b, &ct3, l)?;
        parts.push(weighted_sigmoid(b, &ct4, &w, a1, m)?);
    }
    let ct6 = b.add_many(&parts)?;
    let ct7 = col_sum_rotate(b, &ct6, l)?;
    let delta = alpha / (shape.samples as f64 * m * m);
    let ct8 = b.rescale(&b.mul_const(&ct7, delta, CONST_BITS)?, CONST_BITS)?;
    let beta = b.mod_drop(ct_beta, b.level(&ct8))?;
    Ok(b.add(&beta, &ct8)?)
}

/// The same update in the transposed packing (features on rows); consumes
/// four levels of `ct_beta`.
pub fn grad_step_improved<B: Backend>(
    b: &B,
    shape: &BatchShape,
    ct_w: &[B::Ct],
    ct_beta: &B::Ct,
    poly: &SigmoidPoly,
    alpha: f64,
) -> Result<B::Ct> {
    check_inputs(b, shape, Procedure::Improved, ct_w)?;
    let (a1, a3) = poly.cubic()?;
    let m = (-a3).sqrt();
    let l = shape.layout;
    let mut parts = Vec::with_capacity(ct_w.len());
    for w in ct_w {
        let (w, beta) = lower(b, w, ct_beta)?;
        let p = b.scale_bits(&beta);
        let ct1 = b.rescale(&b.mult(&w, &beta)?, p)?;
        let ct2 = col_sum_rotate(b, &ct1, l)?;
        parts.push(weighted_sigmoid(b, &ct2, &w, a1, m)?);
    }
    let ct4 = b.add_many(&parts)?;
    let ct5 = row_sum_rotate(b, &ct4, l)?;
    let delta = alpha / (shape.samples as f64 * m * m);
    let ct6 = mask_first_column(b, &ct5, l, delta, CONST_BITS)?;
    let ct7 = replicate_first_column(b, &ct6, l)?;
    let beta = b.mod_drop(ct_beta, b.level(&ct7))?;
    Ok(b.add(&beta, &ct7)?)
}

/// Plaintext update `beta + alpha/n * sum_i g(-z_i . beta) z_i`.
pub fn plain_step(z: &SlotMatrix, beta: &[f64], poly: &SigmoidPoly, alpha: f64) -> Vec<f64> {
    let mut grad = vec![0.0; beta.len()];
    for i in 0..z.rows {
        let row = z.row(i);
        let x: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let g = poly.eval(-x);
        for (acc, v) in grad.iter_mut().zip(row) {
            *acc += g * v;
        }
    }
    beta.iter().zip(grad).map(|(b, g)| b + alpha / z.rows as f64 * g).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpReport {
    /// Multiplications that are steps of the procedure.
    pub mul: usize,
    /// Multiplications inside the sigmoid evaluation.
    pub poly_mul: usize,
    pub add: usize,
    pub poly_add: usize,
    pub rot: usize,
    /// Levels consumed between the weight ciphertext and the update.
    pub depth: usize,
}

/// Counts one step on an `n x (f+1)` batch held in a single ciphertext.
pub fn count_ops(procedure: Procedure, n: usize, f: usize) -> Result<OpReport> {
    let params = FheParams::desk();
    let slots = (n.next_power_of_two() * (f + 1).next_power_of_two()).max(2);
    let b = PlainBackend::with_slots(&params, slots);
    let shape = BatchShape::new(procedure, n, f + 1, slots)?;
    let poly = fit_sigmoid_poly(3, (-8.0, 8.0))?;
    let w = b.fresh(&vec![0.0; slots])?;
    let beta = b.fresh(&vec![0.0; slots])?;
    let out = match procedure {
        Procedure::Baseline => grad_step_baseline(&b, &shape, &[w], &beta, &poly, 0.1)?,
        Procedure::Improved => grad_step_improved(&b, &shape, &[w], &beta, &poly, 0.1)?,
    };
    let c = b.tally().snapshot();
    Ok(OpReport {
        mul: c.mul,
        poly_mul: c.poly_mul,
        add: c.add,
        poly_add: c.poly_add,
        rot: c.rot,
        depth: b.max_level() - b.level(&out),
    })
}

/// Reference op counts `(mul, add, rot, depth)` for powers of two `n` and `f+1`.
pub fn table_formula(procedure: Procedure, n: usize, f: usize) -> (usize, usize, usize, usize) {
    let lg = |v: usize| v.trailing_zeros() as usize;
    let l = lg(n * (f + 1)) + lg(n);
    match procedure {
        Procedure::Baseline => (4, l + 3, l + 2, 5),
        Procedure::Improved => (3, l + 3, l + 2, 4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_split_rows_into_chunks() {
        let s = BatchShape::new(Procedure::Improved, 1024, 31, 4096).unwrap();
        assert_eq!((s.chunk_rows, s.chunks, s.layout), (128, 8, Layout { rows: 32, cols: 128 }));
        let s = BatchShape::new(Procedure::Baseline, 6, 3, 4096).unwrap();
        assert_eq!((s.chunk_rows, s.chunks, s.layout), (8, 1, Layout { rows: 8, cols: 4 }));
        assert!(BatchShape::new(Procedure::Baseline, 0, 3, 4096).is_err());
    }

    #[test]
    fn weights_roundtrip_through_both_layouts() {
        for p in [Procedure::Baseline, Procedure::Improved] {
            let s = BatchShape::new(p, 20, 5, 256).unwrap();
            let v = s.pack_weights(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
            assert_eq!(s.unpack_weights(&v), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
            assert_eq!(s.weight_spread(&v), 0.0);
        }
    }

    #[test]
    fn improved_packing_is_the_transpose() {
        let x = SlotMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = BatchShape::new(Procedure::Improved, 2, 3, 8).unwrap();
        assert_eq!(s.pack_rows(&x, 1.0).unwrap()[0], vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn signed_rows_flip_negatives() {
        let x = SlotMatrix::new(2, 2, vec![1.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(signed_rows(&x, &[1.0, -1.0]).unwrap().data, vec![1.0, 2.0, -1.0, -3.0]);
    }

    #[test]
    fn formula_at_degenerate_size() {
        assert_eq!(table_formula(Procedure::Improved, 1, 0), (3, 3, 2, 4));
    }
}
