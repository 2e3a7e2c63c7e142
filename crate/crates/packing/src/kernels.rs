use crate::{Backend, Layout, Result};

/// Every slot `(r, c)` receives `sum_j x[r, c + j]` over the next `cols`
/// entries; column 0 then holds the row sums. `log2(cols)` rotations.
pub fn row_sum_rotate<B: Backend>(b: &B, x: &B::Ct, layout: Layout) -> Result<B::Ct> {
    layout.fits(b.slot_count())?;
    let mut acc = x.clone();
    for j in 0..layout.log_cols() {
        let r = b.rotate(&acc, 1 << j)?;
        acc = b.add(&acc, &r)?;
    }
    Ok(acc)
}

/// Every slot `(r, c)` receives the sum of column `c` over all rows.
/// `log2(rows)` rotations.
pub fn col_sum_rotate<B: Backend>(b: &B, x: &B::Ct, layout: Layout) -> Result<B::Ct> {
    layout.fits(b.slot_count())?;
    let mut acc = x.clone();
    for j in 0..layout.log_rows() {
        let r = b.rotate(&acc, (layout.cols << j) as i64)?;
        acc = b.add(&acc, &r)?;
    }
    Ok(acc)
}

/// Keeps column 0 multiplied by `value` and zeroes the rest. One plaintext
/// product at scale `2^bits` followed by a rescale of `bits`.
pub fn mask_first_column<B: Backend>(b: &B, x: &B::Ct, layout: Layout, value: f64, bits: u32) -> Result<B::Ct> {
    let mask = layout.first_column_mask(value, b.slot_count())?;
    let y = b.cmult(x, &mask, bits)?;
    Ok(b.rescale(&y, bits)?)
}

/// Copies column 0 across its row, assuming the other columns are zero.
/// `log2(cols)` rotations.
pub fn replicate_first_column<B: Backend>(b: &B, x: &B::Ct, layout: Layout) -> Result<B::Ct> {
    layout.fits(b.slot_count())?;
    let mut acc = x.clone();
    for j in 0..layout.log_cols() {
        let r = b.rotate(&acc, -(1i64 << j))?;
        acc = b.add(&acc, &r)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{PlainBackend, SlotMatrix};
    use ckks::FheParams;

    fn backend() -> PlainBackend {
        PlainBackend::with_slots(&FheParams::desk(), 64)
    }

    fn matrix() -> SlotMatrix {
        SlotMatrix::new(3, 3, (1..=9).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn row_sums_land_in_column_zero() {
        let b = backend();
        let m = matrix();
        let l = m.layout();
        let x = b.fresh(&m.pack(l, 64).unwrap()).unwrap();
        let y = row_sum_rotate(&b, &x, l).unwrap();
        assert_eq!([y.values[0], y.values[4], y.values[8], y.values[12]], [6.0, 15.0, 24.0, 0.0]);
        assert_eq!(b.tally().snapshot().rot, 2);
    }

    #[test]
    fn col_sums_fill_every_row() {
        let b = backend();
        let m = matrix();
        let l = m.layout();
        let x = b.fresh(&m.pack(l, 64).unwrap()).unwrap();
        let y = col_sum_rotate(&b, &x, l).unwrap();
        for r in 0..4 {
            assert_eq!(&y.values[r * 4..r * 4 + 4], &[12.0, 15.0, 18.0, 0.0]);
        }
    }

    #[test]
    fn mask_then_replicate() {
        let b = backend();
        let m = matrix();
        let l = m.layout();
        let x = b.fresh(&m.pack(l, 64).unwrap()).unwrap();
        let y = mask_first_column(&b, &x, l, 0.5, 20).unwrap();
        assert_eq!((y.level, y.scale_bits), (4, 40));
        let z = replicate_first_column(&b, &y, l).unwrap();
        assert_eq!(&z.values[..8], &[0.5, 0.5, 0.5, 0.5, 2.0, 2.0, 2.0, 2.0]);
    }
}
