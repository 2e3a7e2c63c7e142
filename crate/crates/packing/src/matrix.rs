use crate::{PackError, Result};

/// Padded matrix shape; both sides are powers of two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
}

impl Layout {
    /// Smallest power-of-two layout holding a `rows x cols` matrix.
    pub fn padded(rows: usize, cols: usize) -> Self {
        Self { rows: rows.max(1).next_power_of_two(), cols: cols.max(1).next_power_of_two() }
    }

    pub fn slots(&self) -> usize {
        self.rows * self.cols
    }

    pub fn log_rows(&self) -> u32 {
        self.rows.trailing_zeros()
    }

    pub fn log_cols(&self) -> u32 {
        self.cols.trailing_zeros()
    }

    pub fn fits(&self, slots: usize) -> Result<()> {
        if !self.rows.is_power_of_two() || !self.cols.is_power_of_two() {
            return Err(PackError::Shape(format!("{}x{} is not a power-of-two layout", self.rows, self.cols)));
        }
        if self.slots() > slots {
            return Err(PackError::SlotBudget { rows: self.rows, cols: self.cols, need: self.slots(), slots });
        }
        Ok(())
    }

    /// Tiles a per-layout vector (length `rows * cols`) across `slots` slots.
    pub fn tile(&self, one: &[f64], slots: usize) -> Result<Vec<f64>> {
        self.fits(slots)?;
        if one.len() != self.slots() {
            return Err(PackError::Shape(format!("expected {} values, got {}", self.slots(), one.len())));
        }
        Ok(one.iter().copied().cycle().take(slots).collect())
    }

    /// Mask with `value` in column 0 of every row, zero elsewhere.
    pub fn first_column_mask(&self, value: f64, slots: usize) -> Result<Vec<f64>> {
        let mut one = vec![0.0; self.slots()];
        for r in 0..self.rows {
            one[r * self.cols] = value;
        }
        self.tile(&one, slots)
    }
}

/// Dense row-major matrix with its logical size and padded layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SlotMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PackError::Shape(format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PackError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn layout(&self) -> Layout {
        Layout::padded(self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Slot vector for `layout`, zero padded and tiled to `slots`.
    pub fn pack(&self, layout: Layout, slots: usize) -> Result<Vec<f64>> {
        if self.rows > layout.rows || self.cols > layout.cols {
            return Err(PackError::Shape(format!(
                "{}x{} does not fit layout {}x{}",
                self.rows, self.cols, layout.rows, layout.cols
            )));
        }
        let mut one = vec![0.0; layout.slots()];
        for r in 0..self.rows {
            one[r * layout.cols..r * layout.cols + self.cols].copy_from_slice(self.row(r));
        }
        layout.tile(&one, slots)
    }

    /// Reads a `rows x cols` matrix from the first tile of `slots`.
    pub fn unpack(slots: &[f64], layout: Layout, rows: usize, cols: usize) -> Result<Self> {
        if rows > layout.rows || cols > layout.cols || slots.len() < layout.slots() {
            return Err(PackError::Shape("unpack outside the layout".into()));
        }
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            out.data[r * cols..(r + 1) * cols].copy_from_slice(&slots[r * layout.cols..r * layout.cols + cols]);
        }
        Ok(out)
    }

    /// Splits the padded row range into blocks of `layout.rows` rows each.
    ///
    /// The padded height is `next_pow2(self.rows)`, so trailing blocks may be
    /// entirely zero.
    pub fn row_chunks(&self, slots: usize) -> Result<(Layout, Vec<SlotMatrix>)> {
        let full = self.layout();
        let cols = full.cols;
        if cols > slots {
            return Err(PackError::SlotBudget { rows: 1, cols, need: cols, slots });
        }
        let rows = full.rows.min(slots / cols);
        let layout = Layout { rows, cols };
        let count = full.rows / rows;
        let chunks = (0..count)
            .map(|k| {
                let lo = (k * rows).min(self.rows);
                let hi = ((k + 1) * rows).min(self.rows);
                SlotMatrix { rows: hi - lo, cols: self.cols, data: self.data[lo * self.cols..hi * self.cols].to_vec() }
            })
            .collect();
        Ok((layout, chunks))
    }
}

/// Interleaves gradients and hessians as `g0, h0, g1, h1, ...` (an `n x 2`
/// matrix), tiled to `slots`.
pub fn pack_gh_pairs(g: &[f64], h: &[f64], slots: usize) -> Result<Vec<f64>> {
    if g.len() != h.len() {
        return Err(PackError::Shape(format!("{} gradients vs {} hessians", g.len(), h.len())));
    }
    let m = SlotMatrix::new(g.len(), 2, g.iter().zip(h).flat_map(|(&a, &b)| [a, b]).collect())?;
    m.pack(m.layout(), slots)
}

/// Inverse of [`pack_gh_pairs`] for the first `n` pairs.
pub fn unpack_gh_pairs(slots: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n).map(|i| (slots[2 * i], slots[2 * i + 1])).unzip()
}
