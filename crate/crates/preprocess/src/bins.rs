use packed_matrix::SlotMatrix;
use serde::{Deserialize, Serialize};

use crate::{PrepError, Result};

/// Equal-width bin edges for one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub feature: usize,
    /// `bins + 1` strictly increasing edges from the observed min to max.
    pub edges: Vec<f64>,
}

/// `bins` equal-width intervals over `[min, max]` of `values`.
pub fn equal_width_bins(feature: usize, values: &[f64], bins: usize) -> Result<BinSpec> {
    if bins < 2 {
        return Err(PrepError::Input(format!("need at least 2 bins, got {bins}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PrepError::Input(format!("feature {feature} has non-finite values")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(PrepError::Input(format!("feature {feature} is constant")));
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    Ok(BinSpec { feature, edges })
}

impl BinSpec {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bins are right-closed except the first, which is closed on both
    /// sides. Values outside the edges fall into the nearest end bin.
    pub fn bin_of(&self, v: f64) -> usize {
        self.edges[1..self.bins()].partition_point(|&e| e < v)
    }
}

/// One-hot bin membership, stored as the bin index of each row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinMatrix {
    pub bins: usize,
    pub index: Vec<usize>,
}

pub fn one_hot(values: &[f64], spec: &BinSpec) -> BinMatrix {
    BinMatrix { bins: spec.bins(), index: values.iter().map(|&v| spec.bin_of(v)).collect() }
}

impl BinMatrix {
    pub fn rows(&self) -> usize {
        self.index.len()
    }

    pub fn dense(&self) -> SlotMatrix {
        let mut m = SlotMatrix::zeros(self.rows(), self.bins);
        for (r, &b) in self.index.iter().enumerate() {
            m.set(r, b, 1.0);
        }
        m
    }

    /// Bin populations.
    pub fn column_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.bins];
        for &b in &self.index {
            out[b] += 1;
        }
        out
    }
}
