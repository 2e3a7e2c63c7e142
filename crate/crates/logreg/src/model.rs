use std::path::Path;

use packed_matrix::SlotMatrix;
use serde::{Deserialize, Serialize};

use crate::{LrConfig, LrError, Result};

/// Per-column standardization clipped to the sigmoid fit range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub clip: f64,
}

impl Standardizer {
    pub fn fit(x: &SlotMatrix, clip: f64) -> Self {
        let n = x.rows.max(1) as f64;
        let mut mean = vec![0.0; x.cols];
        let mut std = vec![0.0; x.cols];
        for j in 0..x.cols {
            let m = (0..x.rows).map(|i| x.get(i, j)).sum::<f64>() / n;
            let v = (0..x.rows).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
        }
        Self { mean, std, clip }
    }

    pub fn transform(&self, x: &SlotMatrix) -> Result<SlotMatrix> {
        if x.cols != self.mean.len() {
            return Err(LrError::Input(format!("{} columns, scaler fitted on {}", x.cols, self.mean.len())));
        }
        let mut out = x.clone();
        for i in 0..x.rows {
            for j in 0..x.cols {
                out.set(i, j, ((x.get(i, j) - self.mean[j]) / self.std[j]).clamp(-self.clip, self.clip));
            }
        }
        Ok(out)
    }
}

/// Exported model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub feature_names: Vec<String>,
    /// Bias first.
    pub beta: Vec<f64>,
    pub scaler: Standardizer,
    pub sigmoid_poly: Vec<f64>,
    pub config: LrConfig,
}

impl LrModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LrError::Encoding(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| LrError::Encoding(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_columns() {
        let x = SlotMatrix::new(4, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0]).unwrap();
        let s = Standardizer::fit(&x, 8.0);
        let z = s.transform(&x).unwrap();
        let mean: f64 = (0..4).map(|i| z.get(i, 0)).sum::<f64>() / 4.0;
        let var: f64 = (0..4).map(|i| z.get(i, 0).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!((0..4).all(|i| z.get(i, 1) == 0.0));
    }

    #[test]
    fn values_are_clipped() {
        let mut rows = vec![vec![0.0]; 99];
        rows.push(vec![1000.0]);
        let x = SlotMatrix::from_rows(&rows).unwrap();
        let z = Standardizer::fit(&x, 8.0).transform(&x).unwrap();
        assert_eq!(z.get(99, 0), 8.0);
    }
}
