use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{LrError, Result};

const GRID: usize = 2001;

/// `0.5 + sum_k c_k x^k` over odd `k`; `coeffs[k]` is the coefficient of `x^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidPoly {
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Least-squares fit of the sigmoid on a uniform grid over `range`, with the
/// constant fixed to 1/2 and odd powers only.
pub fn fit_sigmoid_poly(degree: usize, range: (f64, f64)) -> Result<SigmoidPoly> {
    if ![3, 5, 7].contains(&degree) {
        return Err(LrError::Config(format!("unsupported sigmoid degree {degree}")));
    }
    let (lo, hi) = range;
    if !(hi > 0.0 && hi.is_finite() && lo == -hi) {
        return Err(LrError::Config("fit range must be symmetric around 0".into()));
    }
    let powers: Vec<i32> = (1..=degree as i32).step_by(2).collect();
    // Fit in t = x / hi for conditioning, then rescale.
    let ts: Vec<f64> = (0..GRID).map(|i| -1.0 + 2.0 * i as f64 / (GRID - 1) as f64).collect();
    let a = DMatrix::from_fn(GRID, powers.len(), |i, k| ts[i].powi(powers[k]));
    let b = DVector::from_fn(GRID, |i, _| sigmoid(ts[i] * hi) - 0.5);
    let sol = a.svd(true, true).solve(&b, 1e-14).map_err(|e| LrError::Config(e.to_string()))?;
    let mut coeffs = vec![0.0; degree + 1];
    coeffs[0] = 0.5;
    for (k, &p) in powers.iter().enumerate() {
        coeffs[p as usize] = sol[k] / hi.powi(p);
    }
    Ok(SigmoidPoly { degree, coeffs })
}

impl SigmoidPoly {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `(a1, a3)` of a cubic with negative leading term.
    pub fn cubic(&self) -> Result<(f64, f64)> {
        if self.degree != 3 || self.coeffs.len() != 4 || self.coeffs[3] >= 0.0 {
            return Err(LrError::Config("encrypted steps evaluate cubics with a negative x^3 term".into()));
        }
        Ok((self.coeffs[1], self.coeffs[3]))
    }
}
