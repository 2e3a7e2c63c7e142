use serde::{Deserialize, Serialize};

use crate::{Result, SbError};

/// First and second derivative of the loss at one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhPair {
    pub g: f64,
    pub h: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic-loss derivatives: `g = p - y`, `h = p (1 - p)` with `p = sigmoid(y_hat)`.
pub fn compute_gh(y: &[f64], y_hat: &[f64]) -> Result<Vec<GhPair>> {
    if y.len() != y_hat.len() {
        return Err(SbError::Input(format!("{} labels vs {} scores", y.len(), y_hat.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(SbError::Input(format!("label {bad} is not 0 or 1")));
    }
    Ok(y.iter()
        .zip(y_hat)
        .map(|(&y, &s)| {
            let p = sigmoid(s);
            GhPair { g: p - y, h: p * (1.0 - p) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Log loss as softplus(s) - y s, stable for large |s|.
    fn loss(y: f64, s: f64) -> f64 {
        s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s
    }

    #[test]
    fn at_zero_score() {
        let gh = compute_gh(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(gh[0], GhPair { g: -0.5, h: 0.25 });
        assert_eq!(gh[1], GhPair { g: 0.5, h: 0.25 });
    }

    #[test]
    fn matches_finite_differences() {
        let d = 1e-4;
        for i in 0..200 {
            let y = (i % 2) as f64;
            let s = (i as f64 * 0.37).sin() * 4.0;
            let gh = compute_gh(&[y], &[s]).unwrap()[0];
            let g = (loss(y, s + d) - loss(y, s - d)) / (2.0 * d);
            let h = (loss(y, s + d) - 2.0 * loss(y, s) + loss(y, s - d)) / (d * d);
            assert!((gh.g - g).abs() < 1e-6, "g at {s}");
            assert!((gh.h - h).abs() < 1e-6, "h at {s}");
            assert!(gh.h > 0.0 && gh.h <= 0.25 && gh.g.abs() < 1.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_gh(&[1.0], &[]).is_err());
        assert!(compute_gh(&[2.0], &[0.0]).is_err());
    }
}
