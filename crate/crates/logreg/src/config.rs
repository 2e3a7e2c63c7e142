use serde::{Deserialize, Serialize};

use crate::{LrError, Result};

/// Learning rate as a function of the iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant(f64),
    /// `alpha0 / (1 + decay * t)`.
    InverseTime { alpha0: f64, decay: f64 },
}

impl Schedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            Schedule::Constant(a) => a,
            Schedule::InverseTime { alpha0, decay } => alpha0 / (1.0 + decay * t as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrConfig {
    pub learning_rate: Schedule,
    pub iterations: usize,
    /// Rows drawn per iteration; the whole set when it is at least this large.
    pub batch_size: usize,
    pub sigmoid_degree: usize,
    pub sigmoid_range: (f64, f64),
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            learning_rate: Schedule::Constant(0.1),
            iterations: 30,
            batch_size: 128,
            sigmoid_degree: 3,
            sigmoid_range: (-8.0, 8.0),
            seed: 0,
        }
    }
}

impl LrConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LrError::Config(m.into()));
        match self.learning_rate {
            Schedule::Constant(a) if !(a > 0.0 && a.is_finite()) => return bad("learning rate must be positive"),
            Schedule::InverseTime { alpha0, decay } if !(alpha0 > 0.0 && alpha0.is_finite() && decay >= 0.0) => {
                return bad("learning rate must be positive")
            }
            _ => {}
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if ![3, 5, 7].contains(&self.sigmoid_degree) {
            return bad("sigmoid degree must be 3, 5 or 7");
        }
        let (lo, hi) = self.sigmoid_range;
        if !(hi > 0.0 && hi.is_finite() && lo == -hi) {
            return bad("sigmoid range must be symmetric around 0");
        }
        Ok(())
    }
}
