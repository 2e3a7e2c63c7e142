use packed_matrix::SlotMatrix;
use serde::{Deserialize, Serialize};

use crate::{GhPair, Result, SbError};

/// Boosting and regularization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Penalty per split.
    pub gamma: f64,
    /// Quantile granularity; `1/epsilon` buckets per feature.
    pub epsilon: f64,
    pub max_depth: usize,
    pub num_trees: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { lambda: 1.0, gamma: 0.0, epsilon: 0.125, max_depth: 3, num_trees: 5, learning_rate: 0.3, min_leaf: 2 }
    }
}

impl SplitConfig {
    pub fn buckets(&self) -> usize {
        (1.0 / self.epsilon).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let b = 1.0 / self.epsilon;
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) || (b - b.round()).abs() > 1e-9 || b.round() < 2.0 {
            return Err(SbError::Input(format!("1/epsilon must be an integer >= 2, got epsilon {}", self.epsilon)));
        }
        if self.lambda < 0.0 || self.gamma < 0.0 || self.learning_rate <= 0.0 || self.min_leaf == 0 {
            return Err(SbError::Input("lambda, gamma >= 0, learning_rate > 0, min_leaf >= 1 required".into()));
        }
        Ok(())
    }
}

/// Up to `1/epsilon - 1` thresholds splitting the sorted values into
/// equal-count buckets; a value `x` lands in bucket `#{s : s < x}`.
///
/// Each threshold is the midpoint between the value at a quantile boundary
/// and the next larger distinct value; duplicates are dropped.
pub fn quantile_splits(values: &[f64], epsilon: f64) -> Vec<f64> {
    let n = values.len();
    let b = (1.0 / epsilon).round() as usize;
    if n == 0 || b < 2 {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for j in 1..b {
        let idx = (2 * j * n + b) / (2 * b);
        if idx == 0 || idx >= n {
            continue;
        }
        let lo = v[idx - 1];
        let Some(&hi) = v[idx..].iter().find(|&&x| x > lo) else { continue };
        let t = lo + (hi - lo) / 2.0;
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

/// Per-feature thresholds fixed for a whole training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Buckets {
    pub thresholds: Vec<Vec<f64>>,
}

impl Buckets {
    pub fn fit(features: &SlotMatrix, epsilon: f64) -> Self {
        let t = features.transpose();
        Self { thresholds: (0..t.rows).map(|k| quantile_splits(t.row(k), epsilon)).collect() }
    }

    pub fn features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn count(&self, k: usize) -> usize {
        self.thresholds[k].len() + 1
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.features()).map(|k| self.count(k)).collect()
    }

    pub fn bucket_of(&self, k: usize, x: f64) -> usize {
        self.thresholds[k].partition_point(|&s| s < x)
    }

    /// Threshold closing bucket `v`: `x <= threshold(k, v)` goes left.
    pub fn threshold(&self, k: usize, v: usize) -> f64 {
        self.thresholds[k][v]
    }
}

/// Per-feature bucket sums of gradients (`g`) and hessians (`h`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl HistogramPair {
    pub fn zeros(counts: &[usize]) -> Self {
        let z: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();
        Self { g: z.clone(), h: z }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.g.iter().map(Vec::len).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        d(&self.g, &other.g).max(d(&self.h, &other.h))
    }
}

/// Histogram of the instances in `instances` computed in the clear.
pub fn plain_histogram(features: &SlotMatrix, buckets: &Buckets, instances: &[usize], gh: &[GhPair]) -> HistogramPair {
    let mut out = HistogramPair::zeros(&buckets.counts());
    for &i in instances {
        for k in 0..buckets.features() {
            let v = buckets.bucket_of(k, features.get(i, k));
            out.g[k][v] += gh[i].g;
            out.h[k][v] += gh[i].h;
        }
    }
    out
}

/// Right-child histogram as parent minus left child.
pub fn sibling_subtract(parent: &HistogramPair, left: &HistogramPair) -> Result<HistogramPair> {
    if parent.shape() != left.shape() {
        return Err(SbError::Input("histogram shapes differ".into()));
    }
    let sub = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
    };
    Ok(HistogramPair { g: sub(&parent.g, &left.g), h: sub(&parent.h, &left.h) })
}

/// Structure-score gain of splitting `(g, h)` into `(gl, hl)` and the rest.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, config: &SplitConfig) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    let lam = config.lambda;
    0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)) - config.gamma
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Buckets `0..=bucket` go left.
    pub bucket: usize,
    pub gain: f64,
}

/// Every prefix split, best gain first; ties keep `(feature, bucket)` order.
pub fn rank_splits(hist: &HistogramPair, config: &SplitConfig) -> Vec<SplitCandidate> {
    let mut out = Vec::new();
    for (k, (gk, hk)) in hist.g.iter().zip(&hist.h).enumerate() {
        let (g, h): (f64, f64) = (gk.iter().sum(), hk.iter().sum());
        let (mut gl, mut hl) = (0.0, 0.0);
        for v in 0..gk.len().saturating_sub(1) {
            gl += gk[v];
            hl += hk[v];
            out.push(SplitCandidate { feature: k, bucket: v, gain: split_gain(gl, hl, g, h, config) });
        }
    }
    out.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    out
}

/// The highest-gain split, or `None` when no split has positive gain.
pub fn best_split(hist: &HistogramPair, config: &SplitConfig) -> Option<SplitCandidate> {
    rank_splits(hist, config).into_iter().next().filter(|c| c.gain > 0.0)
}

/// `-sum(g) / (sum(h) + lambda)` over a non-empty instance set.
pub fn leaf_weight(instances: &[usize], gh: &[GhPair], lambda: f64) -> Result<f64> {
    if instances.is_empty() {
        return Err(SbError::Input("leaf without instances".into()));
    }
    let (g, h) = instances.iter().fold((0.0, 0.0), |(g, h), &i| (g + gh[i].g, h + gh[i].h));
    Ok(-g / (h + lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_one_to_eight() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(quantile_splits(&v, 0.25), vec![2.5, 4.5, 6.5]);
        assert!(quantile_splits(&[3.0; 10], 0.25).is_empty());
    }

    #[test]
    fn ties_are_deterministic() {
        let v = [1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_splits(&v, 0.25), vec![1.5, 2.5]);
    }

    #[test]
    fn bucket_sums_example() {
        let x = SlotMatrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Buckets { thresholds: vec![vec![2.5]] };
        let gh: Vec<GhPair> = [(1.0, 0.1), (2.0, 0.2), (3.0, 0.3), (4.0, 0.4)].map(|(g, h)| GhPair { g, h }).to_vec();
        let hist = plain_histogram(&x, &b, &[0, 1, 2, 3], &gh);
        assert_eq!(hist.g, vec![vec![3.0, 7.0]]);
        assert!((hist.h[0][0] - 0.3).abs() < 1e-12 && (hist.h[0][1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_never_split() {
        let hist = HistogramPair { g: vec![vec![0.0; 4]], h: vec![vec![1.0; 4]] };
        let cfg = SplitConfig { gamma: 0.5, ..Default::default() };
        assert!(rank_splits(&hist, &cfg).iter().all(|c| c.gain == -0.5));
        assert_eq!(best_split(&hist, &cfg), None);
    }

    #[test]
    fn huge_lambda_kills_gain() {
        let hist = HistogramPair { g: vec![vec![-3.0, 3.0]], h: vec![vec![1.0, 1.0]] };
        let cfg = SplitConfig { lambda: 1e12, gamma: 0.1, ..Default::default() };
        assert!((rank_splits(&hist, &cfg)[0].gain + 0.1).abs() < 1e-9);
    }

    #[test]
    fn leaf_weight_formula() {
        let gh = [GhPair { g: 0.4, h: 0.5 }, GhPair { g: 0.6, h: 0.5 }, GhPair { g: -1.0, h: 0.2 }];
        assert!((leaf_weight(&[0, 1], &gh, 1.0).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(leaf_weight(&[0, 1, 2], &gh, 0.0).unwrap(), 0.0);
        assert!(leaf_weight(&[], &gh, 1.0).is_err());
    }

    #[test]
    fn subtraction_edge_cases() {
        let p = HistogramPair { g: vec![vec![1.0, 2.0]], h: vec![vec![0.5, 0.25]] };
        let z = HistogramPair::zeros(&[2]);
        assert_eq!(sibling_subtract(&p, &p).unwrap(), z);
        assert_eq!(sibling_subtract(&p, &z).unwrap(), p);
        assert!(sibling_subtract(&p, &HistogramPair::zeros(&[3])).is_err());
    }
}
