//! Encrypted bucket aggregation.
//!
//! Gradients arrive as interleaved `(g_i, h_i)` slot pairs, `S/2` samples per
//! ciphertext. The `d x l` bucket-membership matrix `M` of a node is applied as
//! a matrix-vector product: with `m` output rows (padded to a power of two),
//!
//! `y = sum_{j<m} D_j * rot(x, 2j)`,  `D_j[2q + c] = M[q mod m, q + j]`,
//!
//! followed by summing the `S / 2m` blocks of `2m` slots. Row `r` of the result
//! sits at slots `2r` (G) and `2r + 1` (H). The sum over `j` runs as baby steps
//! `rot(x, 2b)` and a Horner chain of giant steps.

use packed_matrix::{Backend, SlotMatrix};
use serde::{Deserialize, Serialize};

use crate::{Buckets, HistogramPair, Result, SbError};

/// Scale of the 0/1 selection plaintexts; rescaling by a full chain prime
/// keeps the scale exact.
pub const MASK_BITS: u32 = 40;

/// Features packed into one output ciphertext.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistGroup {
    pub first_feature: usize,
    pub features: usize,
    /// Output rows, a power of two `>= features * width`.
    pub rows: usize,
}

/// How a party's histograms are laid out in ciphertext slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistLayout {
    pub bucket_counts: Vec<usize>,
    /// Rows reserved per feature (the largest bucket count).
    pub width: usize,
    pub groups: Vec<HistGroup>,
    pub slots: usize,
}

impl HistLayout {
    pub fn new(bucket_counts: &[usize], slots: usize) -> Result<Self> {
        let width = bucket_counts.iter().copied().max().unwrap_or(1).max(1);
        let per_group = (slots / 2) / width;
        if per_group == 0 {
            return Err(SbError::Input(format!("{width} buckets do not fit {slots} slots")));
        }
        let mut groups = Vec::new();
        let mut k = 0;
        while k < bucket_counts.len() {
            let features = per_group.min(bucket_counts.len() - k);
            groups.push(HistGroup { first_feature: k, features, rows: (features * width).next_power_of_two() });
            k += features;
        }
        Ok(Self { bucket_counts: bucket_counts.to_vec(), width, groups, slots })
    }

    fn bsgs(rows: usize) -> (usize, usize) {
        let baby = 1usize << rows.trailing_zeros().div_ceil(2);
        (baby, rows / baby)
    }

    /// Rotation steps any aggregation with this layout performs.
    pub fn rotation_steps(&self) -> Vec<i64> {
        let mut steps = vec![2i64];
        for g in &self.groups {
            let (baby, _) = Self::bsgs(g.rows);
            steps.push(2 * baby as i64);
            let mut t = 2 * g.rows;
            while t < self.slots {
                steps.push(t as i64);
                t *= 2;
            }
        }
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    /// Reads the histograms back from decrypted slot vectors, one per group.
    pub fn decode(&self, slots: &[Vec<f64>]) -> Result<HistogramPair> {
        if slots.len() != self.groups.len() {
            return Err(SbError::Protocol(format!("{} histogram ciphertexts for {} groups", slots.len(), self.groups.len())));
        }
        let mut out = HistogramPair::zeros(&self.bucket_counts);
        for (grp, z) in self.groups.iter().zip(slots) {
            for f in 0..grp.features {
                let k = grp.first_feature + f;
                for v in 0..self.bucket_counts[k] {
                    let r = f * self.width + v;
                    out.g[k][v] = z[2 * r];
                    out.h[k][v] = z[2 * r + 1];
                }
            }
        }
        Ok(out)
    }
}

/// Encrypted histograms of the node holding `instances` (sorted or not).
///
/// `gh` holds the packed pair ciphertexts; sample `i` sits in ciphertext
/// `i / (S/2)` at pair `i % (S/2)`. Results are one ciphertext per group, one
/// level below `gh`.
pub fn aggregate_encrypted_gh<B: Backend>(
    b: &B,
    features: &SlotMatrix,
    buckets: &Buckets,
    layout: &HistLayout,
    instances: &[usize],
    gh: &[B::Ct],
) -> Result<Vec<B::Ct>> {
    let slots = b.slot_count();
    let half = slots / 2;
    if layout.slots != slots || features.rows > gh.len() * half {
        return Err(SbError::Input("gradient ciphertexts do not cover every sample".into()));
    }
    let mut member = vec![false; features.rows];
    for &i in instances {
        member[i] = true;
    }
    // Bucket index per (sample, feature), computed once.
    let bucket: Vec<usize> = (0..features.rows)
        .flat_map(|i| (0..buckets.features()).map(move |k| (i, k)))
        .map(|(i, k)| buckets.bucket_of(k, features.get(i, k)))
        .collect();
    let d = buckets.features();

    let mut out = Vec::with_capacity(layout.groups.len());
    for grp in &layout.groups {
        let m = grp.rows;
        let (baby, giant) = HistLayout::bsgs(m);
        // M[r, i] for this group, r = f * width + v.
        let entry = |r: usize, i: usize| -> bool {
            let (f, v) = (r / layout.width, r % layout.width);
            i < features.rows && member[i] && f < grp.features && bucket[i * d + grp.first_feature + f] == v
        };
        let mut total: Option<B::Ct> = None;
        for (c, x) in gh.iter().enumerate() {
            let base = c * half;
            if base >= features.rows {
                break;
            }
            let mut rots = Vec::with_capacity(baby);
            rots.push(x.clone());
            for _ in 1..baby {
                let next = b.rotate(rots.last().expect("non-empty"), 2)?;
                rots.push(next);
            }
            let mut acc: Option<B::Ct> = None;
            for g in (0..giant).rev() {
                let shift = 2 * g * baby;
                let mut inner: Option<B::Ct> = None;
                for (bi, xr) in rots.iter().enumerate() {
                    let j = g * baby + bi;
                    // rot(D_j, -shift)[s] = D_j[s - shift]
                    let mut diag = vec![0.0; slots];
                    let mut any = false;
                    for (s, dst) in diag.iter_mut().enumerate() {
                        let q = ((s + slots - shift) % slots) / 2;
                        let i = base + (q + j) % half;
                        if entry(q % m, i) {
                            *dst = 1.0;
                            any = true;
                        }
                    }
                    if !any {
                        continue;
                    }
                    let term = b.cmult(xr, &diag, MASK_BITS)?;
                    inner = Some(match inner {
                        Some(acc) => b.add(&acc, &term)?,
                        None => term,
                    });
                }
                let inner = match inner {
                    Some(t) => Some(b.rescale(&t, MASK_BITS)?),
                    None => None,
                };
                acc = match (acc, inner) {
                    (Some(a), inner) => {
                        let r = b.rotate(&a, 2 * baby as i64)?;
                        Some(match inner {
                            Some(t) => b.add(&r, &t)?,
                            None => r,
                        })
                    }
                    (None, inner) => inner,
                };
            }
            if let Some(y) = acc {
                total = Some(match total {
                    Some(t) => b.add(&t, &y)?,
                    None => y,
                });
            }
        }
        let mut y = match total {
            Some(y) => y,
            // No member sample: an encrypted zero of the usual shape.
            None => b.rescale(&b.cmult(&gh[0], &vec![0.0; slots], MASK_BITS)?, MASK_BITS)?,
        };
        let mut t = 2 * m;
        while t < slots {
            let r = b.rotate(&y, t as i64)?;
            y = b.add(&y, &r)?;
            t *= 2;
        }
        out.push(y);
    }
    Ok(out)
}

/// Right-child ciphertexts as parent minus left, group by group.
pub fn sibling_subtract_encrypted<B: Backend>(b: &B, parent: &[B::Ct], left: &[B::Ct]) -> Result<Vec<B::Ct>> {
    if parent.len() != left.len() {
        return Err(SbError::Input("histogram group counts differ".into()));
    }
    parent.iter().zip(left).map(|(p, l)| Ok(b.sub(p, l)?)).collect()
}
