//! Word-discrimination loss over N classes × M instances of audio embeddings.
//!
//! Each instance is compared by cosine against its own class's leave-one-out
//! centroid and against the full centroids of every other class. The softmax
//! term and the contrastive-centroid term are then summed over all instances.

use serde::{Deserialize, Serialize};

use crate::encoders::{dot, logit_scale, norm, EmbeddingBatch};
use crate::error::{Error, Result};

/// N classes × M instances × D, row-major with instances of a class contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DwdBatch {
    n: usize,
    m: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DwdBatch {
    pub fn new(n: usize, m: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 || dim == 0 || data.len() != n * m * dim {
            return Err(Error::Shape(format!(
                "{} values for a {n}x{m}x{dim} batch",
                data.len()
            )));
        }
        Ok(Self { n, m, dim, data })
    }

    /// Groups an `N·M`-row batch whose rows are ordered class-major.
    pub fn from_embeddings(e: &EmbeddingBatch, n: usize, m: usize) -> Result<Self> {
        if e.len() != n * m {
            return Err(Error::Shape(format!("{} rows is not {n}x{m}", e.len())));
        }
        Self::new(n, m, e.dim(), e.as_slice().to_vec())
    }

    pub fn from_nested(classes: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = classes.len();
        let m = classes.first().map_or(0, Vec::len);
        let dim = classes.first().and_then(|c| c.first()).map_or(0, Vec::len);
        if classes.iter().any(|c| c.len() != m || c.iter().any(|v| v.len() != dim)) {
            return Err(Error::Shape("ragged class/instance layout".into()));
        }
        Self::new(n, m, dim, classes.iter().flatten().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, class: usize, instance: usize) -> &[f64] {
        let o = (class * self.m + instance) * self.dim;
        &self.data[o..o + self.dim]
    }

    /// The `m`-th instance of every class, as an N×D batch.
    pub fn slice(&self, m: usize) -> EmbeddingBatch {
        EmbeddingBatch::from_rows((0..self.n).map(|j| self.get(j, m).to_vec()).collect())
            .expect("non-empty batch")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DwdOptions {
    /// Sum or average the per-instance terms of both components.
    pub reduction: Reduction,
    /// Multiply cosines by `exp(τ)` before the softmax and centroid terms.
    pub tau_scaled: bool,
}

impl Default for DwdOptions {
    fn default() -> Self {
        Self {
            reduction: Reduction::Sum,
            tau_scaled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwdLoss {
    pub sm: f64,
    pub cc: f64,
}

impl DwdLoss {
    pub fn total(&self) -> f64 {
        self.sm + self.cc
    }
}

/// Centroids of each class: leave-one-out (N×M×D) and full (N×D).
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    pub loo: Vec<f64>,
    pub full: Vec<f64>,
}

pub fn dwd_centroids(batch: &DwdBatch) -> Result<Centroids> {
    if batch.m < 2 {
        return Err(Error::Invalid(format!(
            "leave-one-out centroids need at least 2 instances per class, got {}",
            batch.m
        )));
    }
    let (n, m, d) = (batch.n, batch.m, batch.dim);
    let mut full = vec![0.0; n * d];
    let mut loo = vec![0.0; n * m * d];
    for j in 0..n {
        let mut sum = vec![0.0; d];
        for i in 0..m {
            for (s, v) in sum.iter_mut().zip(batch.get(j, i)) {
                *s += v;
            }
        }
        for k in 0..d {
            full[j * d + k] = sum[k] / m as f64;
        }
        for i in 0..m {
            let e = batch.get(j, i);
            for k in 0..d {
                loo[(j * m + i) * d + k] = (sum[k] - e[k]) / (m - 1) as f64;
            }
        }
    }
    Ok(Centroids { loo, full })
}

fn centroid<'a>(batch: &DwdBatch, c: &'a Centroids, j: usize, i: usize, k: usize) -> &'a [f64] {
    let d = batch.dim;
    if k == j {
        &c.loo[(j * batch.m + i) * d..(j * batch.m + i + 1) * d]
    } else {
        &c.full[k * d..(k + 1) * d]
    }
}

/// `S[j][i][k]`: cosine of instance `(j, i)` with the centroid of class `k`
/// (leave-one-out when `k == j`). Flattened N×M×N.
pub fn dwd_similarities(batch: &DwdBatch, c: &Centroids) -> Result<Vec<f64>> {
    let (n, m, d) = (batch.n, batch.m, batch.dim);
    if c.loo.len() != n * m * d || c.full.len() != n * d {
        return Err(Error::Shape("centroids do not match batch".into()));
    }
    let mut s = vec![0.0; n * m * n];
    for j in 0..n {
        for i in 0..m {
            let e = batch.get(j, i);
            let e_norm = norm(e);
            if e_norm == 0.0 {
                return Err(Error::Invalid(format!("zero-norm embedding ({j}, {i})")));
            }
            for k in 0..n {
                let cv = centroid(batch, c, j, i, k);
                let c_norm = norm(cv);
                if c_norm == 0.0 {
                    return Err(Error::DegenerateCentroid { class: k });
                }
                s[(j * m + i) * n + k] = dot(e, cv) / (e_norm * c_norm);
            }
        }
    }
    Ok(s)
}

fn check_classes(batch: &DwdBatch) -> Result<()> {
    if batch.n < 2 {
        return Err(Error::Invalid(format!(
            "word discrimination loss needs at least 2 classes, got {}",
            batch.n
        )));
    }
    Ok(())
}

fn scale_for(opts: &DwdOptions, tau: f64) -> (f64, f64) {
    if opts.tau_scaled {
        logit_scale(tau)
    } else {
        (1.0, 0.0)
    }
}

fn reduction_factor(opts: &DwdOptions, batch: &DwdBatch) -> f64 {
    match opts.reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / (batch.n * batch.m) as f64,
    }
}

fn terms(batch: &DwdBatch, s: &[f64], scale: f64) -> (f64, f64) {
    let (n, m) = (batch.n, batch.m);
    let (mut sm, mut cc) = (0.0, 0.0);
    for j in 0..n {
        for i in 0..m {
            let row: Vec<f64> = s[(j * m + i) * n..(j * m + i + 1) * n]
                .iter()
                .map(|v| scale * v)
                .collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            sm += lse - row[j];
            let hardest = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            cc += (1.0 - row[j]) + hardest;
        }
    }
    (sm, cc)
}

pub fn dwd_loss_with(batch: &DwdBatch, opts: &DwdOptions, tau: f64) -> Result<DwdLoss> {
    check_classes(batch)?;
    let c = dwd_centroids(batch)?;
    let s = dwd_similarities(batch, &c)?;
    let (scale, _) = scale_for(opts, tau);
    let (sm, cc) = terms(batch, &s, scale);
    let r = reduction_factor(opts, batch);
    Ok(DwdLoss {
        sm: r * sm,
        cc: r * cc,
    })
}

/// Unscaled cosines, summed over all instances.
pub fn dwd_loss(batch: &DwdBatch) -> Result<DwdLoss> {
    dwd_loss_with(batch, &DwdOptions::default(), 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwdGrad {
    pub loss: DwdLoss,
    /// Same layout as the batch.
    pub d_batch: Vec<f64>,
    pub d_tau: f64,
}

/// Gradient of `L_sm + L_cc` w.r.t. every embedding (and `τ` when scaled).
/// The max over other classes routes its gradient to the first maximiser.
pub fn dwd_loss_grad(batch: &DwdBatch, opts: &DwdOptions, tau: f64) -> Result<DwdGrad> {
    check_classes(batch)?;
    let (n, m, d) = (batch.n, batch.m, batch.dim);
    let c = dwd_centroids(batch)?;
    let s = dwd_similarities(batch, &c)?;
    let (scale, dscale) = scale_for(opts, tau);
    let r = reduction_factor(opts, batch);
    let (sm, cc) = terms(batch, &s, scale);

    let mut d_batch = vec![0.0; n * m * d];
    let mut d_loo = vec![0.0; n * m * d];
    let mut d_full = vec![0.0; n * d];
    let mut d_tau = 0.0;

    for j in 0..n {
        for i in 0..m {
            let base = (j * m + i) * n;
            let row: Vec<f64> = s[base..base + n].iter().map(|v| scale * v).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let mut hardest = None::<(usize, f64)>;
            for (k, &v) in row.iter().enumerate() {
                if k != j && hardest.map_or(true, |(_, h)| v > h) {
                    hardest = Some((k, v));
                }
            }
            let hardest = hardest.expect("n >= 2").0;

            // dL/d(scaled S) for this instance's row.
            let mut g_row: Vec<f64> = row.iter().map(|v| (v - max).exp() / z).collect();
            g_row[j] -= 2.0;
            g_row[hardest] += 1.0;

            let e = batch.get(j, i);
            let e_norm = norm(e);
            for k in 0..n {
                let g = r * g_row[k];
                if g == 0.0 {
                    continue;
                }
                d_tau += g * s[base + k] * dscale;
                let gs = g * scale;
                let cv = centroid(batch, &c, j, i, k);
                let c_norm = norm(cv);
                let cos = s[base + k];
                let inv = 1.0 / (e_norm * c_norm);
                let de = &mut d_batch[(j * m + i) * d..(j * m + i + 1) * d];
                for q in 0..d {
                    de[q] += gs * (cv[q] * inv - cos * e[q] / (e_norm * e_norm));
                }
                let dc = if k == j {
                    &mut d_loo[(j * m + i) * d..(j * m + i + 1) * d]
                } else {
                    &mut d_full[k * d..(k + 1) * d]
                };
                for q in 0..d {
                    dc[q] += gs * (e[q] * inv - cos * cv[q] / (c_norm * c_norm));
                }
            }
        }
    }

    // Centroid gradients back onto the instances that formed them.
    for j in 0..n {
        for i in 0..m {
            let loo_g = d_loo[(j * m + i) * d..(j * m + i + 1) * d].to_vec();
            for other in (0..m).filter(|&o| o != i) {
                let dst = &mut d_batch[(j * m + other) * d..(j * m + other + 1) * d];
                for q in 0..d {
                    dst[q] += loo_g[q] / (m - 1) as f64;
                }
            }
            let dst = &mut d_batch[(j * m + i) * d..(j * m + i + 1) * d];
            for q in 0..d {
                dst[q] += d_full[j * d + q] / m as f64;
            }
        }
    }

    Ok(DwdGrad {
        loss: DwdLoss {
            sm: r * sm,
            cc: r * cc,
        },
        d_batch,
        d_tau,
    })
}
