//! Temperature-scaled audio–text similarity and the symmetric contrastive loss.

use crate::encoders::{logit_scale, EmbeddingBatch};
use crate::error::{Error, Result};

use super::DwdBatch;

/// Row-major score matrix; rows index text, columns index audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n_rows: usize,
    n_cols: usize,
    scores: Vec<f64>,
    scaled: bool,
}

impl SimilarityMatrix {
    pub fn new(n_rows: usize, n_cols: usize, scores: Vec<f64>, scaled: bool) -> Result<Self> {
        if scores.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} scores for a {n_rows}x{n_cols} matrix",
                scores.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite similarity".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            scores,
            scaled,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], scaled: bool) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged similarity rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat(), scaled)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n_cols + j]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        let mut scores = vec![0.0; self.scores.len()];
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                scores[j * self.n_rows + i] = self.get(i, j);
            }
        }
        SimilarityMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            scores,
            scaled: self.scaled,
        }
    }
}

fn gram(e_t: &EmbeddingBatch, e_a: &EmbeddingBatch) -> Result<Vec<f64>> {
    if e_t.len() != e_a.len() || e_t.dim() != e_a.dim() {
        return Err(Error::Shape(format!(
            "text {}x{} vs audio {}x{}",
            e_t.len(),
            e_t.dim(),
            e_a.len(),
            e_a.dim()
        )));
    }
    let mut out = Vec::with_capacity(e_t.len() * e_a.len());
    for t in e_t.rows() {
        for a in e_a.rows() {
            out.push(crate::encoders::dot(t, a));
        }
    }
    Ok(out)
}

/// `C = exp(τ) · E_t E_aᵀ`, with `exp(τ)` clamped at 100.
pub fn similarity_matrix(e_t: &EmbeddingBatch, e_a: &EmbeddingBatch, tau: f64) -> Result<SimilarityMatrix> {
    let (scale, _) = logit_scale(tau);
    let n = e_t.len();
    let scores = gram(e_t, e_a)?.into_iter().map(|v| scale * v).collect();
    SimilarityMatrix::new(n, n, scores, true)
}

/// Unscaled `E_t E_aᵀ`.
pub fn cosine_matrix(e_t: &EmbeddingBatch, e_a: &EmbeddingBatch) -> Result<SimilarityMatrix> {
    let n = e_t.len();
    SimilarityMatrix::new(n, n, gram(e_t, e_a)?, false)
}

/// Directional terms of the symmetric loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClapParts {
    /// Row-wise softmax cross-entropy against the diagonal.
    pub audio: f64,
    /// Column-wise softmax cross-entropy against the diagonal.
    pub text: f64,
}

impl ClapParts {
    pub fn total(&self) -> f64 {
        0.5 * (self.audio + self.text)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_square(c: &SimilarityMatrix) -> Result<usize> {
    if c.n_rows != c.n_cols || c.n_rows == 0 {
        return Err(Error::Shape(format!(
            "contrastive loss needs a non-empty square matrix, got {}x{}",
            c.n_rows, c.n_cols
        )));
    }
    Ok(c.n_rows)
}

pub fn clap_loss_parts(c: &SimilarityMatrix) -> Result<ClapParts> {
    let n = check_square(c)?;
    let audio = (0..n)
        .map(|i| log_sum_exp((0..n).map(|j| c.get(i, j))) - c.get(i, i))
        .sum::<f64>()
        / n as f64;
    let text = (0..n)
        .map(|j| log_sum_exp((0..n).map(|i| c.get(i, j))) - c.get(j, j))
        .sum::<f64>()
        / n as f64;
    Ok(ClapParts { audio, text })
}

/// `½ (L_audio + L_text)`.
pub fn clap_loss(c: &SimilarityMatrix) -> Result<f64> {
    clap_loss_parts(c).map(|p| p.total())
}

/// Loss and `∂L/∂C`.
pub fn clap_loss_grad(c: &SimilarityMatrix) -> Result<(f64, Vec<f64>)> {
    let n = check_square(c)?;
    let inv = 0.5 / n as f64;
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        let lse = log_sum_exp((0..n).map(|j| c.get(i, j)));
        for j in 0..n {
            grad[i * n + j] += inv * (c.get(i, j) - lse).exp();
        }
        grad[i * n + i] -= inv;
    }
    for j in 0..n {
        let lse = log_sum_exp((0..n).map(|i| c.get(i, j)));
        for i in 0..n {
            grad[i * n + j] += inv * (c.get(i, j) - lse).exp();
        }
        grad[j * n + j] -= inv;
    }
    Ok((clap_loss(c)?, grad))
}

/// Mean of the symmetric loss over the M per-instance audio slices.
pub fn clap_loss_multi(e_t: &EmbeddingBatch, audio: &DwdBatch, tau: f64) -> Result<f64> {
    check_multi(e_t, audio)?;
    let mut total = 0.0;
    for m in 0..audio.m() {
        total += clap_loss(&similarity_matrix(e_t, &audio.slice(m), tau)?)?;
    }
    Ok(total / audio.m() as f64)
}

fn check_multi(e_t: &EmbeddingBatch, audio: &DwdBatch) -> Result<()> {
    if e_t.len() != audio.n() || e_t.dim() != audio.dim() {
        return Err(Error::Shape(format!(
            "text batch {}x{} does not match {} classes of width {}",
            e_t.len(),
            e_t.dim(),
            audio.n(),
            audio.dim()
        )));
    }
    Ok(())
}

/// Gradients of the averaged symmetric loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ClapGrad {
    pub loss: f64,
    /// N×D, row-major.
    pub d_text: Vec<f64>,
    /// N×M×D, same layout as the batch.
    pub d_audio: Vec<f64>,
    pub d_tau: f64,
}

pub fn clap_loss_multi_grad(e_t: &EmbeddingBatch, audio: &DwdBatch, tau: f64) -> Result<ClapGrad> {
    check_multi(e_t, audio)?;
    let (n, m_count, d) = (audio.n(), audio.m(), audio.dim());
    let (scale, dscale) = logit_scale(tau);
    let inv_m = 1.0 / m_count as f64;
    let mut out = ClapGrad {
        loss: 0.0,
        d_text: vec![0.0; n * d],
        d_audio: vec![0.0; n * m_count * d],
        d_tau: 0.0,
    };
    for m in 0..m_count {
        let slice = audio.slice(m);
        let raw = gram(e_t, &slice)?;
        let c = SimilarityMatrix::new(n, n, raw.iter().map(|v| scale * v).collect(), true)?;
        let (loss, g) = clap_loss_grad(&c)?;
        out.loss += inv_m * loss;
        for i in 0..n {
            for j in 0..n {
                let gij = inv_m * g[i * n + j];
                if gij == 0.0 {
                    continue;
                }
                out.d_tau += gij * raw[i * n + j] * dscale;
                let t_row = e_t.row(i);
                let a_row = slice.row(j);
                for k in 0..d {
                    out.d_text[i * d + k] += gij * scale * a_row[k];
                    out.d_audio[(j * m_count + m) * d + k] += gij * scale * t_row[k];
                }
            }
        }
    }
    Ok(out)
}
