//! Loss functions over embedding batches, each with an analytic gradient.

mod baselines;
mod clap;
mod dwd;

use serde::{Deserialize, Serialize};

use crate::encoders::EmbeddingBatch;
use crate::error::{Error, Result};

pub use baselines::{
    cae_recon, cosine_distance, cosine_similarity, multiview_hinge, multiview_hinge_grad, ntxent,
    ntxent_grad, reconstruction_error, reconstruction_error_grad, siamese_hinge,
    siamese_hinge_grad, NtXent, NtXentGrad, TripletGrad,
};
pub use clap::{
    clap_loss, clap_loss_grad, clap_loss_multi, clap_loss_multi_grad, clap_loss_parts,
    cosine_matrix, similarity_matrix, ClapGrad, ClapParts, SimilarityMatrix,
};
pub use dwd::{
    dwd_centroids, dwd_loss, dwd_loss_grad, dwd_loss_with, dwd_similarities, Centroids, DwdBatch,
    DwdGrad, DwdLoss, DwdOptions, Reduction,
};

/// Weights of the audio–text and audio–audio terms in the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 0.1,
            alpha2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        let w = Self { alpha1, alpha2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.alpha1 == 0.0 && self.alpha2 == 0.0 {
            return Err(Error::Config("loss weights cannot both be zero".into()));
        }
        Ok(())
    }
}

/// Settings for the comparison objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub margin: f64,
    pub ntxent_tau: f64,
    pub negatives: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            ntxent_tau: 0.1,
            negatives: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub clap: f64,
    pub dwd: DwdLoss,
}

/// `α₁ · mean_m L_at(m) + α₂ · (L_sm + L_cc)`.
pub fn total_loss(
    e_t: &EmbeddingBatch,
    audio: &DwdBatch,
    tau: f64,
    w: &LossWeights,
    opts: &DwdOptions,
) -> Result<TotalLoss> {
    let clap = clap_loss_multi(e_t, audio, tau)?;
    let dwd = dwd_loss_with(audio, opts, tau)?;
    Ok(TotalLoss {
        total: w.alpha1 * clap + w.alpha2 * dwd.total(),
        clap,
        dwd,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalGrad {
    pub loss: TotalLoss,
    pub d_text: Vec<f64>,
    pub d_audio: Vec<f64>,
    pub d_tau: f64,
}

pub fn total_loss_grad(
    e_t: &EmbeddingBatch,
    audio: &DwdBatch,
    tau: f64,
    w: &LossWeights,
    opts: &DwdOptions,
) -> Result<TotalGrad> {
    let c = clap_loss_multi_grad(e_t, audio, tau)?;
    let d = dwd_loss_grad(audio, opts, tau)?;
    let d_text = c.d_text.iter().map(|v| w.alpha1 * v).collect();
    let d_audio = c
        .d_audio
        .iter()
        .zip(&d.d_batch)
        .map(|(a, b)| w.alpha1 * a + w.alpha2 * b)
        .collect();
    Ok(TotalGrad {
        loss: TotalLoss {
            total: w.alpha1 * c.loss + w.alpha2 * d.loss.total(),
            clap: c.loss,
            dwd: d.loss,
        },
        d_text,
        d_audio,
        d_tau: w.alpha1 * c.d_tau + w.alpha2 * d.d_tau,
    })
}
