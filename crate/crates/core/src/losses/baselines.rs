//! Objectives of the comparison systems: cosine hinge (same-view and
//! cross-view), NT-Xent with K negatives, and frame reconstruction error.

use crate::encoders::{dot, norm};
use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;

fn check_pair(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Shape(format!("vectors of width {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Invalid("cosine of a zero-norm vector".into()));
    }
    Ok((nu, nv))
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = check_pair(u, v)?;
    Ok(dot(u, v) / (nu * nv))
}

/// `1 - cos(u, v)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    cosine_similarity(u, v).map(|c| 1.0 - c)
}

/// Cosine with its gradients w.r.t. both arguments.
fn cosine_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = check_pair(u, v)?;
    let c = dot(u, v) / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - c * a / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - c * b / (nv * nv))
        .collect();
    Ok((c, du, dv))
}

/// `max(0, m + d(a, p) - d(a, n))`.
pub fn siamese_hinge(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    let dp = cosine_distance(anchor, positive)?;
    let dn = cosine_distance(anchor, negative)?;
    Ok((margin + dp - dn).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negative: Vec<f64>,
}

pub fn siamese_hinge_grad(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
) -> Result<TripletGrad> {
    let (cp, da_p, dp) = cosine_grad(anchor, positive)?;
    let (cn, da_n, dn) = cosine_grad(anchor, negative)?;
    let raw = margin + (1.0 - cp) - (1.0 - cn);
    let d = anchor.len();
    if raw <= 0.0 {
        return Ok(TripletGrad {
            loss: 0.0,
            d_anchor: vec![0.0; d],
            d_positive: vec![0.0; d],
            d_negative: vec![0.0; d],
        });
    }
    // loss = m - cos(a,p) + cos(a,n)
    Ok(TripletGrad {
        loss: raw,
        d_anchor: da_p.iter().zip(&da_n).map(|(p, n)| n - p).collect(),
        d_positive: dp.iter().map(|v| -v).collect(),
        d_negative: dn,
    })
}

/// Cross-view hinge: acoustic embedding of `x⁺` against the written embeddings of
/// its own label `c⁺` and a different label `c⁻`.
pub fn multiview_hinge(f_x_pos: &[f64], g_c_pos: &[f64], g_c_neg: &[f64], margin: f64) -> Result<f64> {
    siamese_hinge(f_x_pos, g_c_pos, g_c_neg, margin)
}

pub fn multiview_hinge_grad(
    f_x_pos: &[f64],
    g_c_pos: &[f64],
    g_c_neg: &[f64],
    margin: f64,
) -> Result<TripletGrad> {
    siamese_hinge_grad(f_x_pos, g_c_pos, g_c_neg, margin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtXent {
    pub loss: f64,
    /// Set when there were no negatives; the softmax had a single candidate.
    pub single_candidate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtXentGrad {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `-log softmax(sim/τ)` of the positive among `{p, n_1..n_K}`.
pub fn ntxent(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>], tau: f64) -> Result<NtXent> {
    check_tau(tau)?;
    let mut logits = vec![cosine_similarity(anchor, positive)? / tau];
    for n in negatives {
        logits.push(cosine_similarity(anchor, n)? / tau);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(NtXent {
        loss: lse - logits[0],
        single_candidate: negatives.is_empty(),
    })
}

pub fn ntxent_grad(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>], tau: f64) -> Result<NtXentGrad> {
    check_tau(tau)?;
    let mut cands = Vec::with_capacity(negatives.len() + 1);
    cands.push(cosine_grad(anchor, positive)?);
    for n in negatives {
        cands.push(cosine_grad(anchor, n)?);
    }
    let logits: Vec<f64> = cands.iter().map(|c| c.0 / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let loss = max + z.ln() - logits[0];
    let d = anchor.len();
    let mut d_anchor = vec![0.0; d];
    let mut d_others = Vec::with_capacity(cands.len());
    for (idx, (_, da, dv)) in cands.iter().enumerate() {
        let mut g = (logits[idx] - max).exp() / z;
        if idx == 0 {
            g -= 1.0;
        }
        let g = g / tau;
        for q in 0..d {
            d_anchor[q] += g * da[q];
        }
        d_others.push(dv.iter().map(|v| g * v).collect::<Vec<f64>>());
    }
    let d_positive = d_others.remove(0);
    Ok(NtXentGrad {
        loss,
        d_anchor,
        d_positive,
        d_negatives: d_others,
    })
}

/// `Σ_t ‖target_t − predicted_t‖²` over row-major frames of equal shape.
pub fn reconstruction_error(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "target has {} values, prediction {}",
            target.len(),
            predicted.len()
        )));
    }
    Ok(target.iter().zip(predicted).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Gradient of [`reconstruction_error`] w.r.t. the prediction.
pub fn reconstruction_error_grad(target: &[f64], predicted: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = reconstruction_error(target, predicted)?;
    Ok((loss, predicted.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect()))
}

/// Correspondence-autoencoder reconstruction loss between feature sequences.
pub fn cae_recon(target: &FeatureSequence, predicted: &FeatureSequence) -> Result<f64> {
    if target.n_frames() != predicted.n_frames() || target.n_dims() != predicted.n_dims() {
        return Err(Error::Shape(format!(
            "target {}x{} vs prediction {}x{}",
            target.n_frames(),
            target.n_dims(),
            predicted.n_frames(),
            predicted.n_dims()
        )));
    }
    let t: Vec<f64> = target.as_slice().iter().map(|&v| v as f64).collect();
    let p: Vec<f64> = predicted.as_slice().iter().map(|&v| v as f64).collect();
    reconstruction_error(&t, &p)
}
