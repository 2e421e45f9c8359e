use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let p = labels.iter().filter(|&&l| l).count();
    Ok((p, labels.len() - p))
}

/// Indices sorted by descending score.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Exact average precision, `Σ_groups Δtp · precision / P`. Trials with equal scores share one threshold, so the
/// result does not depend on their order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, _) = check(scores, labels)?;
    if p == 0 {
        return Err(Error::Invalid("average precision needs at least one positive".into()));
    }
    let idx = ranked(scores);
    let (mut tp, mut seen, mut acc) = (0usize, 0usize, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        let mut dtp = 0usize;
        while k < idx.len() && scores[idx[k]] == s {
            dtp += labels[idx[k]] as usize;
            seen += 1;
            k += 1;
        }
        if dtp > 0 {
            tp += dtp;
            acc += dtp as f64 * tp as f64 / seen as f64;
        }
    }
    Ok(acc / p as f64)
}

/// Equal error rate. Thresholds run over the unique scores plus one above them
/// all; a trial is accepted when its score is at least the threshold. The rate is
/// interpolated linearly where `FAR − FRR` changes sign.
pub fn equal_error_rate(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = check(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::Invalid("equal error rate needs both positive and negative trials".into()));
    }
    let mut idx = ranked(scores);
    idx.reverse();
    let (pf, nf) = (p as f64, n as f64);
    // Ascending sweep: at the lowest threshold everything is accepted.
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    let mut prev: Option<(f64, f64)> = None;
    let mut k = 0;
    loop {
        let far = (n - neg_below) as f64 / nf;
        let frr = pos_below as f64 / pf;
        let diff = far - frr;
        if diff <= 0.0 {
            return Ok(match prev {
                Some((far0, frr0)) if diff < 0.0 => {
                    let d0 = far0 - frr0;
                    let t = d0 / (d0 - diff);
                    far0 + t * (far - far0)
                }
                _ => far,
            });
        }
        if k == idx.len() {
            unreachable!("FAR reaches zero above the top score");
        }
        prev = Some((far, frr));
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            k += 1;
        }
    }
}
