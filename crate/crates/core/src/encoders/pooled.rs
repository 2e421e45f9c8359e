//! Mean pooling over frames followed by a two-layer tanh perceptron.

use super::ops::{matvec, matvec_t_acc, outer_acc};
use super::Seq;
use crate::encoders::ParamStore;
use crate::error::Result;

pub(crate) struct PooledCache {
    n_rows: usize,
    mean: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

pub(crate) fn param_shapes(prefix: &str, input: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        (format!("{prefix}.mlp.w1"), vec![hidden, input]),
        (format!("{prefix}.mlp.b1"), vec![hidden]),
        (format!("{prefix}.mlp.w2"), vec![hidden, hidden]),
        (format!("{prefix}.mlp.b2"), vec![hidden]),
    ]
}

pub(crate) fn forward(
    params: &ParamStore,
    prefix: &str,
    hidden: usize,
    x: &Seq,
) -> Result<(Vec<f64>, PooledCache)> {
    let mut mean = vec![0.0; x.dim];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / x.n_rows as f64;
    mean.iter_mut().for_each(|m| *m *= inv);

    let w1 = params.get(&format!("{prefix}.mlp.w1"))?.data();
    let b1 = params.get(&format!("{prefix}.mlp.b1"))?.data();
    let w2 = params.get(&format!("{prefix}.mlp.w2"))?.data();
    let b2 = params.get(&format!("{prefix}.mlp.b2"))?.data();

    let h1: Vec<f64> = matvec(w1, hidden, x.dim, &mean)
        .into_iter()
        .zip(b1)
        .map(|(a, b)| (a + b).tanh())
        .collect();
    let h2: Vec<f64> = matvec(w2, hidden, hidden, &h1)
        .into_iter()
        .zip(b2)
        .map(|(a, b)| (a + b).tanh())
        .collect();
    Ok((
        h2.clone(),
        PooledCache {
            n_rows: x.n_rows,
            mean,
            h1,
            h2,
        },
    ))
}

/// Accumulates parameter gradients and returns the gradient w.r.t. every input row
/// (flattened, rows × dim).
pub(crate) fn backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    prefix: &str,
    hidden: usize,
    cache: &PooledCache,
    d_out: &[f64],
) -> Result<Vec<f64>> {
    let dim = cache.mean.len();
    let w1 = params.get(&format!("{prefix}.mlp.w1"))?.data();
    let w2 = params.get(&format!("{prefix}.mlp.w2"))?.data();

    let da2: Vec<f64> = d_out
        .iter()
        .zip(&cache.h2)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    outer_acc(grads.get_mut(&format!("{prefix}.mlp.w2"))?.data_mut(), hidden, &da2, &cache.h1);
    super::ops::add_assign(grads.get_mut(&format!("{prefix}.mlp.b2"))?.data_mut(), &da2);
    let mut dh1 = vec![0.0; hidden];
    matvec_t_acc(w2, hidden, &da2, &mut dh1);

    let da1: Vec<f64> = dh1
        .iter()
        .zip(&cache.h1)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    outer_acc(grads.get_mut(&format!("{prefix}.mlp.w1"))?.data_mut(), dim, &da1, &cache.mean);
    super::ops::add_assign(grads.get_mut(&format!("{prefix}.mlp.b1"))?.data_mut(), &da1);
    let mut dmean = vec![0.0; dim];
    matvec_t_acc(w1, dim, &da1, &mut dmean);

    let inv = 1.0 / cache.n_rows as f64;
    let row: Vec<f64> = dmean.iter().map(|g| g * inv).collect();
    Ok(row.repeat(cache.n_rows))
}
