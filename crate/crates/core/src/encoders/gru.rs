//! Stacked (optionally bidirectional) gated recurrent units with full
//! backpropagation through time.
//!
//! Gate layout per direction follows the common r, z, n ordering:
//! `r = σ(W_ir x + b_ir + W_hr h + b_hr)`, `z = σ(W_iz x + b_iz + W_hz h + b_hz)`,
//! `n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))`, `h' = (1 - z) ⊙ n + z ⊙ h`.

use super::ops::{add_assign, matvec, matvec_t_acc, outer_acc, sigmoid};
use super::Seq;
use crate::encoders::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub(crate) struct GruShape {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
}

impl GruShape {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_dim(&self) -> usize {
        self.hidden * self.directions()
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input
        } else {
            self.output_dim()
        }
    }
}

const DIRS: [&str; 2] = ["fwd", "bwd"];

fn name(prefix: &str, layer: usize, dir: usize, what: &str) -> String {
    format!("{prefix}.gru.l{layer}.{}.{what}", DIRS[dir])
}

pub(crate) fn param_shapes(prefix: &str, shape: GruShape) -> Vec<(String, Vec<usize>)> {
    let h = shape.hidden;
    let mut out = Vec::new();
    for layer in 0..shape.layers {
        let input = shape.layer_input(layer);
        for dir in 0..shape.directions() {
            out.push((name(prefix, layer, dir, "w_ih"), vec![3 * h, input]));
            out.push((name(prefix, layer, dir, "w_hh"), vec![3 * h, h]));
            out.push((name(prefix, layer, dir, "b_ih"), vec![3 * h]));
            out.push((name(prefix, layer, dir, "b_hh"), vec![3 * h]));
        }
    }
    out
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    gh_n: Vec<f64>,
}

/// One direction of one layer; `steps` are in processing order.
struct DirRun {
    steps: Vec<Step>,
}

pub(crate) struct GruCache {
    shape: GruShape,
    n_rows: usize,
    runs: Vec<Vec<DirRun>>,
}

fn run_direction(
    params: &ParamStore,
    prefix: &str,
    layer: usize,
    dir: usize,
    hidden: usize,
    input_dim: usize,
    xs: impl Iterator<Item = Vec<f64>>,
) -> Result<DirRun> {
    let w_ih = params.get(&name(prefix, layer, dir, "w_ih"))?.data();
    let w_hh = params.get(&name(prefix, layer, dir, "w_hh"))?.data();
    let b_ih = params.get(&name(prefix, layer, dir, "b_ih"))?.data();
    let b_hh = params.get(&name(prefix, layer, dir, "b_hh"))?.data();
    let h3 = 3 * hidden;
    let mut h = vec![0.0; hidden];
    let mut steps = Vec::new();
    for x in xs {
        let mut gi = matvec(w_ih, h3, input_dim, &x);
        add_assign(&mut gi, b_ih);
        let mut gh = matvec(w_hh, h3, hidden, &h);
        add_assign(&mut gh, b_hh);
        let r: Vec<f64> = (0..hidden).map(|k| sigmoid(gi[k] + gh[k])).collect();
        let z: Vec<f64> = (0..hidden)
            .map(|k| sigmoid(gi[hidden + k] + gh[hidden + k]))
            .collect();
        let gh_n = gh[2 * hidden..].to_vec();
        let n: Vec<f64> = (0..hidden)
            .map(|k| (gi[2 * hidden + k] + r[k] * gh_n[k]).tanh())
            .collect();
        let h_next: Vec<f64> = (0..hidden)
            .map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k])
            .collect();
        steps.push(Step {
            x,
            h_prev: std::mem::replace(&mut h, h_next),
            r,
            z,
            n,
            gh_n,
        });
    }
    Ok(DirRun { steps })
}

impl DirRun {
    fn output(&self, step: usize) -> Vec<f64> {
        let s = &self.steps[step];
        (0..s.n.len())
            .map(|k| (1.0 - s.z[k]) * s.n[k] + s.z[k] * s.h_prev[k])
            .collect()
    }
}

/// Runs the stack; returns the concatenated final states of the top layer
/// (forward state after the last frame, backward state after the first).
pub(crate) fn forward(
    params: &ParamStore,
    prefix: &str,
    shape: GruShape,
    x: &Seq,
) -> Result<(Vec<f64>, GruCache)> {
    let t_len = x.n_rows;
    let mut layer_in: Vec<Vec<f64>> = x.rows().map(<[f64]>::to_vec).collect();
    let mut runs = Vec::with_capacity(shape.layers);
    for layer in 0..shape.layers {
        let input_dim = shape.layer_input(layer);
        let mut dir_runs = Vec::new();
        let fwd = run_direction(
            params,
            prefix,
            layer,
            0,
            shape.hidden,
            input_dim,
            layer_in.iter().cloned(),
        )?;
        dir_runs.push(fwd);
        if shape.bidirectional {
            let bwd = run_direction(
                params,
                prefix,
                layer,
                1,
                shape.hidden,
                input_dim,
                layer_in.iter().rev().cloned(),
            )?;
            dir_runs.push(bwd);
        }
        // Outputs in original time order, directions concatenated.
        layer_in = (0..t_len)
            .map(|t| {
                let mut o = dir_runs[0].output(t);
                if shape.bidirectional {
                    o.extend(dir_runs[1].output(t_len - 1 - t));
                }
                o
            })
            .collect();
        runs.push(dir_runs);
    }
    let top = runs.last().expect("at least one layer");
    let mut out = top[0].output(t_len - 1);
    if shape.bidirectional {
        out.extend(top[1].output(t_len - 1));
    }
    Ok((
        out,
        GruCache {
            shape,
            n_rows: t_len,
            runs,
        },
    ))
}

/// BPTT for one direction. `d_out[s]` is the upstream gradient on the output of
/// processing step `s`. Returns gradients on each step's input, in processing order.
fn backward_direction(
    params: &ParamStore,
    grads: &mut ParamStore,
    prefix: &str,
    layer: usize,
    dir: usize,
    run: &DirRun,
    d_out: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let hidden = run.steps[0].h_prev.len();
    let input_dim = run.steps[0].x.len();
    let w_ih = params.get(&name(prefix, layer, dir, "w_ih"))?.data().to_vec();
    let w_hh = params.get(&name(prefix, layer, dir, "w_hh"))?.data().to_vec();
    let mut g_w_ih = vec![0.0; w_ih.len()];
    let mut g_w_hh = vec![0.0; w_hh.len()];
    let mut g_b_ih = vec![0.0; 3 * hidden];
    let mut g_b_hh = vec![0.0; 3 * hidden];

    let mut dx_all = vec![Vec::new(); run.steps.len()];
    let mut carry = vec![0.0; hidden];
    for (s, step) in run.steps.iter().enumerate().rev() {
        let dh: Vec<f64> = d_out[s].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let mut dgi = vec![0.0; 3 * hidden];
        let mut dgh = vec![0.0; 3 * hidden];
        let mut dh_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let (r, z, n) = (step.r[k], step.z[k], step.n[k]);
            let dn = dh[k] * (1.0 - z);
            let dz = dh[k] * (step.h_prev[k] - n);
            dh_prev[k] = dh[k] * z;
            let da_n = dn * (1.0 - n * n);
            let dr = da_n * step.gh_n[k];
            let da_r = dr * r * (1.0 - r);
            let da_z = dz * z * (1.0 - z);
            dgi[k] = da_r;
            dgi[hidden + k] = da_z;
            dgi[2 * hidden + k] = da_n;
            dgh[k] = da_r;
            dgh[hidden + k] = da_z;
            dgh[2 * hidden + k] = da_n * r;
        }
        outer_acc(&mut g_w_ih, input_dim, &dgi, &step.x);
        outer_acc(&mut g_w_hh, hidden, &dgh, &step.h_prev);
        add_assign(&mut g_b_ih, &dgi);
        add_assign(&mut g_b_hh, &dgh);
        let mut dx = vec![0.0; input_dim];
        matvec_t_acc(&w_ih, input_dim, &dgi, &mut dx);
        matvec_t_acc(&w_hh, hidden, &dgh, &mut dh_prev);
        dx_all[s] = dx;
        carry = dh_prev;
    }
    add_assign(grads.get_mut(&name(prefix, layer, dir, "w_ih"))?.data_mut(), &g_w_ih);
    add_assign(grads.get_mut(&name(prefix, layer, dir, "w_hh"))?.data_mut(), &g_w_hh);
    add_assign(grads.get_mut(&name(prefix, layer, dir, "b_ih"))?.data_mut(), &g_b_ih);
    add_assign(grads.get_mut(&name(prefix, layer, dir, "b_hh"))?.data_mut(), &g_b_hh);
    Ok(dx_all)
}

/// Accumulates parameter gradients; returns gradients w.r.t. the input rows (flattened).
pub(crate) fn backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    prefix: &str,
    cache: &GruCache,
    d_out: &[f64],
) -> Result<Vec<f64>> {
    let shape = cache.shape;
    let (t_len, h) = (cache.n_rows, shape.hidden);
    // Gradient on each layer output, original time order, directions concatenated.
    let mut d_layer: Vec<Vec<f64>> = vec![vec![0.0; shape.output_dim()]; t_len];
    d_layer[t_len - 1][..h].copy_from_slice(&d_out[..h]);
    if shape.bidirectional {
        // The backward direction's final state is its output at original time 0.
        d_layer[0][h..].copy_from_slice(&d_out[h..]);
    }
    for layer in (0..shape.layers).rev() {
        let runs = &cache.runs[layer];
        let input_dim = shape.layer_input(layer);
        let mut d_in = vec![vec![0.0; input_dim]; t_len];

        let d_fwd: Vec<Vec<f64>> = d_layer.iter().map(|d| d[..h].to_vec()).collect();
        let dx = backward_direction(params, grads, prefix, layer, 0, &runs[0], &d_fwd)?;
        for (acc, g) in d_in.iter_mut().zip(&dx) {
            add_assign(acc, g);
        }
        if shape.bidirectional {
            let d_bwd: Vec<Vec<f64>> = d_layer.iter().rev().map(|d| d[h..].to_vec()).collect();
            let dx = backward_direction(params, grads, prefix, layer, 1, &runs[1], &d_bwd)?;
            for (acc, g) in d_in.iter_mut().rev().zip(&dx) {
                add_assign(acc, g);
            }
        }
        d_layer = d_in;
    }
    Ok(d_layer.concat())
}
