//! Small dense kernels over row-major slices.

/// `out = W x` for `W` of shape rows×cols.
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    w.chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `dx += Wᵀ dy`.
pub(crate) fn matvec_t_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (row, &g) in w.chunks_exact(cols).zip(dy) {
        if g == 0.0 {
            continue;
        }
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d += wv * g;
        }
    }
}

/// `G += dy ⊗ x`.
pub(crate) fn outer_acc(grad: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (row, &g) in grad.chunks_exact_mut(cols).zip(dy) {
        if g == 0.0 {
            continue;
        }
        for (d, &xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

pub(crate) fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
