//! Dense-layer primitives over flat row-major weight slices.

pub const SIGMA_MIN: f64 = 1e-3;

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `out = W x + b`, `W` is `out.len() x x.len()`.
pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for ((o, row), bias) in out.iter_mut().zip(w.chunks_exact(cols)).zip(b) {
        *o = bias + dot(row, x);
    }
}

/// Only rows in `rows` of `W x + b`.
pub fn affine_rows(w: &[f64], b: &[f64], x: &[f64], rows: std::ops::Range<usize>, out: &mut [f64]) {
    let cols = x.len();
    for (o, r) in out.iter_mut().zip(rows) {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Accumulates the gradients of `y = W x + b` given `dy`.
/// `dx`, when present, is accumulated into (not overwritten).
pub fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let cols = x.len();
    for ((g, dw_row), d) in dy.iter().zip(dw.chunks_exact_mut(cols)).zip(db.iter_mut()) {
        *d += g;
        if *g != 0.0 {
            for (dwi, xi) in dw_row.iter_mut().zip(x) {
                *dwi += g * xi;
            }
        }
    }
    if let Some(dx) = dx {
        for (g, row) in dy.iter().zip(w.chunks_exact(cols)) {
            if *g != 0.0 {
                for (dxi, wi) in dx.iter_mut().zip(row) {
                    *dxi += g * wi;
                }
            }
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Diagonal Gaussian KL(q || p), summed over dimensions.
pub fn gaussian_kl(mu_q: &[f64], sigma_q: &[f64], mu_p: &[f64], sigma_p: &[f64]) -> f64 {
    mu_q.iter()
        .zip(sigma_q)
        .zip(mu_p.iter().zip(sigma_p))
        .map(|((mq, sq), (mp, sp))| {
            let d = mq - mp;
            (sp / sq).ln() + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5
        })
        .sum()
}

/// Partial derivatives of [`gaussian_kl`] with respect to each argument,
/// scaled by `scale` and accumulated into the provided buffers.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_kl_backward(
    mu_q: &[f64],
    sigma_q: &[f64],
    mu_p: &[f64],
    sigma_p: &[f64],
    scale: f64,
    d_mu_q: Option<&mut [f64]>,
    d_sigma_q: Option<&mut [f64]>,
    d_mu_p: Option<&mut [f64]>,
    d_sigma_p: Option<&mut [f64]>,
) {
    let n = mu_q.len();
    if let Some(g) = d_mu_q {
        for i in 0..n {
            g[i] += scale * (mu_q[i] - mu_p[i]) / (sigma_p[i] * sigma_p[i]);
        }
    }
    if let Some(g) = d_sigma_q {
        for i in 0..n {
            g[i] += scale * (-1.0 / sigma_q[i] + sigma_q[i] / (sigma_p[i] * sigma_p[i]));
        }
    }
    if let Some(g) = d_mu_p {
        for i in 0..n {
            g[i] -= scale * (mu_q[i] - mu_p[i]) / (sigma_p[i] * sigma_p[i]);
        }
    }
    if let Some(g) = d_sigma_p {
        for i in 0..n {
            let d = mu_q[i] - mu_p[i];
            let sp = sigma_p[i];
            g[i] += scale * (1.0 / sp - (sigma_q[i] * sigma_q[i] + d * d) / (sp * sp * sp));
        }
    }
}
