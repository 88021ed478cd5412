//! Dense kernels shared by the forward and backward passes. Matrices are
//! row-major; weights are stored `(in, out)`.

pub const LN_EPS: f64 = 1e-6;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `y = x W + b` for `rows` rows of width `inp`.
pub fn linear(x: &[f64], rows: usize, inp: usize, w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * inp);
    debug_assert_eq!(w.len(), inp * out);
    let mut y = Vec::with_capacity(rows * out);
    for r in 0..rows {
        y.extend_from_slice(b);
        let yr = &mut y[r * out..];
        for (i, &xi) in x[r * inp..(r + 1) * inp].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yo, &wo) in yr.iter_mut().zip(&w[i * out..(i + 1) * out]) {
                *yo += xi * wo;
            }
        }
    }
    y
}

/// Accumulates `dW += x^T dy`, `db += sum(dy)` and returns `dx = dy W^T`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    inp: usize,
    out: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * inp];
    for r in 0..rows {
        let dyr = &dy[r * out..(r + 1) * out];
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        let xr = &x[r * inp..(r + 1) * inp];
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for i in 0..inp {
            let wi = &w[i * out..(i + 1) * out];
            let dwi = &mut dw[i * out..(i + 1) * out];
            let mut acc = 0.0;
            for o in 0..out {
                acc += dyr[o] * wi[o];
                dwi[o] += xr[i] * dyr[o];
            }
            dxr[i] = acc;
        }
    }
    dx
}

/// Row-wise layer norm. Returns `(y, xhat, inv_std)`.
pub fn layer_norm(x: &[f64], dim: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / dim;
    let mut y = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(rows);
    for row in x.chunks_exact(dim) {
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for (c, &v) in row.iter().enumerate() {
            let h = (v - mean) * is;
            xhat.push(h);
            y.push(gamma[c] * h + beta[c]);
        }
    }
    (y, xhat, inv_std)
}

pub fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    dim: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let mut dx = Vec::with_capacity(dy.len());
    let mut dxhat = vec![0.0; dim];
    for (r, (dyr, xr)) in dy.chunks_exact(dim).zip(xhat.chunks_exact(dim)).enumerate() {
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for c in 0..dim {
            dgamma[c] += dyr[c] * xr[c];
            dbeta[c] += dyr[c];
            dxhat[c] = dyr[c] * gamma[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xr[c];
        }
        mean_d /= dim as f64;
        mean_dx /= dim as f64;
        for c in 0..dim {
            dx.push(inv_std[r] * (dxhat[c] - mean_d - xr[c] * mean_dx));
        }
    }
    dx
}

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
