use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// `w_c = N / (2 * N_c)`.
pub fn compute_class_weights(labels: &[Label]) -> Result<[f64; 2]> {
    let mut counts = [0usize; 2];
    for &y in labels {
        if y > 1 {
            return Err(Error::Data(format!("label {y} is not binary")));
        }
        counts[y as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Data(format!(
            "class weights need both classes, got counts {counts:?}"
        )));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegOptions {
    pub max_iter: usize,
    /// Stop once the L2 norm of the gradient falls to this.
    pub tolerance: f64,
    /// L2 penalty on the weights (not the bias), applied to the summed loss.
    pub lambda: f64,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tolerance: 1e-6,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub regularization_strength: f64,
    pub class_weights: [f64; 2],
    pub iterations_run: usize,
    pub converged: bool,
}

impl LogRegModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Class 1 iff the probability is at least 0.5.
    pub fn predict(&self, x: &[f64]) -> Label {
        u8::from(self.probability(x) >= 0.5)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Class-weighted penalised negative log-likelihood.
pub fn objective(
    x: &[Vec<f64>],
    labels: &[Label],
    class_weights: [f64; 2],
    lambda: f64,
    weights: &[f64],
    bias: f64,
) -> f64 {
    let mut total = 0.0;
    for (row, &y) in x.iter().zip(labels) {
        let z = bias + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        total += class_weights[y as usize] * (softplus(z) - y as f64 * z);
    }
    total + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient over `(weights..., bias)` and the Hessian (row-major, same order).
fn derivatives(
    x: &[Vec<f64>],
    labels: &[Label],
    class_weights: [f64; 2],
    lambda: f64,
    theta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = theta.len() - 1;
    let n = d + 1;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut aug = vec![1.0; n];
    for (row, &y) in x.iter().zip(labels) {
        aug[..d].copy_from_slice(row);
        let z: f64 = aug.iter().zip(theta).map(|(a, b)| a * b).sum();
        let p = sigmoid(z);
        let c = class_weights[y as usize];
        let r = c * (p - y as f64);
        let s = c * p * (1.0 - p);
        for i in 0..n {
            grad[i] += r * aug[i];
            let si = s * aug[i];
            for j in 0..=i {
                hess[i * n + j] += si * aug[j];
            }
        }
    }
    for i in 0..d {
        grad[i] += lambda * theta[i];
        hess[i * n + i] += lambda;
    }
    for i in 0..n {
        for j in 0..i {
            hess[j * n + i] = hess[i * n + j];
        }
    }
    (grad, hess)
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton's method with backtracking line search, starting from
/// zero weights and bias.
pub fn fit_logreg(
    x: &[Vec<f64>],
    labels: &[Label],
    class_weights: [f64; 2],
    opts: &LogRegOptions,
) -> Result<LogRegModel> {
    let d = x.first().map_or(0, Vec::len);
    fit_logreg_from(x, labels, class_weights, opts, &vec![0.0; d], 0.0)
}

pub fn fit_logreg_from(
    x: &[Vec<f64>],
    labels: &[Label],
    class_weights: [f64; 2],
    opts: &LogRegOptions,
    init_weights: &[f64],
    init_bias: f64,
) -> Result<LogRegModel> {
    if x.len() < 2 || x.len() != labels.len() {
        return Err(Error::Data(format!(
            "logistic regression needs >= 2 rows with matching labels, got {} rows / {} labels",
            x.len(),
            labels.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) || init_weights.len() != d {
        return Err(Error::Shape("ragged design matrix or initial weights".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Data("logistic regression needs both classes".into()));
    }
    let lambda = opts.lambda;
    let eval = |theta: &[f64]| objective(x, labels, class_weights, lambda, &theta[..d], theta[d]);

    let mut theta: Vec<f64> = init_weights.iter().copied().chain([init_bias]).collect();
    let mut value = eval(&theta);
    if !value.is_finite() {
        return Err(Error::Numerical("logistic objective is not finite at the start point".into()));
    }
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (grad, mut hess) = derivatives(x, labels, class_weights, lambda, &theta);
        if norm(&grad) <= opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let n = d + 1;
        let mut damping = 0.0;
        let step = loop {
            if let Some(s) = cholesky_solve(&hess, &neg) {
                break s;
            }
            let bump = if damping == 0.0 { 1e-10 } else { damping * 9.0 };
            for i in 0..n {
                hess[i * n + i] += bump;
            }
            damping += bump;
            if damping > 1e12 {
                return Err(Error::Numerical("logistic Hessian could not be regularised".into()));
            }
        };
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let v = eval(&cand);
            if !v.is_finite() {
                return Err(Error::Numerical("logistic objective became non-finite".into()));
            }
            if v <= value + 1e-4 * t * slope {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, v)) => {
                theta = cand;
                value = v;
            }
            // no representable decrease left along the Newton direction
            None => break,
        }
    }
    Ok(LogRegModel {
        weights: theta[..d].to_vec(),
        bias: theta[d],
        regularization_strength: lambda,
        class_weights,
        iterations_run: iterations,
        converged,
    })
}
