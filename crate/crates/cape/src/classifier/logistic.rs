//! L2-regularized logistic regression by full-batch gradient descent.
//!
//! The objective on standardized features `x̃` is
//!
//! ```text
//! L(w, b) = (1/n) Σ [softplus(w·x̃ + b) − y (w·x̃ + b)] + (λ/2) ‖w‖²
//! ```
//!
//! and its gradient is `((1/n) Σ (σ(s) − y) x̃ + λ w, (1/n) Σ (σ(s) − y))`.
//! Descent starts at zero and runs with a fixed step until the gradient norm
//! falls below the tolerance or the iteration budget is spent.

use serde::{Deserialize, Serialize};

use super::{exact, sigmoid, softplus, ClassifierSpec, Standardizer};
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    #[serde(with = "exact::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "exact::scalar")]
    pub bias: f64,
}

impl LogisticModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (((x, mu), sc), w) in x
            .iter()
            .zip(&self.standardizer.mean)
            .zip(&self.standardizer.scale)
            .zip(&self.weights)
        {
            s += w * (x - mu) / sc;
        }
        s
    }
}

/// Objective value and gradient at `params = [w_1, …, w_m, b]` for a
/// row-major design matrix `x` with `dim` columns.
pub fn loss_and_gradient(
    x: &[f64],
    y: &[u8],
    dim: usize,
    params: &[f64],
    l2_penalty: f64,
) -> (f64, Vec<f64>) {
    let n = y.len();
    let (w, b) = params.split_at(dim);
    let b = b[0];
    let mut grad = vec![0.0; dim + 1];
    let mut loss = 0.0;
    for (row, &yi) in x.chunks_exact(dim).zip(y) {
        let s = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let yi = yi as f64;
        loss += softplus(s) - yi * s;
        let r = sigmoid(s) - yi;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += r * a;
        }
        grad[dim] += r;
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    let mut penalty = 0.0;
    for (g, wj) in grad.iter_mut().zip(w) {
        *g += l2_penalty * wj;
        penalty += wj * wj;
    }
    (loss + 0.5 * l2_penalty * penalty, grad)
}

/// Gradient only; the descent loop never needs the objective value.
fn gradient_into(x: &[f64], y: &[u8], dim: usize, params: &[f64], l2_penalty: f64, grad: &mut [f64]) {
    let (w, b) = params.split_at(dim);
    let b = b[0];
    grad.fill(0.0);
    for (row, &yi) in x.chunks_exact(dim).zip(y) {
        let s = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = sigmoid(s) - yi as f64;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += r * a;
        }
        grad[dim] += r;
    }
    let inv_n = 1.0 / y.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    for (g, wj) in grad.iter_mut().zip(w) {
        *g += l2_penalty * wj;
    }
}

pub(crate) fn fit(spec: &ClassifierSpec, d: &Dataset) -> LogisticModel {
    let dim = d.dim();
    let standardizer = Standardizer::fit(d);
    let x = standardizer.transform(d);
    let y = d.labels();
    let mut params = vec![0.0; dim + 1];
    let mut grad = vec![0.0; dim + 1];
    for _ in 0..spec.max_iterations {
        gradient_into(&x, y, dim, &params, spec.l2_penalty, &mut grad);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < spec.tolerance {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= spec.learning_rate * g;
        }
    }
    let bias = params.pop().expect("bias present");
    LogisticModel {
        standardizer,
        weights: params,
        bias,
    }
}
