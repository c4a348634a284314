//! Gradient boosted stumps on the logistic loss.
//!
//! Each round fits one depth-1 tree to the current gradients
//! `g = σ(F) − y` and hessians `h = σ(F)(1 − σ(F))`, choosing the split with
//! the largest second-order gain and Newton leaf values `−G / (H + λ)`. The
//! shrunken update is halved until the training loss does not increase, so
//! the recorded loss sequence is non-increasing.

use serde::{Deserialize, Serialize};

use super::{exact, sigmoid, softplus, ClassifierSpec};
use crate::dataset::Dataset;

/// Hessian regularizer in the leaf values.
const LEAF_L2: f64 = 1.0;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    /// Rows with `x[feature] < threshold` take `left`.
    #[serde(with = "exact::scalar")]
    pub threshold: f64,
    #[serde(with = "exact::scalar")]
    pub left: f64,
    #[serde(with = "exact::scalar")]
    pub right: f64,
}

impl Stump {
    fn value(&self, x: &[f64]) -> f64 {
        if x[self.feature] < self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumps {
    #[serde(with = "exact::scalar")]
    pub base_score: f64,
    pub stumps: Vec<Stump>,
}

impl BoostedStumps {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.base_score + self.stumps.iter().map(|s| s.value(x)).sum::<f64>()
    }
}

fn mean_loss(scores: &[f64], y: &[u8]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(&s, &yi)| softplus(s) - yi as f64 * s)
        .sum::<f64>()
        / y.len() as f64
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: (f64, f64),
    right: (f64, f64),
}

fn leaf(g: f64, h: f64) -> f64 {
    -g / (h + LEAF_L2)
}

fn best_split(d: &Dataset, order: &[Vec<usize>], grad: &[f64], hess: &[f64]) -> Option<Split> {
    let g_total: f64 = grad.iter().sum();
    let h_total: f64 = hess.iter().sum();
    let parent = g_total * g_total / (h_total + LEAF_L2);
    let mut best: Option<Split> = None;
    for (f, idx) in order.iter().enumerate() {
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in idx.windows(2) {
            let (i, j) = (w[0], w[1]);
            gl += grad[i];
            hl += hess[i];
            let (xi, xj) = (d.row(i)[f], d.row(j)[f]);
            if xi == xj {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            let gain = gl * gl / (hl + LEAF_L2) + gr * gr / (hr + LEAF_L2) - parent;
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(Split {
                    feature: f,
                    threshold: 0.5 * (xi + xj),
                    gain,
                    left: (gl, hl),
                    right: (gr, hr),
                });
            }
        }
    }
    best
}

/// Fits the ensemble and returns it with the training loss before the first
/// round and after every round.
pub fn fit(spec: &ClassifierSpec, d: &Dataset) -> (BoostedStumps, Vec<f64>) {
    let y = d.labels();
    let n = d.len();
    let base_rate = (d.positives() as f64 / n as f64).clamp(1e-12, 1.0 - 1e-12);
    let base_score = (base_rate / (1.0 - base_rate)).ln();
    let order: Vec<Vec<usize>> = (0..d.dim())
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| d.row(a)[f].total_cmp(&d.row(b)[f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut scores = vec![base_score; n];
    let mut loss = mean_loss(&scores, y);
    let mut history = vec![loss];
    let mut stumps = Vec::new();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trial = vec![0.0; n];
    for _ in 0..spec.max_iterations {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let stump = match best_split(d, &order, &grad, &hess) {
            Some(s) => Stump {
                feature: s.feature,
                threshold: s.threshold,
                left: leaf(s.left.0, s.left.1),
                right: leaf(s.right.0, s.right.1),
            },
            // Every feature is constant: a single leaf.
            None => {
                let v = leaf(grad.iter().sum(), hess.iter().sum());
                Stump {
                    feature: 0,
                    threshold: f64::INFINITY,
                    left: v,
                    right: v,
                }
            }
        };

        let mut step = spec.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..n {
                trial[i] = scores[i] + step * stump.value(d.row(i));
            }
            let trial_loss = mean_loss(&trial, y);
            if trial_loss <= loss {
                accepted = Some(trial_loss);
                break;
            }
            step *= 0.5;
        }
        if let Some(new_loss) = accepted {
            std::mem::swap(&mut scores, &mut trial);
            loss = new_loss;
            stumps.push(Stump {
                left: step * stump.left,
                right: step * stump.right,
                ..stump
            });
        }
        history.push(loss);
    }
    (BoostedStumps { base_score, stumps }, history)
}
