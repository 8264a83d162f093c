//! Exact t-SNE layout: Student-t output kernel, KL objective, gradient
//! descent with momentum, per-parameter gains and early exaggeration.
//!
//! Every sum over points runs in a fixed order inside one task and the
//! per-point partial sums are combined sequentially, so results do not depend
//! on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayoutParams {
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// `None` selects `m / 12`.
    pub learning_rate: Option<f64>,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub min_gain: f64,
    /// Largest point count accepted by the exact gradient.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: None,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            min_gain: 0.01,
            max_points: 20_000,
            seed: 0,
        }
    }
}

impl LayoutParams {
    pub fn learning_rate_for(&self, m: usize) -> f64 {
        self.learning_rate.unwrap_or(m as f64 / 12.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub level: usize,
    pub coords: Vec<[f64; 2]>,
    /// KL divergence before each iteration's update.
    pub objective_trace: Vec<f64>,
    pub params: LayoutParams,
}

/// Symmetric joint probabilities `(P + Pᵀ) / Σ(P + Pᵀ)` with the diagonal
/// removed.
pub fn joint_probabilities(p: &CsrMatrix) -> CsrMatrix {
    let n = p.nrows();
    let no_diag = CsrMatrix::from_rows(
        n,
        (0..n)
            .map(|r| {
                let (c, v) = p.row(r);
                c.iter()
                    .zip(v)
                    .filter(|&(&c, &v)| c as usize != r && v > 0.0)
                    .map(|(&c, &v)| (c, v))
                    .collect()
            })
            .collect(),
    );
    let sym = no_diag.zip_union(&no_diag.transpose(), |a, b| a + b);
    let total = sym.total();
    if total > 0.0 {
        sym.map_values(|v| v / total)
    } else {
        sym
    }
}

#[inline]
fn kernel(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Normalizer `Z = Σ_{i≠j} (1 + ‖y_i − y_j‖²)⁻¹`.
fn normalizer(y: &[[f64; 2]]) -> f64 {
    let partial: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..y.len() {
                if j != i {
                    s += kernel(y[i], y[j]);
                }
            }
            s
        })
        .collect();
    partial.iter().sum()
}

/// `KL(P‖Q)` for joint `P` summing to one.
pub fn kl_divergence(p: &CsrMatrix, y: &[[f64; 2]]) -> f64 {
    let z = normalizer(y);
    kl_with_normalizer(p, y, z)
}

fn kl_with_normalizer(p: &CsrMatrix, y: &[[f64; 2]], z: f64) -> f64 {
    let partial: Vec<f64> = (0..p.nrows())
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = p.row(i);
            cols.iter()
                .zip(vals)
                .filter(|&(_, &v)| v > 0.0)
                .map(|(&j, &v)| v * (v / (kernel(y[i], y[j as usize]) / z)).ln())
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Gradient of `KL(αP‖Q)` with respect to every coordinate; also returns `Z`.
fn gradient_and_normalizer(p: &CsrMatrix, y: &[[f64; 2]], exaggeration: f64) -> (Vec<[f64; 2]>, f64) {
    let m = y.len();
    let z = normalizer(y);
    let grad = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rep = [0.0, 0.0];
            for j in 0..m {
                if j != i {
                    let q = kernel(y[i], y[j]);
                    let w = q * q;
                    rep[0] += w * (y[i][0] - y[j][0]);
                    rep[1] += w * (y[i][1] - y[j][1]);
                }
            }
            let mut att = [0.0, 0.0];
            let (cols, vals) = p.row(i);
            for (&j, &pij) in cols.iter().zip(vals) {
                let j = j as usize;
                let w = exaggeration * pij * kernel(y[i], y[j]);
                att[0] += w * (y[i][0] - y[j][0]);
                att[1] += w * (y[i][1] - y[j][1]);
            }
            [4.0 * (att[0] - rep[0] / z), 4.0 * (att[1] - rep[1] / z)]
        })
        .collect();
    (grad, z)
}

/// Analytic gradient of `KL(P‖Q)` scaled by `exaggeration` on the attractive
/// term.
pub fn kl_gradient(p: &CsrMatrix, y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    gradient_and_normalizer(p, y, exaggeration).0
}

/// Runs gradient descent from `init` on the joint matrix built from `p`.
/// `progress` receives `(iteration, iterations)` after every update.
pub fn optimize_layout(
    p: &CsrMatrix,
    init: Vec<[f64; 2]>,
    level: usize,
    params: LayoutParams,
    mut progress: impl FnMut(usize, usize),
) -> Result<Embedding> {
    let m = init.len();
    if p.nrows() != m || p.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} initial points for a {}x{} similarity matrix",
            p.nrows(),
            p.ncols()
        )));
    }
    if m > params.max_points {
        return Err(Error::InvalidArgument(format!(
            "{m} points exceed the exact-gradient cap of {}",
            params.max_points
        )));
    }
    if init.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(Error::InvalidArgument("initial coordinates must be finite".into()));
    }
    if m < 2 {
        return Ok(Embedding {
            level,
            coords: init,
            objective_trace: Vec::new(),
            params,
        });
    }
    let joint = joint_probabilities(p);
    let lr = params.learning_rate_for(m);
    let mut y = init;
    let mut update = vec![[0.0f64; 2]; m];
    let mut gains = vec![[1.0f64; 2]; m];
    let mut trace = Vec::with_capacity(params.iterations);
    for it in 0..params.iterations {
        let exaggeration = if it < params.exaggeration_iterations {
            params.exaggeration
        } else {
            1.0
        };
        let momentum = if it < params.momentum_switch {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        let (grad, z) = gradient_and_normalizer(&joint, &y, exaggeration);
        if grad.iter().any(|g| !g[0].is_finite() || !g[1].is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at iteration {it}")));
        }
        trace.push(kl_with_normalizer(&joint, &y, z));
        for i in 0..m {
            for d in 0..2 {
                let g = grad[i][d];
                gains[i][d] = if (g > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(params.min_gain)
                };
                update[i][d] = momentum * update[i][d] - lr * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        let mut mean = [0.0, 0.0];
        for c in &y {
            mean[0] += c[0];
            mean[1] += c[1];
        }
        for c in &mut y {
            c[0] -= mean[0] / m as f64;
            c[1] -= mean[1] / m as f64;
        }
        progress(it + 1, params.iterations);
    }
    Ok(Embedding {
        level,
        coords: y,
        objective_trace: trace,
        params,
    })
}
