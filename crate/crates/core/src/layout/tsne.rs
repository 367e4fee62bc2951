//! Exact t-SNE with PCA initialization.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::pca::pca_project;
use crate::layout::{Layout, Method};
use crate::nap::NapMatrix;
use crate::rng::{self, stream};

const MACHINE_EPSILON: f64 = f64::EPSILON;
const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const PERPLEXITY_STEPS: usize = 100;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, learning_rate: 200.0, early_exaggeration: 12.0, exaggeration_iterations: 250 }
    }
}

/// Perplexity actually used for `n` points.
pub fn effective_perplexity(requested: f64, n: usize) -> f64 {
    requested.min((n as f64 - 1.0) / 3.0)
}

fn squared_distances(data: &Array2<f64>) -> Array2<f64> {
    let n = data.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = data.row(i).iter().zip(data.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Row-conditional affinities whose entropy matches `ln(perplexity)`.
pub fn conditional_affinities(sq_dist: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = sq_dist.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let mut row = vec![0.0; n];
    for i in 0..n {
        // shifting by the nearest distance leaves the normalized row unchanged
        let shift = (0..n).filter(|&j| j != i).map(|j| sq_dist[[i, j]]).fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..PERPLEXITY_STEPS {
            let mut sum = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(sq_dist[[i, j]] - shift) * beta).exp() };
                sum += row[j];
            }
            if sum == 0.0 {
                sum = 1e-8;
            }
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] /= sum;
                weighted += (sq_dist[[i, j]] - shift) * row[j];
            }
            let entropy = sum.ln() + beta * weighted;
            let diff = entropy - target;
            if diff.abs() <= PERPLEXITY_TOLERANCE {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi == f64::INFINITY { beta * 2.0 } else { (beta + hi) / 2.0 };
            } else {
                hi = beta;
                beta = if lo == f64::NEG_INFINITY { beta / 2.0 } else { (beta + lo) / 2.0 };
            }
        }
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    p
}

/// Symmetrized joint affinities summing to one.
pub fn joint_affinities(data: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let cond = conditional_affinities(&squared_distances(data), perplexity);
    let mut p = &cond + &cond.t();
    let total = p.sum();
    p.mapv_inplace(|v| (v / total).max(MACHINE_EPSILON));
    p
}

/// PCA projection rescaled so the first column has standard deviation 1e-4.
fn initial_embedding(data: &Array2<f64>, seed: u64) -> Result<Array2<f64>> {
    let mut y = pca_project(data)?.coords;
    let col = y.column(0);
    let mean = col.mean().unwrap_or(0.0);
    let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
    if std > 0.0 {
        y.mapv_inplace(|v| v / std * 1e-4);
    } else {
        let mut rng = rng::seeded(seed, stream::LAYOUT);
        let normal = Normal::new(0.0, 1e-4).expect("valid deviation");
        y.mapv_inplace(|_| normal.sample(&mut rng));
    }
    Ok(y)
}

/// Unscaled t-SNE embedding.
pub fn tsne_coordinates(nap: &NapMatrix, params: &TsneParams, seed: u64) -> Result<Array2<f64>> {
    let data = &nap.layout_features;
    let n = data.nrows();
    if n < 4 {
        return Err(Error::invalid(format!("t-SNE layout needs at least 4 neurons, got {n}")));
    }
    let perplexity = effective_perplexity(params.perplexity, n);
    let p = joint_affinities(data, perplexity);
    let mut y = initial_embedding(data, seed)?;
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::from_elem((n, 2), 1.0);
    let mut q = Array2::<f64>::zeros((n, n));
    let mut grad = Array2::<f64>::zeros((n, 2));

    for it in 0..params.iterations {
        let early = it < params.exaggeration_iterations;
        let exaggeration = if early { params.early_exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };

        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[[i, 0]] - y[[j, 0]];
                let dy = y[[i, 1]] - y[[j, 1]];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[[i, j]] = w;
                q[[j, i]] = w;
                q_sum += 2.0 * w;
            }
        }
        grad.fill(0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = q[[i, j]];
                let qn = (w / q_sum).max(MACHINE_EPSILON);
                let coeff = 4.0 * (exaggeration * p[[i, j]] - qn) * w;
                let gx = coeff * (y[[i, 0]] - y[[j, 0]]);
                let gy = coeff * (y[[i, 1]] - y[[j, 1]]);
                grad[[i, 0]] += gx;
                grad[[i, 1]] += gy;
                grad[[j, 0]] -= gx;
                grad[[j, 1]] -= gy;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { stage: "tsne", step: it });
        }
        for ((g, u), gain) in grad.iter_mut().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if *u * *g < 0.0 { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(MIN_GAIN);
            *u = momentum * *u - params.learning_rate * *gain * *g;
        }
        y += &update;
    }
    Ok(y)
}

pub fn layout_tsne(nap: &NapMatrix, params: &TsneParams, seed: u64) -> Result<Layout> {
    let raw = tsne_coordinates(nap, params, seed)?;
    Ok(Layout::from_raw(&raw, Method::Tsne, seed, nap.neuron_ids.clone())
        .with_param("perplexity", effective_perplexity(params.perplexity, nap.n_neurons()))
        .with_param("iterations", params.iterations)
        .with_param("learning_rate", params.learning_rate))
}
