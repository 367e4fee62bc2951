//! Self-organizing map layout.
//!
//! A square `d×d` map with `d = floor(sqrt(N) + 1)` is trained on the NAP
//! rows; each neuron takes the grid coordinate of its best-matching unit.
//! Neurons that share a unit are spread on a small circle around it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Layout, Method};
use crate::nap::NapMatrix;
use crate::rng::{self, stream};

/// Radius of the circle that separates neurons sharing a unit. Below half the
/// grid spacing, so co-located neurons stay closer to each other than to any
/// other cell.
pub const COLLISION_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomParams {
    /// Full shuffled passes over the rows.
    pub epochs: usize,
    pub sigma: f64,
    pub learning_rate: f64,
}

impl Default for SomParams {
    fn default() -> Self {
        Self { epochs: 10, sigma: 1.0, learning_rate: 0.5 }
    }
}

pub fn grid_side(n: usize) -> usize {
    ((n as f64).sqrt() + 1.0).floor() as usize
}

/// A trained map: `side×side` units of `dim` weights.
#[derive(Debug, Clone)]
pub struct Som {
    weights: Array3<f64>,
}

impl Som {
    /// Random unit-norm weights, as MiniSom initializes them.
    pub fn new(side: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed, stream::LAYOUT);
        let mut weights = Array3::from_shape_fn((side, side, dim), |_| rng.random::<f64>() * 2.0 - 1.0);
        for x in 0..side {
            for y in 0..side {
                let mut w = weights.slice_mut(ndarray::s![x, y, ..]);
                let norm = w.dot(&w).sqrt();
                if norm > 0.0 {
                    w.mapv_inplace(|v| v / norm);
                }
            }
        }
        Self { weights }
    }

    pub fn side(&self) -> usize {
        self.weights.dim().0
    }

    /// Unit with the smallest Euclidean distance; ties go to the lowest
    /// row-major index.
    pub fn best_matching_unit(&self, x: ArrayView1<f64>) -> (usize, usize) {
        let side = self.side();
        let mut best = (0, 0);
        let mut best_d = f64::INFINITY;
        for i in 0..side {
            for j in 0..side {
                let w = self.weights.slice(ndarray::s![i, j, ..]);
                let d: f64 = w.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Online training with a Gaussian neighborhood; sigma and the learning
    /// rate both decay as `p / (1 + t / (T/2))`.
    pub fn train(&mut self, data: &Array2<f64>, params: &SomParams, seed: u64) {
        let n = data.nrows();
        let total = (params.epochs * n).max(1) as f64;
        let side = self.side();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng::seeded(seed, stream::SHUFFLE);
        let mut t = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &row in &order {
                let x = data.row(row);
                let decay = 1.0 + t as f64 / (total / 2.0);
                let lr = params.learning_rate / decay;
                let sigma = params.sigma / decay;
                let (bi, bj) = self.best_matching_unit(x);
                let denom = 2.0 * sigma * sigma;
                let gx: Vec<f64> = (0..side).map(|i| (-((i as f64 - bi as f64).powi(2)) / denom).exp()).collect();
                let gy: Vec<f64> = (0..side).map(|j| (-((j as f64 - bj as f64).powi(2)) / denom).exp()).collect();
                for i in 0..side {
                    for j in 0..side {
                        let h = lr * gx[i] * gy[j];
                        if h == 0.0 {
                            continue;
                        }
                        let mut w = self.weights.slice_mut(ndarray::s![i, j, ..]);
                        w.zip_mut_with(&x, |wv, &xv| *wv += h * (xv - *wv));
                    }
                }
                t += 1;
            }
        }
    }
}

/// Spreads neurons that share a grid cell uniformly on a circle of
/// [`COLLISION_RADIUS`] around the cell, in ascending neuron order starting
/// at angle 0.
pub fn resolve_collisions(cells: &[(usize, usize)]) -> Array2<f64> {
    let mut by_cell: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, &cell) in cells.iter().enumerate() {
        by_cell.entry(cell).or_default().push(i);
    }
    let mut coords = Array2::zeros((cells.len(), 2));
    for ((cx, cy), members) in by_cell {
        let m = members.len();
        for (k, &i) in members.iter().enumerate() {
            let (dx, dy) = if m == 1 {
                (0.0, 0.0)
            } else {
                let angle = 2.0 * PI * k as f64 / m as f64;
                (COLLISION_RADIUS * angle.cos(), COLLISION_RADIUS * angle.sin())
            };
            coords[[i, 0]] = cx as f64 + dx;
            coords[[i, 1]] = cy as f64 + dy;
        }
    }
    coords
}

/// Unscaled SOM coordinates.
pub fn som_coordinates(nap: &NapMatrix, params: &SomParams, seed: u64) -> Result<Array2<f64>> {
    let n = nap.n_neurons();
    if n < 2 {
        return Err(Error::invalid(format!("SOM layout needs at least 2 neurons, got {n}")));
    }
    let data = &nap.layout_features;
    let mut som = Som::new(grid_side(n), data.ncols(), seed);
    som.train(data, params, seed);
    let cells: Vec<(usize, usize)> = data.rows().into_iter().map(|r| som.best_matching_unit(r)).collect();
    Ok(resolve_collisions(&cells))
}

pub fn layout_som(nap: &NapMatrix, params: &SomParams, seed: u64) -> Result<Layout> {
    let raw = som_coordinates(nap, params, seed)?;
    Ok(Layout::from_raw(&raw, Method::Som, seed, nap.neuron_ids.clone())
        .with_param("epochs", params.epochs)
        .with_param("sigma", params.sigma)
        .with_param("learning_rate", params.learning_rate))
}
