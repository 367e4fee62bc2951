//! A compact UMAP: cosine k-NN fuzzy graph, spectral start, negative-sampling SGD.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::pca::pca_project;
use crate::layout::{Layout, Method};
use crate::nap::{cosine_distance_matrix, NapMatrix};
use crate::rng::{self, stream};

const SIGMA_STEPS: usize = 64;
const SIGMA_TOLERANCE: f64 = 1e-5;
const MIN_DIST_SCALE: f64 = 1e-3;
const GRADIENT_CLIP: f64 = 4.0;
const INIT_EXTENT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
}

impl Default for UmapParams {
    fn default() -> Self {
        Self { n_neighbors: 15, min_dist: 0.1, spread: 1.0, epochs: 500, negative_sample_rate: 5, learning_rate: 1.0 }
    }
}

/// Fits `1 / (1 + a x^(2b))` to the target curve that is 1 below `min_dist`
/// and `exp(-(x - min_dist) / spread)` above it, by Levenberg–Marquardt
/// least squares on 300 points of `[0, 3 spread]`.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() }).collect();
    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter().zip(&ys).map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2)).sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // normal equations of the linearized problem
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            let r = f - y;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = maa * mbb - jab * jab;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(mbb * ga - jab * gb) / det;
            let step_b = -(maa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
            if new_cost < cost {
                let done = (cost - new_cost) <= 1e-15 * cost.max(1e-300);
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Symmetric fuzzy membership graph as `(i, j, weight)` with `i < j`.
pub fn fuzzy_graph(dist: &Array2<f64>, n_neighbors: usize) -> Vec<(usize, usize, f64)> {
    let n = dist.nrows();
    let target = (n_neighbors as f64).log2();
    let mean_all = dist.mean().unwrap_or(0.0);
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        // the point itself is its own first neighbor
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dist[[i, a]].total_cmp(&dist[[i, b]]).then((a != i).cmp(&(b != i))).then(a.cmp(&b)));
        let knn = &order[..n_neighbors];
        let knn_d: Vec<f64> = knn.iter().map(|&j| dist[[i, j]]).collect();
        let rho = knn_d.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);

        let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
        for _ in 0..SIGMA_STEPS {
            let psum: f64 = knn_d[1..].iter().map(|&d| if d - rho > 0.0 { (-(d - rho) / mid).exp() } else { 1.0 }).sum();
            if (psum - target).abs() < SIGMA_TOLERANCE {
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi == f64::INFINITY { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        let mean_i = knn_d.iter().sum::<f64>() / knn_d.len() as f64;
        let floor = MIN_DIST_SCALE * if rho > 0.0 { mean_i } else { mean_all };
        let sigma = mid.max(floor);

        for (&j, &d) in knn.iter().zip(&knn_d) {
            if j == i {
                continue;
            }
            let w = if d - rho <= 0.0 || sigma == 0.0 { 1.0 } else { (-(d - rho) / sigma).exp() };
            directed.insert((i, j), w);
        }
    }
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let entry = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
        if i < j {
            entry.0 = w;
        } else {
            entry.1 = w;
        }
    }
    pairs.into_iter().map(|((i, j), (a, b))| (i, j, a + b - a * b)).filter(|e| e.2 > 0.0).collect()
}

fn is_connected(n: usize, edges: &[(usize, usize, f64)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Second and third eigenvectors of the symmetric normalized Laplacian.
fn spectral_embedding(n: usize, edges: &[(usize, usize, f64)]) -> Array2<f64> {
    let mut degree = vec![0.0; n];
    for &(i, j, w) in edges {
        degree[i] += w;
        degree[j] += w;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut lap = DMatrix::<f64>::identity(n, n);
    for &(i, j, w) in edges {
        let v = -w * inv_sqrt[i] * inv_sqrt[j];
        lap[(i, j)] = v;
        lap[(j, i)] = v;
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut out = Array2::zeros((n, 2));
    for (c, &k) in order[1..3].iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = col.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[[i, c]] = sign * col[i];
        }
    }
    out
}

fn initial_embedding(nap: &NapMatrix, edges: &[(usize, usize, f64)], seed: u64) -> Result<Array2<f64>> {
    let n = nap.n_neurons();
    let mut init = if is_connected(n, edges) {
        spectral_embedding(n, edges)
    } else {
        log::warn!("k-NN graph is disconnected; initializing UMAP from PCA");
        pca_project(&nap.layout_features)?.coords
    };
    let max_abs = init.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        init.mapv_inplace(|v| v * INIT_EXTENT / max_abs);
    }
    let mut rng = rng::seeded(seed, stream::LAYOUT);
    let noise = Normal::new(0.0, 1e-4).expect("valid deviation");
    init.mapv_inplace(|v| v + noise.sample(&mut rng));
    for mut col in init.columns_mut() {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi > lo {
            col.mapv_inplace(|v| INIT_EXTENT * (v - lo) / (hi - lo));
        }
    }
    Ok(init)
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Unscaled UMAP embedding.
pub fn umap_coordinates(nap: &NapMatrix, params: &UmapParams, seed: u64) -> Result<Array2<f64>> {
    let n = nap.n_neurons();
    if n <= params.n_neighbors {
        return Err(Error::invalid(format!("UMAP needs more neurons than n_neighbors ({}), got {n}", params.n_neighbors)));
    }
    if params.n_neighbors < 2 {
        return Err(Error::invalid("UMAP needs n_neighbors ≥ 2"));
    }
    let dist = cosine_distance_matrix(nap.layout_features.view());
    let graph = fuzzy_graph(&dist, params.n_neighbors);
    let mut y = initial_embedding(nap, &graph, seed)?;
    let (a, b) = fit_ab(params.min_dist, params.spread);

    let epochs = params.epochs as f64;
    let max_w = graph.iter().fold(0.0f64, |m, e| m.max(e.2));
    // both directions of every kept edge
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut epochs_per_sample = Vec::new();
    for &(i, j, w) in &graph {
        if w < max_w / epochs {
            continue;
        }
        for (h, t) in [(i, j), (j, i)] {
            heads.push(h);
            tails.push(t);
            epochs_per_sample.push(max_w / w);
        }
    }
    let neg_rate = params.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();
    let mut rng = rng::seeded(seed, stream::NEGATIVE_SAMPLES);

    for epoch in 0..params.epochs {
        let alpha = params.learning_rate * (1.0 - epoch as f64 / epochs);
        let e = epoch as f64;
        for k in 0..heads.len() {
            if next_sample[k] > e {
                continue;
            }
            let (j, t) = (heads[k], tails[k]);
            let dx = y[[j, 0]] - y[[t, 0]];
            let dy = y[[j, 1]] - y[[t, 1]];
            let dsq = dx * dx + dy * dy;
            let coeff = if dsq > 0.0 {
                -2.0 * a * b * dsq.powf(b - 1.0) / (a * dsq.powf(b) + 1.0)
            } else {
                0.0
            };
            let (gx, gy) = (clip(coeff * dx) * alpha, clip(coeff * dy) * alpha);
            y[[j, 0]] += gx;
            y[[j, 1]] += gy;
            y[[t, 0]] -= gx;
            y[[t, 1]] -= gy;
            next_sample[k] += epochs_per_sample[k];

            let n_neg = ((e - next_negative[k]) / epochs_per_negative[k]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == j {
                    continue;
                }
                let dx = y[[j, 0]] - y[[other, 0]];
                let dy = y[[j, 1]] - y[[other, 1]];
                let dsq = dx * dx + dy * dy;
                let (gx, gy) = if dsq > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + dsq) * (a * dsq.powf(b) + 1.0));
                    (clip(coeff * dx), clip(coeff * dy))
                } else {
                    (GRADIENT_CLIP, GRADIENT_CLIP)
                };
                y[[j, 0]] += gx * alpha;
                y[[j, 1]] += gy * alpha;
            }
            next_negative[k] += n_neg as f64 * epochs_per_negative[k];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "umap", step: epoch });
        }
    }
    Ok(y)
}

pub fn layout_umap(nap: &NapMatrix, params: &UmapParams, seed: u64) -> Result<Layout> {
    let raw = umap_coordinates(nap, params, seed)?;
    Ok(Layout::from_raw(&raw, Method::Umap, seed, nap.neuron_ids.clone())
        .with_param("n_neighbors", params.n_neighbors)
        .with_param("min_dist", params.min_dist)
        .with_param("epochs", params.epochs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::tsne::tests::{assert_separated, nap_from, two_clusters};

    #[test]
    fn curve_fit_for_default_min_dist() {
        let (a, b) = fit_ab(0.1, 1.0);
        assert!((a - 1.577).abs() < 2e-3, "a = {a}");
        assert!((b - 0.895).abs() < 2e-3, "b = {b}");
    }

    #[test]
    fn curve_fit_is_a_least_squares_minimum() {
        let (a, b) = fit_ab(0.1, 1.0);
        let xs: Vec<f64> = (0..300).map(|i| 3.0 * i as f64 / 299.0).collect();
        let cost = |a: f64, b: f64| -> f64 {
            xs.iter()
                .map(|&x| {
                    let y = if x < 0.1 { 1.0 } else { (-(x - 0.1)).exp() };
                    (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2)
                })
                .sum()
        };
        let best = cost(a, b);
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            assert!(cost(a + da, b + db) >= best);
        }
    }

    #[test]
    fn fuzzy_graph_is_symmetric_union() {
        let dist = cosine_distance_matrix(two_clusters().view());
        let graph = fuzzy_graph(&dist, 4);
        for &(i, j, w) in &graph {
            assert!(i < j);
            assert!(w > 0.0 && w <= 1.0);
        }
        // each point's nearest neighbor is fully connected
        for i in 0..10 {
            assert!(graph.iter().any(|&(a, b, w)| (a == i || b == i) && (w - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn membership_sums_match_log2_k() {
        let data = two_clusters();
        let dist = cosine_distance_matrix(data.view());
        let graph = fuzzy_graph(&dist, 5);
        // symmetrized weights are at least the directed ones, so row sums of
        // the union bound the per-point target from above
        let mut sums = [0.0; 10];
        for &(i, j, w) in &graph {
            sums[i] += w;
            sums[j] += w;
        }
        for s in sums {
            assert!(s >= 5f64.log2() - 1e-3);
        }
    }

    #[test]
    fn clusters_stay_apart() {
        let nap = nap_from(two_clusters());
        let params = UmapParams { n_neighbors: 4, ..UmapParams::default() };
        let raw = umap_coordinates(&nap, &params, 5).unwrap();
        assert_separated(&raw);
    }

    #[test]
    fn too_few_neurons_is_a_precondition_error() {
        let nap = nap_from(two_clusters());
        assert!(umap_coordinates(&nap, &UmapParams::default(), 0).is_err());
    }

    #[test]
    fn reproducible_under_seed() {
        let nap = nap_from(two_clusters());
        let params = UmapParams { n_neighbors: 4, epochs: 100, ..UmapParams::default() };
        assert_eq!(umap_coordinates(&nap, &params, 3).unwrap(), umap_coordinates(&nap, &params, 3).unwrap());
    }
}
