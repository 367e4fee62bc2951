//! Co-activation graph layout.
//!
//! The most similar neuron pairs become edges, every smaller connected
//! component is bridged to the largest one through its most similar pair, and
//! the connected graph is drawn with Fruchterman–Reingold.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Layout, Method};
use crate::nap::{cosine_distance_matrix, NapMatrix};
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    /// Fraction of all neuron pairs that become edges.
    pub edge_fraction: f64,
    pub fr_iterations: usize,
    pub initial_temperature: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { edge_fraction: 0.075, fr_iterations: 50, initial_temperature: 0.1 }
    }
}

/// `ceil(fraction * n(n-1)/2)`, robust to products that land a hair above an integer.
pub fn threshold_edge_count(n: usize, fraction: f64) -> usize {
    let pairs = n * (n - 1) / 2;
    let raw = fraction * pairs as f64;
    let count = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize;
    count.min(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoactivationGraph {
    pub n: usize,
    /// Undirected edges `(i, j)` with `i < j`; threshold edges first, then bridges.
    pub edges: Vec<(usize, usize)>,
    pub threshold_edges: usize,
}

impl CoactivationGraph {
    /// Builds the thresholded, bridged graph from a distance matrix.
    ///
    /// Pairs are ranked by distance (ties in lexicographic pair order) and the
    /// cut falls after the `threshold_edge_count`-th pair; pairs tied with the
    /// last one admitted are admitted too, so the cut is a distance threshold.
    pub fn build(dist: &Array2<f64>, edge_fraction: f64) -> Self {
        let n = dist.nrows();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((dist[[i, j]], i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let m = threshold_edge_count(n, edge_fraction);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        if m > 0 {
            let cutoff = pairs[m - 1].0;
            edges.extend(pairs.iter().take_while(|p| p.0 <= cutoff).map(|p| (p.1, p.2)));
        }
        let threshold_edges = edges.len();

        let comps = components(n, &edges);
        if comps.len() > 1 {
            let largest = comps
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
                .map(|(i, _)| i)
                .unwrap();
            for (ci, comp) in comps.iter().enumerate() {
                if ci == largest {
                    continue;
                }
                let mut best: Option<(f64, usize, usize)> = None;
                for &a in comp {
                    for &b in &comps[largest] {
                        let cand = (dist[[a, b]], a.min(b), a.max(b));
                        let better = match best {
                            None => true,
                            Some(cur) => cand.0.total_cmp(&cur.0).then((cand.1, cand.2).cmp(&(cur.1, cur.2))).is_lt(),
                        };
                        if better {
                            best = Some(cand);
                        }
                    }
                }
                let (_, a, b) = best.expect("components are non-empty");
                edges.push((a, b));
            }
        }
        Self { n, edges, threshold_edges }
    }

    pub fn bridges(&self) -> &[(usize, usize)] {
        &self.edges[self.threshold_edges..]
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        components(self.n, &self.edges)
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        by_root.entry(r).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Fruchterman–Reingold in the unit square: optimal distance `sqrt(1/N)`,
/// temperature cooling linearly from `initial_temperature` to zero.
pub fn fruchterman_reingold(graph: &CoactivationGraph, params: &GraphParams, seed: u64) -> Array2<f64> {
    let n = graph.n;
    let mut rng = rng::seeded(seed, stream::LAYOUT);
    let mut pos = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
    let k = (1.0 / n as f64).sqrt();
    let iterations = params.fr_iterations;
    let mut disp = Array2::<f64>::zeros((n, 2));
    for it in 0..iterations {
        let temperature = params.initial_temperature * (1.0 - it as f64 / iterations as f64);
        disp.fill(0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = pos[[i, 0]] - pos[[j, 0]];
                let dy = pos[[i, 1]] - pos[[j, 1]];
                let d = (dx * dx + dy * dy).sqrt().max(0.01);
                let f = k * k / (d * d);
                disp[[i, 0]] += dx * f;
                disp[[i, 1]] += dy * f;
                disp[[j, 0]] -= dx * f;
                disp[[j, 1]] -= dy * f;
            }
        }
        for &(i, j) in &graph.edges {
            let dx = pos[[i, 0]] - pos[[j, 0]];
            let dy = pos[[i, 1]] - pos[[j, 1]];
            let d = (dx * dx + dy * dy).sqrt().max(0.01);
            let f = d / k;
            disp[[i, 0]] -= dx * f;
            disp[[i, 1]] -= dy * f;
            disp[[j, 0]] += dx * f;
            disp[[j, 1]] += dy * f;
        }
        for i in 0..n {
            let len = (disp[[i, 0]].powi(2) + disp[[i, 1]].powi(2)).sqrt();
            if len > 0.0 {
                let step = len.min(temperature) / len;
                pos[[i, 0]] += disp[[i, 0]] * step;
                pos[[i, 1]] += disp[[i, 1]] * step;
            }
        }
    }
    pos
}

/// Unscaled graph-layout coordinates.
pub fn graph_coordinates(nap: &NapMatrix, params: &GraphParams, seed: u64) -> Result<Array2<f64>> {
    let n = nap.n_neurons();
    if n < 2 {
        return Err(Error::invalid(format!("graph layout needs at least 2 neurons, got {n}")));
    }
    if !(params.edge_fraction > 0.0 && params.edge_fraction < 1.0) {
        return Err(Error::invalid(format!("edge_fraction must lie in (0, 1), got {}", params.edge_fraction)));
    }
    let dist = cosine_distance_matrix(nap.layout_features.view());
    let graph = CoactivationGraph::build(&dist, params.edge_fraction);
    debug_assert!(graph.is_connected());
    Ok(fruchterman_reingold(&graph, params, seed))
}

pub fn layout_graph(nap: &NapMatrix, params: &GraphParams, seed: u64) -> Result<Layout> {
    let raw = graph_coordinates(nap, params, seed)?;
    Ok(Layout::from_raw(&raw, Method::Graph, seed, nap.neuron_ids.clone())
        .with_param("edge_fraction", params.edge_fraction)
        .with_param("fr_iterations", params.fr_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn edge_count_for_a_128_neuron_layer() {
        // brute force: count pairs, apply the ceiling in exact integer arithmetic
        let pairs: usize = (0..128).map(|i| 127 - i).sum();
        assert_eq!(pairs, 8128);
        let exact = (75 * pairs).div_ceil(1000);
        assert_eq!(exact, 610);
        assert_eq!(threshold_edge_count(128, 0.075), exact);
        assert_eq!(threshold_edge_count(5, 0.2), 2);
        assert_eq!(threshold_edge_count(4, 0.075), 1);
    }

    #[test]
    fn two_cliques_get_one_bridge_between_closest_pair() {
        // {0,1} and {2,3}; cross distances 1.9 except 1-2 at 1.85
        let dist = array![
            [0.0, 0.1, 1.9, 1.9],
            [0.1, 0.0, 1.85, 1.9],
            [1.9, 1.85, 0.0, 0.1],
            [1.9, 1.9, 0.1, 0.0],
        ];
        let graph = CoactivationGraph::build(&dist, 0.3);
        assert_eq!(graph.threshold_edges, 2);
        assert_eq!(&graph.edges[..2], &[(0, 1), (2, 3)]);

        // oracle: enumerate every cross pair, keep the minimum
        let mut best = (f64::INFINITY, 0, 0);
        for a in [0, 1] {
            for b in [2, 3] {
                if dist[[a, b]] < best.0 {
                    best = (dist[[a, b]], a, b);
                }
            }
        }
        assert_eq!(graph.bridges(), &[(best.1, best.2)]);
        assert!(graph.is_connected());
    }

    #[test]
    fn equal_cross_distances_bridge_lexicographically() {
        let dist = array![
            [0.0, 0.1, 1.9, 1.9],
            [0.1, 0.0, 1.9, 1.9],
            [1.9, 1.9, 0.0, 0.1],
            [1.9, 1.9, 0.1, 0.0],
        ];
        let graph = CoactivationGraph::build(&dist, 0.3);
        assert_eq!(graph.bridges(), &[(0, 2)]);
    }

    #[test]
    fn identical_rows_are_connected_by_threshold_alone() {
        let dist = Array2::zeros((4, 4));
        let graph = CoactivationGraph::build(&dist, 0.075);
        assert!(graph.bridges().is_empty());
        assert!(graph.is_connected());
    }

    #[test]
    fn isolated_neurons_are_bridged_to_the_largest_component() {
        // 0-1-2 close; 3 and 4 isolated
        let mut dist = Array2::from_elem((5, 5), 1.5);
        for i in 0..5 {
            dist[[i, i]] = 0.0;
        }
        for (a, b, d) in [(0, 1, 0.1), (1, 2, 0.1), (3, 1, 1.2), (4, 2, 1.1)] {
            dist[[a, b]] = d;
            dist[[b, a]] = d;
        }
        let graph = CoactivationGraph::build(&dist, 0.2);
        assert_eq!(graph.threshold_edges, 2);
        assert_eq!(graph.bridges(), &[(1, 3), (2, 4)]);
        assert!(graph.is_connected());
    }

    #[test]
    fn fr_keeps_points_finite_and_deterministic() {
        let dist = Array2::zeros((4, 4));
        let graph = CoactivationGraph::build(&dist, 0.075);
        let a = fruchterman_reingold(&graph, &GraphParams::default(), 3);
        let b = fruchterman_reingold(&graph, &GraphParams::default(), 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        // total travel is bounded by the sum of temperatures
        let budget: f64 = (0..50).map(|it| 0.1 * (1.0 - it as f64 / 50.0)).sum();
        let mut rng = rng::seeded(3, stream::LAYOUT);
        let start = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
        for i in 0..4 {
            let moved = ((a[[i, 0]] - start[[i, 0]]).powi(2) + (a[[i, 1]] - start[[i, 1]]).powi(2)).sqrt();
            assert!(moved <= budget + 1e-12);
        }
    }
}
