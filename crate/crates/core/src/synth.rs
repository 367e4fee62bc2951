//! Synthetic activations with planted co-activation clusters.
//!
//! Neurons are split into contiguous clusters. Cluster `c` fires (value 1)
//! for every example of group `g` with `g mod K == c` and stays silent (0)
//! otherwise; Gaussian noise is added on top.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationSet, LayerKind, Manifest};
use crate::error::{Error, Result};
use crate::npy;
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_neurons: usize,
    pub n_groups: usize,
    pub n_clusters: usize,
    pub noise: f64,
    pub examples_per_group: usize,
    /// Feature-map size `(h, w)` for a convolutional layer; dense when absent.
    pub conv_map: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { n_neurons: 128, n_groups: 10, n_clusters: 4, noise: 0.1, examples_per_group: 200, conv_map: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub activations: ActivationSet,
    /// Planted cluster of every neuron.
    pub clusters: Vec<usize>,
}

/// Cluster of neuron `n` among `n_neurons` split into `k` contiguous blocks.
pub fn cluster_of(n: usize, n_neurons: usize, k: usize) -> usize {
    n * k / n_neurons
}

pub fn generate(params: &SynthParams) -> Result<SynthData> {
    let SynthParams { n_neurons, n_groups, n_clusters, noise, examples_per_group, conv_map, seed } = *params;
    if n_neurons < 2 || n_groups == 0 || examples_per_group == 0 {
        return Err(Error::invalid(format!(
            "need ≥ 2 neurons, ≥ 1 group and ≥ 1 example per group (got {n_neurons}, {n_groups}, {examples_per_group})"
        )));
    }
    if n_clusters == 0 || n_clusters > n_neurons {
        return Err(Error::invalid(format!("n_clusters must lie in 1..={n_neurons}, got {n_clusters}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be a finite non-negative number, got {noise}")));
    }
    let clusters: Vec<usize> = (0..n_neurons).map(|n| cluster_of(n, n_neurons, n_clusters)).collect();
    let (h, w) = conv_map.unwrap_or((1, 1));
    let examples = n_groups * examples_per_group;
    let mut rng = rng::seeded(seed, stream::SYNTH);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(examples * h * w * n_neurons);
    let mut labels = Vec::with_capacity(examples);
    for g in 0..n_groups {
        for _ in 0..examples_per_group {
            labels.push(g.to_string());
            for _ in 0..h * w {
                for &c in &clusters {
                    let base = if g % n_clusters == c { 1.0 } else { 0.0 };
                    let jitter = if noise > 0.0 { noise * normal.sample(&mut rng) } else { 0.0 };
                    values.push((base + jitter) as f32);
                }
            }
        }
    }
    let (kind, shape) = match conv_map {
        Some(_) => (LayerKind::Conv, vec![examples, h, w, n_neurons]),
        None => (LayerKind::Dense, vec![examples, n_neurons]),
    };
    let activations = ActivationSet::new("synthetic", kind, shape, values, labels)?.with_seed(seed);
    Ok(SynthData { activations, clusters })
}

/// Writes `manifest.json`, `activations.npy`, `labels.npy` and `clusters.npy`
/// into `dir`; returns the manifest path.
pub fn write_synth(data: &SynthData, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let acts = &data.activations;
    npy::write_f32(&dir.join("activations.npy"), acts.shape(), acts.values())?;
    let labels: Vec<i64> = acts.labels.iter().map(|l| l.parse().expect("synthetic labels are integers")).collect();
    npy::write_i64(&dir.join("labels.npy"), &labels)?;
    let clusters: Vec<i64> = data.clusters.iter().map(|&c| c as i64).collect();
    npy::write_i64(&dir.join("clusters.npy"), &clusters)?;
    let manifest = Manifest {
        layer_name: acts.layer_name.clone(),
        layer_kind: acts.layer_kind,
        activations: PathBuf::from("activations.npy"),
        labels: PathBuf::from("labels.npy"),
        shape: acts.shape().to_vec(),
        predictions: None,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}
