//! Activation dumps: one layer's activations for a set of labelled examples.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv,
}

/// Raw activations of one layer.
///
/// Values are stored flat in C order: `E×N` for dense layers and `E×h×w×C`
/// for convolutional layers.
#[derive(Debug, Clone)]
pub struct ActivationSet {
    pub layer_name: String,
    pub layer_kind: LayerKind,
    shape: Vec<usize>,
    values: Vec<f32>,
    pub labels: Vec<String>,
    pub predictions: Option<Vec<String>>,
    /// Seed for every subsampling step derived from this set.
    pub seed: u64,
}

impl ActivationSet {
    pub fn new(
        layer_name: impl Into<String>,
        layer_kind: LayerKind,
        shape: Vec<usize>,
        values: Vec<f32>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let expected_rank = match layer_kind {
            LayerKind::Dense => 2,
            LayerKind::Conv => 4,
        };
        if shape.len() != expected_rank {
            return Err(Error::invalid(format!(
                "{layer_kind:?} activations need rank {expected_rank}, got shape {shape:?}"
            )));
        }
        let total: usize = shape.iter().product();
        if total != values.len() {
            return Err(Error::ShapeMismatch { expected: shape, found: vec![values.len()] });
        }
        let examples = shape[0];
        if examples == 0 {
            return Err(Error::invalid("activation set has no examples"));
        }
        let units = *shape.last().unwrap();
        if units < 2 {
            return Err(Error::invalid(format!("need at least 2 neurons or filters, got {units}")));
        }
        if layer_kind == LayerKind::Conv && (shape[1] == 0 || shape[2] == 0) {
            return Err(Error::invalid(format!("empty feature maps in shape {shape:?}")));
        }
        if labels.len() != examples {
            return Err(Error::LabelCountMismatch { labels: labels.len(), examples });
        }
        if let Some(flat) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { index: unravel(flat, &shape) });
        }
        Ok(Self {
            layer_name: layer_name.into(),
            layer_kind,
            shape,
            values,
            labels,
            predictions: None,
            seed: 0,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_predictions(mut self, predictions: Vec<String>) -> Result<Self> {
        if predictions.len() != self.n_examples() {
            return Err(Error::LabelCountMismatch {
                labels: predictions.len(),
                examples: self.n_examples(),
            });
        }
        self.predictions = Some(predictions);
        Ok(self)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn n_examples(&self) -> usize {
        self.shape[0]
    }

    /// Neurons for dense layers, filters for conv layers.
    pub fn n_units(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// `(h, w)` of one feature map; `(1, 1)` for dense layers.
    pub fn map_size(&self) -> (usize, usize) {
        match self.layer_kind {
            LayerKind::Dense => (1, 1),
            LayerKind::Conv => (self.shape[1], self.shape[2]),
        }
    }

    /// All activations of one example, laid out as `h×w×C` (or `N`).
    pub fn example(&self, e: usize) -> &[f32] {
        let stride = self.values.len() / self.shape[0];
        &self.values[e * stride..(e + 1) * stride]
    }

    /// Multiplies every activation by `k`.
    pub fn scaled(&self, k: f32) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= k);
        out
    }
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut index = vec![0; shape.len()];
    for (slot, &dim) in index.iter_mut().zip(shape).rev() {
        *slot = flat % dim;
        flat /= dim;
    }
    index
}

/// On-disk description of an activation dump.
///
/// Array paths are resolved relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub layer_name: String,
    pub layer_kind: LayerKind,
    pub activations: PathBuf,
    pub labels: PathBuf,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Manifest { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Labels are either an integer NPY array or newline-delimited text.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    if path.extension().is_some_and(|ext| ext == "npy") {
        return Ok(npy::read_ints(path)?.into_iter().map(|l| l.to_string()).collect());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
    while labels.last().is_some_and(|l| l.is_empty()) {
        labels.pop();
    }
    Ok(labels)
}

/// Loads and validates the activation dump described by a manifest file.
pub fn load_activation_set(manifest_path: &Path) -> Result<ActivationSet> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let (shape, values) = npy::read_f32(&base.join(&manifest.activations))?;
    if shape != manifest.shape {
        return Err(Error::ShapeMismatch { expected: manifest.shape, found: shape });
    }
    let labels = read_labels(&base.join(&manifest.labels))?;
    let set = ActivationSet::new(manifest.layer_name, manifest.layer_kind, shape, values, labels)?;
    match manifest.predictions {
        Some(p) => set.with_predictions(read_labels(&base.join(p))?),
        None => Ok(set),
    }
}
