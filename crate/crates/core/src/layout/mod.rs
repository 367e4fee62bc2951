//! Neuron layouts: 2D coordinates for every neuron of a NAP matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nap::NapMatrix;
use crate::pso::{self, PsoParams};

pub mod graph;
pub mod pca;
pub mod som;
pub mod tsne;
pub mod umap;

pub use graph::{layout_graph, CoactivationGraph, GraphParams};
pub use pca::{layout_pca, pca_project, PcaProjection};
pub use som::{layout_som, SomParams};
pub use tsne::{layout_tsne, TsneParams};
pub use umap::{layout_umap, UmapParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Som,
    Graph,
    Pca,
    Tsne,
    Umap,
    Pso,
    SomPso,
    GraphPso,
    PcaPso,
    TsnePso,
    UmapPso,
    RandomBaseline,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Som,
        Method::Graph,
        Method::Pca,
        Method::Tsne,
        Method::Umap,
        Method::Pso,
        Method::SomPso,
        Method::GraphPso,
        Method::PcaPso,
        Method::TsnePso,
        Method::UmapPso,
        Method::RandomBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Som => "som",
            Method::Graph => "graph",
            Method::Pca => "pca",
            Method::Tsne => "tsne",
            Method::Umap => "umap",
            Method::Pso => "pso",
            Method::SomPso => "som_pso",
            Method::GraphPso => "graph_pso",
            Method::PcaPso => "pca_pso",
            Method::TsnePso => "tsne_pso",
            Method::UmapPso => "umap_pso",
            Method::RandomBaseline => "random_baseline",
        }
    }

    /// The similarity-driven engine a hybrid starts from.
    pub fn base(self) -> Option<Method> {
        match self {
            Method::SomPso => Some(Method::Som),
            Method::GraphPso => Some(Method::Graph),
            Method::PcaPso => Some(Method::Pca),
            Method::TsnePso => Some(Method::Tsne),
            Method::UmapPso => Some(Method::Umap),
            _ => None,
        }
    }

    pub fn hybrid(self) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.base() == Some(self))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown layout method {s:?}")))
    }
}

/// Neuron coordinates with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `N×2`, rows in `neuron_ids` order.
    pub coords: Array2<f64>,
    pub method: Method,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    pub neuron_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    method: Method,
    seed: u64,
    params: BTreeMap<String, Value>,
    neuron_ids: Vec<String>,
    coords: Vec<[f64; 2]>,
}

impl Layout {
    /// Builds a layout from raw engine output, scaling it to the unit square.
    pub fn from_raw(raw: &Array2<f64>, method: Method, seed: u64, neuron_ids: Vec<String>) -> Self {
        Self { coords: scale_coordinates(raw), method, seed, params: BTreeMap::new(), neuron_ids }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords[[i, 0]], self.coords[[i, 1]]]
    }

    pub fn to_json(&self) -> String {
        let file = LayoutFile {
            method: self.method,
            seed: self.seed,
            params: self.params.clone(),
            neuron_ids: self.neuron_ids.clone(),
            coords: (0..self.len()).map(|i| self.point(i)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("layout serializes") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let file: LayoutFile = serde_json::from_str(text)?;
        let mut coords = Array2::zeros((file.coords.len(), 2));
        for (i, [x, y]) in file.coords.into_iter().enumerate() {
            coords[[i, 0]] = x;
            coords[[i, 1]] = y;
        }
        Ok(Self { coords, method: file.method, seed: file.seed, params: file.params, neuron_ids: file.neuron_ids })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))
    }
}

/// Maps each column affinely onto `[0, 1]`; a constant column becomes 0.5.
pub fn scale_coordinates(raw: &Array2<f64>) -> Array2<f64> {
    let mut out = raw.clone();
    for mut col in out.columns_mut() {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi > lo {
            let span = hi - lo;
            col.mapv_inplace(|v| (v - lo) / span);
        } else {
            col.fill(0.5);
        }
    }
    out
}

/// Parameters for every engine; each method reads the part it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LayoutConfig {
    pub som: SomParams,
    pub graph: GraphParams,
    pub tsne: TsneParams,
    pub umap: UmapParams,
    pub pso: PsoParams,
}

/// Runs `method` on `nap` and returns a unit-square layout.
pub fn compute_layout(method: Method, nap: &NapMatrix, config: &LayoutConfig, seed: u64) -> Result<Layout> {
    match method {
        Method::Som => layout_som(nap, &config.som, seed),
        Method::Graph => layout_graph(nap, &config.graph, seed),
        Method::Pca => layout_pca(nap),
        Method::Tsne => layout_tsne(nap, &config.tsne, seed),
        Method::Umap => layout_umap(nap, &config.umap, seed),
        Method::Pso => pso::pso_layout(nap, &config.pso, seed),
        Method::RandomBaseline => pso::random_baseline(nap.n_neurons(), &config.pso, seed)
            .map(|l| Layout { neuron_ids: nap.neuron_ids.clone(), ..l }),
        hybrid => {
            let base = hybrid.base().expect("remaining methods are hybrids");
            pso::hybrid_layout(base, nap, config, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn scale_examples() {
        let raw = array![[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]];
        let scaled = scale_coordinates(&raw);
        assert_eq!(scaled.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(scaled.column(1).to_vec(), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("umap-pso".parse::<Method>().is_err());
    }

    #[test]
    fn layout_json_keeps_coordinates() {
        let layout = Layout::from_raw(&array![[0.0, 1.0], [0.25, 0.5], [1.0, 0.0]], Method::Pca, 3, vec![
            "a".into(),
            "b".into(),
            "c".into(),
        ])
        .with_param("note", "x");
        let back = Layout::from_json(&layout.to_json()).unwrap();
        assert_eq!(back, layout);
    }

    proptest! {
        #[test]
        fn scaling_is_idempotent_and_monotone(
            xs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..40)
        ) {
            let raw = Array2::from_shape_fn((xs.len(), 2), |(i, d)| if d == 0 { xs[i].0 } else { xs[i].1 });
            let once = scale_coordinates(&raw);
            let twice = scale_coordinates(&once);
            prop_assert_eq!(&once, &twice);
            for d in 0..2 {
                let col = once.column(d);
                prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
                for i in 0..xs.len() {
                    for j in 0..xs.len() {
                        if raw[[i, d]] < raw[[j, d]] {
                            prop_assert!(col[i] <= col[j]);
                        }
                    }
                }
            }
        }
    }
}
