//! Shared fixtures for the benchmarks under `benches/`.

use topomap_core::synth::{generate, SynthParams};
use topomap_core::{compute_nap, GroupSpec, NapMatrix};

/// NAP matrix of the planted-cluster dataset with `n_neurons` neurons.
pub fn synthetic_nap(n_neurons: usize) -> NapMatrix {
    let data = generate(&SynthParams { n_neurons, examples_per_group: 50, seed: 11, ..SynthParams::default() })
        .expect("valid synthetic parameters");
    let spec = GroupSpec::from_labels(&data.activations.labels).expect("labels form groups");
    compute_nap(&data.activations, &spec).expect("nap")
}
