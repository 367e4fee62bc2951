//! Topographic activation maps.
//!
//! Hidden-layer activations are summarized per group of examples into neuron
//! activation profiles ([`nap`]), the neurons are placed in 2D so that similar
//! neurons end up close ([`layout`], [`pso`]), and every group's profile is
//! interpolated over that layout into an image ([`render`]). [`quality`]
//! scores how smooth the resulting maps are.

pub mod activation;
pub mod error;
pub mod layout;
pub mod nap;
pub mod npy;
pub mod pso;
pub mod quality;
pub mod render;
pub mod rng;
pub mod synth;

pub use activation::{load_activation_set, ActivationSet, LayerKind, Manifest};
pub use error::{Error, Result};
pub use nap::{
    build_stacked_input, compute_nap, compute_nap_conv, compute_nap_dense, cosine_distance_matrix, Group,
    GroupSpec, Grouping, InputMode, NapMatrix,
};
pub use layout::{compute_layout, scale_coordinates, Layout, LayoutConfig, Method};
pub use pso::{PsoMode, PsoParams};
pub use quality::{evaluate_layout, robustness_trials, Evaluation, Metric, NapSource, QualityReport, TrialReport};
pub use render::{render_grid, Figure, GridSpec, RenderOptions, TopoImage};
pub use synth::{generate as generate_synth, SynthParams};
