//! Neuron activation profiles (NAPs).
//!
//! A NAP summarizes how each neuron (or conv filter) responds to each group of
//! examples: the group-wise mean activation, normalized by subtracting the
//! unweighted mean of those group means. The same values color the maps; the
//! layout engines consume either the NAP itself or a stack of raw activations.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationSet, LayerKind};
use crate::error::{Error, Result};
use crate::npy;
use crate::rng::{self, stream, Rng};

/// Examples drawn per group unless configured otherwise.
pub const DEFAULT_SAMPLES_PER_GROUP: usize = 200;
/// Total draw for the class-imbalanced `random` input.
pub const DEFAULT_RANDOM_TOTAL: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Group-averaged, normalized profiles.
    #[default]
    Naps,
    /// Raw activations of `samples_per_group` examples of every group.
    Balanced,
    /// Raw activations of a multinomial, class-imbalanced draw.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: String,
    pub members: Vec<usize>,
}

/// How examples are grouped and subsampled.
///
/// Groups may overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub groups: Vec<Group>,
    #[serde(default = "default_samples")]
    pub samples_per_group: usize,
    #[serde(default)]
    pub mode: InputMode,
    /// Total examples for `InputMode::Random`.
    #[serde(default = "default_total")]
    pub total_examples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES_PER_GROUP
}

fn default_total() -> usize {
    DEFAULT_RANDOM_TOTAL
}

/// Grouping derived from true labels and (optionally) model predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One group per label.
    Class,
    /// `<label>_correct` and `<label>_wrong` per label.
    CorrectWrong,
    /// One group per observed `(label, prediction)` cell, named `<label>-><prediction>`.
    Confusion,
}

impl GroupSpec {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        let spec = Self {
            groups,
            samples_per_group: DEFAULT_SAMPLES_PER_GROUP,
            mode: InputMode::Naps,
            total_examples: DEFAULT_RANDOM_TOTAL,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mode(mut self, mode: InputMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_samples_per_group(mut self, samples: usize) -> Self {
        self.samples_per_group = samples;
        self
    }

    pub fn with_total_examples(mut self, total: usize) -> Self {
        self.total_examples = total;
        self
    }

    /// Groups by label, ordered numerically when every label is an integer and
    /// lexicographically otherwise.
    pub fn from_labels(labels: &[String]) -> Result<Self> {
        let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
        for (e, label) in labels.iter().enumerate() {
            members.entry(label.as_str()).or_default().push(e);
        }
        let mut ids: Vec<&str> = members.keys().copied().collect();
        sort_labels(&mut ids);
        let groups = ids
            .into_iter()
            .map(|id| Group { group_id: id.to_string(), members: members.remove(id).unwrap() })
            .collect();
        Self::new(groups)
    }

    /// Builds one of the label/prediction groupings.
    pub fn from_predictions(labels: &[String], predictions: &[String], grouping: Grouping) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::LabelCountMismatch { labels: predictions.len(), examples: labels.len() });
        }
        if grouping == Grouping::Class {
            return Self::from_labels(labels);
        }
        let mut ids: Vec<&str> = labels.iter().map(String::as_str).collect();
        ids.sort_unstable();
        ids.dedup();
        sort_labels(&mut ids);
        let rank: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();

        // (label rank, sub key) -> (group id, members); BTreeMap keeps a stable order.
        let mut cells: BTreeMap<(usize, usize, String), (String, Vec<usize>)> = BTreeMap::new();
        for (e, (label, pred)) in labels.iter().zip(predictions).enumerate() {
            let r = rank[label.as_str()];
            let (key, id) = match grouping {
                Grouping::CorrectWrong if label == pred => ((r, 0, String::new()), format!("{label}_correct")),
                Grouping::CorrectWrong => ((r, 1, String::new()), format!("{label}_wrong")),
                _ => {
                    let pr = rank.get(pred.as_str()).copied().unwrap_or(usize::MAX);
                    ((r, pr, pred.clone()), format!("{label}->{pred}"))
                }
            };
            cells.entry(key).or_insert_with(|| (id, Vec::new())).1.push(e);
        }
        let groups = cells
            .into_values()
            .map(|(group_id, members)| Group { group_id, members })
            .collect();
        Self::new(groups)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn group_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.group_id.clone()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::invalid("group spec has no groups"));
        }
        if self.samples_per_group == 0 {
            return Err(Error::invalid("samples_per_group must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for g in &self.groups {
            if !seen.insert(g.group_id.as_str()) {
                return Err(Error::invalid(format!("duplicate group id {:?}", g.group_id)));
            }
        }
        Ok(())
    }

    fn check_members(&self, n_examples: usize) -> Result<()> {
        for g in &self.groups {
            if g.members.is_empty() {
                return Err(Error::EmptyGroup(g.group_id.clone()));
            }
            if let Some(&bad) = g.members.iter().find(|&&m| m >= n_examples) {
                return Err(Error::invalid(format!(
                    "group {:?} references example {bad} but only {n_examples} exist",
                    g.group_id
                )));
            }
        }
        Ok(())
    }
}

fn sort_labels(ids: &mut [&str]) {
    if ids.iter().all(|l| l.parse::<i64>().is_ok()) {
        ids.sort_by_key(|l| l.parse::<i64>().unwrap());
    } else {
        ids.sort_unstable();
    }
}

/// Per-neuron feature rows for layouting plus the per-group color values.
#[derive(Debug, Clone, PartialEq)]
pub struct NapMatrix {
    /// `N×D`: `D = G` for dense NAPs, `w·h·G` for conv NAPs, `E'` for stacked inputs.
    pub layout_features: Array2<f64>,
    /// `N×G` values that color each group's map.
    pub color_values: Array2<f64>,
    pub group_ids: Vec<String>,
    pub neuron_ids: Vec<String>,
    pub mode: InputMode,
    pub seed: u64,
}

impl NapMatrix {
    pub fn n_neurons(&self) -> usize {
        self.neuron_ids.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_ids.len()
    }

    /// Largest absolute color value over all groups.
    pub fn vmax(&self) -> f64 {
        self.color_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn group_index(&self, group_id: &str) -> Option<usize> {
        self.group_ids.iter().position(|g| g == group_id)
    }

    /// Restricts the color matrix to `groups` (in that order).
    pub fn select_groups(&self, groups: &[usize]) -> NapMatrix {
        let color = self.color_values.select(ndarray::Axis(1), groups);
        NapMatrix {
            layout_features: self.layout_features.clone(),
            color_values: color,
            group_ids: groups.iter().map(|&g| self.group_ids[g].clone()).collect(),
            neuron_ids: self.neuron_ids.clone(),
            mode: self.mode,
            seed: self.seed,
        }
    }

    /// Writes `<stem>.json` plus two NPY payloads into `dir`; returns the JSON path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let features_name = format!("{stem}_layout_features.npy");
        let color_name = format!("{stem}_color_values.npy");
        let (n, d) = self.layout_features.dim();
        let features: Vec<f64> = self.layout_features.iter().copied().collect();
        npy::write_f64(&dir.join(&features_name), &[n, d], &features)?;
        let colors: Vec<f64> = self.color_values.iter().copied().collect();
        npy::write_f64(&dir.join(&color_name), &[n, self.n_groups()], &colors)?;

        let header = NapHeader {
            group_ids: self.group_ids.clone(),
            neuron_ids: self.neuron_ids.clone(),
            mode: self.mode,
            seed: self.seed,
            layout_features: features_name.into(),
            color_values: color_name.into(),
        };
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let header: NapHeader = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let n = header.neuron_ids.len();
        let g = header.group_ids.len();

        let (shape, values) = npy::read_f64(&base.join(&header.layout_features))?;
        if shape.len() != 2 || shape[0] != n {
            return Err(Error::ShapeMismatch { expected: vec![n, 0], found: shape });
        }
        let layout_features = Array2::from_shape_vec((shape[0], shape[1]), values).unwrap();
        let (shape, values) = npy::read_f64(&base.join(&header.color_values))?;
        if shape != [n, g] {
            return Err(Error::ShapeMismatch { expected: vec![n, g], found: shape });
        }
        let color_values = Array2::from_shape_vec((n, g), values).unwrap();
        Ok(Self {
            layout_features,
            color_values,
            group_ids: header.group_ids,
            neuron_ids: header.neuron_ids,
            mode: header.mode,
            seed: header.seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NapHeader {
    group_ids: Vec<String>,
    neuron_ids: Vec<String>,
    mode: InputMode,
    seed: u64,
    layout_features: PathBuf,
    color_values: PathBuf,
}

fn neuron_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Draws `min(k, |members|)` members without replacement, in ascending order.
fn draw(members: &[usize], k: usize, group_id: &str, rng: &mut Rng) -> Vec<usize> {
    if members.len() <= k {
        if members.len() < k {
            log::warn!("group {group_id:?} has {} examples, fewer than the {k} requested", members.len());
        }
        let mut all = members.to_vec();
        all.sort_unstable();
        return all;
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, members.len(), k)
        .into_iter()
        .map(|i| members[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn draw_groups(acts: &ActivationSet, spec: &GroupSpec) -> Result<Vec<Vec<usize>>> {
    spec.check_members(acts.n_examples())?;
    let mut rng = rng::seeded(acts.seed, stream::SUBSAMPLE);
    let drawn: Vec<Vec<usize>> = spec
        .groups
        .iter()
        .map(|g| draw(&g.members, spec.samples_per_group, &g.group_id, &mut rng))
        .collect();
    if let Some(g) = spec.groups.iter().zip(&drawn).find(|(_, d)| d.is_empty()) {
        return Err(Error::EmptyGroup(g.0.group_id.clone()));
    }
    Ok(drawn)
}

/// Per-group mean of every activation slot: `G` rows of `h·w·C` (or `N`) values.
fn group_means(acts: &ActivationSet, drawn: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let width = acts.values().len() / acts.n_examples();
    drawn
        .iter()
        .map(|examples| {
            let mut sum = vec![0.0f64; width];
            for &e in examples {
                for (s, &v) in sum.iter_mut().zip(acts.example(e)) {
                    *s += f64::from(v);
                }
            }
            let count = examples.len() as f64;
            sum.iter_mut().for_each(|s| *s /= count);
            sum
        })
        .collect()
}

/// Subtracts the unweighted mean over groups from every slot.
fn normalize_across_groups(means: &mut [Vec<f64>]) {
    let g = means.len() as f64;
    let width = means[0].len();
    for slot in 0..width {
        let center = means.iter().map(|m| m[slot]).sum::<f64>() / g;
        for m in means.iter_mut() {
            m[slot] -= center;
        }
    }
}

fn dense_colors(acts: &ActivationSet, spec: &GroupSpec) -> Result<Array2<f64>> {
    let drawn = draw_groups(acts, spec)?;
    let mut means = group_means(acts, &drawn);
    normalize_across_groups(&mut means);
    let n = acts.n_units();
    Ok(Array2::from_shape_fn((n, means.len()), |(i, g)| means[g][i]))
}

/// NAP of a dense layer.
pub fn compute_nap_dense(acts: &ActivationSet, spec: &GroupSpec) -> Result<NapMatrix> {
    if acts.layer_kind != LayerKind::Dense {
        return Err(Error::invalid("compute_nap_dense needs a dense layer"));
    }
    if spec.mode != InputMode::Naps {
        return Err(Error::invalid("compute_nap_dense needs mode=naps"));
    }
    let color_values = dense_colors(acts, spec)?;
    Ok(NapMatrix {
        layout_features: color_values.clone(),
        color_values,
        group_ids: spec.group_ids(),
        neuron_ids: neuron_ids(acts.n_units()),
        mode: InputMode::Naps,
        seed: acts.seed,
    })
}

/// NAP of a convolutional layer.
///
/// Each filter's row concatenates its normalized, group-averaged feature maps
/// (row-major within a map, groups in spec order). Its color value per group
/// is the mean of that group's normalized map.
pub fn compute_nap_conv(acts: &ActivationSet, spec: &GroupSpec) -> Result<NapMatrix> {
    if acts.layer_kind != LayerKind::Conv {
        return Err(Error::invalid("compute_nap_conv needs a conv layer"));
    }
    if spec.mode != InputMode::Naps {
        return Err(Error::invalid(format!(
            "{:?} stacking is only supported for dense layers",
            spec.mode
        )));
    }
    let drawn = draw_groups(acts, spec)?;
    let mut means = group_means(acts, &drawn);
    normalize_across_groups(&mut means);

    let channels = acts.n_units();
    let (h, w) = acts.map_size();
    let positions = h * w;
    let groups = means.len();
    let mut features = Array2::zeros((channels, positions * groups));
    let mut colors = Array2::zeros((channels, groups));
    for c in 0..channels {
        for (g, m) in means.iter().enumerate() {
            let mut total = 0.0;
            for p in 0..positions {
                let v = m[p * channels + c];
                features[[c, g * positions + p]] = v;
                total += v;
            }
            colors[[c, g]] = total / positions as f64;
        }
    }
    Ok(NapMatrix {
        layout_features: features,
        color_values: colors,
        group_ids: spec.group_ids(),
        neuron_ids: neuron_ids(channels),
        mode: InputMode::Naps,
        seed: acts.seed,
    })
}

/// NAP for either layer kind.
pub fn compute_nap(acts: &ActivationSet, spec: &GroupSpec) -> Result<NapMatrix> {
    match (spec.mode, acts.layer_kind) {
        (InputMode::Naps, LayerKind::Dense) => compute_nap_dense(acts, spec),
        (InputMode::Naps, LayerKind::Conv) => compute_nap_conv(acts, spec),
        _ => build_stacked_input(acts, spec),
    }
}

/// Splits `total` draws over `groups` categories with equal probabilities.
pub fn multinomial_split(total: usize, groups: usize, rng: &mut Rng) -> Vec<usize> {
    let mut counts = vec![0; groups];
    for _ in 0..total {
        counts[rng.random_range(0..groups)] += 1;
    }
    counts
}

/// Raw stacked activations as layout input, for the `balanced` and `random` modes.
///
/// Color values are the regular dense NAP so the rendered maps do not depend on
/// the layout input.
pub fn build_stacked_input(acts: &ActivationSet, spec: &GroupSpec) -> Result<NapMatrix> {
    if acts.layer_kind != LayerKind::Dense {
        return Err(Error::invalid(format!(
            "{:?} stacking is only supported for dense layers",
            spec.mode
        )));
    }
    spec.check_members(acts.n_examples())?;
    let mut rng = rng::seeded(acts.seed, stream::STACKING);
    let selected: Vec<usize> = match spec.mode {
        InputMode::Naps => return Err(Error::invalid("build_stacked_input needs mode balanced or random")),
        InputMode::Balanced => spec
            .groups
            .iter()
            .flat_map(|g| draw(&g.members, spec.samples_per_group, &g.group_id, &mut rng))
            .collect(),
        InputMode::Random => {
            let mut available: Vec<usize> = spec.groups.iter().flat_map(|g| g.members.iter().copied()).collect();
            available.sort_unstable();
            available.dedup();
            if spec.total_examples > available.len() {
                return Err(Error::InsufficientExamples {
                    requested: spec.total_examples,
                    available: available.len(),
                });
            }
            let counts = multinomial_split(spec.total_examples, spec.groups.len(), &mut rng);
            spec.groups
                .iter()
                .zip(counts)
                .filter(|(_, k)| *k > 0)
                .flat_map(|(g, k)| draw(&g.members, k, &g.group_id, &mut rng))
                .collect()
        }
    };

    let n = acts.n_units();
    let layout_features =
        Array2::from_shape_fn((n, selected.len()), |(i, col)| f64::from(acts.example(selected[col])[i]));
    let color_spec = GroupSpec { mode: InputMode::Naps, ..spec.clone() };
    let color_values = dense_colors(acts, &color_spec)?;
    Ok(NapMatrix {
        layout_features,
        color_values,
        group_ids: spec.group_ids(),
        neuron_ids: neuron_ids(n),
        mode: spec.mode,
        seed: acts.seed,
    })
}

/// Pairwise cosine distances `1 - cos(row_i, row_j)`, in `[0, 2]`.
///
/// A zero row is at distance 0 from another zero row and 1 from anything else.
pub fn cosine_distance_matrix(features: ArrayView2<f64>) -> Array2<f64> {
    // Distances within this of 0 or 2 are rounding noise from the norm product.
    const SNAP: f64 = 1e-12;
    let n = features.nrows();
    let norms: Vec<f64> = features.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut dist = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = match (norms[i] > 0.0, norms[j] > 0.0) {
                (false, false) => 0.0,
                (true, true) => {
                    let cos = features.row(i).dot(&features.row(j)) / (norms[i] * norms[j]);
                    let d = (1.0 - cos).clamp(0.0, 2.0);
                    if d < SNAP {
                        0.0
                    } else if d > 2.0 - SNAP {
                        2.0
                    } else {
                        d
                    }
                }
                _ => 1.0,
            };
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(per_group: &[usize]) -> Vec<String> {
        per_group
            .iter()
            .enumerate()
            .flat_map(|(g, &k)| std::iter::repeat_n(g.to_string(), k))
            .collect()
    }

    fn dense(values: Vec<f32>, n: usize, labels: Vec<String>) -> ActivationSet {
        let e = labels.len();
        ActivationSet::new("fc", LayerKind::Dense, vec![e, n], values, labels).unwrap()
    }

    #[test]
    fn two_group_means_are_centered() {
        // one neuron, group means 3 and 1 (plus a second neuron to satisfy N >= 2)
        let acts = dense(vec![2.0, 0.0, 4.0, 0.0, 1.0, 0.0, 1.0, 0.0], 2, labels(&[2, 2]));
        let spec = GroupSpec::from_labels(&acts.labels).unwrap();
        let nap = compute_nap_dense(&acts, &spec).unwrap();
        assert_eq!(nap.color_values.row(0).to_vec(), vec![1.0, -1.0]);
        assert_eq!(nap.color_values.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(nap.layout_features, nap.color_values);
    }

    #[test]
    fn identical_groups_give_zero_nap() {
        let acts = dense(vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7], 2, labels(&[1, 1, 1]));
        let spec = GroupSpec::from_labels(&acts.labels).unwrap();
        let nap = compute_nap_dense(&acts, &spec).unwrap();
        assert!(nap.color_values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unequal_group_sizes_use_unweighted_mean() {
        // group 0: three examples of 0, group 1: one example of 4 -> means 0 and 4
        let acts = dense(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0], 2, labels(&[3, 1]));
        let spec = GroupSpec::from_labels(&acts.labels).unwrap();
        let nap = compute_nap_dense(&acts, &spec).unwrap();
        assert_eq!(nap.color_values.row(0).to_vec(), vec![-2.0, 2.0]);
    }

    #[test]
    fn subsampling_caps_at_samples_per_group() {
        let acts = dense((0..40).map(|v| v as f32).collect(), 2, labels(&[10, 10]));
        let spec = GroupSpec::from_labels(&acts.labels).unwrap().with_samples_per_group(3);
        let drawn = draw_groups(&acts, &spec).unwrap();
        assert_eq!(drawn[0].len(), 3);
        assert!(drawn[0].iter().all(|&e| e < 10));
        assert!(drawn[1].iter().all(|&e| (10..20).contains(&e)));
        assert!(drawn[0].windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_group_is_an_error() {
        let acts = dense(vec![0.0; 4], 2, labels(&[2]));
        let spec = GroupSpec::new(vec![
            Group { group_id: "a".into(), members: vec![0, 1] },
            Group { group_id: "b".into(), members: vec![] },
        ])
        .unwrap();
        assert!(matches!(compute_nap_dense(&acts, &spec), Err(Error::EmptyGroup(g)) if g == "b"));
    }

    #[test]
    fn duplicate_group_ids_rejected() {
        let g = Group { group_id: "a".into(), members: vec![0] };
        assert!(GroupSpec::new(vec![g.clone(), g]).is_err());
    }

    #[test]
    fn conv_single_filter_one_by_one() {
        // 1x1 maps, 2 filters (filter 1 constant), groups with means 4 and 2 on filter 0
        let acts = ActivationSet::new(
            "conv",
            LayerKind::Conv,
            vec![2, 1, 1, 2],
            vec![4.0, 5.0, 2.0, 5.0],
            labels(&[1, 1]),
        )
        .unwrap();
        let spec = GroupSpec::from_labels(&acts.labels).unwrap();
        let nap = compute_nap_conv(&acts, &spec).unwrap();
        assert_eq!(nap.layout_features.row(0).to_vec(), vec![1.0, -1.0]);
        assert_eq!(nap.color_values.row(0).to_vec(), vec![1.0, -1.0]);
        assert!(nap.layout_features.row(1).iter().all(|&v| v == 0.0));
        assert!(nap.color_values.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rows_concatenate_group_maps() {
        // 2x1 maps, 2 filters, 2 examples in 2 groups
        // example 0 (group 0): positions p0=[1, 0], p1=[3, 0]
        // example 1 (group 1): positions p0=[3, 0], p1=[1, 0]
        let acts = ActivationSet::new(
            "conv",
            LayerKind::Conv,
            vec![2, 2, 1, 2],
            vec![1.0, 0.0, 3.0, 0.0, 3.0, 0.0, 1.0, 0.0],
            labels(&[1, 1]),
        )
        .unwrap();
        let spec = GroupSpec::from_labels(&acts.labels).unwrap();
        let nap = compute_nap_conv(&acts, &spec).unwrap();
        assert_eq!(nap.layout_features.row(0).to_vec(), vec![-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(nap.color_values.row(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn conv_rejects_stacking() {
        let acts = ActivationSet::new("conv", LayerKind::Conv, vec![2, 1, 1, 2], vec![0.0; 4], labels(&[1, 1]))
            .unwrap();
        let spec = GroupSpec::from_labels(&acts.labels).unwrap().with_mode(InputMode::Balanced);
        assert!(compute_nap(&acts, &spec).is_err());
    }

    #[test]
    fn balanced_stacks_raw_columns() {
        let acts = dense((0..24).map(|v| v as f32).collect(), 2, labels(&[4, 4, 4]));
        let spec = GroupSpec::from_labels(&acts.labels)
            .unwrap()
            .with_mode(InputMode::Balanced)
            .with_samples_per_group(2);
        let nap = build_stacked_input(&acts, &spec).unwrap();
        assert_eq!(nap.layout_features.dim(), (2, 6));
        assert_eq!(nap.color_values.dim(), (2, 3));
        // every column is an untouched example
        for col in nap.layout_features.columns() {
            assert_eq!(col[1], col[0] + 1.0);
            assert_eq!(col[0] % 2.0, 0.0);
        }
    }

    #[test]
    fn random_mode_total_and_errors() {
        let acts = dense((0..40).map(|v| v as f32).collect(), 2, labels(&[10, 10]));
        let spec = GroupSpec::from_labels(&acts.labels)
            .unwrap()
            .with_mode(InputMode::Random)
            .with_total_examples(12);
        let nap = build_stacked_input(&acts, &spec).unwrap();
        assert_eq!(nap.layout_features.ncols(), 12);
        assert_eq!(nap.n_groups(), 2);

        let too_many = spec.clone().with_total_examples(21);
        assert!(matches!(
            build_stacked_input(&acts, &too_many),
            Err(Error::InsufficientExamples { requested: 21, available: 20 })
        ));
    }

    #[test]
    fn random_mode_keeps_all_groups_for_coloring() {
        // with total 1, one class is necessarily absent from the draw
        let acts = dense((0..12).map(|v| v as f32).collect(), 2, labels(&[3, 3]));
        let spec = GroupSpec::from_labels(&acts.labels)
            .unwrap()
            .with_mode(InputMode::Random)
            .with_total_examples(1);
        let nap = build_stacked_input(&acts, &spec).unwrap();
        assert_eq!(nap.layout_features.ncols(), 1);
        assert_eq!(nap.color_values.ncols(), 2);
    }

    #[test]
    fn multinomial_split_matches_binomial_frequencies() {
        // Oracle: with uniform probabilities over 2 classes, P(k of 4) = C(4,k)/16.
        let trials = 16_000;
        let mut hist = [0usize; 5];
        for seed in 0..trials {
            let mut rng = rng::seeded(seed, stream::STACKING);
            let split = multinomial_split(4, 2, &mut rng);
            assert_eq!(split.iter().sum::<usize>(), 4);
            hist[split[0]] += 1;
        }
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        for (k, &count) in hist.iter().enumerate() {
            let expected = binom[k] / 16.0;
            let observed = count as f64 / trials as f64;
            assert!((observed - expected).abs() < 0.015, "k={k}: {observed} vs {expected}");
        }
        let a = multinomial_split(4, 2, &mut rng::seeded(9, 1));
        let b = multinomial_split(4, 2, &mut rng::seeded(9, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn cosine_distance_examples() {
        let rows = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let d = cosine_distance_matrix(rows.view());
        assert_eq!(d[[0, 1]], 1.0);
        assert_eq!(d[[0, 2]], 2.0);
        assert_eq!(d[[0, 3]], 0.0);
        assert_eq!(d[[0, 4]], 1.0);
        assert_eq!(d[[4, 5]], 0.0);
        for i in 0..6 {
            assert_eq!(d[[i, i]], 0.0);
        }
    }

    #[test]
    fn identical_irrational_rows_are_at_zero() {
        let rows = array![[0.1, 0.7, -0.3], [0.1, 0.7, -0.3]];
        assert_eq!(cosine_distance_matrix(rows.view())[[0, 1]], 0.0);
    }

    #[test]
    fn groupings_from_predictions() {
        let labels: Vec<String> = ["0", "0", "1", "1", "0"].iter().map(|s| s.to_string()).collect();
        let preds: Vec<String> = ["0", "1", "1", "1", "1"].iter().map(|s| s.to_string()).collect();
        let cw = GroupSpec::from_predictions(&labels, &preds, Grouping::CorrectWrong).unwrap();
        assert_eq!(cw.group_ids(), vec!["0_correct", "0_wrong", "1_correct"]);
        assert_eq!(cw.groups[1].members, vec![1, 4]);
        let cm = GroupSpec::from_predictions(&labels, &preds, Grouping::Confusion).unwrap();
        assert_eq!(cm.group_ids(), vec!["0->0", "0->1", "1->1"]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let labels: Vec<String> = ["10", "2", "1"].iter().map(|s| s.to_string()).collect();
        let spec = GroupSpec::from_labels(&labels).unwrap();
        assert_eq!(spec.group_ids(), vec!["1", "2", "10"]);
    }

    #[test]
    fn nap_matrix_survives_disk() {
        let acts = dense((0..24).map(|v| (v as f32).sin()).collect(), 3, labels(&[4, 4]));
        let spec = GroupSpec::from_labels(&acts.labels).unwrap();
        let nap = compute_nap_dense(&acts.with_seed(11), &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = nap.save(dir.path(), "nap").unwrap();
        assert_eq!(NapMatrix::load(&path).unwrap(), nap);
    }
}
