//! Force-based particle layout.
//!
//! Every neuron is a particle. A global force pulls together neurons with
//! similar NAPs, a local force keeps particles at a comfortable spacing, and
//! the mix shifts from global to local over the run. Hybrids start from
//! another engine's layout and apply the local force only.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{compute_layout, Layout, LayoutConfig, Method};
use crate::nap::{cosine_distance_matrix, NapMatrix};
use crate::rng::{self, stream};

/// `a`, `b`, `c` of a force law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ForceWeights {
    pub const GLOBAL: ForceWeights = ForceWeights { a: 1.5, b: 0.5, c: 2.0 };
    pub const LOCAL: ForceWeights = ForceWeights { a: 1.5, b: 15.0, c: 2.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsoMode {
    #[default]
    Full,
    LocalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoParams {
    pub steps: usize,
    pub global_weights: ForceWeights,
    pub local_weights: ForceWeights,
    /// Force-to-displacement factor; `None` means `0.05 / N`.
    pub step_size: Option<f64>,
    pub max_step: f64,
    pub mode: PsoMode,
    /// Read the global attraction as `1 - d / max(d)^3` instead of `1 - (d / max(d))^3`.
    pub eq1_literal: bool,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            steps: 1000,
            global_weights: ForceWeights::GLOBAL,
            local_weights: ForceWeights::LOCAL,
            step_size: None,
            max_step: 0.1,
            mode: PsoMode::Full,
            eq1_literal: false,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("PSO needs at least one step"));
        }
        for w in [self.global_weights, self.local_weights] {
            if !(w.a > 0.0 && w.b > 0.0 && w.c > 0.0) {
                return Err(Error::invalid(format!("force weights must be positive, got {w:?}")));
            }
        }
        if let Some(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid(format!("step size must be positive, got {eta}")));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid(format!("max_step must be positive, got {}", self.max_step)));
        }
        Ok(())
    }

    pub fn step_size_for(&self, n: usize) -> f64 {
        self.step_size.unwrap_or(0.05 / n as f64)
    }
}

/// Global force between two neurons whose NAP distance is `dist`.
pub fn global_force_value(dist: f64, max_dist: f64, w: ForceWeights, literal: bool) -> f64 {
    let attraction = if max_dist <= 0.0 {
        w.a
    } else if literal {
        w.a * (1.0 - dist / max_dist.powi(3))
    } else {
        w.a * (1.0 - (dist / max_dist).powi(3))
    };
    attraction - w.b * (-dist / w.c).exp()
}

/// Pairwise global forces from a NAP distance matrix; zero diagonal.
pub fn global_force(nap_dist: &Array2<f64>, w: ForceWeights, literal: bool) -> Array2<f64> {
    let n = nap_dist.nrows();
    let mut max_dist = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_dist = max_dist.max(nap_dist[[i, j]]);
            }
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { global_force_value(nap_dist[[i, j]], max_dist, w, literal) })
}

/// Local force between two particles `d` apart.
pub fn local_force_value(d: f64, w: ForceWeights) -> f64 {
    w.a / (d + 1.0).powi(3) - w.b * (-d / w.c).exp()
}

/// Pairwise local forces from particle positions; zero diagonal.
pub fn local_force(coords: &Array2<f64>, w: ForceWeights) -> Array2<f64> {
    let n = coords.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            let d = ((coords[[i, 0]] - coords[[j, 0]]).powi(2) + (coords[[i, 1]] - coords[[j, 1]]).powi(2)).sqrt();
            local_force_value(d, w)
        }
    })
}

/// `(w_g, w_l)` at step `t` of `total`, with `w_l = (tanh(9t/T - 3) + 1) / 2`.
pub fn weight_schedule(t: usize, total: usize) -> (f64, f64) {
    let s = 9.0 * t as f64 / total as f64 - 3.0;
    let w_l = (s.tanh() + 1.0) / 2.0;
    (1.0 - w_l, w_l)
}

/// Runs the particle simulation from `init` and returns raw coordinates.
///
/// Every step moves particle `i` by `eta * sum_j f[i,j] * u_ij`, where `u_ij`
/// points from `i` to `j` and `f = (w_g f_glob + w_l f_loc) / 2`; the move is
/// clamped to `max_step`. Coincident pairs get a random direction.
pub fn pso_refine(init: &Array2<f64>, nap_dist: Option<&Array2<f64>>, params: &PsoParams, seed: u64) -> Result<Array2<f64>> {
    params.validate()?;
    let n = init.nrows();
    if init.ncols() != 2 {
        return Err(Error::invalid(format!("PSO expects N×2 coordinates, got {:?}", init.dim())));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "pso", step: 0 });
    }
    let global = match (params.mode, nap_dist) {
        (PsoMode::Full, Some(dist)) => {
            if dist.dim() != (n, n) {
                return Err(Error::invalid(format!("distance matrix is {:?}, expected {n}×{n}", dist.dim())));
            }
            Some(global_force(dist, params.global_weights, params.eq1_literal))
        }
        (PsoMode::Full, None) => return Err(Error::invalid("full PSO needs a NAP distance matrix")),
        (PsoMode::LocalOnly, _) => None,
    };
    let eta = params.step_size_for(n);
    let local_w = params.local_weights;
    let mut rng = rng::seeded(seed, stream::PSO);
    let mut pos: Vec<[f64; 2]> = init.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let mut disp = vec![[0.0f64; 2]; n];

    for t in 0..params.steps {
        let (w_g, w_l) = match params.mode {
            PsoMode::Full => weight_schedule(t, params.steps),
            PsoMode::LocalOnly => (0.0, 1.0),
        };
        disp.iter_mut().for_each(|d| *d = [0.0, 0.0]);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = pos[j][0] - pos[i][0];
                let dy = pos[j][1] - pos[i][1];
                let d = (dx * dx + dy * dy).sqrt();
                let (ux, uy) = if d > 0.0 {
                    (dx / d, dy / d)
                } else {
                    let angle = rng.random::<f64>() * std::f64::consts::TAU;
                    (angle.cos(), angle.sin())
                };
                let mut f = w_l * local_force_value(d, local_w);
                if let Some(g) = &global {
                    f += w_g * g[[i, j]];
                }
                let f = 0.5 * f;
                disp[i][0] += f * ux;
                disp[i][1] += f * uy;
                disp[j][0] -= f * ux;
                disp[j][1] -= f * uy;
            }
        }
        for (p, d) in pos.iter_mut().zip(&disp) {
            let (mut mx, mut my) = (eta * d[0], eta * d[1]);
            let len = (mx * mx + my * my).sqrt();
            if len > params.max_step {
                mx *= params.max_step / len;
                my *= params.max_step / len;
            }
            p[0] += mx;
            p[1] += my;
        }
        if pos.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::NonFinite { stage: "pso", step: t });
        }
    }
    Ok(Array2::from_shape_fn((n, 2), |(i, k)| pos[i][k]))
}

fn index_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// [`pso_refine`] followed by scaling to the unit square.
pub fn pso_optimize(init: &Array2<f64>, nap_dist: Option<&Array2<f64>>, params: &PsoParams, seed: u64) -> Result<Layout> {
    let raw = pso_refine(init, nap_dist, params, seed)?;
    let method = match params.mode {
        PsoMode::Full => Method::Pso,
        PsoMode::LocalOnly => Method::RandomBaseline,
    };
    Ok(Layout::from_raw(&raw, method, seed, index_ids(init.nrows())).with_param("steps", params.steps))
}

fn uniform_square(n: usize, seed: u64, stream: u64) -> Array2<f64> {
    let mut rng = rng::seeded(seed, stream);
    Array2::from_shape_fn((n, 2), |_| rng.random::<f64>())
}

/// Full PSO from a uniform random start.
pub fn pso_layout(nap: &NapMatrix, params: &PsoParams, seed: u64) -> Result<Layout> {
    let n = nap.n_neurons();
    if n < 2 {
        return Err(Error::invalid(format!("PSO layout needs at least 2 neurons, got {n}")));
    }
    let params = PsoParams { mode: PsoMode::Full, ..params.clone() };
    let dist = cosine_distance_matrix(nap.layout_features.view());
    let init = uniform_square(n, seed, stream::LAYOUT);
    let raw = pso_refine(&init, Some(&dist), &params, seed)?;
    Ok(Layout::from_raw(&raw, Method::Pso, seed, nap.neuron_ids.clone())
        .with_param("steps", params.steps)
        .with_param("eq1_literal", params.eq1_literal))
}

/// Local-force-only PSO from a uniform random start: the quality floor.
pub fn random_baseline(n: usize, params: &PsoParams, seed: u64) -> Result<Layout> {
    if n < 2 {
        return Err(Error::invalid(format!("random baseline needs at least 2 neurons, got {n}")));
    }
    let params = PsoParams { mode: PsoMode::LocalOnly, ..params.clone() };
    let init = uniform_square(n, seed, stream::BASELINE_INIT);
    let raw = pso_refine(&init, None, &params, seed)?;
    Ok(Layout::from_raw(&raw, Method::RandomBaseline, seed, index_ids(n)).with_param("steps", params.steps))
}

/// Runs `base`, then refines its scaled layout with the local force only.
pub fn hybrid_layout(base: Method, nap: &NapMatrix, config: &LayoutConfig, seed: u64) -> Result<Layout> {
    let hybrid = base
        .hybrid()
        .ok_or_else(|| Error::invalid(format!("{base} has no PSO hybrid")))?;
    let start = compute_layout(base, nap, config, seed)?;
    let params = PsoParams { mode: PsoMode::LocalOnly, ..config.pso.clone() };
    let raw = pso_refine(&start.coords, None, &params, seed)?;
    let mut layout = Layout::from_raw(&raw, hybrid, seed, nap.neuron_ids.clone())
        .with_param("base_method", base.name())
        .with_param("base_seed", start.seed)
        .with_param("pso_seed", seed)
        .with_param("steps", params.steps);
    for (k, v) in start.params {
        layout.params.insert(format!("base.{k}"), v);
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn local(d: f64) -> f64 {
        local_force_value(d, ForceWeights::LOCAL)
    }

    /// Root of the local force by plain bisection.
    fn equilibrium() -> f64 {
        let (mut lo, mut hi) = (0.0f64, 100.0f64);
        assert!(local(lo) < 0.0 && local(hi) > 0.0);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if local(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn global_force_examples() {
        let w = ForceWeights::GLOBAL;
        assert_eq!(global_force_value(0.0, 2.0, w, false), 1.0);
        let at_max = global_force_value(2.0, 2.0, w, false);
        assert_eq!(at_max, -0.5 * (-1.0f64).exp());
        assert!((at_max + 0.1839).abs() < 1e-4);
        assert_eq!(global_force_value(0.7, 0.0, w, false), 1.5 - 0.5 * (-0.35f64).exp());
        // literal reading: 1 - 1/8 at dist = max = 2
        assert_eq!(global_force_value(2.0, 2.0, w, true), 1.5 * 0.75 - 0.5 * (-1.0f64).exp());
    }

    #[test]
    fn global_force_matrix_has_zero_diagonal() {
        let dist = array![[0.0, 1.0, 2.0], [1.0, 0.0, 0.5], [2.0, 0.5, 0.0]];
        let f = global_force(&dist, ForceWeights::GLOBAL, false);
        for i in 0..3 {
            assert_eq!(f[[i, i]], 0.0);
        }
        assert_eq!(f[[0, 2]], -0.5 * (-1.0f64).exp());
    }

    #[test]
    fn local_force_examples() {
        assert_eq!(local(0.0), -13.5);
        assert!(local(1e6) >= 0.0);
        assert!(local(200.0) > 0.0 && local(200.0) < 1e-6);
        let f = local_force(&array![[0.0, 0.0], [3.0, 4.0]], ForceWeights::LOCAL);
        assert_eq!(f[[0, 1]], local(5.0));
        assert_eq!(f[[0, 0]], 0.0);
    }

    #[test]
    fn local_force_flips_sign_at_equilibrium() {
        let d_star = equilibrium();
        assert!(local(d_star - 1e-3) < 0.0);
        assert!(local(d_star + 1e-3) > 0.0);
    }

    #[test]
    fn weight_schedule_examples() {
        let (wg, wl) = weight_schedule(0, 1000);
        assert_eq!(wl, ((-3.0f64).tanh() + 1.0) / 2.0);
        assert!((wl - 0.002473).abs() < 1e-6);
        assert!((wg - 0.997527).abs() < 1e-6);
        assert_eq!(weight_schedule(1000, 3000), (0.5, 0.5));
        let (_, wl_end) = weight_schedule(1000, 1000);
        assert_eq!(wl_end, (6.0f64.tanh() + 1.0) / 2.0);
    }

    #[test]
    fn weight_schedule_sums_to_one_and_rises() {
        for total in [1, 7, 1000] {
            let mut prev = 0.0;
            for t in 0..=total {
                let (wg, wl) = weight_schedule(t, total);
                assert_eq!(wg + wl, 1.0, "t={t} T={total}");
                assert!(wl >= prev);
                prev = wl;
            }
        }
    }

    fn local_params(steps: usize) -> PsoParams {
        PsoParams { steps, mode: PsoMode::LocalOnly, ..PsoParams::default() }
    }

    #[test]
    fn particles_at_equilibrium_stay_put() {
        let d_star = equilibrium();
        let init = array![[0.0, 0.0], [d_star, 0.0]];
        let out = pso_refine(&init, None, &local_params(1), 0).unwrap();
        for (a, b) in out.iter().zip(init.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn two_particles_converge_to_equilibrium() {
        let d_star = equilibrium();
        let params = PsoParams { step_size: Some(50.0), ..local_params(20_000) };
        let out = pso_refine(&array![[0.4, 0.5], [0.6, 0.5]], None, &params, 1).unwrap();
        let d = ((out[[0, 0]] - out[[1, 0]]).powi(2) + (out[[0, 1]] - out[[1, 1]]).powi(2)).sqrt();
        assert!((d - d_star).abs() < 1e-6, "{d} vs {d_star}");
    }

    #[test]
    fn coincident_particles_separate_after_one_step() {
        let out = pso_refine(&array![[0.5, 0.5], [0.5, 0.5]], None, &local_params(1), 9).unwrap();
        let d = ((out[[0, 0]] - out[[1, 0]]).powi(2) + (out[[0, 1]] - out[[1, 1]]).powi(2)).sqrt();
        assert!(d > 0.0);
    }

    #[test]
    fn many_coincident_particles_all_separate() {
        let init = Array2::from_elem((6, 2), 0.3);
        let out = pso_refine(&init, None, &local_params(1), 2).unwrap();
        for i in 0..6 {
            for j in (i + 1)..6 {
                assert!(out[[i, 0]] != out[[j, 0]] || out[[i, 1]] != out[[j, 1]]);
            }
        }
    }

    #[test]
    fn full_mode_needs_distances() {
        assert!(pso_refine(&array![[0.0, 0.0], [1.0, 1.0]], None, &PsoParams::default(), 0).is_err());
    }

    #[test]
    fn full_mode_groups_similar_neurons() {
        // neurons 0..5 share one NAP, 5..10 the opposite one
        let n = 10;
        let dist = Array2::from_shape_fn((n, n), |(i, j)| if (i < 5) == (j < 5) { 0.0 } else { 2.0 });
        let mut rng = rng::seeded(4, stream::SYNTH);
        let init = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let out = pso_refine(&init, Some(&dist), &PsoParams::default(), 4).unwrap();
        let d = |a: usize, b: usize| ((out[[a, 0]] - out[[b, 0]]).powi(2) + (out[[a, 1]] - out[[b, 1]]).powi(2)).sqrt();
        let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0, 0);
        for a in 0..n {
            for b in (a + 1)..n {
                if (a < 5) == (b < 5) {
                    intra += d(a, b);
                    ni += 1;
                } else {
                    inter += d(a, b);
                    nx += 1;
                }
            }
        }
        assert!(intra / (ni as f64) < inter / (nx as f64));
    }

    fn nn_ratio(c: &Array2<f64>) -> f64 {
        let n = c.nrows();
        let nn: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| ((c[[i, 0]] - c[[j, 0]]).powi(2) + (c[[i, 1]] - c[[j, 1]]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        nn.iter().cloned().fold(0.0, f64::max) / nn.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn local_refinement_evens_out_spacing() {
        for seed in 0..20 {
            let init = uniform_square(30, seed, stream::SYNTH);
            let out = pso_refine(&init, None, &local_params(1000), seed).unwrap();
            assert!(nn_ratio(&out) <= nn_ratio(&init), "seed {seed}: {} > {}", nn_ratio(&out), nn_ratio(&init));
        }
    }

    #[test]
    fn baseline_is_reproducible_and_spread() {
        let a = random_baseline(128, &PsoParams::default(), 11).unwrap();
        let b = random_baseline(128, &PsoParams::default(), 11).unwrap();
        assert_eq!(a, b);
        for i in 0..128 {
            for j in (i + 1)..128 {
                assert_ne!(a.point(i), a.point(j));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn two_particles_move_symmetrically(
            x0 in -5.0f64..5.0, y0 in -5.0f64..5.0, x1 in -5.0f64..5.0, y1 in -5.0f64..5.0
        ) {
            let init = array![[x0, y0], [x1, y1]];
            let out = pso_refine(&init, None, &local_params(1), 0).unwrap();
            let d0 = [out[[0, 0]] - x0, out[[0, 1]] - y0];
            let d1 = [out[[1, 0]] - x1, out[[1, 1]] - y1];
            prop_assert!((d0[0] + d1[0]).abs() < 1e-12);
            prop_assert!((d0[1] + d1[1]).abs() < 1e-12);
        }

        #[test]
        fn global_force_ignores_nap_scale(
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), 3..8),
            k in 0.01f64..100.0
        ) {
            let n = rows.len();
            let x = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j]);
            let a = global_force(&cosine_distance_matrix(x.view()), ForceWeights::GLOBAL, false);
            let b = global_force(&cosine_distance_matrix((&x * k).view()), ForceWeights::GLOBAL, false);
            for (u, v) in a.iter().zip(b.iter()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
