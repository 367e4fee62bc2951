//! Two-component PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::layout::{Layout, Method};
use crate::nap::NapMatrix;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// `N×2` projections of the centered rows.
    pub coords: Array2<f64>,
    /// `2×D` unit loadings; a zero row marks a missing component.
    pub components: Array2<f64>,
    /// Sample variance (ddof 1) along each component.
    pub explained_variance: [f64; 2],
}

/// Projects the rows of `data` onto its top two principal directions.
///
/// Each component's sign is chosen so its largest-magnitude loading (first
/// one on ties) is positive. Works from the `D×D` covariance when `D ≤ N`
/// and from the `N×N` Gram matrix otherwise.
pub fn pca_project(data: &Array2<f64>) -> Result<PcaProjection> {
    let (n, d) = data.dim();
    if n < 2 || d < 1 {
        return Err(Error::invalid(format!("PCA needs at least 2 rows and 1 column, got {n}×{d}")));
    }
    let means = data.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centered = data - &means;
    let x = DMatrix::from_fn(n, d, |i, j| centered[[i, j]]);

    let mut components = Array2::<f64>::zeros((2, d));
    let mut eigenvalues = [0.0f64; 2];
    if d <= n {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        let order = descending(eig.eigenvalues.as_slice());
        for (c, &k) in order.iter().take(2).enumerate() {
            eigenvalues[c] = eig.eigenvalues[k].max(0.0);
            for j in 0..d {
                components[[c, j]] = eig.eigenvectors[(j, k)];
            }
        }
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose());
        let order = descending(eig.eigenvalues.as_slice());
        for (c, &k) in order.iter().take(2).enumerate() {
            let lambda = eig.eigenvalues[k].max(0.0);
            eigenvalues[c] = lambda;
            if lambda > 0.0 {
                let u = eig.eigenvectors.column(k);
                let v = x.transpose() * u / lambda.sqrt();
                for j in 0..d {
                    components[[c, j]] = v[j];
                }
            }
        }
    }

    let top = eigenvalues[0];
    for c in 0..2 {
        if eigenvalues[c] <= RANK_TOLERANCE * top || top <= 0.0 {
            eigenvalues[c] = 0.0;
            components.row_mut(c).fill(0.0);
            continue;
        }
        let mut row = components.row_mut(c);
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
        let pivot = row.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }

    let coords = centered.dot(&components.t());
    let explained_variance = [eigenvalues[0] / (n - 1) as f64, eigenvalues[1] / (n - 1) as f64];
    Ok(PcaProjection { coords, components, explained_variance })
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

pub fn layout_pca(nap: &NapMatrix) -> Result<Layout> {
    let n = nap.n_neurons();
    let d = nap.layout_features.ncols();
    if n < 2 || d < 2 {
        return Err(Error::invalid(format!("PCA layout needs N ≥ 2 and D ≥ 2, got N={n}, D={d}")));
    }
    let projection = pca_project(&nap.layout_features)?;
    Ok(Layout::from_raw(&projection.coords, Method::Pca, nap.seed, nap.neuron_ids.clone()))
}
