//! Scattered-data linear interpolation over a Delaunay triangulation.

use ndarray::Array2;
use rand::Rng as _;
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::rng::{self, stream};

const JITTER: f64 = 1e-9;
/// Barycentric slack so pixels on a triangle edge count as inside.
const EDGE_SLACK: f64 = 1e-10;

/// An interpolated scalar map with its hull mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TopoImage {
    /// `R×R`, row 0 at the top (y = 1).
    pub field: Array2<f64>,
    /// `true` inside the convex hull of the neurons.
    pub mask: Array2<bool>,
    pub group_id: String,
    /// Shared color limit of the figure this map belongs to.
    pub vmax: f64,
}

impl TopoImage {
    pub fn resolution(&self) -> usize {
        self.field.nrows()
    }

    /// Values with out-of-hull pixels set to `fill`.
    pub fn filled(&self, fill: f64) -> Array2<f64> {
        let mut out = self.field.clone();
        out.zip_mut_with(&self.mask, |v, &inside| {
            if !inside {
                *v = fill;
            }
        });
        out
    }
}

struct Vertex {
    pos: Point2<f64>,
    index: usize,
}

impl HasPosition for Vertex {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

#[derive(Debug, Clone, Copy)]
struct Barycentric {
    vertices: [usize; 3],
    weights: [f64; 3],
}

/// Per-pixel triangle lookup for one layout, reusable across groups.
#[derive(Debug, Clone)]
pub struct Interpolator {
    resolution: usize,
    n_points: usize,
    pixels: Vec<Option<Barycentric>>,
}

/// Pixel `(r, c)` sits at `x = c / (R-1)`, `y = 1 - r / (R-1)`.
pub fn pixel_position(r: usize, c: usize, resolution: usize) -> (f64, f64) {
    let step = (resolution - 1) as f64;
    (c as f64 / step, 1.0 - r as f64 / step)
}

impl Interpolator {
    pub fn new(layout: &Layout, resolution: usize, seed: u64) -> Result<Self> {
        let n = layout.len();
        if resolution < 2 {
            return Err(Error::invalid(format!("resolution must be at least 2, got {resolution}")));
        }
        if n < 3 {
            return Err(Error::InsufficientPoints);
        }
        if layout.coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("layout has non-finite coordinates"));
        }
        let points = separate_duplicates(layout, seed);
        let vertices: Vec<Vertex> = points.iter().enumerate().map(|(index, &(x, y))| Vertex { pos: Point2::new(x, y), index }).collect();
        let tri: DelaunayTriangulation<Vertex> =
            DelaunayTriangulation::bulk_load(vertices).map_err(|e| Error::invalid(format!("triangulation failed: {e:?}")))?;
        if tri.num_inner_faces() == 0 {
            return Err(Error::InsufficientPoints);
        }

        let step = (resolution - 1) as f64;
        let mut pixels: Vec<Option<Barycentric>> = vec![None; resolution * resolution];
        for face in tri.inner_faces() {
            let vs = face.vertices();
            let idx = [vs[0].data().index, vs[1].data().index, vs[2].data().index];
            let p = [points[idx[0]], points[idx[1]], points[idx[2]]];
            let det = (p[1].1 - p[2].1) * (p[0].0 - p[2].0) + (p[2].0 - p[1].0) * (p[0].1 - p[2].1);
            if det == 0.0 {
                continue;
            }
            let (xmin, xmax) = (p[0].0.min(p[1].0).min(p[2].0), p[0].0.max(p[1].0).max(p[2].0));
            let (ymin, ymax) = (p[0].1.min(p[1].1).min(p[2].1), p[0].1.max(p[1].1).max(p[2].1));
            let c_lo = ((xmin * step).floor().max(0.0)) as usize;
            let c_hi = ((xmax * step).ceil().min(step)) as usize;
            let r_lo = (((1.0 - ymax) * step).floor().max(0.0)) as usize;
            let r_hi = (((1.0 - ymin) * step).ceil().min(step)) as usize;
            for r in r_lo..=r_hi {
                for c in c_lo..=c_hi {
                    let slot = &mut pixels[r * resolution + c];
                    if slot.is_some() {
                        continue;
                    }
                    let (x, y) = pixel_position(r, c, resolution);
                    let l0 = ((p[1].1 - p[2].1) * (x - p[2].0) + (p[2].0 - p[1].0) * (y - p[2].1)) / det;
                    let l1 = ((p[2].1 - p[0].1) * (x - p[2].0) + (p[0].0 - p[2].0) * (y - p[2].1)) / det;
                    let l2 = 1.0 - l0 - l1;
                    if l0 >= -EDGE_SLACK && l1 >= -EDGE_SLACK && l2 >= -EDGE_SLACK {
                        let w = [l0.max(0.0), l1.max(0.0), l2.max(0.0)];
                        let total = w[0] + w[1] + w[2];
                        *slot = Some(Barycentric { vertices: idx, weights: [w[0] / total, w[1] / total, w[2] / total] });
                    }
                }
            }
        }
        Ok(Self { resolution, n_points: n, pixels })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn mask(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.resolution, self.resolution), |(r, c)| self.pixels[r * self.resolution + c].is_some())
    }

    /// Interpolated values; out-of-hull pixels hold 0.
    pub fn field(&self, values: &[f64]) -> Array2<f64> {
        assert_eq!(values.len(), self.n_points, "one value per neuron");
        let r = self.resolution;
        Array2::from_shape_fn((r, r), |(i, j)| match &self.pixels[i * r + j] {
            Some(b) => {
                let v = b.weights[0] * values[b.vertices[0]] + b.weights[1] * values[b.vertices[1]] + b.weights[2] * values[b.vertices[2]];
                // a convex combination cannot leave the vertex range
                let lo = values[b.vertices[0]].min(values[b.vertices[1]]).min(values[b.vertices[2]]);
                let hi = values[b.vertices[0]].max(values[b.vertices[1]]).max(values[b.vertices[2]]);
                v.clamp(lo, hi)
            }
            None => 0.0,
        })
    }

    pub fn image(&self, values: &[f64], group_id: &str, vmax: f64) -> TopoImage {
        TopoImage { field: self.field(values), mask: self.mask(), group_id: group_id.to_string(), vmax }
    }
}

/// Coordinates with repeated points nudged apart by a seeded `1e-9` jitter.
fn separate_duplicates(layout: &Layout, seed: u64) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = (0..layout.len()).map(|i| (layout.coords[[i, 0]], layout.coords[[i, 1]])).collect();
    let mut seen = std::collections::HashSet::new();
    let mut rng = rng::seeded(seed, stream::JITTER);
    for p in points.iter_mut() {
        while !seen.insert((p.0.to_bits(), p.1.to_bits())) {
            p.0 += rng.random_range(-JITTER..JITTER);
            p.1 += rng.random_range(-JITTER..JITTER);
        }
    }
    points
}

/// One-off interpolation of `values` over `layout`; `vmax` is `max |values|`.
pub fn interpolate_field(layout: &Layout, values: &[f64], resolution: usize) -> Result<TopoImage> {
    if values.len() != layout.len() {
        return Err(Error::ShapeMismatch { expected: vec![layout.len()], found: vec![values.len()] });
    }
    let interp = Interpolator::new(layout, resolution, layout.seed)?;
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(interp.image(values, "", vmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Method;
    use ndarray::array;
    use proptest::prelude::*;

    fn layout(coords: Array2<f64>) -> Layout {
        let n = coords.nrows();
        Layout { coords, method: Method::Pca, seed: 0, params: Default::default(), neuron_ids: (0..n).map(|i| i.to_string()).collect() }
    }

    #[test]
    fn centroid_of_corner_triangle() {
        // pixel (2, 1) of a 4×4 grid sits at (1/3, 1/3), the centroid
        let l = layout(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let img = interpolate_field(&l, &[0.0, 0.0, 3.0], 4).unwrap();
        assert!((img.field[[2, 1]] - 1.0).abs() < 1e-12);
        assert!(img.mask[[2, 1]]);
        assert!(!img.mask[[0, 3]]);
    }

    #[test]
    fn constant_values_interpolate_to_constant() {
        let l = layout(array![[0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [0.6, 0.5], [0.9, 0.9]]);
        let img = interpolate_field(&l, &[0.7; 5], 50).unwrap();
        for (v, &m) in img.field.iter().zip(img.mask.iter()) {
            if m {
                assert!((v - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_at_vertices() {
        let l = layout(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]]);
        let img = interpolate_field(&l, &[1.0, 2.0, 3.0, 4.0, 5.0], 101).unwrap();
        assert!((img.field[[100, 0]] - 1.0).abs() < 1e-6);
        assert!((img.field[[100, 100]] - 2.0).abs() < 1e-6);
        assert!((img.field[[0, 0]] - 3.0).abs() < 1e-6);
        assert!((img.field[[0, 100]] - 4.0).abs() < 1e-6);
        assert!((img.field[[50, 50]] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_or_collinear_points_fail() {
        let two = layout(array![[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(interpolate_field(&two, &[0.0, 1.0], 10), Err(Error::InsufficientPoints)));
        let line = layout(array![[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]);
        let err = interpolate_field(&line, &[0.0, 1.0, 2.0], 10).unwrap_err();
        assert_eq!(err.to_string(), "insufficient points for triangulation");
    }

    #[test]
    fn duplicates_are_separated() {
        let l = layout(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]);
        let img = interpolate_field(&l, &[0.0, 1.0, 2.0, 2.0], 20).unwrap();
        assert!(img.mask.iter().any(|&m| m));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn interpolation_stays_within_value_range(
            pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0), 4..25)
        ) {
            let coords = Array2::from_shape_fn((pts.len(), 2), |(i, d)| if d == 0 { pts[i].0 } else { pts[i].1 });
            let values: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let l = layout(coords);
            if let Ok(img) = interpolate_field(&l, &values, 40) {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for (v, &m) in img.field.iter().zip(img.mask.iter()) {
                    if m {
                        prop_assert!(*v >= lo && *v <= hi);
                    }
                }
            }
        }
    }
}
