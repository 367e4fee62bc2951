//! Image alterations for the quality metrics: Gaussian blur and bicubic resizing.
//!
//! Every filter here is a normalized weighted sum, evaluated as
//! `x_ref + Σ w_k (x_k − x_ref)` so a constant image comes back bit-identical.

use ndarray::{Array2, ArrayView2};

/// Index into `0..n` with mirror reflection that does not repeat the edge
/// pixel (`-1 → 1`, `n → n-2`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Symmetric Gaussian weights `w[0..=h]` for offsets `0..=h`, `h = ceil(3σ)`,
/// normalized over the full `2h+1` window.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as usize;
    let raw: Vec<f64> = (0..=half).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    raw.into_iter().map(|w| w / total).collect()
}

/// Vertical pass: row `i` of the output mixes rows `i ± k`.
fn blur_columns(img: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let data = img.as_standard_layout();
    let src = data.as_slice().expect("standard layout");
    let mut out = vec![0.0; rows * cols];
    let mut acc = vec![0.0; cols];
    for i in 0..rows {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let center = &src[i * cols..(i + 1) * cols];
        for (k, &w) in kernel.iter().enumerate().skip(1) {
            let up = reflect(i as isize - k as isize, rows);
            let down = reflect(i as isize + k as isize, rows);
            let (a, b) = (&src[up * cols..(up + 1) * cols], &src[down * cols..(down + 1) * cols]);
            for j in 0..cols {
                acc[j] += w * ((a[j] - center[j]) + (b[j] - center[j]));
            }
        }
        for j in 0..cols {
            out[i * cols + j] = center[j] + acc[j];
        }
    }
    Array2::from_shape_vec((rows, cols), out).expect("shape matches")
}

/// Separable Gaussian blur with mirror borders.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let vertical = blur_columns(img, &kernel);
    let transposed = vertical.t().as_standard_layout().into_owned();
    blur_columns(&transposed, &kernel).t().as_standard_layout().into_owned()
}

/// Catmull–Rom cubic (`a = -0.5`), support 2.
pub fn bicubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * A
    } else {
        0.0
    }
}

/// For each output index, the first input index and the normalized weights.
///
/// Downscaling widens the kernel by the scale factor (antialiasing); windows
/// are clipped at the borders and renormalized.
pub fn resample_coefficients(in_size: usize, out_size: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = in_size as f64 / out_size as f64;
    let filter_scale = scale.max(1.0);
    let support = 2.0 * filter_scale;
    (0..out_size)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support + 0.5).floor().max(0.0)) as usize;
            let hi = ((center + support + 0.5).floor() as usize).min(in_size);
            let mut weights: Vec<f64> = (lo..hi).map(|x| bicubic((x as f64 - center + 0.5) / filter_scale)).collect();
            let total: f64 = weights.iter().sum();
            if total != 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
            (lo, weights)
        })
        .collect()
}

fn resample_rows(img: ArrayView2<f64>, out_rows: usize) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let data = img.as_standard_layout();
    let src = data.as_slice().expect("standard layout");
    let coeffs = resample_coefficients(rows, out_rows);
    let mut out = Array2::zeros((out_rows, cols));
    let mut acc = vec![0.0; cols];
    for (o, (lo, weights)) in coeffs.iter().enumerate() {
        let reference = &src[lo * cols..(lo + 1) * cols];
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (k, &w) in weights.iter().enumerate().skip(1) {
            let r = lo + k;
            let row = &src[r * cols..(r + 1) * cols];
            for j in 0..cols {
                acc[j] += w * (row[j] - reference[j]);
            }
        }
        for j in 0..cols {
            out[[o, j]] = reference[j] + acc[j];
        }
    }
    out
}

/// Separable antialiased bicubic resize to `out_rows × out_cols`.
pub fn resize_bicubic(img: &Array2<f64>, out_rows: usize, out_cols: usize) -> Array2<f64> {
    let vertical = resample_rows(img.view(), out_rows);
    resample_rows(vertical.t(), out_cols).t().as_standard_layout().into_owned()
}

pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    total / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_skips_the_edge() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 5), 3);
    }

    #[test]
    fn kernel_is_normalized_with_three_sigma_support() {
        let k = gaussian_kernel(2.5);
        assert_eq!(k.len(), 9);
        let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-12);
    }

    /// Direct 2D convolution with the outer-product kernel.
    fn blur_oracle(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
        let half = (3.0 * sigma).ceil() as isize;
        let g: Vec<f64> = (-half..=half).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = g.iter().sum();
        let (rows, cols) = img.dim();
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            let mut v = 0.0;
            for (a, ga) in (-half..=half).zip(&g) {
                for (b, gb) in (-half..=half).zip(&g) {
                    v += ga * gb * img[[reflect(i as isize + a, rows), reflect(j as isize + b, cols)]];
                }
            }
            v / (norm * norm)
        })
    }

    #[test]
    fn separable_blur_matches_direct_convolution() {
        let img = Array2::from_shape_fn((23, 17), |(i, j)| ((i * 31 + j * 17) % 11) as f64 / 10.0);
        let fast = gaussian_blur(&img, 1.5);
        let slow = blur_oracle(&img, 1.5);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_images_are_untouched() {
        let img = Array2::from_elem((300, 300), 0.37);
        assert_eq!(gaussian_blur(&img, 7.0), img);
        assert_eq!(resize_bicubic(&resize_bicubic(&img, 35, 35), 300, 300), img);
    }

    #[test]
    fn bicubic_kernel_values() {
        assert_eq!(bicubic(0.0), 1.0);
        assert_eq!(bicubic(1.0), 0.0);
        assert_eq!(bicubic(2.0), 0.0);
        // a = -0.5 at x = 0.5: (1.5·0.5 − 2.5)·0.25 + 1
        assert_eq!(bicubic(0.5), 0.5625);
        assert_eq!(bicubic(1.5), -0.0625);
    }

    #[test]
    fn coefficients_sum_to_one() {
        for (n_in, n_out) in [(300, 55), (55, 300), (300, 10), (7, 7)] {
            for (_, w) in resample_coefficients(n_in, n_out) {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_resize_is_exact() {
        let img = Array2::from_shape_fn((12, 9), |(i, j)| (i as f64).sin() + j as f64);
        let same = resize_bicubic(&img, 12, 9);
        for (a, b) in same.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
