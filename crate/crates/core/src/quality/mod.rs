//! Map quality: how much a map changes under blurring and downscaling.
//!
//! Smooth maps, where neighboring neurons carry similar values, barely change;
//! noisy maps change a lot. Lower AUC is better.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSet;
use crate::error::{Error, Result};
use crate::layout::{compute_layout, Layout, LayoutConfig, Method};
use crate::nap::{compute_nap, GroupSpec, NapMatrix};
use crate::render::Interpolator;

pub mod filters;

pub use filters::{gaussian_blur, mse, resize_bicubic};

pub const METRIC_RESOLUTION: usize = 300;
pub const BLUR_RADII: [u32; 10] = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20];
pub const RESIZE_SIZES: [u32; 10] = [55, 50, 45, 40, 35, 30, 25, 20, 15, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Blur,
    Resize,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Blur => "blur",
            Metric::Resize => "resize",
        }
    }

    /// Alteration strengths, weakest first.
    pub fn params(self) -> Vec<u32> {
        match self {
            Metric::Blur => BLUR_RADII.to_vec(),
            Metric::Resize => RESIZE_SIZES.to_vec(),
        }
    }
}

/// Trapezoid rule with unit spacing.
pub fn auc(curve: &[f64]) -> f64 {
    curve.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum()
}

/// MSE between the image and its blur at each radius (`σ = r/2`).
pub fn blur_mse_curve(img: &Array2<f64>) -> Vec<f64> {
    BLUR_RADII.iter().map(|&r| mse(img, &gaussian_blur(img, r as f64 / 2.0))).collect()
}

/// MSE between the image and its down-then-up bicubic round trip at each size.
pub fn resize_mse_curve(img: &Array2<f64>) -> Vec<f64> {
    let (rows, cols) = img.dim();
    RESIZE_SIZES
        .iter()
        .map(|&s| {
            let small = resize_bicubic(img, s as usize, s as usize);
            let back = resize_bicubic(&small, rows, cols).mapv(|v| v.clamp(0.0, 1.0));
            mse(img, &back)
        })
        .collect()
}

pub fn metric_curve(metric: Metric, img: &Array2<f64>) -> Vec<f64> {
    match metric {
        Metric::Blur => blur_mse_curve(img),
        Metric::Resize => resize_mse_curve(img),
    }
}

/// Field mapped to `[0, 1]` by `(v + vmax) / (2 vmax)`, out-of-hull pixels at 0.5.
pub fn normalize_field(field: &Array2<f64>, mask: &Array2<bool>, vmax: f64) -> Array2<f64> {
    let mut out = Array2::from_elem(field.dim(), 0.5);
    if vmax > 0.0 {
        ndarray::Zip::from(&mut out).and(field).and(mask).for_each(|o, &v, &inside| {
            if inside {
                *o = (v + vmax) / (2.0 * vmax);
            }
        });
    }
    out
}

/// The 300×300 image the metrics are computed on, for group `group`.
pub fn metric_image(nap: &NapMatrix, layout: &Layout, group: usize) -> Result<Array2<f64>> {
    let interp = Interpolator::new(layout, METRIC_RESOLUTION, layout.seed)?;
    let values = nap.color_values.column(group).to_vec();
    Ok(normalize_field(&interp.field(&values), &interp.mask(), nap.vmax()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub variance: f64,
}

impl TrialStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        // shifted by the first value so identical trials give exactly zero variance
        let shift = values[0];
        let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
        let mean = shift + offset;
        let variance = values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub metric: Metric,
    pub params: Vec<u32>,
    /// Mean over groups of each group's curve.
    pub per_param_mse: Vec<f64>,
    pub auc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<TrialStats>,
}

impl QualityReport {
    fn single(metric: Metric, per_param_mse: Vec<f64>, seed: u64) -> Self {
        let auc = auc(&per_param_mse);
        Self { metric, params: metric.params(), per_param_mse, auc, trials: None, seeds: vec![seed], stats: None }
    }
}

/// Blur and resize reports for one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub blur: QualityReport,
    pub resize: QualityReport,
}

impl Evaluation {
    pub fn report(&self, metric: Metric) -> &QualityReport {
        match metric {
            Metric::Blur => &self.blur,
            Metric::Resize => &self.resize,
        }
    }
}

fn mean_curves(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves[0].len();
    (0..len).map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64).collect()
}

/// Scores `layout` on every group of `nap`: per-group curves are averaged,
/// then integrated.
pub fn evaluate_layout(nap: &NapMatrix, layout: &Layout) -> Result<Evaluation> {
    if layout.neuron_ids != nap.neuron_ids {
        return Err(Error::NeuronIdMismatch);
    }
    let interp = Interpolator::new(layout, METRIC_RESOLUTION, layout.seed)?;
    let mask = interp.mask();
    let vmax = nap.vmax();
    let mut blur = Vec::with_capacity(nap.n_groups());
    let mut resize = Vec::with_capacity(nap.n_groups());
    for g in 0..nap.n_groups() {
        let values = nap.color_values.column(g).to_vec();
        let img = normalize_field(&interp.field(&values), &mask, vmax);
        blur.push(blur_mse_curve(&img));
        resize.push(resize_mse_curve(&img));
    }
    Ok(Evaluation {
        blur: QualityReport::single(Metric::Blur, mean_curves(&blur), layout.seed),
        resize: QualityReport::single(Metric::Resize, mean_curves(&resize), layout.seed),
    })
}

/// Where trial NAPs come from.
#[derive(Debug, Clone, Copy)]
pub enum NapSource<'a> {
    /// One NAP matrix reused by every trial.
    Fixed(&'a NapMatrix),
    /// Activations resampled per trial.
    Resample { activations: &'a ActivationSet, spec: &'a GroupSpec },
}

/// Per-trial evaluations plus aggregated reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: Method,
    pub resample: bool,
    pub base_seed: u64,
    pub blur: QualityReport,
    pub resize: QualityReport,
}

impl TrialReport {
    pub fn report(&self, metric: Metric) -> &QualityReport {
        match metric {
            Metric::Blur => &self.blur,
            Metric::Resize => &self.resize,
        }
    }

    /// `trial,seed,blur_auc,resize_auc`
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial,seed,blur_auc,resize_auc\n");
        let blur = self.blur.trials.as_deref().unwrap_or(&[]);
        let resize = self.resize.trials.as_deref().unwrap_or(&[]);
        for (k, ((b, r), s)) in blur.iter().zip(resize).zip(&self.blur.seeds).enumerate() {
            writeln!(out, "{k},{s},{b},{r}").expect("string write");
        }
        out
    }

    /// Long-format rows `trial,method,metric,auc` without a header.
    pub fn long_rows(&self) -> String {
        let mut out = String::new();
        for report in [&self.blur, &self.resize] {
            for (k, v) in report.trials.as_deref().unwrap_or(&[]).iter().enumerate() {
                writeln!(out, "{k},{},{},{v}", self.method, report.metric.name()).expect("string write");
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub const LONG_CSV_HEADER: &str = "trial,method,metric,auc\n";

fn aggregate(metric: Metric, evaluations: &[Evaluation], seeds: &[u64]) -> QualityReport {
    let curves: Vec<Vec<f64>> = evaluations.iter().map(|e| e.report(metric).per_param_mse.clone()).collect();
    let per_param_mse = mean_curves(&curves);
    let trials: Vec<f64> = evaluations.iter().map(|e| e.report(metric).auc).collect();
    QualityReport {
        metric,
        params: metric.params(),
        auc: auc(&per_param_mse),
        per_param_mse,
        stats: Some(TrialStats::of(&trials)),
        trials: Some(trials),
        seeds: seeds.to_vec(),
    }
}

/// Repeats layout and evaluation `n_trials` times; trial `k` uses seed
/// `base_seed + k` for the layout and, when resampling, for the NAP draw.
/// Trials run in parallel and are reported in trial order.
pub fn robustness_trials(
    source: NapSource<'_>,
    method: Method,
    config: &LayoutConfig,
    n_trials: usize,
    base_seed: u64,
) -> Result<TrialReport> {
    if n_trials < 2 {
        return Err(Error::invalid(format!("robustness trials need n_trials ≥ 2, got {n_trials}")));
    }
    let seeds: Vec<u64> = (0..n_trials as u64).map(|k| base_seed.wrapping_add(k)).collect();
    let run = |seed: u64| -> Result<Evaluation> {
        let resampled;
        let nap = match source {
            NapSource::Fixed(nap) => nap,
            NapSource::Resample { activations, spec } => {
                resampled = compute_nap(&activations.clone().with_seed(seed), spec)?;
                &resampled
            }
        };
        let layout = compute_layout(method, nap, config, seed)?;
        evaluate_layout(nap, &layout)
    };
    let evaluations: Vec<Evaluation> = seeds.par_iter().map(|&s| run(s)).collect::<Result<_>>()?;
    Ok(TrialReport {
        method,
        resample: matches!(source, NapSource::Resample { .. }),
        base_seed,
        blur: aggregate(Metric::Blur, &evaluations, &seeds),
        resize: aggregate(Metric::Resize, &evaluations, &seeds),
    })
}
