//! Stage implementations shared by the single-stage subcommands and `pipeline`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use topomap_core::quality::LONG_CSV_HEADER;
use topomap_core::synth::write_synth;
use topomap_core::{
    compute_layout, compute_nap, evaluate_layout, generate_synth, load_activation_set, render_grid, robustness_trials,
    ActivationSet, GridSpec, GroupSpec, Grouping, Layout, NapMatrix, NapSource, RenderOptions, SynthParams,
};

use crate::config::{usage, RunConfig};

/// One provenance record per run: the resolved config, every seed and every output.
#[derive(Debug, Serialize)]
pub struct Provenance {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: RunConfig,
    seeds: BTreeMap<String, Value>,
    stages: BTreeMap<String, Value>,
    outputs: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: "topomap",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            stages: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    fn seed(&mut self, key: &str, value: impl Into<Value>) {
        self.seeds.insert(key.to_string(), value.into());
    }

    fn stage(&mut self, key: &str, value: Value) {
        self.stages.insert(key.to_string(), value);
    }

    fn output(&mut self, out: &Path, path: &Path) {
        let rel = path.strip_prefix(out).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    pub fn write(&self, out: &Path, name: &str) -> Result<PathBuf> {
        let path = out.join(name);
        write_json(&path, self)?;
        Ok(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating output directory {}", cfg.out.display()))
}

pub fn load_activations(cfg: &RunConfig) -> Result<ActivationSet> {
    let manifest = cfg.manifest.as_ref().ok_or_else(|| usage("no manifest given (use --manifest or a config file)"))?;
    if !manifest.exists() {
        return Err(usage(format!("manifest {} does not exist", manifest.display())));
    }
    Ok(load_activation_set(manifest)?.with_seed(cfg.seed))
}

pub fn group_spec(cfg: &RunConfig, acts: &ActivationSet) -> Result<GroupSpec> {
    let spec = match (&cfg.groups, cfg.grouping) {
        (Some(path), _) => GroupSpec::read(path)?,
        (None, Grouping::Class) => GroupSpec::from_labels(&acts.labels)?,
        (None, grouping) => {
            let predictions = acts
                .predictions
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("grouping {grouping:?} needs predictions in the manifest"))?;
            GroupSpec::from_predictions(&acts.labels, predictions, grouping)?
        }
    };
    Ok(spec.with_mode(cfg.mode).with_samples_per_group(cfg.samples_per_group).with_total_examples(cfg.total_examples))
}

pub fn synth(params: &SynthParams, dir: &Path, prov: &mut Provenance) -> Result<PathBuf> {
    let data = generate_synth(params)?;
    let manifest = write_synth(&data, dir)?;
    prov.seed("synth", params.seed);
    for name in ["manifest.json", "activations.npy", "labels.npy", "clusters.npy"] {
        prov.outputs.push(name.to_string());
    }
    Ok(manifest)
}

pub fn nap(cfg: &RunConfig, acts: &ActivationSet, prov: &mut Provenance) -> Result<NapMatrix> {
    let spec = group_spec(cfg, acts)?;
    let nap = compute_nap(acts, &spec)?;
    let path = nap.save(&cfg.out, "nap")?;
    let stem = path.with_extension("");
    prov.output(&cfg.out, &path);
    for suffix in ["_layout_features.npy", "_color_values.npy"] {
        prov.output(&cfg.out, Path::new(&format!("{}{suffix}", stem.display())));
    }
    prov.seed("nap", cfg.seed);
    prov.stage(
        "nap",
        json!({
            "layer": acts.layer_name,
            "mode": cfg.mode,
            "groups": nap.group_ids,
            "n_neurons": nap.n_neurons(),
            "n_features": nap.layout_features.ncols(),
        }),
    );
    Ok(nap)
}

pub fn layout(cfg: &RunConfig, nap: &NapMatrix, prov: &mut Provenance) -> Result<Layout> {
    let layout = compute_layout(cfg.method, nap, &cfg.layout, cfg.seed)?;
    let path = cfg.out.join("layout.json");
    layout.save(&path)?;
    prov.output(&cfg.out, &path);
    prov.seed("layout", layout.seed);
    for key in ["base_seed", "pso_seed"] {
        if let Some(v) = layout.params.get(key) {
            prov.seed(&format!("layout.{key}"), v.clone());
        }
    }
    prov.stage("layout", json!({ "method": layout.method, "params": layout.params }));
    Ok(layout)
}

pub fn render(cfg: &RunConfig, nap: &NapMatrix, layout: &Layout, prov: &mut Provenance) -> Result<()> {
    let spec = match &cfg.render.grid {
        Some(path) => GridSpec::read(path)?,
        None if cfg.render.confusion => GridSpec::confusion(&nap.group_ids),
        None => GridSpec::strip(&nap.group_ids, cfg.render.sort),
    };
    let opts = RenderOptions { resolution: cfg.render.resolution, captions: cfg.render.captions, seed: cfg.seed };
    let figure = render_grid(nap, layout, &spec, &opts)?;
    let png = cfg.out.join("maps.png");
    figure.write_png(&png)?;
    prov.output(&cfg.out, &png);
    if cfg.render.svg {
        let svg = cfg.out.join("maps.svg");
        figure.write_svg(&svg)?;
        prov.output(&cfg.out, &svg);
    }
    let order: Vec<String> = figure.panels.iter().map(|p| p.caption.clone()).collect();
    prov.seed("render", cfg.seed);
    prov.stage(
        "render",
        json!({ "rows": figure.n_rows, "cols": figure.n_cols, "vmax": figure.vmax, "panels": order }),
    );
    Ok(())
}

/// Single evaluation of `layout`, or the robustness protocol when more than one trial is requested.
pub fn eval(
    cfg: &RunConfig,
    nap: &NapMatrix,
    layout: Option<&Layout>,
    acts: Option<&ActivationSet>,
    prov: &mut Provenance,
) -> Result<()> {
    let blur_path = cfg.out.join("blur_report.json");
    let resize_path = cfg.out.join("resize_report.json");
    if cfg.eval.trials <= 1 {
        if cfg.eval.resample {
            return Err(usage("--resample needs --trials of at least 2"));
        }
        let layout = layout.ok_or_else(|| usage("a single evaluation needs a layout"))?;
        let evaluation = evaluate_layout(nap, layout)?;
        write_json(&blur_path, &evaluation.blur)?;
        write_json(&resize_path, &evaluation.resize)?;
        prov.stage("eval", json!({ "blur_auc": evaluation.blur.auc, "resize_auc": evaluation.resize.auc }));
    } else {
        let spec;
        let source = match (cfg.eval.resample, acts) {
            (false, _) => NapSource::Fixed(nap),
            (true, Some(acts)) => {
                spec = group_spec(cfg, acts)?;
                NapSource::Resample { activations: acts, spec: &spec }
            }
            (true, None) => return Err(usage("--resample needs --manifest")),
        };
        let report = robustness_trials(source, cfg.method, &cfg.layout, cfg.eval.trials, cfg.seed)?;
        write_json(&blur_path, &report.blur)?;
        write_json(&resize_path, &report.resize)?;
        let csv = cfg.out.join("trials.csv");
        fs::write(&csv, report.trials_csv()).with_context(|| format!("writing {}", csv.display()))?;
        let long = cfg.out.join("trials_long.csv");
        fs::write(&long, format!("{LONG_CSV_HEADER}{}", report.long_rows()))
            .with_context(|| format!("writing {}", long.display()))?;
        prov.output(&cfg.out, &csv);
        prov.output(&cfg.out, &long);
        prov.seed("eval.trials", json!(report.blur.seeds));
        prov.stage(
            "eval",
            json!({
                "method": report.method,
                "trials": cfg.eval.trials,
                "resample": report.resample,
                "blur": report.blur.stats,
                "resize": report.resize.stats,
            }),
        );
    }
    prov.output(&cfg.out, &blur_path);
    prov.output(&cfg.out, &resize_path);
    Ok(())
}

/// nap → layout → render → eval; the first failing stage aborts with its name.
pub fn pipeline(cfg: &mut RunConfig, prov: &mut Provenance) -> Result<()> {
    if cfg.manifest.is_none() {
        let params = cfg.synth.clone().ok_or_else(|| usage("pipeline needs a manifest or a synth section"))?;
        let dir = cfg.out.join("data");
        let manifest = synth(&params, &dir, prov).context("stage synth")?;
        prov.outputs.iter_mut().for_each(|o| *o = format!("data/{o}"));
        cfg.manifest = Some(manifest);
    }
    let acts = load_activations(cfg).context("stage nap")?;
    let nap = nap(cfg, &acts, prov).context("stage nap")?;
    let layout = layout(cfg, &nap, prov).context("stage layout")?;
    render(cfg, &nap, &layout, prov).context("stage render")?;
    eval(cfg, &nap, Some(&layout), Some(&acts), prov).context("stage eval")?;
    Ok(())
}
