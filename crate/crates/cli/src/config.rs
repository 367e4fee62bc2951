//! Run configuration: a JSON file merged with command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use topomap_core::{Grouping, InputMode, LayoutConfig, Method, SynthParams};

/// Errors that mean the tool was invoked incorrectly (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub resolution: usize,
    pub sort: bool,
    pub confusion: bool,
    /// Grid descriptor JSON; overrides `sort` and `confusion`.
    pub grid: Option<PathBuf>,
    pub svg: bool,
    pub captions: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { resolution: 100, sort: false, confusion: false, grid: None, svg: false, captions: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// 1 evaluates the given layout once; more runs the robustness protocol.
    pub trials: usize,
    pub resample: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { trials: 1, resample: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    /// Explicit group spec JSON; replaces `grouping`.
    pub groups: Option<PathBuf>,
    pub grouping: Grouping,
    pub mode: InputMode,
    pub samples_per_group: usize,
    pub total_examples: usize,
    pub seed: u64,
    pub method: Method,
    pub layout: LayoutConfig,
    pub render: RenderConfig,
    pub eval: EvalConfig,
    /// Generates the input data when no manifest is given.
    pub synth: Option<SynthParams>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            groups: None,
            grouping: Grouping::Class,
            mode: InputMode::Naps,
            samples_per_group: topomap_core::nap::DEFAULT_SAMPLES_PER_GROUP,
            total_examples: topomap_core::nap::DEFAULT_RANDOM_TOTAL,
            seed: 0,
            method: Method::UmapPso,
            layout: LayoutConfig::default(),
            render: RenderConfig::default(),
            eval: EvalConfig::default(),
            synth: None,
            out: PathBuf::from("out"),
            jobs: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken from the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.manifest.as_mut().map(rebase);
        cfg.groups.as_mut().map(rebase);
        cfg.render.grid.as_mut().map(rebase);
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(2..=4096).contains(&self.render.resolution) {
            return Err(usage(format!("resolution must lie in 2..=4096, got {}", self.render.resolution)));
        }
        if self.samples_per_group == 0 {
            return Err(usage("samples per group must be positive"));
        }
        if self.eval.trials == 0 {
            return Err(usage("trials must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(usage("jobs must be at least 1"));
        }
        let f = self.layout.graph.edge_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(usage(format!("edge fraction must lie in (0, 1], got {f}")));
        }
        self.layout.pso.validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }
}
