//! `topomap`: topographic activation maps from the command line.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use topomap_core::{Grouping, InputMode, Layout, Method, NapMatrix, SynthParams};

use commands::Provenance;
use config::{usage, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "topomap", version, about = "Topographic activation maps for hidden layers of neural networks")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute neuron activation profiles from an activation dump.
    Nap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Place the neurons of a NAP matrix in 2D.
    Layout {
        #[command(flatten)]
        common: Common,
        /// NAP header written by `topomap nap` [default: <out>/nap.json]
        #[arg(long)]
        nap: Option<PathBuf>,
        #[command(flatten)]
        layout: LayoutArgs,
    },
    /// Render a grid of topographic maps.
    Render {
        #[command(flatten)]
        common: Common,
        /// [default: <out>/nap.json]
        #[arg(long)]
        nap: Option<PathBuf>,
        /// [default: <out>/layout.json]
        #[arg(long)]
        layout: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Score map quality with the blur and resize metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        /// [default: <out>/nap.json]
        #[arg(long)]
        nap: Option<PathBuf>,
        /// Layout to evaluate once [default: <out>/layout.json]
        #[arg(long)]
        layout: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        layout_args: LayoutArgs,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Generate synthetic activations with planted neuron clusters.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Run nap, layout, render and eval in one go.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        render: RenderArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run config; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel trials.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// naps, balanced or random
    #[arg(long, value_parser = parse_enum::<InputMode>)]
    mode: Option<InputMode>,
    /// Examples drawn per group.
    #[arg(long)]
    samples: Option<usize>,
    /// Total examples for the random mode.
    #[arg(long)]
    total_examples: Option<usize>,
    /// class, correct_wrong or confusion
    #[arg(long, value_parser = parse_enum::<Grouping>)]
    grouping: Option<Grouping>,
    /// Group spec JSON; replaces --grouping.
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Args)]
struct LayoutArgs {
    /// One of som, graph, pca, tsne, umap, pso, som_pso, graph_pso, pca_pso, tsne_pso, umap_pso, random_baseline
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Fraction of neuron pairs kept as graph edges.
    #[arg(long)]
    edge_fraction: Option<f64>,
    #[arg(long)]
    pso_steps: Option<usize>,
    /// Read the global attraction term as 1 - d/max(d)^3.
    #[arg(long)]
    eq1_literal: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Pixels per map side.
    #[arg(long)]
    resolution: Option<usize>,
    /// Order maps by average-linkage clustering.
    #[arg(long)]
    sort: bool,
    /// Arrange `label->prediction` groups as a confusion matrix.
    #[arg(long)]
    confusion: bool,
    /// Grid descriptor JSON.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Also write maps.svg.
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    no_captions: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Repetitions of layout and evaluation.
    #[arg(long)]
    trials: Option<usize>,
    /// Redraw the NAP examples in every trial.
    #[arg(long)]
    resample: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 128)]
    n_neurons: usize,
    #[arg(long, default_value_t = 10)]
    n_groups: usize,
    #[arg(long, default_value_t = 4)]
    n_clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    examples_per_group: usize,
    /// Feature-map size for a convolutional layer, e.g. 4x4.
    #[arg(long, value_parser = parse_map)]
    conv: Option<(usize, usize)>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: topomap_core::Error| e.to_string())
}

fn parse_map(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or("expected HxW")?;
    Ok((h.parse().map_err(|_| "bad height")?, w.parse().map_err(|_| "bad width")?))
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        Ok(cfg)
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.manifest.is_some() {
            cfg.manifest = self.manifest.clone();
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(s) = self.samples {
            cfg.samples_per_group = s;
        }
        if let Some(t) = self.total_examples {
            cfg.total_examples = t;
        }
        if let Some(g) = self.grouping {
            cfg.grouping = g;
        }
        if self.groups.is_some() {
            cfg.groups = self.groups.clone();
        }
    }
}

impl LayoutArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(f) = self.edge_fraction {
            cfg.layout.graph.edge_fraction = f;
        }
        if let Some(s) = self.pso_steps {
            cfg.layout.pso.steps = s;
        }
        if self.eq1_literal {
            cfg.layout.pso.eq1_literal = true;
        }
    }
}

impl RenderArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(r) = self.resolution {
            cfg.render.resolution = r;
        }
        cfg.render.sort |= self.sort;
        cfg.render.confusion |= self.confusion;
        cfg.render.svg |= self.svg;
        if self.no_captions {
            cfg.render.captions = false;
        }
        if self.grid.is_some() {
            cfg.render.grid = self.grid.clone();
        }
    }
}

impl EvalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.trials {
            cfg.eval.trials = t;
        }
        cfg.eval.resample |= self.resample;
    }
}

fn existing(path: Option<PathBuf>, default: PathBuf, what: &str) -> Result<PathBuf> {
    let path = path.unwrap_or(default);
    if !path.exists() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(path)
}

type Stage = Box<dyn FnOnce(&mut RunConfig, &mut Provenance) -> Result<()> + Send>;

fn run(command: Command) -> Result<()> {
    let (name, mut cfg, stage): (&str, RunConfig, Stage) =
        match command {
            Command::Nap { common, input } => {
                let mut cfg = common.resolve()?;
                input.apply(&mut cfg);
                ("nap", cfg, Box::new(|cfg, prov| {
                    let acts = commands::load_activations(cfg)?;
                    commands::nap(cfg, &acts, prov).map(drop)
                }))
            }
            Command::Layout { common, nap, layout } => {
                let mut cfg = common.resolve()?;
                layout.apply(&mut cfg);
                let nap_path = existing(nap, cfg.out.join("nap.json"), "NAP file")?;
                ("layout", cfg, Box::new(move |cfg, prov| {
                    let nap = NapMatrix::load(&nap_path)?;
                    commands::layout(cfg, &nap, prov).map(drop)
                }))
            }
            Command::Render { common, nap, layout, render } => {
                let mut cfg = common.resolve()?;
                render.apply(&mut cfg);
                let nap_path = existing(nap, cfg.out.join("nap.json"), "NAP file")?;
                let layout_path = existing(layout, cfg.out.join("layout.json"), "layout file")?;
                ("render", cfg, Box::new(move |cfg, prov| {
                    let nap = NapMatrix::load(&nap_path)?;
                    let layout = Layout::load(&layout_path)?;
                    commands::render(cfg, &nap, &layout, prov)
                }))
            }
            Command::Eval { common, nap, layout, eval, layout_args, input } => {
                let mut cfg = common.resolve()?;
                eval.apply(&mut cfg);
                layout_args.apply(&mut cfg);
                input.apply(&mut cfg);
                let nap_path = existing(nap, cfg.out.join("nap.json"), "NAP file")?;
                let layout_path = match cfg.eval.trials {
                    1 => Some(existing(layout, cfg.out.join("layout.json"), "layout file")?),
                    _ => None,
                };
                ("eval", cfg, Box::new(move |cfg, prov| {
                    let nap = NapMatrix::load(&nap_path)?;
                    let layout = layout_path.map(|p| Layout::load(&p)).transpose()?;
                    let acts = if cfg.eval.resample { Some(commands::load_activations(cfg)?) } else { None };
                    commands::eval(cfg, &nap, layout.as_ref(), acts.as_ref(), prov)
                }))
            }
            Command::Synth { common, synth } => {
                let mut cfg = common.resolve()?;
                let params = SynthParams {
                    n_neurons: synth.n_neurons,
                    n_groups: synth.n_groups,
                    n_clusters: synth.n_clusters,
                    noise: synth.noise,
                    examples_per_group: synth.examples_per_group,
                    conv_map: synth.conv,
                    seed: cfg.seed,
                };
                cfg.synth = Some(params.clone());
                ("synth", cfg, Box::new(move |cfg, prov| {
                    let manifest = commands::synth(&params, &cfg.out, prov)?;
                    println!("{}", manifest.display());
                    Ok(())
                }))
            }
            Command::Pipeline { common, input, layout, render, eval } => {
                let mut cfg = common.resolve()?;
                input.apply(&mut cfg);
                layout.apply(&mut cfg);
                render.apply(&mut cfg);
                eval.apply(&mut cfg);
                ("pipeline", cfg, Box::new(commands::pipeline))
            }
        };
    cfg.validate()?;
    commands::ensure_out(&cfg)?;
    let mut prov = Provenance::new(name, &cfg);
    let jobs = cfg.jobs;
    let body = move || -> Result<()> {
        stage(&mut cfg, &mut prov)?;
        let file = if name == "pipeline" { "provenance.json".to_string() } else { format!("{name}.provenance.json") };
        prov.write(&cfg.out, &file)?;
        Ok(())
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(body),
        None => body(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
