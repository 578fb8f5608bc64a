use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use gbas_core::baselines::{calibrate, sample_l2_ball, sample_linf_ball};
use gbas_core::berdrop::{beropt, BerOptConfig};
use gbas_core::config::{read_query_file, ExperimentConfig, Queries};
use gbas_core::explorer::{e_gbas, gb_rrt, keep_set_indicator, ExplorationResult, RrtConfig};
use gbas_core::grid::export_grid_figure;
use gbas_core::io::{points_to_csv, read_points, read_text, write_text, PointRow};
use gbas_core::metrics::{evaluate, metrics_to_csv, FeatureMode, MetricRow, Method, SampleSet};
use gbas_core::pipeline::{json, metric_rows_for, run_experiment, CellSettings, IndicatorFile};
use gbas_core::regions::{HalfspaceIndicator, RegionSpec};
use gbas_core::toy::{write_toy_model, ToyKind, ToyModelSpec};
use gbas_core::{load_network, ActivationKind, Error, Network};

#[derive(Parser)]
#[command(name = "gbas", version, about = "Generative-boundary aware sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a toy generator or discriminator and write its weight file.
    MakeToy(MakeToyArgs),
    /// Optimize the Bernoulli boundary mask for one query and layer.
    Beropt(CellArgs),
    /// Grow a boundary-constrained random tree around one query.
    Explore(ExploreArgs),
    /// Calibrate and draw the epsilon-ball baselines from an exploration.
    Baseline(PointsArgs),
    /// Score the sample sets in a points file.
    Metrics(MetricsArgs),
    /// Full pipeline over every (query, layer) cell of a config.
    Run(Source),
    /// Sign-pattern map of a 2-D latent space as CSV and PGM.
    GridFig(GridArgs),
}

/// Where the model, queries and settings come from. With `--config` the
/// experiment file supplies everything and the other flags override it.
#[derive(Args, Clone)]
struct Source {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator weight file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Discriminator weight file.
    #[arg(long)]
    disc: Option<PathBuf>,
    /// Single query, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    query: Option<Vec<f64>>,
    /// Query file, one latent vector per line.
    #[arg(long)]
    query_file: Option<PathBuf>,
    /// Target layer (replaces the config's list).
    #[arg(long)]
    layer: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    source: Source,
    /// Which query of the resolved list to use.
    #[arg(long, default_value_t = 0)]
    query_id: usize,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// Saved `indicator.json`; without it BerOpt runs first.
    #[arg(long)]
    indicator: Option<PathBuf>,
}

#[derive(Args)]
struct PointsArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// Points CSV from an earlier step.
    #[arg(long)]
    points: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    points: PointsArgs,
    /// Compare discriminator pre-activations instead of activations.
    #[arg(long)]
    pre_features: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    RandomMlp,
    MnistLike,
    Handcrafted2d,
}

#[derive(Clone, Copy, ValueEnum)]
enum Act {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Act {
    fn kind(self, slope: f64) -> ActivationKind {
        match self {
            Act::Relu => ActivationKind::Relu,
            Act::LeakyRelu => ActivationKind::LeakyRelu { slope },
            Act::Tanh => ActivationKind::Tanh,
            Act::Sigmoid => ActivationKind::Sigmoid,
            Act::Identity => ActivationKind::Identity,
        }
    }
}

#[derive(Args)]
struct MakeToyArgs {
    #[arg(long, value_enum, default_value_t = Kind::Handcrafted2d)]
    kind: Kind,
    /// Layer widths including the input, e.g. `2,8,4`.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Act::Tanh)]
    activation: Act,
    #[arg(long, value_enum, default_value_t = Act::Identity)]
    output_activation: Act,
    /// Negative slope for leaky-relu.
    #[arg(long, default_value_t = 0.01)]
    slope: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full model spec as JSON; replaces the flags above.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Weight file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    source: Source,
    /// `x_min,x_max,y_min,y_max`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-3.0, 3.0, -3.0, 3.0])]
    bounds: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Only these units distinguish cells.
    #[arg(long, value_delimiter = ',')]
    units: Option<Vec<usize>>,
    /// Use the support of a saved indicator as the unit set.
    #[arg(long)]
    indicator: Option<PathBuf>,
    /// Points CSV whose accepted/rejected rows are drawn on top.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

impl Source {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig {
                model_id: None,
                generator_path: PathBuf::new(),
                discriminator_path: None,
                queries: Queries::List(Vec::new()),
                target_layers: Vec::new(),
                beropt: BerOptConfig::default(),
                rrt: RrtConfig::default(),
                baseline_n: None,
                baseline_seed: 0,
                feature_mode: FeatureMode::default(),
                output_dir: PathBuf::from("gbas-out"),
            },
        };
        if let Some(m) = &self.model {
            cfg.generator_path = m.clone();
        }
        if let Some(d) = &self.disc {
            cfg.discriminator_path = Some(d.clone());
        }
        if let Some(q) = &self.query {
            cfg.queries = Queries::List(vec![q.clone()]);
        }
        if let Some(f) = &self.query_file {
            cfg.queries = Queries::List(read_query_file(f)?);
        }
        if let Some(l) = self.layer {
            cfg.target_layers = vec![l];
        }
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn generator(cfg: &ExperimentConfig) -> Result<Network> {
    if cfg.generator_path.as_os_str().is_empty() {
        return Err(Error::config("model", "pass --model or --config").into());
    }
    Ok(load_network(&cfg.generator_path).map_err(Error::from)?)
}

fn discriminator(cfg: &ExperimentConfig) -> Result<Option<Network>> {
    Ok(cfg
        .discriminator_path
        .as_ref()
        .map(load_network)
        .transpose()
        .map_err(Error::from)?)
}

/// One resolved (query, layer) cell.
struct Cell {
    cfg: ExperimentConfig,
    settings: CellSettings,
    query_id: usize,
    query: Vec<f64>,
    layer: usize,
}

impl CellArgs {
    fn resolve(&self, latent_dim: usize) -> Result<Cell> {
        let cfg = self.source.config()?;
        let queries = cfg.queries.resolve(latent_dim)?;
        let query = queries.get(self.query_id).cloned().ok_or_else(|| {
            Error::config(
                "query_id",
                format!("{} out of range for {} queries", self.query_id, queries.len()),
            )
        })?;
        let layer = *cfg
            .target_layers
            .first()
            .ok_or_else(|| Error::config("layer", "pass --layer or set target_layers"))?;
        Ok(Cell {
            settings: CellSettings::from_config(&cfg),
            cfg,
            query_id: self.query_id,
            query,
            layer,
        })
    }
}

fn write_indicator(dir: &Path, ind: &HalfspaceIndicator, kept: &[usize], dropped: &[usize]) -> Result<()> {
    let file = IndicatorFile {
        layer_index: ind.layer_index,
        entries: &ind.entries,
        keep_set: kept,
        dropped_on_boundary: dropped,
    };
    write_text(&dir.join("indicator.json"), &json(&file))?;
    Ok(())
}

fn cmd_make_toy(args: &MakeToyArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => serde_json::from_str::<ToyModelSpec>(&read_text(p)?)
            .map_err(|e| Error::config("spec", e.to_string()))?,
        None => {
            let activation = args.activation.kind(args.slope);
            let output_activation = args.output_activation.kind(args.slope);
            match args.kind {
                Kind::Handcrafted2d => ToyModelSpec::handcrafted_2d(),
                Kind::MnistLike => ToyModelSpec {
                    dims: args.dims.clone().unwrap_or_else(|| vec![2, 16, 32, 64]),
                    activation,
                    output_activation,
                    ..ToyModelSpec::trained_2d_mnist_like(args.seed)
                },
                Kind::RandomMlp => ToyModelSpec {
                    kind: ToyKind::RandomMlp,
                    dims: args
                        .dims
                        .clone()
                        .ok_or_else(|| Error::config("dims", "random-mlp needs --dims"))?,
                    activation,
                    output_activation,
                    seed: args.seed,
                },
            }
        }
    };
    let net = write_toy_model(&spec, &args.out)?;
    println!("wrote {} ({} -> {:?})", args.out.display(), net.latent_dim(), net.layer_dims());
    Ok(())
}

fn cmd_beropt(args: &CellArgs) -> Result<()> {
    let cfg = args.source.config()?;
    let gen = generator(&cfg)?;
    let cell = args.resolve(gen.latent_dim())?;
    let ber_cfg = cell.settings.beropt_for(cell.query_id, cell.layer);
    let res = beropt(&gen, &cell.query, cell.layer, &ber_cfg)?;
    let (ind, kept, dropped) = keep_set_indicator(&gen, &cell.query, cell.layer, &res.keep_set)?;
    let dir = &cell.cfg.output_dir;
    write_text(&dir.join("beropt.json"), &json(&res.record()))?;
    write_text(&dir.join("loss_trace.csv"), &res.loss_trace_csv())?;
    write_indicator(dir, &ind, &kept, &dropped)?;
    println!(
        "layer {}: kept {}/{} units, distortion {:.6}, {} iterations{}",
        cell.layer,
        kept.len(),
        ind.width(),
        res.distortion,
        res.iterations,
        if res.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

fn cmd_explore(args: &ExploreArgs) -> Result<()> {
    let cfg = args.cell.source.config()?;
    let gen = generator(&cfg)?;
    let cell = args.cell.resolve(gen.latent_dim())?;
    let dir = &cell.cfg.output_dir;
    let rrt_cfg = cell.settings.rrt_for(cell.query_id, cell.layer);
    let exploration = match &args.indicator {
        Some(p) => {
            let ind: HalfspaceIndicator = serde_json::from_str(&read_text(p)?)
                .map_err(|e| Error::config("indicator", e.to_string()))?;
            let ind = HalfspaceIndicator::new(ind.layer_index, ind.entries)?;
            let region = RegionSpec::new(&gen, ind)?;
            gb_rrt(&cell.query, &region, &rrt_cfg)?
        }
        None => {
            let ber_cfg = cell.settings.beropt_for(cell.query_id, cell.layer);
            let out = e_gbas(&gen, &cell.query, cell.layer, &ber_cfg, &rrt_cfg)?;
            write_text(&dir.join("beropt.json"), &json(&out.beropt.record()))?;
            write_text(&dir.join("loss_trace.csv"), &out.beropt.loss_trace_csv())?;
            write_indicator(dir, out.region.indicator(), &out.keep_set, &out.dropped)?;
            out.exploration
        }
    };
    write_text(
        &dir.join("points.csv"),
        &points_to_csv(&exploration.to_points(), gen.latent_dim())?,
    )?;
    println!(
        "accepted {}, rejected {}",
        exploration.accepted.len(),
        exploration.rejected.len()
    );
    Ok(())
}

fn load_points(path: &Path) -> Result<(Vec<PointRow>, usize)> {
    let rows = read_points(path).with_context(|| format!("reading {}", path.display()))?;
    let dim = rows
        .first()
        .map(|r| r.coords.len())
        .ok_or(Error::Empty("points file"))?;
    Ok((rows, dim))
}

fn cmd_baseline(args: &PointsArgs) -> Result<()> {
    let (mut rows, dim) = load_points(&args.points)?;
    let cell = args.cell.resolve(dim)?;
    let exploration = ExplorationResult::from_points(&rows);
    let cal = calibrate(&exploration.accepted, &exploration.rejected)?;
    let n = cell.settings.baseline_n.unwrap_or(exploration.accepted.len());
    let (seed_l2, seed_linf) = cell.settings.baseline_seeds_for(cell.query_id, cell.layer);
    rows.retain(|r| r.kind == "accepted" || r.kind == "rejected");
    for (kind, pts) in [
        ("eps_l2", sample_l2_ball(&cell.query, cal.eps_l2, n, seed_l2)),
        ("eps_linf", sample_linf_ball(&cell.query, cal.eps_linf, n, seed_linf)),
    ] {
        rows.extend(pts.into_iter().map(|coords| PointRow {
            kind: kind.into(),
            parent: None,
            coords,
        }));
    }
    let dir = &cell.cfg.output_dir;
    write_text(&dir.join("calibration.json"), &json(&cal))?;
    write_text(&dir.join("points.csv"), &points_to_csv(&rows, dim)?)?;
    println!("eps_l2 {:.6}, eps_linf {:.6}, {n} samples each", cal.eps_l2, cal.eps_linf);
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let (rows, dim) = load_points(&args.points.points)?;
    let cell = args.points.cell.resolve(dim)?;
    let gen = generator(&cell.cfg)?;
    let disc = discriminator(&cell.cfg)?;
    let mode = if args.pre_features {
        FeatureMode::Pre
    } else {
        cell.settings.feature_mode
    };
    let mut reports = Vec::new();
    for method in Method::ALL {
        let pts: Vec<Vec<f64>> = rows
            .iter()
            .filter(|r| r.kind == method.point_kind())
            .map(|r| r.coords.clone())
            .collect();
        if pts.is_empty() {
            info!("no {method} samples in {}", args.points.points.display());
            continue;
        }
        let set = SampleSet::new(method, cell.query.clone(), cell.layer, pts)?;
        reports.push(evaluate(&gen, disc.as_ref(), &set, mode)?);
    }
    if reports.is_empty() {
        return Err(Error::Empty("sample sets in points file").into());
    }
    let model_id = cell.cfg.model_id();
    let rows: Vec<MetricRow> = metric_rows_for(&model_id, cell.query_id, cell.layer, &reports);
    let disc_layers = disc.as_ref().map_or(0, |d| d.depth());
    let csv = metrics_to_csv(&rows, disc_layers)?;
    write_text(&cell.cfg.output_dir.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_run(args: &Source) -> Result<()> {
    let cfg = args.config()?;
    let out = run_experiment(&cfg)?;
    println!(
        "{}: {} cells written to {}",
        out.model_id,
        out.cells.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let cfg = args.source.config()?;
    let gen = generator(&cfg)?;
    let layer = *cfg
        .target_layers
        .first()
        .ok_or_else(|| Error::config("layer", "pass --layer or set target_layers"))?;
    let bounds: [f64; 4] = args
        .bounds
        .as_slice()
        .try_into()
        .map_err(|_| Error::config("bounds", "need exactly four numbers"))?;
    let units = match (&args.units, &args.indicator) {
        (Some(u), _) => Some(u.clone()),
        (None, Some(p)) => {
            let ind: HalfspaceIndicator = serde_json::from_str(&read_text(p)?)
                .map_err(|e| Error::config("indicator", e.to_string()))?;
            Some(ind.support())
        }
        (None, None) => None,
    };
    let overlay = match &args.overlay {
        Some(p) => Some(ExplorationResult::from_points(&load_points(p)?.0)),
        None => None,
    };
    let fig = export_grid_figure(
        &gen,
        layer,
        bounds,
        args.resolution,
        units.as_deref(),
        overlay.as_ref(),
    )?;
    let dir = &cfg.output_dir;
    write_text(&dir.join("grid.csv"), &fig.to_csv())?;
    write_text(&dir.join("grid.pgm"), &fig.to_pgm())?;
    println!(
        "{} sign patterns, {} boundary cells",
        fig.distinct_patterns(),
        fig.boundary_cells()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::MakeToy(a) => cmd_make_toy(a),
        Command::Beropt(a) => cmd_beropt(a),
        Command::Explore(a) => cmd_explore(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Run(a) => cmd_run(a),
        Command::GridFig(a) => cmd_grid(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let validation = err
                .chain()
                .find_map(|e| e.downcast_ref::<Error>())
                .is_some_and(Error::is_validation);
            let kind = if validation { "validation" } else { "runtime" };
            // Library errors already embed their source text; skip repeats.
            let mut message = String::new();
            for cause in err.chain() {
                let text = cause.to_string();
                if !message.contains(&text) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&text);
                }
            }
            let line = serde_json::json!({ "error": kind, "message": message });
            eprintln!("{line}");
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
