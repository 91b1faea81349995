use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mign_core::data::{
    build_dataset, compute_norm_stats, ingest_dir, load_or_ingest, read_cache, split_stations,
    DateRange, RecordStore, SampleIndex, Variable, Window,
};
use mign_core::eval::{
    default_regions, evaluate, export_predictions, export_station_errors, load_regions,
    regional_breakdown, EvalOptions, ExportFormat, MetricsReport, MignForecaster, Persistence,
    RolloutForecaster,
};
use mign_core::model::{load_checkpoint, save_checkpoint};
use mign_core::train::{train, TrainConfig, TrainingSet};
use mign_core::{build_mesh, mesh_graph, Error, ErrorKind, Execution, MeshContext, MignModel};

#[derive(Parser)]
#[command(
    name = "mign",
    version,
    about = "Forecast irregular weather-station observations on a HEALPix mesh"
)]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a directory of GSOD files and write the record cache.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Train a model for one variable.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Evaluate(EvalArgs),
    /// Multi-day forecasts by feeding predictions back as inputs.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        steps: usize,
        #[command(flatten)]
        common: EvalCommon,
    },
    /// Score a parameter-free baseline.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        #[arg(long, default_value = "MAX")]
        variable: Variable,
        #[command(flatten)]
        common: EvalCommon,
    },
    /// Write per-station errors from a saved report.
    ExportErrors {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write HEALPix mesh node coordinates as CSV.
    Mesh {
        #[arg(long, default_value_t = 3)]
        level: u32,
        #[arg(long)]
        out: PathBuf,
        /// Also print the mean distance to the k nearest neighbours.
        #[arg(long)]
        neighbors: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Persistence,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct DataArgs {
    /// Directory of GSOD CSV files or tar archives.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Record cache; read directly when `--data` is absent.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct GeneralizationArgs {
    /// Split stations into a training half and an unseen test half.
    #[arg(long)]
    generalization: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    variable: Option<Variable>,
    /// TOML file with training and model settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long = "train-seed")]
    train_seed: Option<u64>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: GeneralizationArgs,
}

#[derive(Args)]
struct EvalCommon {
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    stations: GeneralizationArgs,
    /// TOML file of `[[region]]` boxes; the built-in continents otherwise.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Save the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Save every prediction as CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Date range override, `YYYY-MM-DD:YYYY-MM-DD`.
    #[arg(long)]
    range: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    common: EvalCommon,
}

fn execution(cli_sequential: bool) -> Execution {
    if cli_sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load_records(args: &DataArgs, exec: Execution) -> anyhow::Result<RecordStore> {
    match (&args.data, &args.cache) {
        (Some(dir), Some(cache)) => {
            let (store, report) = load_or_ingest(dir, cache, exec)?;
            info!("{} records ({} files)", store.len(), report.parse.files);
            Ok(store)
        }
        (Some(dir), None) => Ok(ingest_dir(dir, exec)?.0),
        (None, Some(cache)) => Ok(read_cache(cache)?.1),
        (None, None) => Err(Error::Config("pass --data and/or --cache".into()).into()),
    }
}

fn parse_range(s: &str) -> anyhow::Result<DateRange> {
    let (a, b) = s
        .split_once(':')
        .context("range must look like START:END")?;
    let start = a.parse().with_context(|| format!("bad date {a:?}"))?;
    let end = b.parse().with_context(|| format!("bad date {b:?}"))?;
    Ok(DateRange::new(start, end)?)
}

/// Station subset for a split under the generalization protocol: the first
/// part for training and validation, the rest for testing.
fn station_filter(
    store: &RecordStore,
    g: &GeneralizationArgs,
    split: Split,
) -> anyhow::Result<Option<std::collections::BTreeSet<String>>> {
    if !g.generalization {
        return Ok(None);
    }
    let (a, b) = split_stations(store.station_ids(), g.fraction, g.seed)?;
    Ok(Some(if split == Split::Test { b } else { a }))
}

fn dataset(
    store: &RecordStore,
    variable: Variable,
    range: DateRange,
    window: Window,
    keep: &Option<std::collections::BTreeSet<String>>,
) -> anyhow::Result<SampleIndex> {
    let index = build_dataset(store, variable, range, window)?;
    Ok(match keep {
        Some(ids) => index.filter_stations(|id| ids.contains(id)),
        None => index,
    })
}

fn run_train(args: TrainArgs, exec: Execution) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.variable {
        cfg.variable = v;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(e) = args.max_epochs {
        cfg.max_epochs = e;
    }
    if let Some(p) = args.patience {
        cfg.patience = p;
    }
    if let Some(s) = args.train_seed {
        cfg.seed = s;
    }
    if args.max_steps.is_some() {
        cfg.max_steps = args.max_steps;
    }
    if exec == Execution::Sequential {
        cfg.execution = exec;
    }
    cfg.validate()?;

    let store = load_records(&args.data, cfg.execution)?;
    let keep = station_filter(&store, &args.split, Split::Train)?;
    let store = match &keep {
        Some(ids) => store.filter_stations(|id| ids.contains(id)),
        None => store,
    };
    let window = Window {
        input_days: cfg.model.input_steps,
        output_days: cfg.model.output_steps,
    };
    let norm = compute_norm_stats(store.records(), cfg.variable, cfg.splits.train)?;
    info!(
        "{} normalization: mean {:.4} std {:.4}",
        cfg.variable, norm.mean, norm.std
    );
    let train_set = dataset(&store, cfg.variable, cfg.splits.train, window, &None)?;
    let val_set = dataset(&store, cfg.variable, cfg.splits.val, window, &None)?;
    info!(
        "{} training samples, {} validation samples",
        train_set.len(),
        val_set.len()
    );
    let mesh = MeshContext::new(&cfg.model)?;
    let outcome = train(
        &cfg,
        &TrainingSet {
            train: train_set.samples,
            val: val_set.samples,
            norm: Some(norm),
        },
        &mesh,
    )?;
    save_checkpoint(&outcome.model, &args.out)?;
    if let Some(h) = &args.history {
        outcome.history.write_csv(h)?;
    }
    println!(
        "best epoch {} of {} ({} steps); checkpoint written to {}",
        outcome.best_epoch,
        outcome.history.epochs.len(),
        outcome.steps,
        args.out.display()
    );
    Ok(())
}

fn split_range(common: &EvalCommon, split: Split) -> anyhow::Result<DateRange> {
    if let Some(r) = &common.range {
        return parse_range(r);
    }
    let s = mign_core::data::Splits::default();
    Ok(match split {
        Split::Train => s.train,
        Split::Val => s.val,
        Split::Test => s.test,
    })
}

fn finish_report(mut report: MetricsReport, common: &EvalCommon) -> anyhow::Result<()> {
    let regions = match &common.regions {
        Some(p) => load_regions(p)?,
        None => default_regions(),
    };
    report.regions = regional_breakdown(&report, &regions);
    if let Some(p) = &common.predictions {
        export_predictions(&report, p)?;
    }
    if let Some(p) = &common.report {
        report.save_json(p)?;
    }
    if common.json {
        println!("{}", report.to_json());
    } else {
        print!("{report}");
    }
    Ok(())
}

fn score<F: mign_core::eval::Forecaster>(
    forecaster: &F,
    name: &str,
    variable: Variable,
    window: Window,
    common: &EvalCommon,
    exec: Execution,
) -> anyhow::Result<()> {
    let store = load_records(&common.data, exec)?;
    let keep = station_filter(&store, &common.stations, common.split)?;
    let range = split_range(common, common.split)?;
    let samples = dataset(&store, variable, range, window, &keep)?;
    let opts = EvalOptions {
        execution: exec,
        keep_predictions: common.predictions.is_some(),
    };
    let report = evaluate(forecaster, name, &samples.samples, opts)?;
    finish_report(report, common)
}

fn load_model(path: &Path) -> anyhow::Result<(MignModel, MeshContext)> {
    let model = load_checkpoint(path)?;
    let mesh = MeshContext::new(model.config())?;
    Ok((model, mesh))
}

fn model_variable(model: &MignModel) -> anyhow::Result<Variable> {
    model
        .variable()
        .ok_or_else(|| Error::Config("checkpoint does not name its variable".into()).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = execution(cli.sequential);
    match cli.command {
        Command::Ingest { dir, cache } => {
            let (_, report) = load_or_ingest(&dir, &cache, exec)?;
            print!("{report}");
        }
        Command::Train(args) => run_train(args, exec)?,
        Command::Evaluate(args) => {
            let (model, mesh) = load_model(&args.ckpt)?;
            let window = Window {
                input_days: model.config().input_steps,
                output_days: model.config().output_steps,
            };
            let f = MignForecaster {
                model: &model,
                mesh: &mesh,
            };
            score(
                &f,
                "mign",
                model_variable(&model)?,
                window,
                &args.common,
                exec,
            )?;
        }
        Command::Rollout {
            ckpt,
            steps,
            common,
        } => {
            if steps == 0 {
                bail!(Error::Config("--steps must be at least 1".into()));
            }
            let (model, mesh) = load_model(&ckpt)?;
            let window = Window {
                input_days: 1,
                output_days: steps,
            };
            let f = RolloutForecaster {
                model: &model,
                mesh: &mesh,
            };
            score(
                &f,
                "mign rollout",
                model_variable(&model)?,
                window,
                &common,
                exec,
            )?;
        }
        Command::Baseline {
            kind,
            variable,
            common,
        } => match kind {
            BaselineKind::Persistence => score(
                &Persistence,
                "persistence",
                variable,
                Window::SINGLE,
                &common,
                exec,
            )?,
        },
        Command::ExportErrors {
            report,
            format,
            out,
        } => {
            let report = MetricsReport::load_json(&report)?;
            export_station_errors(&report, &out, format)?;
            println!(
                "{} stations written to {}",
                report.stations.len(),
                out.display()
            );
        }
        Command::Mesh {
            level,
            out,
            neighbors,
        } => {
            let mesh = build_mesh(level)?;
            mesh.write_csv(&out)?;
            println!(
                "{} nodes on {} rings written to {}",
                mesh.len(),
                mesh.ring_count(),
                out.display()
            );
            if let Some(k) = neighbors {
                let edges = mesh_graph(&mesh, k)?;
                let mean = edges.distances().iter().sum::<f64>() / edges.len() as f64;
                println!(
                    "mean distance to {k} nearest neighbours: {:.3} deg",
                    mean.to_degrees()
                );
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Usage) => 1,
        Some(ErrorKind::Numeric) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
