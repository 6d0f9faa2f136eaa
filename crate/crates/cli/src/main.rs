use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use odmn::codec::BucketingScheme;
use odmn::data::{
    generate_synthetic, load_delimited, load_delimited_with, write_delimited, Dataset,
    FeatureSchema, Labels, SyntheticConfig,
};
use odmn::metrics::EvalReport;
use odmn::train::{save_report, Checkpoint, RunConfig, TrainedModel, Trainer, Variant};

/// Multi-horizon lifetime-value prediction with ordered horizons.
#[derive(Debug, Parser)]
#[command(name = "odmn", version, arg_required_else_help = true)]
struct Cli {
    /// Seed for data generation, splitting and initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its schema (`<out>.schema.json`).
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long)]
        zero_rate: Option<f64>,
    },
    /// Fit a bucketing scheme on the labels of a dataset.
    FitBuckets {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Use this scheme instead of fitting one on the training rows.
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on labelled data and write a report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write Lorenz curves into this directory.
        #[arg(long)]
        lorenz_dir: Option<PathBuf>,
    },
    /// Write per-horizon estimates for a feature file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write true and model Lorenz curves of every horizon.
    LorenzExport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Delimited dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Schema file; defaults to the run config's, then `<data>.schema.json`.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse_variant)]
    ablation: Option<Variant>,
    /// Train the plain-MSE regressor instead.
    #[arg(long)]
    baseline: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn schema_path(data: &DataArgs, config: Option<&RunConfig>) -> PathBuf {
    data.schema
        .clone()
        .or_else(|| config.and_then(|c| c.schema.clone()))
        .unwrap_or_else(|| default_schema_path(&data.data))
}

fn default_schema_path(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".schema.json");
    PathBuf::from(name)
}

fn load_data(data: &DataArgs, config: Option<&RunConfig>, labels: Labels) -> CliResult<Dataset> {
    let schema = FeatureSchema::load(&schema_path(data, config))?;
    Ok(load_delimited_with(&data.data, &schema, labels)?)
}

fn run_config(args: &RunArgs, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(variant) = args.ablation {
        config.variant = variant;
    }
    config.baseline |= args.baseline;
    config.validate()?;
    Ok(config)
}

fn print_report(report: &EvalReport) {
    for task in &report.tasks {
        info!(
            "LTV{}: nrmse {:.4} nmae {:.4} ambe {:.4} mutual gini {:.5} gini* {:.4}/{:.4}",
            task.horizon,
            task.nrmse,
            task.nmae,
            task.ambe,
            task.mutual_gini,
            task.gini_model,
            task.gini_true
        );
    }
    info!("monotonicity violations: {:.4}", report.violation_rate);
}

fn write_curves(report: &EvalReport, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    for task in &report.tasks {
        let curves = [("true", &task.true_curve), ("model", &task.model_curve)];
        for (kind, curve) in curves {
            if let Some(curve) = curve {
                curve.write_csv(&dir.join(format!("lorenz_ltv{}_{kind}.csv", task.horizon)))?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate {
            out,
            rows,
            zero_rate,
        } => {
            let defaults = SyntheticConfig::default();
            let config = SyntheticConfig {
                n_users: rows,
                seed: cli.seed.unwrap_or(defaults.seed),
                zero_rate: zero_rate.unwrap_or(defaults.zero_rate),
                ..defaults
            };
            let data = generate_synthetic(&config)?;
            write_delimited(&out, &data)?;
            data.schema.save(&default_schema_path(&out))?;
            info!("wrote {} rows to {}", data.len(), out.display());
        }
        Command::FitBuckets { data, run, out } => {
            let config = run_config(&run, cli.seed)?;
            let dataset = load_data(&data, Some(&config), Labels::Required)?;
            let tasks: Vec<usize> = if config.flags().single_task {
                vec![dataset.schema.num_tasks() - 1]
            } else {
                (0..dataset.schema.num_tasks()).collect()
            };
            let labels: Vec<Vec<f64>> = tasks.iter().map(|&t| dataset.task_labels(t)).collect();
            let (scheme, notes) =
                BucketingScheme::fit(&labels, &config.bucket_configs(tasks.len())?)?;
            for note in notes {
                log::warn!("{note}");
            }
            scheme.save(&out)?;
        }
        Command::Train {
            data,
            run,
            scheme,
            out,
        } => {
            let config = run_config(&run, cli.seed)?;
            let dataset = load_data(&data, Some(&config), Labels::Required)?;
            let scheme = scheme.map(|p| BucketingScheme::load(&p)).transpose()?;
            let mut trainer = Trainer::new(&config, &dataset, scheme)?;
            trainer.train()?;
            trainer.checkpoint().save(&out)?;
            info!(
                "wrote checkpoint after {} epochs to {}",
                trainer.epoch,
                out.display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            lorenz_dir,
        } => {
            let model = TrainedModel::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            let dataset = load_data(&data, Some(&model.config), Labels::Required)?;
            let report = model.evaluate(&dataset)?;
            print_report(&report);
            save_report(&out, &report)?;
            if let Some(dir) = lorenz_dir {
                write_curves(&report, &dir)?;
            }
        }
        Command::Predict {
            checkpoint,
            data,
            out,
        } => {
            let model = TrainedModel::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            let dataset = load_data(&data, Some(&model.config), Labels::Optional)?;
            let estimates = model.predict(&dataset)?;
            let mut writer = csv::Writer::from_path(&out)?;
            writer.write_record(model.horizons().iter().map(|h| format!("ltv{h}")))?;
            for row in estimates {
                writer.write_record(row.iter().map(f64::to_string))?;
            }
            writer.flush()?;
        }
        Command::LorenzExport {
            checkpoint,
            data,
            out,
        } => {
            let model = TrainedModel::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            let dataset = load_delimited(
                &data.data,
                &FeatureSchema::load(&schema_path(&data, Some(&model.config)))?,
            )?;
            write_curves(&model.evaluate(&dataset)?, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
