use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use survwright_core::cohort::{summarize_cohort, write_cohort_csv, CohortSchema, CohortStore};
use survwright_core::framingham::{load_coefficients, CoefficientSet, FraminghamFields};
use survwright_core::neural::{HyperConfig, Topology, TrainOptions};
use survwright_core::metrics::DEFAULT_ROUNDS;
use survwright_core::search::write_trial_log;
use survwright_core::selection::SelectionOptions;
use survwright_core::synth::{generate_cohort_like, CohortTemplate};
use survwright_service::bundle::{ModelBundle, SexScope, Variant};
use survwright_service::pipeline::{
    self, coefficient_table, ModelKind, PipelineError, SearchConfig, SelectConfig, TrainConfig, TABLE_HEADER,
};
use survwright_service::scoring::{score, whatif, ScoreRequest, WhatIfRequest};
use survwright_service::server::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "survwright", version, about = "Survival risk modelling and scoring")]
struct Cli {
    /// Seed for splits, initialisation, search and bootstrap.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct CohortArgs {
    /// Cohort CSV.
    #[arg(long)]
    data: PathBuf,
    /// Cohort schema JSON.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic cohort with the demo schema.
    Synth {
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        /// Directory for cohort.csv, schema.json and truth.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Template JSON; the built-in cardiovascular demo if omitted.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Load a cohort and report data quality and baseline characteristics.
    Ingest {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Write the characteristics table (TSV) here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Univariate filter followed by backward elimination.
    Select {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, value_enum, default_value_t = SexScope::All)]
        scope: SexScope,
        /// Columns that are never kept, such as treatment indicators.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its bundle.
    Train {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, value_enum, default_value_t = ModelKind::Cox)]
        model: ModelKind,
        #[arg(long, value_enum, default_value_t = Variant::Full)]
        variant: Variant,
        #[arg(long, value_enum, default_value_t = SexScope::All)]
        scope: SexScope,
        /// Selection output or a JSON array of column names.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Hidden layer widths for the neural model, e.g. 32,32.
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random search over neural configurations.
    Search {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, value_enum, default_value_t = Variant::Full)]
        variant: Variant,
        #[arg(long, value_enum, default_value_t = SexScope::All)]
        scope: SexScope,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        budget: usize,
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Trial log, one JSON object per trial.
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discrimination and calibration of a bundle on its test split.
    Eval {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
        /// Write the decile calibration table (CSV) here.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Write the Cox coefficient table (CSV) here.
        #[arg(long)]
        coefficients: Option<PathBuf>,
    },
    /// Framingham general CVD risk, published and refit, on the test split.
    Framingham {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Coefficient JSON; the bundled set if omitted.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
    },
    /// Score one request document offline.
    Score {
        /// One or more bundles; the request's "model" picks among them.
        #[arg(long, required = true)]
        bundle: Vec<PathBuf>,
        /// Request JSON; "-" reads standard input.
        #[arg(long)]
        request: PathBuf,
        /// Treat the request as a what-if request.
        #[arg(long)]
        whatif: bool,
    },
    /// Serve bundles over HTTP.
    Serve {
        #[arg(long, required = true)]
        bundle: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug)]
struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

macro_rules! impl_from {
    ($($t:ty => $code:literal),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::new($code, e.to_string())
            }
        })*
    };
}

impl_from!(
    std::io::Error => "io_error",
    serde_json::Error => "json_error",
    survwright_core::cohort::CohortError => "cohort_error",
    survwright_core::synth::SynthError => "synth_error",
    survwright_core::search::SearchError => "search_error",
    survwright_core::framingham::FraminghamError => "framingham_error",
    survwright_service::bundle::BundleError => "bundle_error",
);

impl From<survwright_service::scoring::ScoreError> for CliError {
    fn from(e: survwright_service::scoring::ScoreError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| CliError::new("io_error", format!("{}: {e}", path.display())))
}

fn load_store(args: &CohortArgs) -> CliResult<CohortStore> {
    let schema = CohortSchema::from_json(&read_text(&args.schema)?)?;
    let file = File::open(&args.data).map_err(|e| CliError::new("io_error", format!("{}: {e}", args.data.display())))?;
    let store = CohortStore::ingest(BufReader::new(file), schema)?;
    log::info!(
        "loaded {} subjects ({} retained, {} events)",
        store.quality.rows_loaded,
        store.quality.rows_retained,
        store.outcome.n_events()
    );
    Ok(store)
}

/// Accepts a selection trace (its `final_features`) or a plain array.
fn load_features(path: &Path) -> CliResult<Vec<String>> {
    let value: Value = serde_json::from_str(&read_text(path)?)?;
    let list = value.get("final_features").unwrap_or(&value);
    serde_json::from_value(list.clone())
        .map_err(|_| CliError::new("invalid_argument", "features must be a selection trace or an array of column names"))
}

fn train_options(max_epochs: Option<usize>) -> TrainOptions {
    let mut t = TrainOptions::default();
    if let Some(m) = max_epochs {
        t.max_epochs = m;
    }
    t
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_bundles(paths: &[PathBuf]) -> CliResult<Vec<ModelBundle>> {
    paths
        .iter()
        .map(|p| ModelBundle::load(p).map_err(|e| CliError::new("bundle_error", format!("{}: {e}", p.display()))))
        .collect()
}

fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth { n, out_dir, template } => {
            let template = match template {
                Some(p) => {
                    let mut t: CohortTemplate = serde_json::from_str(&read_text(&p)?)?;
                    t.n = n;
                    t.seed = seed;
                    t
                }
                None => CohortTemplate::cardio_demo(n, seed),
            };
            let cohort = generate_cohort_like(&template)?;
            std::fs::create_dir_all(&out_dir)?;
            let csv = BufWriter::new(File::create(out_dir.join("cohort.csv"))?);
            write_cohort_csv(csv, &cohort.raw, &cohort.schema)?;
            std::fs::write(out_dir.join("schema.json"), serde_json::to_string_pretty(&cohort.schema)?)?;
            std::fs::write(out_dir.join("truth.json"), serde_json::to_string_pretty(&cohort.truth)?)?;
            print_json(&json!({ "n": n, "seed": seed, "out_dir": out_dir }))
        }
        Command::Ingest { cohort, summary } => {
            let store = load_store(&cohort)?;
            if let Some(path) = summary {
                let table = summarize_cohort(&store.raw, &store.outcome.event, &store.schema)?;
                std::fs::write(path, table.render())?;
            }
            print_json(&json!({
                "quality": store.quality,
                "n_events": store.outcome.n_events(),
            }))
        }
        Command::Select {
            cohort,
            scope,
            exclude,
            out,
        } => {
            let store = load_store(&cohort)?;
            let config = SelectConfig {
                scope,
                seed,
                options: SelectionOptions {
                    exclusions: exclude,
                    ..SelectionOptions::default()
                },
                ..SelectConfig::default()
            };
            let trace = pipeline::select_features(&store, &config)?;
            std::fs::write(&out, trace.to_json())?;
            eprintln!("{}", trace.summary());
            print_json(&json!({
                "initial": trace.initial_features.len(),
                "selected": trace.final_features,
            }))
        }
        Command::Train {
            cohort,
            model,
            variant,
            scope,
            features,
            hidden,
            max_epochs,
            id,
            out,
        } => {
            let store = load_store(&cohort)?;
            let mut config = TrainConfig {
                model,
                variant,
                scope,
                seed,
                features: features.as_deref().map(load_features).transpose()?,
                train: train_options(max_epochs),
                id,
                ..TrainConfig::default()
            };
            if let Some(widths) = hidden {
                config.hyper = HyperConfig {
                    topology: Topology(widths),
                    ..config.hyper
                };
            }
            let bundle = pipeline::train_bundle(&store, &config)?;
            bundle.save(&out)?;
            print_json(&json!({
                "id": bundle.id,
                "kind": bundle.model.kind(),
                "input_columns": bundle.input_columns,
                "training": bundle.training,
            }))
        }
        Command::Search {
            cohort,
            variant,
            scope,
            features,
            budget,
            max_epochs,
            trials,
            id,
            out,
        } => {
            let store = load_store(&cohort)?;
            let config = SearchConfig {
                variant,
                scope,
                seed,
                features: features.as_deref().map(load_features).transpose()?,
                budget,
                train: train_options(max_epochs),
                id,
                ..SearchConfig::default()
            };
            let (bundle, outcome) = pipeline::search_bundle(&store, &config)?;
            bundle.save(&out)?;
            if let Some(path) = trials {
                write_trial_log(&outcome.trials, BufWriter::new(File::create(path)?))?;
            }
            print_json(&json!({
                "id": bundle.id,
                "best_trial": outcome.best(),
                "trials": outcome.trials.len(),
            }))
        }
        Command::Eval {
            cohort,
            bundle,
            rounds,
            calibration,
            coefficients,
        } => {
            let store = load_store(&cohort)?;
            let bundle = ModelBundle::load(&bundle)?;
            let summary = pipeline::evaluate_bundle(&bundle, &store, rounds, seed)?;
            if let Some(path) = calibration {
                std::fs::write(path, &summary.calibration_csv)?;
            }
            if let Some(path) = coefficients {
                let table = coefficient_table(&bundle)
                    .ok_or_else(|| CliError::new("invalid_argument", "coefficients exist only for Cox bundles"))?;
                std::fs::write(path, table.to_csv())?;
            }
            eprintln!("{TABLE_HEADER}\n{}", summary.table_row);
            print_json(&summary)
        }
        Command::Framingham {
            cohort,
            coefficients,
            rounds,
        } => {
            let store = load_store(&cohort)?;
            let set = match coefficients {
                Some(p) => load_coefficients(&p)?,
                None => CoefficientSet::bundled(),
            };
            let summary =
                pipeline::framingham_comparison(&store, &FraminghamFields::cardio_demo(), &set, rounds, seed)?;
            eprintln!("{}", summary.table);
            print_json(&summary)
        }
        Command::Score {
            bundle,
            request,
            whatif: is_whatif,
        } => {
            let bundles = load_bundles(&bundle)?;
            let text = read_text(&request)?;
            let pick = |model: Option<&str>| -> CliResult<&ModelBundle> {
                match model {
                    Some(id) => bundles
                        .iter()
                        .find(|b| b.id == id)
                        .ok_or_else(|| CliError::new("unknown_model", format!("no model with id '{id}'"))),
                    None if bundles.len() == 1 => Ok(&bundles[0]),
                    None => Err(CliError::new("model_required", "several bundles given; name one in \"model\"")),
                }
            };
            if is_whatif {
                let req: WhatIfRequest = serde_json::from_str(&text)?;
                print_json(&whatif(pick(req.base.model.as_deref())?, &req)?)
            } else {
                let req: ScoreRequest = serde_json::from_str(&text)?;
                print_json(&score(pick(req.model.as_deref())?, &req)?)
            }
        }
        Command::Serve { bundle, addr } => {
            let bundles = load_bundles(&bundle)?;
            let state = AppState::new(bundles).map_err(|m| CliError::new("invalid_argument", m))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(state, addr))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SURVWRIGHT_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "code": e.code, "message": e.message } }));
            ExitCode::FAILURE
        }
    }
}
