//! `neurocd`: train, diagnose, explain and report from the command line.
//!
//! Data goes to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 rejected input, 2 runtime failure, 3 bad usage.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use neurocd_core::analytics::render_markdown;
use neurocd_core::ingest::{load_dataset, parse_responses, read_csv_file};
use neurocd_core::model::{DiscriminationMode, FORMAT_VERSION};
use neurocd_core::payload::{
    self, ContrastiveRequest, CounterfactualRequest, DiagnoseRequest, SweepRequest,
};
use neurocd_core::synth::{generate, write_fixture, SynthConfig};
use neurocd_core::train::{fit, Optimizer, TrainConfig};
use neurocd_core::{Error, ModelParams};
use neurocd_service::{ServiceConfig, DEFAULT_PORT};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format_version 1)");

#[derive(Parser)]
#[command(name = "neurocd", version = VERSION, about = "Explainable cognitive diagnosis for classroom response data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic class with known mastery.
    Simulate(SimulateArgs),
    /// Fit a model to a response table and Q-matrix.
    Train(TrainArgs),
    /// Estimate one student's mastery with the reasoning chain.
    Diagnose(StudentArgs),
    /// Contrastive or counterfactual explanation for one student.
    #[command(subcommand)]
    Explain(ExplainCommand),
    /// Class analytics and teaching suggestions.
    Report(ReportArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 40)]
    students: usize,
    #[arg(long, default_value_t = 125)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    kcs: usize,
    /// Defaults to items / kcs rounded up.
    #[arg(long)]
    items_per_kc: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    slip: f64,
    #[arg(long, default_value_t = 0.15)]
    guess: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiscriminationArg {
    Scalar,
    PerKc,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    qmatrix: PathBuf,
    /// Optional item metadata (text, answer key, options).
    #[arg(long)]
    items: Option<PathBuf>,
    /// Directory receiving model.json and trainreport.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    h1: Option<usize>,
    #[arg(long)]
    h2: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long, value_enum)]
    discrimination: Option<DiscriminationArg>,
}

#[derive(Args)]
struct StudentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    student: String,
}

#[derive(Subcommand)]
enum ExplainCommand {
    /// Re-diagnose with the listed items' correctness toggled.
    Contrastive {
        #[command(flatten)]
        student: StudentArgs,
        #[arg(long, value_delimiter = ',')]
        flip: Vec<String>,
    },
    /// Predict responses with some KCs set to asserted mastery values.
    Counterfactual {
        #[command(flatten)]
        student: StudentArgs,
        /// KC=VALUE pairs, each value strictly inside (0, 1).
        #[arg(long = "set", value_delimiter = ',', value_parser = parse_override)]
        overrides: Vec<(String, f64)>,
        /// Items to predict; all items by default.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<String>>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also sweep this KC over a value grid.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, value_delimiter = ',', requires = "sweep")]
        grid: Option<Vec<f64>>,
    },
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (kc, value) = s.split_once('=').ok_or_else(|| format!("expected KC=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((kc.trim().to_string(), value))
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ServeArgs {
    /// Overrides the PORT environment variable.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Snapshot file loaded at start-up and written by POST /api/snapshot.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
}

enum Failure {
    Core(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<neurocd_core::ValidationReport> for Failure {
    fn from(r: neurocd_core::ValidationReport) -> Self {
        Failure::Core(Error::Validation(r))
    }
}

type CliResult = Result<(), Failure>;

fn emit(bytes: &[u8]) -> CliResult {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Failure::Core(e.into()))
}

fn emit_json<T: serde::Serialize>(value: &T) -> CliResult {
    emit(&payload::to_json_bytes(value)?)
}

fn load_model(path: &Path) -> Result<ModelParams, Error> {
    ModelParams::from_json(&std::fs::read_to_string(path)?)
}

fn simulate(args: SimulateArgs) -> CliResult {
    let config = SynthConfig {
        students: args.students,
        items: args.items,
        kcs: args.kcs,
        items_per_kc: args.items_per_kc.unwrap_or_else(|| args.items.div_ceil(args.kcs.max(1))),
        slip: args.slip,
        guess: args.guess,
        seed: args.seed,
    };
    let (truth, dataset) = generate(&config)?;
    std::fs::create_dir_all(&args.out).map_err(Error::from)?;
    write_fixture(&args.out, &truth, &dataset)?;
    emit_json(&serde_json::json!({
        "out": args.out.display().to_string(),
        "config": config,
    }))
}

fn train(args: TrainArgs) -> CliResult {
    let responses = read_csv_file(&args.responses)?;
    let qmatrix = read_csv_file(&args.qmatrix)?;
    let items = args.items.as_deref().map(read_csv_file).transpose()?;
    let dataset = load_dataset(&responses, &qmatrix, items.as_deref()).map_err(Error::Validation)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        seed: args.seed.unwrap_or(defaults.seed),
        h1: args.h1.unwrap_or(defaults.h1),
        h2: args.h2.unwrap_or(defaults.h2),
        holdout_fraction: args.holdout.unwrap_or(defaults.holdout_fraction),
        optimizer: match args.optimizer {
            Some(OptimizerArg::Sgd) => Optimizer::Sgd,
            Some(OptimizerArg::Adam) => Optimizer::Adam,
            None => defaults.optimizer,
        },
        discrimination_mode: match args.discrimination {
            Some(DiscriminationArg::PerKc) => DiscriminationMode::PerKc,
            Some(DiscriminationArg::Scalar) => DiscriminationMode::Scalar,
            None => defaults.discrimination_mode,
        },
        ..defaults
    };
    let (params, report) = fit(&dataset, &config)?;
    std::fs::create_dir_all(&args.out).map_err(Error::from)?;
    std::fs::write(args.out.join("model.json"), params.to_json()?).map_err(Error::from)?;
    let report_bytes = payload::to_json_bytes(&report)?;
    std::fs::write(args.out.join("trainreport.json"), &report_bytes).map_err(Error::from)?;
    eprintln!(
        "trained {} epochs, final loss {:.4}; wrote {}",
        report.epochs_run,
        report.final_loss,
        args.out.display()
    );
    emit(&report_bytes)
}

/// The model plus the named student's observed responses.
fn student_inputs(args: &StudentArgs) -> Result<(ModelParams, Vec<payload::ResponseInput>), Error> {
    let params = load_model(&args.model)?;
    let records = parse_responses(&read_csv_file(&args.responses)?)?;
    let responses = payload::student_responses(&records, &args.student)?;
    Ok((params, responses))
}

fn diagnose(args: StudentArgs) -> CliResult {
    let (params, responses) = student_inputs(&args)?;
    let out = payload::run_diagnose(
        &params,
        &DiagnoseRequest {
            responses,
            config: None,
        },
    )?;
    emit_json(&out)
}

fn explain(command: ExplainCommand) -> CliResult {
    match command {
        ExplainCommand::Contrastive { student, flip } => {
            let (params, responses) = student_inputs(&student)?;
            let out = payload::run_contrastive(
                &params,
                &ContrastiveRequest {
                    responses,
                    flip_items: Some(flip),
                    variant_responses: None,
                    config: None,
                },
            )?;
            emit_json(&out)
        }
        ExplainCommand::Counterfactual {
            student,
            overrides,
            targets,
            threshold,
            sweep,
            grid,
        } => {
            let (params, responses) = student_inputs(&student)?;
            let out = payload::run_counterfactual(
                &params,
                &CounterfactualRequest {
                    responses: Some(responses),
                    mastery: None,
                    overrides: overrides.into_iter().collect(),
                    target_items: targets,
                    threshold,
                    sweep: sweep.map(|kc_id| SweepRequest { kc_id, values: grid }),
                    config: None,
                },
            )?;
            emit_json(&out)
        }
    }
}

fn report(args: ReportArgs) -> CliResult {
    let params = load_model(&args.model)?;
    let records = parse_responses(&read_csv_file(&args.responses)?)?;
    let dataset = payload::dataset_for_model(&records, &params)?;
    let report = payload::build_report(&dataset, &params);
    match args.format {
        Format::Json => emit_json(&report),
        Format::Md => emit(render_markdown(&report).as_bytes()),
    }
}

fn serve(args: ServeArgs) -> CliResult {
    let port = match args.port {
        Some(p) => p,
        None => neurocd_service::port_from_env()?,
    };
    let addr: std::net::SocketAddr = format!("{}:{}", args.host, port)
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot listen on `{}:{port}`", args.host)))?;
    let config = ServiceConfig {
        snapshot_path: args.snapshot,
        cors_origins: args.cors_origins,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("serving on http://{addr} (default port {DEFAULT_PORT})");
    runtime.block_on(neurocd_service::serve(addr, config))?;
    Ok(())
}

fn report_failure(failure: Failure) -> ExitCode {
    let (code, body) = match failure {
        Failure::Core(Error::Validation(report)) => (1, serde_json::to_value(&report).unwrap_or_default()),
        Failure::Core(e) => {
            let exit = if e.is_user_error() { 1 } else { 2 };
            (exit, serde_json::json!({"code": e.code(), "message": e.to_string()}))
        }
        Failure::Runtime(message) => (2, serde_json::json!({"code": "Runtime", "message": message})),
    };
    let text = serde_json::to_string_pretty(&body).unwrap_or_default();
    eprintln!("{text}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    debug_assert_eq!(FORMAT_VERSION, 1, "update VERSION");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Explain(c) => explain(c),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(f),
    }
}
