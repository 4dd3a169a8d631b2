//! `epikit`: simulate, forecast, detect and serve.
//!
//! Settings resolve in this order, first match wins:
//!
//! | source | example |
//! |---|---|
//! | command-line flag | `--seed 7` |
//! | `--config` JSON file | `{"seed": 7}` |
//! | `EPIKIT_SEED` (seed only) | `EPIKIT_SEED=7` |
//! | built-in default | `seed = 0` |
//!
//! The report goes to stdout as JSON; a one-line summary goes to stderr.
//! Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epikit_core::io::Report;
use epikit_core::tasks::{
    run_detect, run_forecast, run_simulate, DetectConfig, ForecastConfig, SimulateConfig, TaskError,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "epikit", version, about = "Epidemic simulation, forecasting and source detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulator and write the resulting dataset.
    Simulate(SimulateArgs),
    /// Fit a forecaster on the training segment and score it on the test segment.
    Forecast(ForecastArgs),
    /// Score source detectors on synthetic or stored snapshots.
    Detect(DetectArgs),
    /// Start the interactive session server.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Common {
    /// JSON file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// sir | sis | seir | network-sir | scenario
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Dataset output path.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Aggregate compartment curve as CSV.
    #[arg(long)]
    #[serde(skip)]
    emit_curve: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    /// Population (ODE models).
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    i0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    /// Graph size (network models).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_prob: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    /// Comma-separated node indices.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_infected: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct ForecastArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// `toy` or a dataset file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    /// persistence | mean | ar | trend-seasonal | sir
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lookback: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    /// Target feature index (default: last).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    population: Option<f64>,
    /// Training fraction; needs `--val` too unless the config file sets it.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip)]
    train: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip)]
    val: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct DetectArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// synthetic-trees | synthetic-sir | a cases file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cases: Option<String>,
    /// jordan | rumor | monte-carlo | all
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    detector: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_cases: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_nodes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spread: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_prob: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    observation_time: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

enum Failure {
    Usage(String),
    Task(TaskError),
}

impl From<TaskError> for Failure {
    fn from(e: TaskError) -> Self {
        Failure::Task(e)
    }
}

type CliResult<T> = Result<T, Failure>;

/// Overlays flags on the config file, fills the seed from the environment,
/// then deserializes into the task config.
fn resolve<T: DeserializeOwned>(config: Option<&Path>, flags: Value) -> CliResult<T> {
    let mut merged = match config {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            match serde_json::from_str(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Failure::Usage(format!("config {} must be a JSON object", path.display()))),
                Err(e) => return Err(Failure::Usage(format!("invalid config {}: {e}", path.display()))),
            }
        }
    };
    if let Value::Object(flags) = flags {
        merged.extend(flags);
    }
    if !merged.contains_key("seed") {
        if let Ok(s) = std::env::var("EPIKIT_SEED") {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("EPIKIT_SEED must be an unsigned integer, got `{s}`")))?;
            merged.insert("seed".into(), seed.into());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::Usage(format!("invalid configuration: {e}")))
}

fn to_flags<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("flags serialize")
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Task(TaskError::Runtime(epikit_core::Error::Io(format!("{}: {e}", path.display())))))
}

fn emit(report: &Report, extra: Option<&Path>) -> CliResult<()> {
    let json = report.to_json();
    if let Some(p) = extra {
        write_file(p, &json)?;
    }
    print!("{json}");
    eprintln!("{}", summary(report));
    Ok(())
}

/// `task model seed=..: key=value ...` over the scalar metrics, one level deep.
fn summary(r: &Report) -> String {
    let mut parts = Vec::new();
    if let Value::Object(m) = &r.metrics {
        for (k, v) in m {
            match v {
                Value::Number(x) => parts.push(format!("{k}={x}")),
                Value::Object(inner) => {
                    for (k2, v2) in inner {
                        if let Value::Number(x) = v2 {
                            parts.push(format!("{k}.{k2}={x}"));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    format!("{} {} seed={}: {}", r.task, r.model, r.seed, parts.join(" "))
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let cfg: SimulateConfig = resolve(args.common.config.as_deref(), to_flags(&args))?;
    let out = run_simulate(&cfg)?;
    if let Some(p) = &args.out {
        out.dataset.save(p).map_err(TaskError::Runtime)?;
    }
    if let Some(p) = &args.emit_curve {
        write_file(p, &out.curve_csv)?;
    }
    emit(&out.report, args.common.report.as_deref())
}

fn forecast(args: ForecastArgs) -> CliResult<()> {
    let mut flags = to_flags(&args);
    let mut split = Map::new();
    if let Some(t) = args.train {
        split.insert("train".into(), t.into());
    }
    if let Some(v) = args.val {
        split.insert("val".into(), v.into());
    }
    if !split.is_empty() {
        // Partial split flags complete the file's split, if any.
        if let Some(Value::Object(file_split)) = args
            .common
            .config
            .as_deref()
            .and_then(|p| std::fs::read_to_string(p).ok())
            .and_then(|t| serde_json::from_str::<Value>(&t).ok())
            .and_then(|v| v.get("split").cloned())
        {
            for (k, v) in file_split {
                split.entry(k).or_insert(v);
            }
        }
        flags["split"] = Value::Object(split);
    }
    let cfg: ForecastConfig = resolve(args.common.config.as_deref(), flags)?;
    emit(&run_forecast(&cfg)?, args.common.report.as_deref())
}

fn detect(args: DetectArgs) -> CliResult<()> {
    let cfg: DetectConfig = resolve(args.common.config.as_deref(), to_flags(&args))?;
    emit(&run_detect(&cfg)?, args.common.report.as_deref())
}

fn serve(args: ServeArgs) -> CliResult<()> {
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| Failure::Task(TaskError::Runtime(epikit_core::Error::Io(e.to_string()))))?;
    eprintln!("listening on http://{}", args.addr);
    rt.block_on(epikit_service::serve(args.addr))
        .map_err(|e| Failure::Task(TaskError::Runtime(epikit_core::Error::Io(e.to_string()))))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Forecast(a) => forecast(a),
        Command::Detect(a) => detect(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Task(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
