//! End-to-end task runners: configuration in, [`Report`] out.
//!
//! The command-line tool only parses arguments into these configs and
//! prints what comes back.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::detect::{
    evaluate_detector, synthetic_sir_cases, synthetic_tree_cases, DetectionCase, Detector, MonteCarloParams, Snapshot,
};
use crate::error::Error;
use crate::forecast::{evaluate_forecaster, ForecastModel, WindowSpec};
use crate::io::{generate_toy_dataset, toy_metadata, DatasetFile, Report};
use crate::mechanistic::{simulate, simulate_network_sir, CompartmentParams, CompartmentalModel, NetworkSirConfig};
use crate::model::{Compartment, EpiDataset, FeaturePanel, NodeStates, SplitFractions};
use crate::rng::SeedPolicy;
use crate::simulate::{random_graph, simulate_scenario, MobilityConfig};
use crate::transforms::{apply_pipeline, TransformPipeline};

/// Failure of a task run, split by who is at fault.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaskError {
    /// The configuration is invalid; `field` names the offending setting.
    #[error("invalid `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl TaskError {
    fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        TaskError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Parameter-domain errors from the library are configuration errors.
    fn from_validation(e: Error) -> Self {
        match e {
            Error::InvalidParameter { field, message } => TaskError::Config { field, message },
            other => TaskError::Runtime(other),
        }
    }

    /// 2 for configuration errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            TaskError::Config { .. } => 2,
            TaskError::Runtime(_) => 1,
        }
    }
}

pub type TaskResult<T> = std::result::Result<T, TaskError>;

pub const DEFAULT_SEED: u64 = 0;

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// `toy` or a dataset file path.
    pub data: String,
    pub model: String,
    pub lookback: usize,
    pub horizon: usize,
    /// Target feature channel; defaults to the last one.
    pub feature: Option<usize>,
    /// AR order and differencing.
    pub p: usize,
    pub d: usize,
    /// Trend window of the trend-seasonal model.
    pub period: usize,
    /// Population of the SIR forecaster.
    pub population: f64,
    pub split: Option<SplitFractions>,
    pub transforms: TransformPipeline,
    pub seed: Option<u64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            data: "toy".into(),
            model: "ar".into(),
            lookback: 12,
            horizon: 3,
            feature: None,
            p: 2,
            d: 0,
            period: 7,
            population: 1000.0,
            split: None,
            transforms: TransformPipeline::default(),
            seed: None,
        }
    }
}

impl ForecastConfig {
    pub fn forecast_model(&self) -> TaskResult<ForecastModel> {
        Ok(match self.model.as_str() {
            "persistence" => ForecastModel::Persistence,
            "mean" => ForecastModel::Mean,
            "ar" => {
                if self.p == 0 {
                    return Err(TaskError::config("p", "must be >= 1"));
                }
                if self.d > 2 {
                    return Err(TaskError::config("d", "must be 0, 1 or 2"));
                }
                ForecastModel::Ar { p: self.p, d: self.d }
            }
            "trend-seasonal" | "dlinear" => {
                if self.period < 2 {
                    return Err(TaskError::config("period", "must be >= 2"));
                }
                ForecastModel::TrendSeasonal { period: self.period }
            }
            "sir" => {
                if !(self.population.is_finite() && self.population > 0.0) {
                    return Err(TaskError::config("population", "must be finite and > 0"));
                }
                ForecastModel::Sir {
                    population: self.population,
                }
            }
            other => {
                return Err(TaskError::config(
                    "model",
                    format!("unknown model `{other}`; available: {}", ForecastModel::NAMES.join(", ")),
                ))
            }
        })
    }

    pub fn validate(&self) -> TaskResult<(ForecastModel, WindowSpec)> {
        let model = self.forecast_model()?;
        let spec = WindowSpec::new(self.lookback, self.horizon).map_err(TaskError::from_validation)?;
        if let Some(s) = &self.split {
            s.validate().map_err(TaskError::from_validation)?;
        }
        Ok((model, spec))
    }
}

fn load_data(data: &str, seed: SeedPolicy) -> TaskResult<EpiDataset> {
    if data == "toy" {
        Ok(generate_toy_dataset(seed))
    } else if data.is_empty() {
        Err(TaskError::config("data", "expected `toy` or a dataset path"))
    } else {
        Ok(DatasetFile::load(Path::new(data))?.dataset)
    }
}

/// Loads the data, applies the transforms, fits per node on the training
/// segment and scores on the test segment.
pub fn run_forecast(cfg: &ForecastConfig) -> TaskResult<Report> {
    let (model, spec) = cfg.validate()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let mut ds = load_data(&cfg.data, SeedPolicy::new(seed))?;
    if let Some(s) = cfg.split {
        ds = ds.with_split(s)?;
    }
    let ds = apply_pipeline(&cfg.transforms, &ds)?;
    let n_features = ds.panel().n_features();
    let feature = cfg.feature.unwrap_or(n_features - 1);
    if feature >= n_features {
        return Err(TaskError::config(
            "feature",
            format!("index {feature} out of range for {n_features} features"),
        ));
    }
    let report = evaluate_forecaster(&model, &ds, spec, feature)?;
    let resolved = ForecastConfig {
        feature: Some(feature),
        seed: Some(seed),
        ..cfg.clone()
    };
    Ok(Report {
        task: "forecast".into(),
        model: model.name().into(),
        metrics: to_value(&report),
        config: to_value(&resolved),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// `synthetic-trees`, `synthetic-sir` or a path to a JSON file holding a
    /// case, a list of cases or a bare snapshot.
    pub cases: String,
    /// `jordan`, `rumor`, `monte-carlo` or `all`.
    pub detector: String,
    pub n_cases: usize,
    /// Graph size of synthetic cases (15 for trees, 50 for SIR).
    pub n_nodes: Option<usize>,
    /// Outbreak size of synthetic tree cases.
    pub spread: usize,
    /// Edge probability of synthetic SIR graphs.
    pub edge_prob: f64,
    /// Forward model of synthetic SIR cases and the Monte Carlo detector.
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
    pub replicates: usize,
    pub observation_time: usize,
    pub seed: Option<u64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            cases: "synthetic-trees".into(),
            detector: "rumor".into(),
            n_cases: 200,
            n_nodes: None,
            spread: 10,
            edge_prob: 0.1,
            beta: 0.5,
            gamma: 0.1,
            dt: 1.0,
            replicates: 20,
            observation_time: 5,
            seed: None,
        }
    }
}

pub const DETECTOR_NAMES: [&str; 4] = ["jordan", "rumor", "monte-carlo", "all"];

impl DetectConfig {
    fn mc_params(&self) -> MonteCarloParams {
        MonteCarloParams {
            beta: self.beta,
            gamma: self.gamma,
            dt: self.dt,
            replicates: self.replicates,
        }
    }

    pub fn detectors(&self) -> TaskResult<Vec<Detector>> {
        let mc = Detector::MonteCarlo(self.mc_params());
        Ok(match self.detector.as_str() {
            "jordan" => vec![Detector::Jordan],
            "rumor" => vec![Detector::Rumor],
            "monte-carlo" => vec![mc],
            "all" => vec![Detector::Jordan, Detector::Rumor, mc],
            other => {
                return Err(TaskError::config(
                    "detector",
                    format!("unknown detector `{other}`; available: {}", DETECTOR_NAMES.join(", ")),
                ))
            }
        })
    }

    pub fn validate(&self) -> TaskResult<Vec<Detector>> {
        let detectors = self.detectors()?;
        NetworkSirConfig::new(self.beta, self.gamma, self.dt, vec![0])
            .validate(1)
            .map_err(TaskError::from_validation)?;
        if self.replicates == 0 {
            return Err(TaskError::config("replicates", "must be >= 1"));
        }
        if self.cases.starts_with("synthetic-") {
            if self.n_cases == 0 {
                return Err(TaskError::config("n_cases", "must be >= 1"));
            }
            if self.n_nodes == Some(0) {
                return Err(TaskError::config("n_nodes", "must be >= 1"));
            }
            if !(0.0..=1.0).contains(&self.edge_prob) {
                return Err(TaskError::config("edge_prob", "must lie in [0, 1]"));
            }
        }
        Ok(detectors)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CasesFile {
    Many(Vec<DetectionCase>),
    One(DetectionCase),
    Bare(Snapshot),
}

fn load_cases(cfg: &DetectConfig, seed: SeedPolicy) -> TaskResult<CasesFile> {
    match cfg.cases.as_str() {
        "synthetic-trees" => {
            let n = cfg.n_nodes.unwrap_or(15);
            if cfg.spread == 0 || cfg.spread > n {
                return Err(TaskError::config("spread", format!("must lie in 1..={n}")));
            }
            Ok(CasesFile::Many(synthetic_tree_cases(cfg.n_cases, n, cfg.spread, seed)?))
        }
        "synthetic-sir" => Ok(CasesFile::Many(synthetic_sir_cases(
            cfg.n_cases,
            cfg.n_nodes.unwrap_or(50),
            cfg.edge_prob,
            &cfg.mc_params(),
            cfg.observation_time,
            seed,
        )?)),
        path => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            // decode once without the untagged wrapper to keep the real error message
            let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            let parsed = if value.is_array() {
                serde_json::from_value(value).map(CasesFile::Many)
            } else if value.get("snapshot").is_some() {
                serde_json::from_value(value).map(CasesFile::One)
            } else {
                serde_json::from_value(value).map(CasesFile::Bare)
            };
            Ok(parsed.map_err(|e| Error::Parse(e.to_string()))?)
        }
    }
}

/// Runs every selected detector on the cases. With cases carrying a true
/// source the metrics hold one evaluation per detector; a bare snapshot
/// yields the probability vector instead. Under `all`, the Monte Carlo
/// detector is skipped (and says so) when the cases carry no observation
/// time.
pub fn run_detect(cfg: &DetectConfig) -> TaskResult<Report> {
    let detectors = cfg.validate()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let policy = SeedPolicy::new(seed);
    let cases = load_cases(cfg, policy.child(0))?;
    let fan_out = detectors.len() > 1;
    let mut metrics = Map::new();
    for det in &detectors {
        let needs_time = matches!(det, Detector::MonteCarlo(_));
        let section = match &cases {
            CasesFile::Bare(s) => {
                if fan_out && needs_time && s.observation_time().is_none() {
                    json!({"skipped": "snapshot carries no observation_time"})
                } else {
                    json!({"probs": det.score(s, policy.child(1))?.probs})
                }
            }
            CasesFile::One(c) => run_cases(det, std::slice::from_ref(c), fan_out, policy)?,
            CasesFile::Many(cs) => run_cases(det, cs, fan_out, policy)?,
        };
        metrics.insert(det.name().into(), section);
    }
    let resolved = DetectConfig {
        seed: Some(seed),
        ..cfg.clone()
    };
    Ok(Report {
        task: "detect".into(),
        model: cfg.detector.clone(),
        metrics: Value::Object(metrics),
        config: to_value(&resolved),
        seed,
    })
}

fn run_cases(det: &Detector, cases: &[DetectionCase], fan_out: bool, policy: SeedPolicy) -> TaskResult<Value> {
    if fan_out
        && matches!(det, Detector::MonteCarlo(_))
        && cases.iter().any(|c| c.snapshot.observation_time().is_none())
    {
        return Ok(json!({"skipped": "cases carry no observation_time"}));
    }
    Ok(to_value(&evaluate_detector(det, cases, policy.child(1))?))
}

pub const SIMULATORS: [&str; 5] = ["sir", "sis", "seir", "network-sir", "scenario"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// One of [`SIMULATORS`].
    pub model: String,
    pub beta: f64,
    pub gamma: f64,
    /// SEIR incubation rate.
    pub sigma: f64,
    /// Population of the ODE models.
    pub n: f64,
    /// Initially infectious individuals of the ODE models.
    pub i0: f64,
    /// ODE time horizon.
    pub horizon: f64,
    /// Integration step (ODE) or step length (network models); defaults to
    /// 0.1 and 1 respectively.
    pub dt: Option<f64>,
    /// Node count of `network-sir`, region count of `scenario`.
    pub nodes: usize,
    pub edge_prob: f64,
    /// Transitions of the network models.
    pub steps: usize,
    pub initial_infected: Vec<usize>,
    pub seed: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: "sir".into(),
            beta: 0.3,
            gamma: 0.1,
            sigma: 0.2,
            n: 1000.0,
            i0: 1.0,
            horizon: 160.0,
            dt: None,
            nodes: 100,
            edge_prob: 0.05,
            steps: 100,
            initial_infected: vec![0],
            seed: None,
        }
    }
}

/// Dataset, aggregate CSV curve and report of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub dataset: DatasetFile,
    /// `t,<compartments…>` aggregate counts.
    pub curve_csv: String,
    pub report: Report,
}

impl SimulateConfig {
    fn ode_model(&self) -> Option<CompartmentalModel> {
        self.model.parse().ok()
    }

    fn dt(&self) -> f64 {
        self.dt.unwrap_or(if self.ode_model().is_some() { 0.1 } else { 1.0 })
    }

    fn ode_params(&self) -> CompartmentParams {
        CompartmentParams {
            beta: self.beta,
            gamma: self.gamma,
            sigma: self.sigma,
            population: self.n,
        }
    }

    fn network_config(&self) -> NetworkSirConfig {
        NetworkSirConfig::new(self.beta, self.gamma, self.dt(), self.initial_infected.clone())
    }

    pub fn validate(&self) -> TaskResult<()> {
        if !SIMULATORS.contains(&self.model.as_str()) {
            return Err(TaskError::config(
                "model",
                format!("unknown simulator `{}`; available: {}", self.model, SIMULATORS.join(", ")),
            ));
        }
        let dt = self.dt();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TaskError::config("dt", "must be finite and > 0"));
        }
        if self.ode_model().is_some() {
            self.ode_params().validate().map_err(TaskError::from_validation)?;
            if !(self.i0.is_finite() && self.i0 >= 0.0 && self.i0 <= self.n) {
                return Err(TaskError::config("i0", "must lie in [0, n]"));
            }
            if !(self.horizon.is_finite() && self.horizon > 0.0) {
                return Err(TaskError::config("horizon", "must be finite and > 0"));
            }
        } else {
            let min_nodes = if self.model == "scenario" { 2 } else { 1 };
            if self.nodes < min_nodes {
                return Err(TaskError::config("nodes", format!("must be >= {min_nodes}")));
            }
            if !(0.0..=1.0).contains(&self.edge_prob) {
                return Err(TaskError::config("edge_prob", "must lie in [0, 1]"));
            }
            if self.steps == 0 {
                return Err(TaskError::config("steps", "must be >= 1"));
            }
            self.network_config()
                .validate(self.nodes)
                .map_err(TaskError::from_validation)?;
        }
        Ok(())
    }
}

fn states_csv(states: &NodeStates, dt: f64) -> String {
    let mut out = String::from("t,S,I,R\n");
    for t in 0..states.n_steps() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            t as f64 * dt,
            states.count(t, Compartment::S),
            states.count(t, Compartment::I),
            states.count(t, Compartment::R)
        ));
    }
    out
}

fn aggregate_metrics(labels: &[&str], rows: &[Vec<f64>], times: &[f64], infected: usize) -> Value {
    let last = rows.last().expect("at least one frame");
    let final_counts: Map<String, Value> = labels.iter().zip(last).map(|(l, x)| (l.to_string(), json!(x))).collect();
    let (peak_k, peak) = rows
        .iter()
        .enumerate()
        .map(|(k, r)| (k, r[infected]))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    json!({
        "final": final_counts,
        "peak_infected": peak,
        "peak_time": times[peak_k],
        "n_frames": rows.len(),
    })
}

/// Runs the selected simulator.
///
/// ODE models produce a one-node panel of compartment counts; the network
/// models produce an infected-indicator panel per node plus node states and
/// the graph(s).
pub fn run_simulate(cfg: &SimulateConfig) -> TaskResult<SimulateOutput> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let policy = SeedPolicy::new(seed);
    let dt = cfg.dt();
    let mut metadata = Map::new();
    metadata.insert("simulator".into(), cfg.model.clone().into());

    let (dataset, curve_csv, metrics) = if let Some(model) = cfg.ode_model() {
        let p = cfg.ode_params();
        let (n, i0) = (cfg.n, cfg.i0);
        let initial = match model {
            CompartmentalModel::Sir => vec![n - i0, i0, 0.0],
            CompartmentalModel::Sis => vec![n - i0, i0],
            CompartmentalModel::Seir => vec![n - i0, 0.0, i0, 0.0],
        };
        let tr = simulate(model, &p, &initial, cfg.horizon, dt)?;
        let k = initial.len();
        let panel = FeaturePanel::from_fn(tr.len(), 1, k, |t, _, c| tr.counts[t][c])?;
        let labels: Vec<&str> = model.compartments().iter().map(|c| c.label()).collect();
        metadata.insert("features".into(), json!(labels));
        metadata.insert("times".into(), json!(tr.times));
        let metrics = aggregate_metrics(&labels, &tr.counts, &tr.times, model.infected_index());
        (EpiDataset::from_panel(panel)?, tr.to_csv(), metrics)
    } else {
        let epi = cfg.network_config();
        let (ds, states) = if cfg.model == "network-sir" {
            let g = random_graph(cfg.nodes, cfg.edge_prob, policy.child(1))?;
            let states = simulate_network_sir(&g, &epi, cfg.steps, policy.child(2))?;
            let panel = indicator_panel(&states)?;
            let ds = EpiDataset::new(panel, Some(states.clone()), Some(g), None, SplitFractions::default())?;
            (ds, states)
        } else {
            let mut rng = policy.child(1).rng();
            let positions = (0..cfg.nodes)
                .map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0])
                .collect();
            let mob = MobilityConfig {
                base_flow: 1.0,
                distance_decay: 1.0,
                daily_period: 7,
                positions,
            };
            let sc = simulate_scenario(&mob, &epi, cfg.steps, policy.child(2))?;
            metadata.insert("mobility".into(), to_value(&mob));
            let ds = EpiDataset::new(sc.panel, Some(sc.states.clone()), None, Some(sc.mobility), SplitFractions::default())?;
            (ds, sc.states)
        };
        let labels = ["S", "I", "R"];
        let rows: Vec<Vec<f64>> = (0..states.n_steps())
            .map(|t| labels.iter().map(|l| states.count(t, l.parse().unwrap()) as f64).collect())
            .collect();
        let times: Vec<f64> = (0..states.n_steps()).map(|t| t as f64 * dt).collect();
        metadata.insert(
            "features".into(),
            if cfg.model == "scenario" {
                json!(["infected", "new_infections"])
            } else {
                json!(["infected"])
            },
        );
        (ds, states_csv(&states, dt), aggregate_metrics(&labels, &rows, &times, 1))
    };

    let resolved = SimulateConfig {
        dt: Some(dt),
        seed: Some(seed),
        ..cfg.clone()
    };
    metadata.insert("config".into(), to_value(&resolved));
    Ok(SimulateOutput {
        dataset: DatasetFile { dataset, metadata },
        curve_csv,
        report: Report {
            task: "simulate".into(),
            model: cfg.model.clone(),
            metrics,
            config: to_value(&resolved),
            seed,
        },
    })
}

fn indicator_panel(states: &NodeStates) -> crate::Result<FeaturePanel> {
    FeaturePanel::from_fn(states.n_steps(), states.n_nodes(), 1, |t, v, _| {
        (states.frame(t)[v] == Compartment::I) as u8 as f64
    })
}

/// The toy dataset file with its metadata.
pub fn toy_dataset_file(seed: u64) -> DatasetFile {
    let policy = SeedPolicy::new(seed);
    DatasetFile {
        dataset: generate_toy_dataset(policy),
        metadata: toy_metadata(policy),
    }
}
