//! Versioned JSON dataset files, the toy dataset and run reports.
//!
//! # Dataset file
//!
//! ```json
//! {
//!   "version": "epikit.dataset/1",
//!   "panel": {"n_steps": T, "n_nodes": N, "n_features": F, "values": [[[..F..]..N..]..T..]},
//!   "states": [["S", "I", ...], ...],            // optional, T frames of N labels
//!   "static_graph": {"n_nodes": N, "directed": false, "edges": [[u, v, w], ...]},  // optional
//!   "dynamic_graph": [{...graph...}, ...],       // optional, T snapshots
//!   "split": {"train": 0.7, "val": 0.1},         // optional
//!   "metadata": {...}                            // free-form
//! }
//! ```
//!
//! Reals are written in shortest round-trip form, so a save/load cycle
//! reproduces every value bit for bit.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mechanistic::NetworkSirConfig;
use crate::model::{DynamicGraph, EpiDataset, FeaturePanel, NodeStates, SplitFractions, StaticGraph};
use crate::rng::SeedPolicy;
use crate::simulate::{random_graph, simulate_scenario, MobilityConfig};

pub const DATASET_VERSION: &str = "epikit.dataset/1";

#[derive(Serialize, Deserialize)]
struct PanelRepr {
    n_steps: usize,
    n_nodes: usize,
    n_features: usize,
    values: Vec<Vec<Vec<f64>>>,
}

impl From<&FeaturePanel> for PanelRepr {
    fn from(p: &FeaturePanel) -> Self {
        let [t, n, f] = p.shape();
        PanelRepr {
            n_steps: t,
            n_nodes: n,
            n_features: f,
            values: (0..t)
                .map(|s| p.step(s).chunks(f.max(1)).map(<[f64]>::to_vec).collect())
                .collect(),
        }
    }
}

impl PanelRepr {
    fn into_panel(self) -> Result<FeaturePanel> {
        let (t, n, f) = (self.n_steps, self.n_nodes, self.n_features);
        if self.values.len() != t {
            return Err(Error::shape(
                "panel.values",
                format!("expected {t} steps, got {}", self.values.len()),
            ));
        }
        let mut flat = Vec::with_capacity(t * n * f);
        for (s, step) in self.values.into_iter().enumerate() {
            if step.len() != n {
                return Err(Error::shape(
                    format!("panel.values[{s}]"),
                    format!("expected {n} nodes, got {}", step.len()),
                ));
            }
            for (v, row) in step.into_iter().enumerate() {
                if row.len() != f {
                    return Err(Error::shape(
                        format!("panel.values[{s}][{v}]"),
                        format!("expected {f} features, got {}", row.len()),
                    ));
                }
                flat.extend(row);
            }
        }
        FeaturePanel::new(t, n, f, flat)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRepr {
    version: String,
    panel: PanelRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<NodeStates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    static_graph: Option<StaticGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dynamic_graph: Option<DynamicGraph>,
    #[serde(default)]
    split: SplitFractions,
    #[serde(default)]
    metadata: Map<String, Value>,
}

/// A dataset together with its free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dataset: EpiDataset,
    pub metadata: Map<String, Value>,
}

impl DatasetFile {
    pub fn new(dataset: EpiDataset) -> Self {
        Self {
            dataset,
            metadata: Map::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let ds = &self.dataset;
        let repr = FileRepr {
            version: DATASET_VERSION.to_string(),
            panel: ds.panel().into(),
            states: ds.states().cloned(),
            static_graph: ds.static_graph().cloned(),
            dynamic_graph: ds.dynamic_graph().cloned(),
            split: ds.split(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string(&repr).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        match value.get("version") {
            Some(Value::String(v)) if v == DATASET_VERSION => {}
            Some(Value::String(v)) => return Err(Error::UnknownVersion(v.clone())),
            Some(_) => return Err(Error::shape("version", "must be a string")),
            None => return Err(Error::shape("version", "missing")),
        }
        let repr: FileRepr = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        let panel = repr.panel.into_panel()?;
        let dataset = EpiDataset::new(panel, repr.states, repr.static_graph, repr.dynamic_graph, repr.split)?;
        Ok(Self {
            dataset,
            metadata: repr.metadata,
        })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn save_dataset(ds: &EpiDataset, path: &Path) -> Result<()> {
    DatasetFile::new(ds.clone()).save(path)
}

pub fn load_dataset(path: &Path) -> Result<EpiDataset> {
    Ok(DatasetFile::load(path)?.dataset)
}

/// Toy dataset dimensions.
pub const TOY_REGIONS: usize = 47;
pub const TOY_STEPS: usize = 120;
pub const TOY_EDGE_PROB: f64 = 0.1;

/// Synthetic 47-region outbreak.
///
/// - static graph: G(47, 0.1) from stream `seed.child(1)`;
/// - region positions uniform on `[0, 10]²` from `seed.child(2)`, mobility
///   `base_flow = 1`, `distance_decay = 1`, `daily_period = 7`;
/// - NetworkSIR on the mobility graph with `β = 0.15`, `γ = 0.05`, `dt = 1`,
///   two seed regions drawn from `seed.child(3)`, run for 119 transitions
///   with `seed.child(4)`;
/// - features per region and step: infected indicator, new infections,
///   and case counts `round(max(0, 50·I + 10·new + N(0, 3²)))` with noise
///   from `seed.child(5)`.
///
/// The panel is `[120][47][3]`; states and the mobility snapshots are
/// included.
pub fn generate_toy_dataset(seed: SeedPolicy) -> EpiDataset {
    build_toy(seed).expect("toy parameters are valid")
}

fn build_toy(seed: SeedPolicy) -> Result<EpiDataset> {
    let graph = random_graph(TOY_REGIONS, TOY_EDGE_PROB, seed.child(1))?;
    let mut rng = seed.child(2).rng();
    let positions = (0..TOY_REGIONS)
        .map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0])
        .collect();
    let mobility = MobilityConfig {
        base_flow: 1.0,
        distance_decay: 1.0,
        daily_period: 7,
        positions,
    };
    let mut rng = seed.child(3).rng();
    let first = rng.random_range(0..TOY_REGIONS);
    let second = (first + 1 + rng.random_range(0..TOY_REGIONS - 1)) % TOY_REGIONS;
    let epi = NetworkSirConfig::new(0.15, 0.05, 1.0, vec![first, second]);
    let sc = simulate_scenario(&mobility, &epi, TOY_STEPS - 1, seed.child(4))?;

    let noise = Normal::new(0.0, 3.0).expect("finite sd");
    let mut rng = seed.child(5).rng();
    let mut cases = Vec::with_capacity(TOY_STEPS * TOY_REGIONS);
    for t in 0..TOY_STEPS {
        for v in 0..TOY_REGIONS {
            let x = 50.0 * sc.panel.get(t, v, 0) + 10.0 * sc.panel.get(t, v, 1) + noise.sample(&mut rng);
            cases.push(x.max(0.0).round());
        }
    }
    let panel = FeaturePanel::from_fn(TOY_STEPS, TOY_REGIONS, 3, |t, v, k| match k {
        2 => cases[t * TOY_REGIONS + v],
        _ => sc.panel.get(t, v, k),
    })?;
    EpiDataset::new(
        panel,
        Some(sc.states),
        Some(graph),
        Some(sc.mobility),
        SplitFractions::default(),
    )
}

/// Metadata stored alongside the toy dataset.
pub fn toy_metadata(seed: SeedPolicy) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("name".into(), "toy".into());
    m.insert("features".into(), serde_json::json!(["infected", "new_infections", "cases"]));
    m.insert("seed".into(), serde_json::to_value(seed).expect("seed serializes"));
    m
}

/// Machine-readable record of one run; `config` holds everything needed to
/// reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub model: String,
    pub metrics: Value,
    pub config: Value,
    pub seed: u64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
