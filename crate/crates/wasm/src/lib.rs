//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations: compartmental curves, a local NetworkSIR outbreak with
//! vaccinate/quarantine, and source detection on an infected snapshot.
//! Values cross the boundary as flat numeric arrays.

use epikit_core::detect::{jordan_center, rumor_centrality, Snapshot};
use epikit_core::mechanistic::{simulate_strided, CompartmentParams, CompartmentalModel, NetworkSir, NetworkSirConfig};
use epikit_core::simulate::random_graph;
use epikit_core::{Compartment, Error, SeedPolicy, StaticGraph};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Compartment codes used in state arrays.
pub fn state_code(c: Compartment) -> u8 {
    Compartment::ALL.iter().position(|&x| x == c).expect("listed") as u8
}

#[allow(clippy::too_many_arguments)]
fn curve_rows(model: &str, beta: f64, gamma: f64, sigma: f64, n: f64, i0: f64, horizon: f64, dt: f64) -> Result<Vec<f64>, Error> {
    let model: CompartmentalModel = model.parse()?;
    let params = CompartmentParams {
        beta,
        gamma,
        sigma,
        population: n,
    };
    let initial = match model {
        CompartmentalModel::Sir => vec![n - i0, i0, 0.0],
        CompartmentalModel::Sis => vec![n - i0, i0],
        CompartmentalModel::Seir => vec![n - i0, 0.0, i0, 0.0],
    };
    // Keep roughly 400 points for plotting.
    let steps = (horizon / dt).ceil().max(1.0) as usize;
    let stride = steps.div_ceil(400).max(1);
    let tr = simulate_strided(model, &params, &initial, horizon, dt, stride)?;
    let mut out = Vec::with_capacity(tr.len() * (initial.len() + 1));
    for (t, row) in tr.times.iter().zip(&tr.counts) {
        out.push(*t);
        out.extend(row);
    }
    Ok(out)
}

/// Rows of `[t, compartments…]` flattened; `sir` and `sis` rows have 4 and
/// 3 entries, `seir` rows 5.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn compartment_curve(
    model: &str,
    beta: f64,
    gamma: f64,
    sigma: f64,
    n: f64,
    i0: f64,
    horizon: f64,
    dt: f64,
) -> Result<Vec<f64>, JsError> {
    curve_rows(model, beta, gamma, sigma, n, i0, horizon, dt).map_err(js)
}

fn graph_from(n_nodes: usize, edges: &[u32]) -> Result<StaticGraph, Error> {
    let pairs: Vec<(usize, usize)> = edges.chunks_exact(2).map(|p| (p[0] as usize, p[1] as usize)).collect();
    StaticGraph::from_pairs(n_nodes, &pairs)
}

fn source_probs(n_nodes: usize, edges: &[u32], infected: &[u32], method: &str) -> Result<Vec<f64>, Error> {
    let g = graph_from(n_nodes, edges)?;
    let s = Snapshot::new(g, infected.iter().map(|&v| v as usize).collect(), None)?;
    let score = match method {
        "jordan" => jordan_center(&s)?,
        "rumor" => rumor_centrality(&s)?,
        other => {
            return Err(Error::InvalidParameter {
                field: "method".into(),
                message: format!("unknown detector `{other}`; use jordan or rumor"),
            })
        }
    };
    Ok(score.probs)
}

/// Source probability per node. `edges` is a flat `[u0, v0, u1, v1, …]`
/// list; `method` is `jordan` or `rumor`.
#[wasm_bindgen]
pub fn detect_source(n_nodes: usize, edges: Vec<u32>, infected: Vec<u32>, method: &str) -> Result<Vec<f64>, JsError> {
    source_probs(n_nodes, &edges, &infected, method).map_err(js)
}

/// A NetworkSIR outbreak on a random graph, stepped from the page.
#[wasm_bindgen]
pub struct Outbreak {
    sim: NetworkSir,
}

impl Outbreak {
    fn build(nodes: usize, edge_prob: f64, beta: f64, gamma: f64, seed: u32, initial: Vec<u32>) -> Result<Self, Error> {
        let policy = SeedPolicy::new(seed.into());
        let g = random_graph(nodes, edge_prob, policy.child(1))?;
        let cfg = NetworkSirConfig::new(beta, gamma, 1.0, initial.into_iter().map(|v| v as usize).collect());
        Ok(Self {
            sim: NetworkSir::new(g, &cfg, policy.child(2))?,
        })
    }
}

#[wasm_bindgen]
impl Outbreak {
    #[wasm_bindgen(constructor)]
    pub fn new(nodes: usize, edge_prob: f64, beta: f64, gamma: f64, seed: u32, initial: Vec<u32>) -> Result<Outbreak, JsError> {
        Self::build(nodes, edge_prob, beta, gamma, seed, initial).map_err(js)
    }

    pub fn n_nodes(&self) -> usize {
        self.sim.graph().n_nodes()
    }

    /// Flat `[u0, v0, u1, v1, …]`.
    pub fn edges(&self) -> Vec<u32> {
        self.sim.graph().edges().iter().flat_map(|e| [e.u as u32, e.v as u32]).collect()
    }

    /// One code per node: 0 S, 1 E, 2 I, 3 R, 4 V, 5 Q.
    pub fn states(&self) -> Vec<u8> {
        self.sim.states().iter().map(|&c| state_code(c)).collect()
    }

    pub fn current_step(&self) -> usize {
        self.sim.current_step()
    }

    pub fn finished(&self) -> bool {
        self.sim.is_extinct()
    }

    pub fn step(&mut self) -> Vec<u8> {
        if !self.sim.is_extinct() {
            self.sim.step();
        }
        self.states()
    }

    /// Returns false if the node was not susceptible.
    pub fn vaccinate(&mut self, node: usize) -> bool {
        node < self.n_nodes() && self.sim.vaccinate(node)
    }

    pub fn quarantine(&mut self, node: usize) -> bool {
        node < self.n_nodes() && self.sim.quarantine(node)
    }

    /// `[step, source]` of the node's infection; source is -1 for an
    /// initial case. Empty if never infected.
    pub fn infection(&self, node: usize) -> Vec<i32> {
        if node >= self.n_nodes() {
            return Vec::new();
        }
        self.sim
            .infection_record(node)
            .map(|r| vec![r.step as i32, r.source.map_or(-1, |s| s as i32)])
            .unwrap_or_default()
    }

    /// Nodes ever infected (the observed snapshot for [`detect_source`]).
    pub fn infected_nodes(&self) -> Vec<u32> {
        (0..self.n_nodes())
            .filter(|&v| self.sim.infection_record(v).is_some())
            .map(|v| v as u32)
            .collect()
    }
}
