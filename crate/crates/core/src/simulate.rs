//! Synthetic data: random graphs, similarity graphs and mobility scenarios.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanistic::{NetworkSir, NetworkSirConfig};
use crate::model::{Compartment, DynamicGraph, Edge, FeaturePanel, NodeStates, StaticGraph};
use crate::rng::SeedPolicy;

/// Erdős–Rényi `G(n, p)` with unit weights.
pub fn random_graph(n: usize, edge_prob: f64, seed: SeedPolicy) -> Result<StaticGraph> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::param("edge_prob", format!("must lie in [0, 1], got {edge_prob}")));
    }
    let mut rng = seed.rng();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < edge_prob {
                edges.push(Edge::new(u, v, 1.0));
            }
        }
    }
    StaticGraph::new(n, edges)
}

/// Connects nodes whose feature rows have cosine similarity `>= threshold`.
///
/// `features` must hold a single time step; edge weights are the
/// similarity clamped to `[0, 1]`.
pub fn similarity_graph(features: &FeaturePanel, threshold: f64) -> Result<StaticGraph> {
    if features.n_steps() != 1 {
        return Err(Error::shape(
            "features.n_steps",
            format!("expected a single time step, got {}", features.n_steps()),
        ));
    }
    if features.n_features() == 0 {
        return Err(Error::shape("features.n_features", "need at least one feature"));
    }
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::param("threshold", "must lie in [-1, 1]"));
    }
    let n = features.n_nodes();
    let f = features.n_features();
    let row = |v: usize| &features.step(0)[v * f..(v + 1) * f];
    let norms: Vec<f64> = (0..n).map(|v| row(v).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    if let Some(v) = norms.iter().position(|&x| x == 0.0) {
        return Err(Error::UndefinedSimilarity { node: v });
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let dot: f64 = row(u).iter().zip(row(v)).map(|(a, b)| a * b).sum();
            let cos = (dot / (norms[u] * norms[v])).clamp(-1.0, 1.0);
            if cos >= threshold {
                edges.push(Edge::new(u, v, cos.clamp(0.0, 1.0)));
            }
        }
    }
    StaticGraph::new(n, edges)
}

/// Gravity-style mobility between regions with a daily cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub base_flow: f64,
    pub distance_decay: f64,
    pub daily_period: usize,
    /// One 2-D coordinate per region.
    pub positions: Vec<[f64; 2]>,
}

impl MobilityConfig {
    pub fn n_regions(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() < 2 {
            return Err(Error::param("positions", "need at least 2 regions"));
        }
        if self.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::param("positions", "coordinates must be finite"));
        }
        if !(self.base_flow.is_finite() && self.base_flow >= 0.0) {
            return Err(Error::param("base_flow", "must be finite and >= 0"));
        }
        if !(self.distance_decay.is_finite() && self.distance_decay > 0.0) {
            return Err(Error::param("distance_decay", "must be finite and > 0"));
        }
        if self.daily_period == 0 {
            return Err(Error::param("daily_period", "must be >= 1"));
        }
        Ok(())
    }

    /// Edge weight between regions `u` and `v` at step `t`:
    /// `base_flow · exp(−d(u,v)·decay) · (1 + ½ sin(2πt / period))`.
    pub fn weight(&self, u: usize, v: usize, t: usize) -> f64 {
        let [ax, ay] = self.positions[u];
        let [bx, by] = self.positions[v];
        let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
        let phase = 2.0 * PI * (t % self.daily_period) as f64 / self.daily_period as f64;
        self.base_flow * (-d * self.distance_decay).exp() * (1.0 + 0.5 * phase.sin())
    }

    /// Complete undirected mobility graph at step `t`, edges in `(u < v)`
    /// lexicographic order.
    pub fn snapshot(&self, t: usize) -> Result<StaticGraph> {
        let n = self.n_regions();
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for u in 0..n {
            for v in u + 1..n {
                edges.push(Edge::new(u, v, self.weight(u, v, t)));
            }
        }
        StaticGraph::new(n, edges)
    }
}

/// Output of [`simulate_scenario`]; every component has `steps + 1` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mobility: DynamicGraph,
    /// Feature 0: infected indicator; feature 1: newly infected at `t`
    /// (initial seeds count as new at `t = 0`).
    pub panel: FeaturePanel,
    pub states: NodeStates,
}

/// NetworkSIR over time-varying mobility weights. The transition from
/// `t` to `t + 1` uses the snapshot at `t`.
pub fn simulate_scenario(
    mob: &MobilityConfig,
    epi: &NetworkSirConfig,
    steps: usize,
    seed: SeedPolicy,
) -> Result<Scenario> {
    mob.validate()?;
    if steps == 0 {
        return Err(Error::param("steps", "must be >= 1"));
    }
    let n = mob.n_regions();
    let snapshots = (0..=steps).map(|t| mob.snapshot(t)).collect::<Result<Vec<_>>>()?;
    let mut sim = NetworkSir::with_dynamic_weights(snapshots[0].clone(), epi, seed)?;
    let mut frames = Vec::with_capacity(steps + 1);
    let mut new_cases = Vec::with_capacity(steps + 1);
    frames.push(sim.states().to_vec());
    new_cases.push(
        (0..n)
            .map(|v| (sim.states()[v] == Compartment::I) as u8 as f64)
            .collect::<Vec<_>>(),
    );
    for snap in snapshots.iter().take(steps) {
        let out = sim.step_with_weights(snap.adjacency().weights())?;
        let mut fresh = vec![0.0; n];
        for &(v, _) in &out.infected {
            fresh[v] = 1.0;
        }
        frames.push(sim.states().to_vec());
        new_cases.push(fresh);
    }
    let panel = FeaturePanel::from_fn(steps + 1, n, 2, |t, v, k| match k {
        0 => (frames[t][v] == Compartment::I) as u8 as f64,
        _ => new_cases[t][v],
    })?;
    Ok(Scenario {
        mobility: DynamicGraph::new(snapshots)?,
        panel,
        states: NodeStates::new(frames)?,
    })
}
