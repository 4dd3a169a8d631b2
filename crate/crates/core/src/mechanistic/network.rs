//! Discrete-time stochastic SIR on a weighted contact graph.
//!
//! At every step a susceptible node `v` becomes infected with probability
//! `1 − exp(−dt·β·Σ w_uv)` (sum over infected neighbors `u`) and an infected
//! node recovers with probability `1 − exp(−γ·dt)`. Vaccinated and
//! quarantined nodes never change.
//!
//! The chain is sampled through per-edge exponential clocks: when `u` is
//! infected it draws its infectious period and one `Exp(1)` threshold per
//! outgoing edge from its own random stream. The edge `u → v` fires on the
//! first step at which the accumulated hazard `Σ dt·β·w_uv(t)` exceeds the
//! threshold. By memorylessness each step then has exactly the per-step
//! probabilities above, while the amount of randomness consumed does not
//! depend on β, so two runs with the same seed and different β are coupled
//! (a larger β never shrinks the ever-infected set).

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Compartment, NodeStates, StaticGraph};
use crate::rng::SeedPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSirConfig {
    /// Per-contact transmission rate.
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
    pub initial_infected: Vec<usize>,
    /// Nodes that never change state (vaccinated).
    #[serde(default)]
    pub immune: Vec<usize>,
}

impl NetworkSirConfig {
    pub fn new(beta: f64, gamma: f64, dt: f64, initial_infected: Vec<usize>) -> Self {
        Self {
            beta,
            gamma,
            dt,
            initial_infected,
            immune: Vec::new(),
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        for (name, x) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {x}")));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if self.initial_infected.is_empty() {
            return Err(Error::param("initial_infected", "at least one infected node required"));
        }
        for (field, ids) in [("initial_infected", &self.initial_infected), ("immune", &self.immune)] {
            if let Some(&v) = ids.iter().find(|&&v| v >= n_nodes) {
                return Err(Error::param(field, format!("node {v} out of range for {n_nodes} nodes")));
            }
        }
        if let Some(&v) = self.initial_infected.iter().find(|v| self.immune.contains(v)) {
            return Err(Error::param(
                "immune",
                format!("node {v} is both initially infected and immune"),
            ));
        }
        Ok(())
    }
}

/// How and when a node got infected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectionRecord {
    pub step: usize,
    /// Neighbor whose exposure fired; `None` for initially infected nodes.
    pub source: Option<usize>,
}

/// Changes produced by one transition.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub step: usize,
    /// `(node, source)` for every new infection, ordered by node.
    pub infected: Vec<(usize, usize)>,
    pub recovered: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Recover(usize),
    Transmit { target: usize, source: usize, w: f64 },
}

const NODE_STREAM_TAG: u64 = 0x6e6f_6465;

/// Stepwise NetworkSIR engine over a fixed edge set.
///
/// Weights are either the graph's own (static mode) or supplied per step
/// in adjacency-slot order (see [`NetworkSir::step_with_weights`]).
#[derive(Debug, Clone)]
pub struct NetworkSir {
    graph: StaticGraph,
    beta: f64,
    gamma: f64,
    dt: f64,
    seed: SeedPolicy,
    rng: ChaCha8Rng,
    states: Vec<Compartment>,
    step: usize,
    records: Vec<Option<InfectionRecord>>,
    schedule: BTreeMap<usize, Vec<Event>>,
    /// Remaining exposure threshold per adjacency slot; only populated for
    /// infected sources when weights vary over time.
    residual: Vec<f64>,
    dynamic: bool,
}

impl NetworkSir {
    /// Engine using the graph's static weights.
    pub fn new(graph: StaticGraph, cfg: &NetworkSirConfig, seed: SeedPolicy) -> Result<Self> {
        Self::build(graph, cfg, seed, false)
    }

    /// Engine whose weights are supplied at every step; `graph` fixes the
    /// edge set and slot order.
    pub fn with_dynamic_weights(graph: StaticGraph, cfg: &NetworkSirConfig, seed: SeedPolicy) -> Result<Self> {
        Self::build(graph, cfg, seed, true)
    }

    fn build(graph: StaticGraph, cfg: &NetworkSirConfig, seed: SeedPolicy, dynamic: bool) -> Result<Self> {
        let n = graph.n_nodes();
        cfg.validate(n)?;
        let slots = graph.adjacency().n_slots();
        let mut sim = Self {
            graph,
            beta: cfg.beta,
            gamma: cfg.gamma,
            dt: cfg.dt,
            seed,
            rng: seed.rng(),
            states: vec![Compartment::S; n],
            step: 0,
            records: vec![None; n],
            schedule: BTreeMap::new(),
            residual: if dynamic { vec![f64::INFINITY; slots] } else { Vec::new() },
            dynamic,
        };
        for &v in &cfg.immune {
            sim.states[v] = Compartment::V;
        }
        let mut seeds = cfg.initial_infected.clone();
        seeds.sort_unstable();
        seeds.dedup();
        for v in seeds {
            sim.states[v] = Compartment::I;
            sim.records[v] = Some(InfectionRecord { step: 0, source: None });
            sim.arm(v);
        }
        Ok(sim)
    }

    pub fn graph(&self) -> &StaticGraph {
        &self.graph
    }

    pub fn states(&self) -> &[Compartment] {
        &self.states
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn infection_record(&self, v: usize) -> Option<InfectionRecord> {
        self.records[v]
    }

    pub fn count(&self, c: Compartment) -> usize {
        self.states.iter().filter(|&&s| s == c).count()
    }

    /// No actively infectious node remains.
    pub fn is_extinct(&self) -> bool {
        !self.states.contains(&Compartment::I)
    }

    /// Makes a susceptible node permanently immune. Returns whether the
    /// state changed.
    pub fn vaccinate(&mut self, v: usize) -> bool {
        if self.states[v] == Compartment::S {
            self.states[v] = Compartment::V;
            true
        } else {
            false
        }
    }

    /// Freezes any node: it neither infects, is infected, nor recovers.
    pub fn quarantine(&mut self, v: usize) -> bool {
        if self.states[v] == Compartment::Q {
            false
        } else {
            self.states[v] = Compartment::Q;
            true
        }
    }

    /// Draws the infectious period and edge thresholds for a newly infected
    /// node from its own stream.
    fn arm(&mut self, u: usize) {
        let mut rng = self.seed.child(NODE_STREAM_TAG).child(u as u64).rng();
        let exp1 = |rng: &mut ChaCha8Rng| -> f64 { -(1.0 - rng.random::<f64>()).ln() };

        let rec_draw = exp1(&mut rng);
        let rec_rate = self.gamma * self.dt;
        let period = if rec_rate > 0.0 {
            Some(steps_until(rec_draw, rec_rate))
        } else {
            None
        };
        let start = self.step;
        if let Some(d) = period {
            self.push(start.saturating_add(d), Event::Recover(u));
        }

        let slots = self.graph.adjacency().slots(u);
        for j in slots {
            let threshold = exp1(&mut rng);
            let target = self.graph.adjacency().targets()[j];
            if target == u {
                continue;
            }
            if self.dynamic {
                self.residual[j] = threshold;
                continue;
            }
            let w = self.graph.adjacency().weights()[j];
            let rate = self.beta * w * self.dt;
            if rate <= 0.0 {
                continue;
            }
            let k = steps_until(threshold, rate);
            if period.is_none_or(|d| k <= d) {
                self.push(start.saturating_add(k), Event::Transmit { target, source: u, w });
            }
        }
    }

    fn push(&mut self, at: usize, e: Event) {
        if at != usize::MAX {
            self.schedule.entry(at).or_default().push(e);
        }
    }

    /// Advances one step using the graph's own weights.
    pub fn step(&mut self) -> StepOutcome {
        assert!(!self.dynamic, "dynamic-weight engine needs step_with_weights");
        self.advance(None)
    }

    /// Advances one step with per-slot weights for this transition.
    pub fn step_with_weights(&mut self, weights: &[f64]) -> Result<StepOutcome> {
        if !self.dynamic {
            return Err(Error::param("weights", "engine was built with static weights"));
        }
        if weights.len() != self.graph.adjacency().n_slots() {
            return Err(Error::shape(
                "weights",
                format!(
                    "expected {} adjacency slots, got {}",
                    self.graph.adjacency().n_slots(),
                    weights.len()
                ),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", "weights must be finite and >= 0"));
        }
        Ok(self.advance(Some(weights)))
    }

    fn advance(&mut self, weights: Option<&[f64]>) -> StepOutcome {
        use Compartment::*;
        let next = self.step + 1;
        let mut exposures: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        let mut recovered = Vec::new();

        if let Some(events) = self.schedule.remove(&next) {
            for e in events {
                match e {
                    Event::Recover(u) => {
                        if self.states[u] == I {
                            recovered.push(u);
                        }
                    }
                    Event::Transmit { target, source, w } => {
                        if self.states[target] == S && self.states[source] == I {
                            exposures.entry(target).or_default().push((source, w));
                        }
                    }
                }
            }
        }

        if let Some(weights) = weights {
            let adj = self.graph.adjacency();
            for u in 0..self.states.len() {
                if self.states[u] != I {
                    continue;
                }
                for j in adj.slots(u) {
                    let target = adj.targets()[j];
                    if target == u || self.states[target] != S || self.residual[j] <= 0.0 {
                        continue;
                    }
                    self.residual[j] -= self.beta * weights[j] * self.dt;
                    if self.residual[j] <= 0.0 {
                        exposures.entry(target).or_default().push((u, weights[j]));
                    }
                }
            }
        }

        recovered.sort_unstable();
        recovered.dedup();
        let mut infected = Vec::with_capacity(exposures.len());
        for (target, sources) in exposures {
            let source = self.attribute(&sources);
            infected.push((target, source));
        }

        for &u in &recovered {
            self.states[u] = R;
        }
        self.step = next;
        for &(v, source) in &infected {
            self.states[v] = I;
            self.records[v] = Some(InfectionRecord {
                step: next,
                source: Some(source),
            });
            self.arm(v);
        }
        StepOutcome {
            step: next,
            infected,
            recovered,
        }
    }

    /// Picks the infecting neighbor proportionally to edge weight when more
    /// than one exposure fired in the same step.
    fn attribute(&mut self, sources: &[(usize, f64)]) -> usize {
        if sources.len() == 1 {
            return sources[0].0;
        }
        let total: f64 = sources.iter().map(|s| s.1).sum();
        let mut x = self.rng.random::<f64>() * total;
        for &(u, w) in sources {
            if x < w {
                return u;
            }
            x -= w;
        }
        sources.last().unwrap().0
    }
}

/// Smallest `k ≥ 1` with `k·rate ≥ threshold`; `usize::MAX` if out of reach.
fn steps_until(threshold: f64, rate: f64) -> usize {
    let k = (threshold / rate).ceil();
    if !k.is_finite() || k >= 1e15 {
        usize::MAX
    } else {
        (k as usize).max(1)
    }
}

/// Runs `steps` transitions and returns all `steps + 1` frames.
/// Immune nodes are labeled `V`.
pub fn simulate_network_sir(
    graph: &StaticGraph,
    cfg: &NetworkSirConfig,
    steps: usize,
    seed: SeedPolicy,
) -> Result<NodeStates> {
    if steps == 0 {
        return Err(Error::param("steps", "must be >= 1"));
    }
    let mut sim = NetworkSir::new(graph.clone(), cfg, seed)?;
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(sim.states().to_vec());
    for _ in 0..steps {
        sim.step();
        frames.push(sim.states().to_vec());
    }
    NodeStates::new(frames)
}
