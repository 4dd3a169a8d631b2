//! Shared domain types: graphs, feature panels, node states and datasets.
//!
//! All containers validate their shape on construction and are immutable
//! afterwards; derived values are produced by building new containers.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, w: f64) -> Self {
        Self { u, v, w }
    }
}

/// Weighted contact graph with a fixed node set.
///
/// Undirected graphs store every edge once; the adjacency view lists it
/// under both endpoints. Self-loops are rejected unless the graph was
/// produced by a transform that adds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct StaticGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
    directed: bool,
    self_loops: bool,
    adjacency: Adjacency,
}

/// Compressed neighbor lists. For undirected graphs both directions are
/// present; for directed graphs only out-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn build(n: usize, edges: &[Edge], directed: bool) -> Self {
        let mut deg = vec![0usize; n];
        for e in edges {
            deg[e.u] += 1;
            if !directed && e.u != e.v {
                deg[e.v] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let m = *offsets.last().unwrap();
        let mut cursor = offsets[..n].to_vec();
        let mut targets = vec![0; m];
        let mut weights = vec![0.0; m];
        for e in edges {
            targets[cursor[e.u]] = e.v;
            weights[cursor[e.u]] = e.w;
            cursor[e.u] += 1;
            if !directed && e.u != e.v {
                targets[cursor[e.v]] = e.u;
                weights[cursor[e.v]] = e.w;
                cursor[e.v] += 1;
            }
        }
        Self {
            offsets,
            targets,
            weights,
        }
    }

    /// Adjacency slot range of node `v`.
    pub fn slots(&self, v: usize) -> Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_slots(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n_nodes: usize,
    #[serde(default)]
    directed: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    self_loops: bool,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphRepr> for StaticGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        let edges = r.edges.into_iter().map(|(u, v, w)| Edge { u, v, w }).collect();
        StaticGraph::build(r.n_nodes, edges, r.directed, r.self_loops)
    }
}

impl From<StaticGraph> for GraphRepr {
    fn from(g: StaticGraph) -> Self {
        GraphRepr {
            n_nodes: g.n_nodes,
            directed: g.directed,
            self_loops: g.self_loops,
            edges: g.edges.iter().map(|e| (e.u, e.v, e.w)).collect(),
        }
    }
}

impl StaticGraph {
    /// Undirected graph.
    pub fn new(n_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::build(n_nodes, edges, false, false)
    }

    pub fn directed(n_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::build(n_nodes, edges, true, false)
    }

    pub fn from_pairs(n_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            n_nodes,
            pairs.iter().map(|&(u, v)| Edge::new(u, v, 1.0)).collect(),
        )
    }

    pub(crate) fn with_self_loops(n_nodes: usize, edges: Vec<Edge>, directed: bool) -> Result<Self> {
        Self::build(n_nodes, edges, directed, true)
    }

    fn build(n_nodes: usize, edges: Vec<Edge>, directed: bool, self_loops: bool) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if e.u >= n_nodes || e.v >= n_nodes {
                return Err(Error::shape(
                    format!("edges[{i}]"),
                    format!("endpoint ({}, {}) out of range for {n_nodes} nodes", e.u, e.v),
                ));
            }
            if e.u == e.v && !self_loops {
                return Err(Error::shape(
                    format!("edges[{i}]"),
                    format!("self-loop on node {}", e.u),
                ));
            }
            if !(e.w.is_finite() && e.w >= 0.0) {
                return Err(Error::param(
                    format!("edges[{i}].w"),
                    format!("weight must be finite and non-negative, got {}", e.w),
                ));
            }
            let key = if directed { (e.u, e.v) } else { (e.u.min(e.v), e.u.max(e.v)) };
            if !seen.insert(key) {
                return Err(Error::shape(
                    format!("edges[{i}]"),
                    format!("duplicate edge ({}, {})", e.u, e.v),
                ));
            }
        }
        let adjacency = Adjacency::build(n_nodes, &edges, directed);
        Ok(Self {
            n_nodes,
            edges,
            directed,
            self_loops,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// `(neighbor, weight)` pairs of `v`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.adjacency.slots(v);
        self.adjacency.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.adjacency.weights[r].iter().copied())
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.slots(v).len()
    }

    /// Dense weight matrix, row-major `n × n`.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n_nodes;
        let mut a = vec![0.0; n * n];
        for e in &self.edges {
            a[e.u * n + e.v] = e.w;
            if !self.directed {
                a[e.v * n + e.u] = e.w;
            }
        }
        a
    }
}

/// Sequence of graph snapshots over a common node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StaticGraph>", into = "Vec<StaticGraph>")]
pub struct DynamicGraph {
    snapshots: Vec<StaticGraph>,
}

impl TryFrom<Vec<StaticGraph>> for DynamicGraph {
    type Error = Error;
    fn try_from(s: Vec<StaticGraph>) -> Result<Self> {
        DynamicGraph::new(s)
    }
}

impl From<DynamicGraph> for Vec<StaticGraph> {
    fn from(d: DynamicGraph) -> Self {
        d.snapshots
    }
}

impl DynamicGraph {
    pub fn new(snapshots: Vec<StaticGraph>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::shape("dynamic_graph", "at least one snapshot required"))?;
        let n = first.n_nodes();
        if let Some(t) = snapshots.iter().position(|g| g.n_nodes() != n) {
            return Err(Error::shape(
                format!("dynamic_graph[{t}].n_nodes"),
                format!("expected {n}, got {}", snapshots[t].n_nodes()),
            ));
        }
        Ok(Self { snapshots })
    }

    pub fn n_steps(&self) -> usize {
        self.snapshots.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.snapshots[0].n_nodes()
    }

    pub fn snapshots(&self) -> &[StaticGraph] {
        &self.snapshots
    }

    pub fn at(&self, t: usize) -> &StaticGraph {
        &self.snapshots[t]
    }

    fn slice(&self, r: Range<usize>) -> Result<Self> {
        Self::new(self.snapshots[r].to_vec())
    }
}

/// Dense `time × node × feature` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    n_steps: usize,
    n_nodes: usize,
    n_features: usize,
    values: Vec<f64>,
}

impl FeaturePanel {
    /// `values` is row-major in `[t][node][feature]` order.
    pub fn new(n_steps: usize, n_nodes: usize, n_features: usize, values: Vec<f64>) -> Result<Self> {
        let expected = n_steps
            .checked_mul(n_nodes)
            .and_then(|x| x.checked_mul(n_features))
            .ok_or_else(|| Error::shape("panel", "dimensions overflow"))?;
        if values.len() != expected {
            return Err(Error::shape(
                "panel.values",
                format!(
                    "{n_steps}x{n_nodes}x{n_features} needs {expected} values, got {}",
                    values.len()
                ),
            ));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            let (t, rest) = (i / (n_nodes * n_features), i % (n_nodes * n_features));
            return Err(Error::param(
                format!("panel.values[{t}][{}][{}]", rest / n_features, rest % n_features),
                "non-finite value",
            ));
        }
        Ok(Self {
            n_steps,
            n_nodes,
            n_features,
            values,
        })
    }

    pub fn zeros(n_steps: usize, n_nodes: usize, n_features: usize) -> Self {
        Self {
            n_steps,
            n_nodes,
            n_features,
            values: vec![0.0; n_steps * n_nodes * n_features],
        }
    }

    /// Builds a panel from `f(t, node, feature)`.
    pub fn from_fn(
        n_steps: usize,
        n_nodes: usize,
        n_features: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_steps * n_nodes * n_features);
        for t in 0..n_steps {
            for v in 0..n_nodes {
                for k in 0..n_features {
                    values.push(f(t, v, k));
                }
            }
        }
        Self::new(n_steps, n_nodes, n_features, values)
    }

    /// Single-node, single-feature panel.
    pub fn from_series(series: &[f64]) -> Result<Self> {
        Self::new(series.len(), 1, 1, series.to_vec())
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_steps, self.n_nodes, self.n_features]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    fn idx(&self, t: usize, node: usize, feature: usize) -> usize {
        debug_assert!(t < self.n_steps && node < self.n_nodes && feature < self.n_features);
        (t * self.n_nodes + node) * self.n_features + feature
    }

    #[inline]
    pub fn get(&self, t: usize, node: usize, feature: usize) -> f64 {
        self.values[self.idx(t, node, feature)]
    }

    /// Time series of one node/feature channel.
    pub fn series(&self, node: usize, feature: usize) -> Vec<f64> {
        (0..self.n_steps).map(|t| self.get(t, node, feature)).collect()
    }

    /// Row `[node][feature]` at time `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        let w = self.n_nodes * self.n_features;
        &self.values[t * w..(t + 1) * w]
    }

    pub fn slice_steps(&self, r: Range<usize>) -> Result<Self> {
        if r.start > r.end || r.end > self.n_steps {
            return Err(Error::shape(
                "panel.n_steps",
                format!("range {r:?} outside 0..{}", self.n_steps),
            ));
        }
        let w = self.n_nodes * self.n_features;
        Ok(Self {
            n_steps: r.len(),
            n_nodes: self.n_nodes,
            n_features: self.n_features,
            values: self.values[r.start * w..r.end * w].to_vec(),
        })
    }

    /// Stacks panels along the time axis.
    pub fn concat(parts: &[&FeaturePanel]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::shape("panel", "nothing to concatenate"))?;
        let mut values = Vec::new();
        let mut n_steps = 0;
        for p in parts {
            if p.n_nodes != first.n_nodes || p.n_features != first.n_features {
                return Err(Error::shape("panel", "node/feature counts differ"));
            }
            values.extend_from_slice(&p.values);
            n_steps += p.n_steps;
        }
        Self::new(n_steps, first.n_nodes, first.n_features, values)
    }

    /// Keeps only the listed feature channels, in the given order.
    pub fn select_features(&self, features: &[usize]) -> Result<Self> {
        if let Some(&f) = features.iter().find(|&&f| f >= self.n_features) {
            return Err(Error::param("feature", format!("channel {f} out of range")));
        }
        Self::from_fn(self.n_steps, self.n_nodes, features.len(), |t, v, k| {
            self.get(t, v, features[k])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    I,
    R,
    /// Vaccinated: never infectable.
    V,
    /// Quarantined: neither infects nor is infected; frozen.
    Q,
}

impl Compartment {
    pub const ALL: [Compartment; 6] = [
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::R,
        Compartment::V,
        Compartment::Q,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::R => "R",
            Compartment::V => "V",
            Compartment::Q => "Q",
        }
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Compartment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Compartment::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::param("state", format!("unknown compartment `{s}`")))
    }
}

/// Per-node compartment labels over time, `[t][node]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Compartment>>", into = "Vec<Vec<Compartment>>")]
pub struct NodeStates {
    frames: Vec<Vec<Compartment>>,
}

impl TryFrom<Vec<Vec<Compartment>>> for NodeStates {
    type Error = Error;
    fn try_from(f: Vec<Vec<Compartment>>) -> Result<Self> {
        NodeStates::new(f)
    }
}

impl From<NodeStates> for Vec<Vec<Compartment>> {
    fn from(s: NodeStates) -> Self {
        s.frames
    }
}

impl NodeStates {
    pub fn new(frames: Vec<Vec<Compartment>>) -> Result<Self> {
        let n = frames
            .first()
            .ok_or_else(|| Error::shape("states", "at least one frame required"))?
            .len();
        if let Some(t) = frames.iter().position(|f| f.len() != n) {
            return Err(Error::shape(
                format!("states[{t}]"),
                format!("expected {n} nodes, got {}", frames[t].len()),
            ));
        }
        Ok(Self { frames })
    }

    pub fn n_steps(&self) -> usize {
        self.frames.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> &[Vec<Compartment>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[Compartment] {
        &self.frames[t]
    }

    pub fn last(&self) -> &[Compartment] {
        self.frames.last().unwrap()
    }

    pub fn count(&self, t: usize, c: Compartment) -> usize {
        self.frames[t].iter().filter(|&&s| s == c).count()
    }

    /// Timeline of a single node.
    pub fn node(&self, v: usize) -> Vec<Compartment> {
        self.frames.iter().map(|f| f[v]).collect()
    }

    fn slice(&self, r: Range<usize>) -> Result<Self> {
        Self::new(self.frames[r].to_vec())
    }
}

/// Chronological train/validation fractions; the test segment takes the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.7, val: 0.1 }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64) -> Result<Self> {
        let s = Self { train, val };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.train) {
            return Err(Error::param("split.train", "must lie in (0, 1)"));
        }
        if !open(self.val) {
            return Err(Error::param("split.val", "must lie in (0, 1)"));
        }
        if self.train + self.val >= 1.0 {
            return Err(Error::param("split", "train + val must be < 1"));
        }
        Ok(())
    }

    /// Segment boundaries `(train_end, val_end)` for a series of `n` steps.
    ///
    /// Boundaries are cumulative floors, `⌊train·n⌋` and `⌊(train+val)·n⌋`,
    /// with a 1e-9 guard against fractions like 0.1 not being exact in binary.
    pub fn boundaries(&self, n: usize) -> (usize, usize) {
        let cut = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let a = cut(self.train).min(n);
        let b = cut(self.train + self.val).clamp(a, n);
        (a, b)
    }
}

/// Panel plus optional states and graphs, with a chronological split.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiDataset {
    panel: FeaturePanel,
    states: Option<NodeStates>,
    static_graph: Option<StaticGraph>,
    dynamic_graph: Option<DynamicGraph>,
    split: SplitFractions,
}

impl EpiDataset {
    pub fn new(
        panel: FeaturePanel,
        states: Option<NodeStates>,
        static_graph: Option<StaticGraph>,
        dynamic_graph: Option<DynamicGraph>,
        split: SplitFractions,
    ) -> Result<Self> {
        split.validate()?;
        let n = panel.n_nodes();
        let t = panel.n_steps();
        if let Some(s) = &states {
            if s.n_nodes() != n {
                return Err(Error::shape("states.n_nodes", format!("expected {n}, got {}", s.n_nodes())));
            }
            if s.n_steps() != t {
                return Err(Error::shape("states.n_steps", format!("expected {t}, got {}", s.n_steps())));
            }
        }
        if let Some(g) = &static_graph {
            if g.n_nodes() != n {
                return Err(Error::shape(
                    "static_graph.n_nodes",
                    format!("expected {n}, got {}", g.n_nodes()),
                ));
            }
        }
        if let Some(d) = &dynamic_graph {
            if d.n_nodes() != n {
                return Err(Error::shape(
                    "dynamic_graph.n_nodes",
                    format!("expected {n}, got {}", d.n_nodes()),
                ));
            }
            if d.n_steps() != t {
                return Err(Error::shape(
                    "dynamic_graph.n_steps",
                    format!("expected {t}, got {}", d.n_steps()),
                ));
            }
        }
        Ok(Self {
            panel,
            states,
            static_graph,
            dynamic_graph,
            split,
        })
    }

    /// Dataset holding only a panel, with the default split.
    pub fn from_panel(panel: FeaturePanel) -> Result<Self> {
        Self::new(panel, None, None, None, SplitFractions::default())
    }

    pub fn panel(&self) -> &FeaturePanel {
        &self.panel
    }

    pub fn states(&self) -> Option<&NodeStates> {
        self.states.as_ref()
    }

    pub fn static_graph(&self) -> Option<&StaticGraph> {
        self.static_graph.as_ref()
    }

    pub fn dynamic_graph(&self) -> Option<&DynamicGraph> {
        self.dynamic_graph.as_ref()
    }

    pub fn split(&self) -> SplitFractions {
        self.split
    }

    pub fn n_steps(&self) -> usize {
        self.panel.n_steps()
    }

    pub fn n_nodes(&self) -> usize {
        self.panel.n_nodes()
    }

    pub fn with_split(self, split: SplitFractions) -> Result<Self> {
        split.validate()?;
        Ok(Self { split, ..self })
    }

    pub fn with_panel(self, panel: FeaturePanel) -> Result<Self> {
        Self::new(panel, self.states, self.static_graph, self.dynamic_graph, self.split)
    }

    pub fn with_graphs(self, static_graph: Option<StaticGraph>, dynamic_graph: Option<DynamicGraph>) -> Result<Self> {
        Self::new(self.panel, self.states, static_graph, dynamic_graph, self.split)
    }

    /// Number of training steps under the current split.
    pub fn train_len(&self) -> usize {
        self.split.boundaries(self.n_steps()).0
    }

    /// Time-slices panel, states and dynamic graph; the static graph is shared.
    pub fn slice_steps(&self, r: Range<usize>) -> Result<Self> {
        Ok(Self {
            panel: self.panel.slice_steps(r.clone())?,
            states: self.states.as_ref().map(|s| s.slice(r.clone())).transpose()?,
            static_graph: self.static_graph.clone(),
            dynamic_graph: self.dynamic_graph.as_ref().map(|d| d.slice(r)).transpose()?,
            split: self.split,
        })
    }
}

/// Chronological train/validation/test partition.
pub fn split_dataset(ds: &EpiDataset) -> Result<(EpiDataset, EpiDataset, EpiDataset)> {
    let n = ds.n_steps();
    if n < 3 {
        return Err(Error::DegenerateSplit(format!("need at least 3 steps, got {n}")));
    }
    let (a, b) = ds.split.boundaries(n);
    for (name, len) in [("train", a), ("val", b - a), ("test", n - b)] {
        if len == 0 {
            return Err(Error::DegenerateSplit(format!(
                "{name} segment is empty for {n} steps with split {:?}",
                ds.split
            )));
        }
    }
    Ok((ds.slice_steps(0..a)?, ds.slice_steps(a..b)?, ds.slice_steps(b..n)?))
}
