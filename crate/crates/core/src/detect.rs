//! Patient-zero estimation from a single infected-set snapshot.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanistic::{NetworkSir, NetworkSirConfig};
use crate::model::{Compartment, Edge, StaticGraph};
use crate::par::map_range;
use crate::rng::SeedPolicy;

/// Contact graph plus the set of nodes observed infected (ever infected,
/// recovered included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SnapshotRepr", into = "SnapshotRepr")]
pub struct Snapshot {
    graph: StaticGraph,
    infected: Vec<usize>,
    observation_time: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotRepr {
    graph: StaticGraph,
    infected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observation_time: Option<usize>,
}

impl TryFrom<SnapshotRepr> for Snapshot {
    type Error = Error;
    fn try_from(r: SnapshotRepr) -> Result<Self> {
        Snapshot::new(r.graph, r.infected, r.observation_time)
    }
}

impl From<Snapshot> for SnapshotRepr {
    fn from(s: Snapshot) -> Self {
        SnapshotRepr {
            graph: s.graph,
            infected: s.infected,
            observation_time: s.observation_time,
        }
    }
}

impl Snapshot {
    /// Duplicate ids are merged; the set must be nonempty and in range.
    pub fn new(graph: StaticGraph, mut infected: Vec<usize>, observation_time: Option<usize>) -> Result<Self> {
        infected.sort_unstable();
        infected.dedup();
        if infected.is_empty() {
            return Err(Error::param("infected", "must be nonempty"));
        }
        if let Some(&v) = infected.iter().find(|&&v| v >= graph.n_nodes()) {
            return Err(Error::param(
                "infected",
                format!("node {v} out of range for {} nodes", graph.n_nodes()),
            ));
        }
        Ok(Self {
            graph,
            infected,
            observation_time,
        })
    }

    pub fn graph(&self) -> &StaticGraph {
        &self.graph
    }

    /// Sorted infected node ids.
    pub fn infected(&self) -> &[usize] {
        &self.infected
    }

    pub fn observation_time(&self) -> Option<usize> {
        self.observation_time
    }

    /// Infected-induced subgraph as undirected local adjacency lists; local
    /// index `i` stands for `infected()[i]`.
    fn induced(&self) -> Vec<Vec<usize>> {
        let mut local = vec![usize::MAX; self.graph.n_nodes()];
        for (i, &v) in self.infected.iter().enumerate() {
            local[v] = i;
        }
        let mut adj = vec![Vec::new(); self.infected.len()];
        for e in self.graph.edges() {
            let (a, b) = (local[e.u], local[e.v]);
            if a != usize::MAX && b != usize::MAX && a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Connected components of the infected-induced subgraph, as global ids.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.induced();
        let mut seen = vec![false; adj.len()];
        let mut out = Vec::new();
        for start in 0..adj.len() {
            if seen[start] {
                continue;
            }
            let mut comp: Vec<usize> = bfs(&adj, start)
                .iter()
                .enumerate()
                .filter(|(_, d)| d.is_some())
                .map(|(i, _)| i)
                .collect();
            for &i in &comp {
                seen[i] = true;
            }
            comp.iter_mut().for_each(|i| *i = self.infected[*i]);
            out.push(comp);
        }
        out
    }

    fn connected_induced(&self) -> Result<Vec<Vec<usize>>> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(Error::DisconnectedSnapshot { components: comps });
        }
        Ok(self.induced())
    }
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        let d = dist[u].unwrap();
        for &w in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// Probability of each node being the source; zero outside the infected set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub probs: Vec<f64>,
}

impl SourceScore {
    fn from_local(s: &Snapshot, local: &[f64]) -> Self {
        let total: f64 = local.iter().sum();
        let mut probs = vec![0.0; s.graph.n_nodes()];
        for (i, &v) in s.infected.iter().enumerate() {
            probs[v] = if total > 0.0 {
                local[i] / total
            } else {
                1.0 / local.len() as f64
            };
        }
        Self { probs }
    }

    /// Normalizes log-weights without overflow.
    fn from_log(s: &Snapshot, logw: &[f64]) -> Self {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|x| (x - max).exp()).collect();
        Self::from_local(s, &w)
    }

    /// Node with the highest probability (lowest id among ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (v, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = v;
            }
        }
        best
    }

    /// Rank of `v` (1 = best); tied nodes share the mean of their ranks.
    pub fn rank(&self, v: usize) -> f64 {
        let (greater, tied) = self.standing(v);
        greater as f64 + (tied as f64 + 1.0) / 2.0
    }

    /// Chance that `v` lands in the top `k` when ties are broken uniformly
    /// at random.
    pub fn top_k(&self, v: usize, k: usize) -> f64 {
        let (greater, tied) = self.standing(v);
        if greater >= k {
            0.0
        } else {
            ((k - greater) as f64 / tied as f64).min(1.0)
        }
    }

    /// (nodes strictly ahead of `v`, nodes tied with `v` including itself).
    fn standing(&self, v: usize) -> (usize, usize) {
        let p = self.probs[v];
        let tol = 1e-12 * p.abs().max(1e-300);
        let mut greater = 0;
        let mut tied = 0;
        for &q in &self.probs {
            if (q - p).abs() <= tol {
                tied += 1;
            } else if q > p {
                greater += 1;
            }
        }
        (greater, tied)
    }
}

/// Uniform mass over the infected nodes of minimum eccentricity within the
/// infected-induced subgraph (hop distance).
pub fn jordan_center(s: &Snapshot) -> Result<SourceScore> {
    let adj = s.connected_induced()?;
    let ecc: Vec<usize> = map_range(adj.len(), |i| bfs(&adj, i).iter().map(|d| d.unwrap()).max().unwrap());
    let best = *ecc.iter().min().unwrap();
    let w: Vec<f64> = ecc.iter().map(|&e| (e == best) as u8 as f64).collect();
    Ok(SourceScore::from_local(s, &w))
}

/// Log rumor centrality of every node of a tree given as adjacency lists:
/// `ln R(v) = ln n! − Σ_u ln T_u^v`, computed for all roots by rerooting.
fn tree_log_rumor(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let (order, parent) = bfs_order(adj, 0);
    let mut size = vec![1usize; n];
    for &u in order.iter().rev() {
        if let Some(p) = parent[u] {
            size[p] += size[u];
        }
    }
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    let mut out = vec![0.0; n];
    out[0] = ln_fact - size.iter().map(|&t| (t as f64).ln()).sum::<f64>();
    for &u in &order[1..] {
        let p = parent[u].unwrap();
        let t = size[u] as f64;
        out[u] = out[p] + t.ln() - (n as f64 - t).ln();
    }
    out
}

fn bfs_order(adj: &[Vec<usize>], root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let n = adj.len();
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    seen[root] = true;
    let mut q = VecDeque::from([root]);
    while let Some(u) = q.pop_front() {
        order.push(u);
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some(u);
                q.push_back(w);
            }
        }
    }
    (order, parent)
}

/// Rumor centrality of `root` on its BFS layering. A node with several
/// parents one layer up splits its subtree mass equally among them, which
/// keeps the score independent of node labels; on a tree this is the
/// exact subtree-size product.
fn bfs_tree_log_rumor(adj: &[Vec<usize>], root: usize) -> f64 {
    let n = adj.len();
    let dist: Vec<usize> = bfs(adj, root).into_iter().map(Option::unwrap).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&u| dist[u]);
    let mut size = vec![1.0f64; n];
    for &u in order.iter().rev() {
        if u == root {
            continue;
        }
        let parents: Vec<usize> = adj[u].iter().copied().filter(|&w| dist[w] + 1 == dist[u]).collect();
        let share = size[u] / parents.len() as f64;
        for p in parents {
            size[p] += share;
        }
    }
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    ln_fact - size.iter().map(|t| t.ln()).sum::<f64>()
}

/// Rumor centrality on the infected-induced subgraph. Exact when that
/// subgraph is a tree; otherwise each candidate is scored on its own BFS
/// layering (see `bfs_tree_log_rumor`).
pub fn rumor_centrality(s: &Snapshot) -> Result<SourceScore> {
    let adj = s.connected_induced()?;
    let n_edges: usize = adj.iter().map(Vec::len).sum::<usize>() / 2;
    let logw = if n_edges + 1 == adj.len() {
        tree_log_rumor(&adj)
    } else {
        map_range(adj.len(), |v| bfs_tree_log_rumor(&adj, v))
    };
    Ok(SourceScore::from_log(s, &logw))
}

/// Scores each infected candidate by the mean Jaccard similarity between
/// the observed set and the ever-infected set of `replicates` NetworkSIR
/// runs seeded at that candidate for `observation_time` steps.
pub fn monte_carlo_source(
    s: &Snapshot,
    cfg: &NetworkSirConfig,
    replicates: usize,
    seed: SeedPolicy,
) -> Result<SourceScore> {
    let steps = s
        .observation_time
        .ok_or_else(|| Error::param("observation_time", "required by the Monte Carlo detector"))?;
    if replicates == 0 {
        return Err(Error::param("replicates", "must be >= 1"));
    }
    let cands = &s.infected;
    let mut observed = vec![false; s.graph.n_nodes()];
    for &v in cands {
        observed[v] = true;
    }
    let mut base = cfg.clone();
    base.initial_infected = vec![cands[0]];
    base.validate(s.graph.n_nodes())?;

    let jobs = cands.len() * replicates;
    let sims = map_range(jobs, |job| -> Result<f64> {
        let v = cands[job / replicates];
        let r = job % replicates;
        let mut c = base.clone();
        c.initial_infected = vec![v];
        let mut sim = NetworkSir::new(s.graph.clone(), &c, seed.child(v as u64).child(r as u64))?;
        for _ in 0..steps {
            if sim.is_extinct() {
                break;
            }
            sim.step();
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (u, &st) in sim.states().iter().enumerate() {
            let hit = matches!(st, Compartment::I | Compartment::R);
            inter += (hit && observed[u]) as usize;
            union += (hit || observed[u]) as usize;
        }
        Ok(inter as f64 / union as f64)
    });
    let mut local = vec![0.0; cands.len()];
    for (job, x) in sims.into_iter().enumerate() {
        local[job / replicates] += x?;
    }
    for x in &mut local {
        *x /= replicates as f64;
    }
    Ok(SourceScore::from_local(s, &local))
}

/// Parameters of the Monte Carlo detector's forward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloParams {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Detector {
    Jordan,
    Rumor,
    MonteCarlo(MonteCarloParams),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Jordan => "jordan",
            Self::Rumor => "rumor",
            Self::MonteCarlo(_) => "monte-carlo",
        }
    }

    pub fn score(&self, s: &Snapshot, seed: SeedPolicy) -> Result<SourceScore> {
        match self {
            Self::Jordan => jordan_center(s),
            Self::Rumor => rumor_centrality(s),
            Self::MonteCarlo(p) => {
                let cfg = NetworkSirConfig::new(p.beta, p.gamma, p.dt, vec![s.infected[0]]);
                monte_carlo_source(s, &cfg, p.replicates, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCase {
    pub snapshot: Snapshot,
    pub true_source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detector: String,
    pub n_cases: usize,
    /// Expected accuracy with uniformly random tie-breaking.
    pub top1: f64,
    pub top3: f64,
    pub mean_rank: f64,
}

/// Scores every case with `score` and summarizes where the true source
/// landed. Case `k` gets seed stream `seed.child(k)`.
pub fn evaluate_with<F>(name: &str, cases: &[DetectionCase], seed: SeedPolicy, score: F) -> Result<DetectionReport>
where
    F: Fn(&Snapshot, SeedPolicy) -> Result<SourceScore>,
{
    if cases.is_empty() {
        return Err(Error::param("cases", "must be nonempty"));
    }
    let (mut top1, mut top3, mut rank) = (0.0, 0.0, 0.0);
    for (k, c) in cases.iter().enumerate() {
        if c.true_source >= c.snapshot.graph.n_nodes() {
            return Err(Error::param(
                "true_source",
                format!("case {k}: node {} not in graph", c.true_source),
            ));
        }
        let sc = score(&c.snapshot, seed.child(k as u64))?;
        top1 += sc.top_k(c.true_source, 1);
        top3 += sc.top_k(c.true_source, 3);
        rank += sc.rank(c.true_source);
    }
    let n = cases.len() as f64;
    Ok(DetectionReport {
        detector: name.to_string(),
        n_cases: cases.len(),
        top1: top1 / n,
        top3: top3 / n,
        mean_rank: rank / n,
    })
}

pub fn evaluate_detector(detector: &Detector, cases: &[DetectionCase], seed: SeedPolicy) -> Result<DetectionReport> {
    evaluate_with(detector.name(), cases, seed, |s, sd| detector.score(s, sd))
}

/// Uniform random labeled tree on `n` nodes via a Prüfer sequence.
pub fn random_tree(n: usize, seed: SeedPolicy) -> Result<StaticGraph> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    if n <= 2 {
        let pairs: &[(usize, usize)] = if n == 2 { &[(0, 1)] } else { &[] };
        return StaticGraph::from_pairs(n, pairs);
    }
    let mut rng = seed.rng();
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &x in &seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in &seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges.push(Edge::new(leaf.min(x), leaf.max(x), 1.0));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push(Edge::new(rest[0], rest[1], 1.0));
    StaticGraph::new(n, edges)
}

/// Spreads SI from `source` one infection at a time, each step choosing a
/// uniformly random edge between the infected set and a susceptible node,
/// until `size` nodes are infected or no such edge remains.
pub fn si_spread(g: &StaticGraph, source: usize, size: usize, seed: SeedPolicy) -> Vec<usize> {
    let mut rng = seed.rng();
    let mut infected = vec![false; g.n_nodes()];
    infected[source] = true;
    let mut set = vec![source];
    while set.len() < size {
        let frontier: Vec<usize> = set
            .iter()
            .flat_map(|&u| g.neighbors(u).map(|(w, _)| w))
            .filter(|&w| !infected[w])
            .collect();
        if frontier.is_empty() {
            break;
        }
        let w = frontier[rng.random_range(0..frontier.len())];
        infected[w] = true;
        set.push(w);
    }
    set
}

/// Random trees with SI outbreaks from a uniformly drawn source. The cases
/// carry no observation time.
pub fn synthetic_tree_cases(n_cases: usize, n_nodes: usize, spread: usize, seed: SeedPolicy) -> Result<Vec<DetectionCase>> {
    if spread == 0 || spread > n_nodes {
        return Err(Error::param("spread", format!("must lie in 1..={n_nodes}")));
    }
    (0..n_cases as u64)
        .map(|k| {
            let s = seed.child(k);
            let g = random_tree(n_nodes, s.child(0))?;
            let source = s.child(1).rng().random_range(0..n_nodes);
            let infected = si_spread(&g, source, spread, s.child(2));
            Ok(DetectionCase {
                snapshot: Snapshot::new(g, infected, None)?,
                true_source: source,
            })
        })
        .collect()
}

/// Random-graph NetworkSIR outbreaks observed after `observation_time`
/// steps; the observed set is every node infected so far.
pub fn synthetic_sir_cases(
    n_cases: usize,
    n_nodes: usize,
    edge_prob: f64,
    params: &MonteCarloParams,
    observation_time: usize,
    seed: SeedPolicy,
) -> Result<Vec<DetectionCase>> {
    (0..n_cases as u64)
        .map(|k| {
            let s = seed.child(k);
            let g = crate::simulate::random_graph(n_nodes, edge_prob, s.child(0))?;
            let source = s.child(1).rng().random_range(0..n_nodes);
            let cfg = NetworkSirConfig::new(params.beta, params.gamma, params.dt, vec![source]);
            let mut sim = NetworkSir::new(g.clone(), &cfg, s.child(2))?;
            for _ in 0..observation_time {
                sim.step();
            }
            let infected: Vec<usize> = (0..n_nodes)
                .filter(|&v| matches!(sim.states()[v], Compartment::I | Compartment::R))
                .collect();
            Ok(DetectionCase {
                snapshot: Snapshot::new(g, infected, Some(observation_time))?,
                true_source: source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snap(n: usize, pairs: &[(usize, usize)], infected: &[usize]) -> Snapshot {
        Snapshot::new(StaticGraph::from_pairs(n, pairs).unwrap(), infected.to_vec(), None).unwrap()
    }

    fn path(n: usize) -> Vec<(usize, usize)> {
        (0..n - 1).map(|i| (i, i + 1)).collect()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn jordan_examples() {
        let s = snap(5, &path(5), &[0, 1, 2, 3, 4]);
        assert_eq!(jordan_center(&s).unwrap().probs, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let s = snap(3, &path(3), &[1]);
        assert_eq!(jordan_center(&s).unwrap().probs, vec![0.0, 1.0, 0.0]);
        let s = snap(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], &[0, 1, 2, 3]);
        assert_eq!(jordan_center(&s).unwrap().probs, vec![0.25; 4]);
    }

    #[test]
    fn disconnected_snapshot_lists_components() {
        let s = snap(5, &path(5), &[0, 1, 3, 4]);
        let e = jordan_center(&s).unwrap_err();
        assert_eq!(e, Error::DisconnectedSnapshot { components: vec![vec![0, 1], vec![3, 4]] });
        assert!(e.to_string().contains("disconnected snapshot"));
        assert!(rumor_centrality(&s).is_err());
    }

    #[test]
    fn snapshot_validation() {
        let g = StaticGraph::from_pairs(3, &path(3)).unwrap();
        assert!(Snapshot::new(g.clone(), vec![], None).is_err());
        assert_eq!(Snapshot::new(g, vec![3], None).unwrap_err().field(), Some("infected"));
    }

    #[test]
    fn rumor_examples() {
        let s = snap(3, &path(3), &[0, 1, 2]);
        assert!(close(&rumor_centrality(&s).unwrap().probs, &[0.25, 0.5, 0.25]));
        let s = snap(1, &[], &[0]);
        assert_eq!(rumor_centrality(&s).unwrap().probs, vec![1.0]);
        for k in 1..=5 {
            let pairs: Vec<(usize, usize)> = (1..=k).map(|l| (0, l)).collect();
            let all: Vec<usize> = (0..=k).collect();
            let sc = rumor_centrality(&snap(k + 1, &pairs, &all)).unwrap();
            let oracle = brute_orderings(&snap(k + 1, &pairs, &all));
            assert!(close(&sc.probs, &normalize(&oracle)));
            if k > 1 {
                assert!((1..=k).all(|l| sc.probs[0] > sc.probs[l]));
            }
        }
    }

    /// Counts infection orderings starting at each node in which every
    /// newcomer is adjacent to an earlier node.
    fn brute_orderings(s: &Snapshot) -> Vec<f64> {
        let adj = s.induced();
        fn count(adj: &[Vec<usize>], inside: &mut Vec<bool>, placed: usize) -> u64 {
            if placed == adj.len() {
                return 1;
            }
            let mut total = 0;
            for v in 0..adj.len() {
                if !inside[v] && adj[v].iter().any(|&w| inside[w]) {
                    inside[v] = true;
                    total += count(adj, inside, placed + 1);
                    inside[v] = false;
                }
            }
            total
        }
        let mut global = vec![0.0; s.graph.n_nodes()];
        for (i, &v) in s.infected.iter().enumerate() {
            let mut inside = vec![false; adj.len()];
            inside[i] = true;
            global[v] = count(&adj, &mut inside, 1) as f64;
        }
        global
    }

    fn normalize(x: &[f64]) -> Vec<f64> {
        let t: f64 = x.iter().sum();
        x.iter().map(|v| v / t).collect()
    }

    /// Eccentricities from an all-pairs Floyd–Warshall table.
    fn brute_jordan(s: &Snapshot) -> Vec<f64> {
        let adj = s.induced();
        let n = adj.len();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
            for &j in &adj[i] {
                d[i][j] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        let ecc: Vec<usize> = (0..n).map(|i| *d[i].iter().max().unwrap()).collect();
        let best = *ecc.iter().min().unwrap();
        let mut global = vec![0.0; s.graph.n_nodes()];
        for (i, &v) in s.infected.iter().enumerate() {
            global[v] = (ecc[i] == best) as u8 as f64;
        }
        normalize(&global)
    }

    fn connected_graph(n: usize, extra: &[(usize, usize)], seed: u64) -> StaticGraph {
        let tree = random_tree(n, SeedPolicy::new(seed)).unwrap();
        let mut pairs: Vec<(usize, usize)> = tree.edges().iter().map(|e| (e.u, e.v)).collect();
        for &(a, b) in extra {
            let (u, v) = (a % n, b % n);
            let (u, v) = (u.min(v), u.max(v));
            if u != v && !pairs.contains(&(u, v)) {
                pairs.push((u, v));
            }
        }
        StaticGraph::from_pairs(n, &pairs).unwrap()
    }

    proptest! {
        #[test]
        fn jordan_matches_brute_force(n in 1usize..=12, seed in 0u64..10_000, extra in proptest::collection::vec((0usize..12, 0usize..12), 0..10)) {
            let g = connected_graph(n, &extra, seed);
            let s = Snapshot::new(g, (0..n).collect(), None).unwrap();
            prop_assert!(close(&jordan_center(&s).unwrap().probs, &brute_jordan(&s)));
        }

        #[test]
        fn rumor_matches_ordering_count_on_trees(n in 1usize..=8, seed in 0u64..10_000) {
            let g = random_tree(n, SeedPolicy::new(seed)).unwrap();
            let s = Snapshot::new(g, (0..n).collect(), None).unwrap();
            prop_assert!(close(&rumor_centrality(&s).unwrap().probs, &normalize(&brute_orderings(&s))));
        }

        #[test]
        fn scores_are_distributions(n in 2usize..=12, seed in 0u64..10_000, extra in proptest::collection::vec((0usize..12, 0usize..12), 0..10)) {
            let g = connected_graph(n, &extra, seed);
            let src = (seed as usize) % n;
            let infected = si_spread(&g, src, n.div_ceil(2), SeedPolicy::new(seed));
            let s = Snapshot::new(g, infected, Some(3)).unwrap();
            let cfg = NetworkSirConfig::new(0.5, 0.1, 1.0, vec![src]);
            for sc in [jordan_center(&s).unwrap(), rumor_centrality(&s).unwrap(), monte_carlo_source(&s, &cfg, 3, SeedPolicy::new(1)).unwrap()] {
                prop_assert!((sc.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for (v, &p) in sc.probs.iter().enumerate() {
                    prop_assert!(p >= 0.0);
                    if !s.infected().contains(&v) {
                        prop_assert_eq!(p, 0.0);
                    }
                }
            }
        }

        #[test]
        fn scores_are_relabeling_equivariant(n in 2usize..=10, seed in 0u64..10_000, extra in proptest::collection::vec((0usize..10, 0usize..10), 0..8)) {
            let g = connected_graph(n, &extra, seed);
            let infected = si_spread(&g, 0, n.div_ceil(2) + 1, SeedPolicy::new(seed));
            // relabel v -> perm[v] with a rotation plus reflection
            let perm: Vec<usize> = (0..n).map(|v| (n - 1 - v + seed as usize) % n).collect();
            let pairs: Vec<(usize, usize)> = g.edges().iter().map(|e| (perm[e.u].min(perm[e.v]), perm[e.u].max(perm[e.v]))).collect();
            let g2 = StaticGraph::from_pairs(n, &pairs).unwrap();
            let s1 = Snapshot::new(g, infected.clone(), None).unwrap();
            let s2 = Snapshot::new(g2, infected.iter().map(|&v| perm[v]).collect(), None).unwrap();
            for f in [jordan_center, rumor_centrality] {
                let a = f(&s1).unwrap();
                let b = f(&s2).unwrap();
                for (v, &pv) in perm.iter().enumerate().take(n) {
                    prop_assert!((a.probs[v] - b.probs[pv]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn general_graph_uses_bfs_trees() {
        // triangle plus pendant: 0-1-2-0, 2-3
        let s = snap(4, &[(0, 1), (1, 2), (0, 2), (2, 3)], &[0, 1, 2, 3]);
        let sc = rumor_centrality(&s).unwrap();
        assert_eq!(sc.argmax(), 2);
        assert!((sc.probs[0] - sc.probs[1]).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_star() {
        let k = 5;
        let pairs: Vec<(usize, usize)> = (1..=k).map(|l| (0, l)).collect();
        let g = StaticGraph::from_pairs(k + 1, &pairs).unwrap();
        let s = Snapshot::new(g, (0..=k).collect(), Some(1)).unwrap();
        let cfg = NetworkSirConfig::new(1e6, 0.0, 1.0, vec![0]);
        let sc = monte_carlo_source(&s, &cfg, 20, SeedPolicy::new(4)).unwrap();
        assert!((1..=k).all(|l| sc.probs[0] > sc.probs[l]));
        // center reaches every leaf (Jaccard 1), a leaf reaches only itself and the center
        let leaf = 2.0 / (k + 1) as f64;
        assert!((sc.probs[0] - 1.0 / (1.0 + k as f64 * leaf)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_reproducible_and_trivial_cases() {
        let g = StaticGraph::from_pairs(6, &path(6)).unwrap();
        let s = Snapshot::new(g.clone(), vec![1, 2, 3], Some(2)).unwrap();
        let cfg = NetworkSirConfig::new(0.7, 0.2, 1.0, vec![1]);
        let a = monte_carlo_source(&s, &cfg, 1, SeedPolicy::new(9)).unwrap();
        assert_eq!(a, monte_carlo_source(&s, &cfg, 1, SeedPolicy::new(9)).unwrap());
        let one = Snapshot::new(g.clone(), vec![4], Some(0)).unwrap();
        assert_eq!(monte_carlo_source(&one, &cfg, 3, SeedPolicy::new(0)).unwrap().probs[4], 1.0);
        let no_time = Snapshot::new(g, vec![4], None).unwrap();
        assert_eq!(monte_carlo_source(&no_time, &cfg, 3, SeedPolicy::new(0)).unwrap_err().field(), Some("observation_time"));
        assert!(monte_carlo_source(&one, &cfg, 0, SeedPolicy::new(0)).is_err());
    }

    #[test]
    fn rank_conventions() {
        let sc = SourceScore { probs: vec![0.25; 4] };
        assert_eq!(sc.rank(2), 2.5);
        assert_eq!(sc.top_k(2, 1), 0.25);
        assert_eq!(sc.top_k(2, 3), 0.75);
        let sc = SourceScore { probs: vec![0.1, 0.6, 0.3, 0.0] };
        assert_eq!((sc.rank(1), sc.rank(2), sc.rank(0), sc.rank(3)), (1.0, 2.0, 3.0, 4.0));
        assert_eq!(sc.top_k(0, 3), 1.0);
        assert_eq!(sc.top_k(3, 3), 0.0);
    }

    #[test]
    fn evaluation_edge_cases() {
        let cases = synthetic_tree_cases(5, 15, 10, SeedPolicy::new(1)).unwrap();
        let oracle = evaluate_with("oracle", &cases, SeedPolicy::new(0), |s, _| {
            let truth = cases.iter().find(|c| &c.snapshot == s).unwrap().true_source;
            let mut probs = vec![0.0; s.graph().n_nodes()];
            probs[truth] = 1.0;
            Ok(SourceScore { probs })
        })
        .unwrap();
        assert_eq!((oracle.top1, oracle.mean_rank), (1.0, 1.0));

        let uniform = evaluate_with("uniform", &cases, SeedPolicy::new(0), |s, _| {
            let mut probs = vec![0.0; s.graph().n_nodes()];
            for &v in s.infected() {
                probs[v] = 1.0 / s.infected().len() as f64;
            }
            Ok(SourceScore { probs })
        })
        .unwrap();
        assert!((uniform.mean_rank - 5.5).abs() < 1e-12);
        assert!((uniform.top1 - 0.1).abs() < 1e-12);

        let mut bad = cases[0].clone();
        bad.true_source = 99;
        assert_eq!(evaluate_detector(&Detector::Jordan, &[bad], SeedPolicy::new(0)).unwrap_err().field(), Some("true_source"));
        assert!(evaluate_detector(&Detector::Jordan, &[], SeedPolicy::new(0)).is_err());
    }

    #[test]
    fn rumor_beats_uniform_on_trees() {
        let cases = synthetic_tree_cases(200, 15, 10, SeedPolicy::new(7)).unwrap();
        assert!(cases.iter().all(|c| c.snapshot.infected().len() == 10));
        let r = evaluate_detector(&Detector::Rumor, &cases, SeedPolicy::new(7)).unwrap();
        assert!(r.top1 > 0.1, "{r:?}");
        assert!(r.mean_rank >= 1.0 && r.top3 >= r.top1);
    }

    #[test]
    fn random_tree_is_a_tree() {
        for n in 1..30 {
            let g = random_tree(n, SeedPolicy::new(n as u64)).unwrap();
            assert_eq!(g.n_edges(), n.saturating_sub(1));
            let s = Snapshot::new(g, (0..n).collect(), None).unwrap();
            assert_eq!(s.components().len(), 1);
        }
    }

    #[test]
    fn sir_cases_are_connected() {
        let p = MonteCarloParams { beta: 0.6, gamma: 0.1, dt: 1.0, replicates: 5 };
        let cases = synthetic_sir_cases(10, 40, 0.1, &p, 4, SeedPolicy::new(3)).unwrap();
        for c in &cases {
            assert_eq!(c.snapshot.components().len(), 1);
            assert!(c.snapshot.infected().contains(&c.true_source));
        }
        let r = evaluate_detector(&Detector::MonteCarlo(p), &cases, SeedPolicy::new(3)).unwrap();
        assert_eq!(r, evaluate_detector(&Detector::MonteCarlo(p), &cases, SeedPolicy::new(3)).unwrap());
    }

    #[test]
    fn snapshot_json_round_trip() {
        let s = Snapshot::new(StaticGraph::from_pairs(3, &path(3)).unwrap(), vec![2, 1], Some(4)).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Snapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Snapshot>(r#"{"graph":{"n_nodes":2,"directed":false,"edges":[]},"infected":[]}"#).is_err());
    }
}
