//! Interactive NetworkSIR session: the state machine behind the HTTP API.

use epikit_core::mechanistic::{InfectionRecord, NetworkSir, NetworkSirConfig};
use epikit_core::simulate::random_graph;
use epikit_core::{Compartment, SeedPolicy, StaticGraph};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const LOG_VERSION: &str = "epikit.session-log/1";

/// Upper bound on steps per request so one call cannot hog a session.
pub const MAX_STEPS_PER_REQUEST: usize = 10_000;

const GRAPH_STREAM: u64 = 0x0067_7261_7068;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomGraphSpec {
    pub nodes: usize,
    pub edge_prob: f64,
}

/// Body of `POST /sessions`. Exactly one of `graph` and `random_graph`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<StaticGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_graph: Option<RandomGraphSpec>,
    pub config: NetworkSirConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Vaccinate,
    Quarantine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Command {
    Step { k: usize },
    Intervene { action: Action, node: usize },
}

/// Creation request plus every accepted command, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub version: String,
    pub create: CreateSession,
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeChange {
    pub node: usize,
    pub state: Compartment,
}

/// Stream message: the nodes whose compartment changed, numbered from 1
/// without gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaFrame {
    pub seq: u64,
    pub step: usize,
    pub changed_nodes: Vec<NodeChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub current_step: usize,
    pub status: Status,
    /// Sequence number of the last delta frame reflected in `states`.
    pub seq: u64,
    pub states: Vec<Compartment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeHistory {
    pub node: usize,
    /// Compartment at steps `0..=current_step`.
    pub timeline: Vec<Compartment>,
    /// When and from whom the node was infected; `source` is `null` for
    /// initially infected nodes.
    pub infection: Option<InfectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionAck {
    pub node: usize,
    pub action: Action,
    /// False when the intervention did not apply (already V/Q, or
    /// vaccinating a non-susceptible node).
    pub changed: bool,
    pub state: Compartment,
    pub current_step: usize,
    pub status: Status,
    pub seq: u64,
}

/// One live simulation. Interventions rewrite the current frame and act on
/// the next transition.
#[derive(Debug, Clone)]
pub struct Session {
    engine: NetworkSir,
    history: Vec<Vec<Compartment>>,
    log: SessionLog,
    seq: u64,
}


impl Session {
    pub fn create(req: CreateSession) -> Result<Self, ApiError> {
        let seed = SeedPolicy::new(req.seed);
        let graph = match (&req.graph, &req.random_graph) {
            (Some(g), None) => g.clone(),
            (None, Some(spec)) => random_graph(spec.nodes, spec.edge_prob, seed.child(GRAPH_STREAM))
                .map_err(|e| ApiError::from(e).prefixed("random_graph"))?,
            _ => {
                return Err(ApiError::invalid(
                    "graph",
                    "provide exactly one of `graph` and `random_graph`",
                ))
            }
        };
        let engine = NetworkSir::new(graph, &req.config, seed).map_err(|e| ApiError::from(e).prefixed("config"))?;
        let history = vec![engine.states().to_vec()];
        Ok(Self {
            engine,
            history,
            log: SessionLog {
                version: LOG_VERSION.into(),
                create: req,
                commands: Vec::new(),
            },
            seq: 0,
        })
    }

    /// Rebuilds a session by re-applying its log.
    pub fn replay(log: &SessionLog) -> Result<Self, ApiError> {
        if log.version != LOG_VERSION {
            return Err(ApiError::invalid("version", format!("unknown log version `{}`", log.version)));
        }
        let mut s = Self::create(log.create.clone())?;
        for cmd in &log.commands {
            match *cmd {
                Command::Step { k } => {
                    s.step(k)?;
                }
                Command::Intervene { action, node } => {
                    s.intervene(action, node)?;
                }
            }
        }
        Ok(s)
    }

    pub fn graph(&self) -> &StaticGraph {
        self.engine.graph()
    }

    pub fn current_step(&self) -> usize {
        self.engine.current_step()
    }

    pub fn status(&self) -> Status {
        if self.engine.is_extinct() {
            Status::Finished
        } else {
            Status::Running
        }
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    /// One frame per step, `current_step + 1` in total.
    pub fn history(&self) -> &[Vec<Compartment>] {
        &self.history
    }

    pub fn state(&self) -> StateView {
        StateView {
            current_step: self.current_step(),
            status: self.status(),
            seq: self.seq,
            states: self.engine.states().to_vec(),
        }
    }

    fn check_node(&self, node: usize) -> Result<(), ApiError> {
        let n = self.graph().n_nodes();
        if node >= n {
            return Err(ApiError::not_found("node", format!("node {node} out of range for {n} nodes")));
        }
        Ok(())
    }

    pub fn node_history(&self, node: usize) -> Result<NodeHistory, ApiError> {
        self.check_node(node)?;
        Ok(NodeHistory {
            node,
            timeline: self.history.iter().map(|f| f[node]).collect(),
            infection: self.engine.infection_record(node),
        })
    }

    fn frame(&mut self, changed_nodes: Vec<NodeChange>) -> DeltaFrame {
        self.seq += 1;
        DeltaFrame {
            seq: self.seq,
            step: self.current_step(),
            changed_nodes,
        }
    }

    /// Advances up to `k` steps, stopping early once finished. Stepping a
    /// finished session is a no-op.
    pub fn step(&mut self, k: usize) -> Result<Vec<DeltaFrame>, ApiError> {
        if k == 0 {
            return Err(ApiError::invalid("k", "must be >= 1"));
        }
        if k > MAX_STEPS_PER_REQUEST {
            return Err(ApiError::invalid("k", format!("must be <= {MAX_STEPS_PER_REQUEST}")));
        }
        self.log.commands.push(Command::Step { k });
        let mut frames = Vec::new();
        for _ in 0..k {
            if self.status() == Status::Finished {
                break;
            }
            self.engine.step();
            let prev = self.history.last().expect("history starts with frame 0");
            let now = self.engine.states();
            let changed: Vec<NodeChange> = (0..now.len())
                .filter(|&v| now[v] != prev[v])
                .map(|v| NodeChange { node: v, state: now[v] })
                .collect();
            self.history.push(now.to_vec());
            frames.push(self.frame(changed));
        }
        Ok(frames)
    }

    /// Applies an intervention to the current frame. A frame is emitted
    /// only when a node actually changed.
    pub fn intervene(&mut self, action: Action, node: usize) -> Result<(InterventionAck, Option<DeltaFrame>), ApiError> {
        self.check_node(node)?;
        if self.status() == Status::Finished {
            return Err(ApiError::finished());
        }
        self.log.commands.push(Command::Intervene { action, node });
        let changed = match action {
            Action::Vaccinate => self.engine.vaccinate(node),
            Action::Quarantine => self.engine.quarantine(node),
        };
        let state = self.engine.states()[node];
        let frame = changed.then(|| {
            *self.history.last_mut().expect("history starts with frame 0") = self.engine.states().to_vec();
            self.frame(vec![NodeChange { node, state }])
        });
        Ok((
            InterventionAck {
                node,
                action,
                changed,
                state,
                current_step: self.current_step(),
                status: self.status(),
                seq: self.seq,
            },
            frame,
        ))
    }
}
