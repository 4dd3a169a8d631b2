//! Epidemic modeling toolkit.
//!
//! The crate is organized around a handful of shared domain types
//! ([`model`]) and the operations built on top of them:
//!
//! - [`mechanistic`]: SIR/SIS/SEIR ODE models, parameter fitting and the
//!   node-level stochastic NetworkSIR chain.
//! - [`simulate`]: random graphs, cosine-similarity graphs and a gravity
//!   mobility scenario generator.
//! - [`transforms`]: feature/graph normalization, frequency transform, time
//!   embeddings and classical seasonal decomposition.
//! - [`forecast`]: windowing, statistical forecasters and metrics.
//! - [`detect`]: patient-zero estimators and their evaluation harness.
//! - [`io`]: the versioned JSON dataset format and the toy dataset.
//! - [`tasks`]: end-to-end runners used by the command-line tool.
//!
//! Every stochastic routine takes a [`SeedPolicy`] and is bit-reproducible.

pub mod detect;
pub mod error;
pub mod forecast;
pub mod io;
pub mod mechanistic;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod tasks;
pub mod transforms;

mod linalg;
mod par;

pub use error::{Error, Result};
pub use model::{
    split_dataset, Compartment, DynamicGraph, Edge, EpiDataset, FeaturePanel, NodeStates,
    SplitFractions, StaticGraph,
};
pub use rng::{derive_stream, SeedPolicy};
