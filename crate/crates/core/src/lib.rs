//! Distributed average consensus where only a random subset of nodes
//! broadcasts in each round.
//!
//! Nodes that do not hear a neighbor in a round push that neighbor's weight
//! onto their own self-loop (biased compensation), so every round matrix is
//! row stochastic but in general not column stochastic. The crate provides
//! the graph model, broadcast-probability designs, reproducible schedule
//! streams, the consensus engine and its metrics, the pre-compensation
//! pipeline that removes the resulting bias, and an SPSA optimizer for the
//! broadcast probabilities.

pub mod calibrate;
pub mod centrality;
pub mod engine;
mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod mixing;
pub mod optimizer;
pub mod scheduler;

pub use error::{Error, Result};
