//! Discrete-event simulation of a Blockclique network: random overlay,
//! sequential per-node uploads, verify-then-forward relay, and one consensus
//! state per node over a shared block store.

pub mod config;
pub mod engine;
pub mod output;
pub mod topology;

use blockclique_core::ConsensusError;

pub use config::SimConfig;
pub use engine::{measure_confirmation, run_simulation, BlockRecord, SimMetrics, SimOutput};
pub use topology::{build_topology, Link, NetworkTopology};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no strongly connected topology within {0} draws")]
    Topology(u32),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("produced block rejected: {0}")]
    InvalidBlock(String),
    #[error("only {0} blocks final, at least 100 needed")]
    InsufficientData(u64),
}
