//! Replication planning and failure simulation for parallel
//! stream-processing topologies.
//!
//! The crate models a query topology as an operator DAG with per-edge
//! partitioning patterns, estimates the quality of tentative outputs under
//! task failures (output fidelity), plans which tasks to replicate actively
//! under a budget, and replays the whole protocol — batches, checkpoints,
//! replica takeover, tentative outputs — in a deterministic simulator.

pub mod experiment;
pub mod fidelity;
pub mod planner;
pub mod simulator;
pub mod fixtures;
pub mod topology;
