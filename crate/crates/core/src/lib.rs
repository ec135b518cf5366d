//! Offline layout optimization and page-accounted serving of node features
//! for out-of-core GNN training.
//!
//! The flow is: sample mini-batches ahead of time ([`workload`]), decide where
//! every feature lives ([`planner`], [`reorder`]), materialize that layout on
//! disk ([`packer`]), then serve batches through the four-level store
//! ([`iostore`]) driven by the sequential or pipelined loop ([`pipeline`]).

pub mod cli;
pub mod error;
pub mod iostore;
pub mod packer;
pub mod pipeline;
pub mod planner;
pub mod reorder;
pub mod workload;

#[cfg(test)]
mod testkit;

pub use error::{Error, Result};

/// Global node identifier.
pub type NodeId = u32;

/// Default disk page size in bytes.
pub const DEFAULT_PAGE_SIZE: u32 = 4096;
