//! Cycle-accurate simulator of a reduced-pin-count DRAM interface: device
//! model with a protocol referee, memory controller, on-chip bus frontend,
//! last-level cache with scratchpad partitioning, workload harness and
//! bandwidth/energy metrics.
//!
//! [`harness::MemorySystem`] wires the stages together; [`harness::run`]
//! drives a [`harness::Workload`] through it.

pub mod cli;
pub mod config;
pub mod controller;
pub mod device;
pub mod error;
pub mod frontend;
pub mod harness;
pub mod hierarchy;
pub mod metrics;
pub mod protocol;

pub use config::Config;
pub use error::{ConfigError, ProtocolError, SimError};
