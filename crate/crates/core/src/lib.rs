//! Analytical performance model and configuration search for LLM training
//! jobs that span multiple data-center buildings.
//!
//! The crate models communication volumes, link behaviour (latency-bounded
//! throughput, load balancing, Go-Back-N loss recovery), builds kernel-level
//! pipeline schedules as dependency DAGs, reconstructs end-to-end iteration
//! time under both DP-out and PP-out placements in a single sweep, and
//! searches the configuration space for the fastest setup, attaching
//! network-layer recommendations to the result.

pub mod assumptions;
pub mod error;
pub mod explore;
pub mod fixtures;
pub mod link;
pub mod model;
pub mod placement;
pub mod reconstruct;
pub mod report;
pub mod rng;
pub mod schedule;
pub mod topology;
pub mod volume;

pub use assumptions::Assumptions;
pub use error::{Error, Result};
pub use model::{
    memory_estimate, num_microbatches, validate_config, BatchSpec, DpScheme, ModelSpec,
    ParallelismConfig, Placement, Schedule,
};
pub use placement::{resolve_placement, GroupPlacement};
pub use topology::{LinkClass, LoadBalancing, Topology};
