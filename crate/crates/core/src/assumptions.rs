//! Tunable model parameters.
//!
//! Everything here is an assumption of the analytical model rather than a
//! property of the workload or the network. The full block is echoed verbatim
//! into every report so results can be traced back to the knobs that produced
//! them.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Assumptions {
    /// Optimizer state bytes per parameter (fp32 master copy + two moments).
    pub optimizer_bytes_per_param: f64,
    /// Gradient bytes per parameter.
    pub grad_bytes_per_param: f64,
    /// Coefficient `c` in the per-layer activation estimate
    /// `c * mbs * (seq/cp) * hidden * bytes_per_element`.
    pub activation_coefficient: f64,
    /// Fraction of usable HBM after framework reserves.
    pub hbm_usable_fraction: f64,
    /// Relative compute overhead of the split dx/dw backward under DoraPP.
    pub epsilon_dora: f64,
    /// Relative compute overhead of the split dx/dw backward under
    /// interleaved ZBV (more aggressive splitting).
    pub epsilon_zbv: f64,
    /// Fraction of peak FLOPS achieved once TP/CP/EP communication inside the
    /// zone is folded into compute.
    pub compute_efficiency: f64,
    /// Tokens per microbatch-forward at which kernel efficiency reaches half
    /// of its asymptote; models the throughput loss of small microbatches.
    pub tokens_half_saturation: f64,
    /// Fraction of the per-pair line rate that ring collectives achieve
    /// (stack overhead relative to plain point-to-point transfers).
    pub collective_efficiency: f64,
    /// Number of equal-cost paths available to per-flow (ECMP) hashing on the
    /// cross-building fabric.
    pub ecmp_paths: u32,
    /// Concurrent flows per GPU pair assumed when estimating ECMP collision
    /// loss inside kernel durations.
    pub ecmp_flows: u32,
    /// Monte-Carlo trials per ECMP goodput estimate.
    pub ecmp_trials: u32,
    /// One-way latency above which disabling ECN-based congestion control is
    /// recommended (microseconds).
    pub cc_disable_latency_us: f64,
    /// One-way latency above which proactive loss mitigation (selective
    /// redundancy) is recommended when the link is lossy (microseconds).
    pub redundancy_latency_us: f64,
    /// Cross-building latency at which imbalanced model chunk sizes toward the
    /// distanced building start paying off (microseconds).
    pub imbalance_latency_us: f64,
    /// Cap on (largest chunk size) / (smallest chunk size) in a partition.
    pub chunk_spread_cap: f64,
    /// Minimum tokens per context-parallel shard.
    pub min_context_shard_tokens: u64,
    /// One-way fiber latency per kilometre (microseconds).
    pub us_per_km: f64,
}

impl Default for Assumptions {
    fn default() -> Self {
        Self {
            optimizer_bytes_per_param: 12.0,
            grad_bytes_per_param: 2.0,
            activation_coefficient: 16.0,
            hbm_usable_fraction: 1.0,
            epsilon_dora: 0.02,
            epsilon_zbv: 0.06,
            compute_efficiency: 0.85,
            tokens_half_saturation: 2048.0,
            collective_efficiency: 0.9,
            ecmp_paths: 16,
            ecmp_flows: 1,
            ecmp_trials: 2048,
            cc_disable_latency_us: 100.0,
            redundancy_latency_us: 100.0,
            imbalance_latency_us: 2000.0,
            chunk_spread_cap: 3.0,
            min_context_shard_tokens: 2048,
            us_per_km: 5.0,
        }
    }
}
