//! Workload description: transformer architecture, batch shape, and the
//! parallelism configuration under evaluation.
//!
//! All types are plain data, immutable after construction, and ingested from
//! JSON documents whose field names match the struct fields exactly. Unknown
//! fields are rejected so typos fail loudly.

use serde::{Deserialize, Serialize};

use crate::assumptions::Assumptions;
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Transformer architecture parameters. `num_experts == 0` means dense.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub num_layers: u64,
    /// Model (hidden) dimension H.
    pub hidden_dim: u64,
    /// FFN dimension F for dense models; unused when experts are present.
    #[serde(default)]
    pub ffn_dim: u64,
    /// Sequence length S in tokens.
    pub seq_len: u64,
    /// Number of experts E; 0 for dense models.
    #[serde(default)]
    pub num_experts: u64,
    /// Expert intermediate dimension F_e.
    #[serde(default)]
    pub expert_ffn_dim: u64,
    /// Routed experts per token.
    #[serde(default = "default_top_k")]
    pub top_k: u64,
    #[serde(default = "default_bytes_per_element")]
    pub bytes_per_element: u64,
}

fn default_top_k() -> u64 {
    1
}

fn default_bytes_per_element() -> u64 {
    2
}

impl ModelSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelSpec =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("model: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn is_dense(&self) -> bool {
        self.num_experts == 0
    }

    /// FFN width that actually runs per token: F for dense, top_k * F_e for
    /// MoE (only routed experts compute).
    pub fn active_ffn_dim(&self) -> u64 {
        if self.is_dense() {
            self.ffn_dim
        } else {
            self.top_k * self.expert_ffn_dim
        }
    }

    /// Parameter elements of one layer held by one GPU: attention (4H^2) plus
    /// the FFN block, divided over TP, with expert weights divided over EP.
    pub fn layer_param_elements_per_gpu(&self, tp: u64, ep: u64) -> u64 {
        let h = self.hidden_dim;
        let ffn = if self.is_dense() {
            3 * h * self.ffn_dim
        } else {
            3 * h * self.expert_ffn_dim * (self.num_experts / ep)
        };
        (4 * h * h + ffn) / tp
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.num_layers == 0 {
            v.push("num_layers must be > 0".to_string());
        }
        if self.hidden_dim == 0 {
            v.push("hidden_dim must be > 0".to_string());
        }
        if self.seq_len == 0 {
            v.push("seq_len must be > 0".to_string());
        }
        if self.bytes_per_element == 0 {
            v.push("bytes_per_element must be > 0".to_string());
        }
        if self.is_dense() {
            if self.ffn_dim == 0 {
                v.push("dense model requires ffn_dim > 0".to_string());
            }
        } else {
            if self.expert_ffn_dim == 0 {
                v.push("MoE model requires expert_ffn_dim > 0".to_string());
            }
            if self.top_k == 0 || self.top_k > self.num_experts {
                v.push(format!(
                    "top_k must be in [1, num_experts]; got {} of {}",
                    self.top_k, self.num_experts
                ));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations: v })
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    /// Sequences per iteration across the whole job.
    pub global_batch_size: u64,
    /// Sequences per microbatch on one pipeline.
    pub microbatch_size: u64,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.microbatch_size == 0 {
            v.push("microbatch_size must be >= 1".to_string());
        }
        if self.global_batch_size < self.microbatch_size {
            v.push("global_batch_size must be >= microbatch_size".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations: v })
        }
    }
}

/// Which parallelism dimension rides the outermost (cross-building) network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    DpOut,
    PpOut,
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Placement::DpOut => "dp_out",
            Placement::PpOut => "pp_out",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schedule {
    /// One-forward-one-backward with a single chunk per stage and fused
    /// backward kernels.
    #[serde(rename = "1f1b")]
    OneFOneB,
    /// Round-robin chunk assignment with wrap-around stage communication and
    /// split dx/dw backward.
    #[serde(rename = "dorapp")]
    DoraPP,
    /// V-shaped chunk assignment eliminating wrap-around communication, with
    /// more aggressive backward splitting.
    #[serde(rename = "interleaved_zbv")]
    InterleavedZbv,
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Schedule::OneFOneB => "1f1b",
            Schedule::DoraPP => "dorapp",
            Schedule::InterleavedZbv => "interleaved_zbv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpScheme {
    /// Parameters and gradients sharded over the full DP group.
    Fsdp,
    /// Sharding inside replica groups; gradient sync across group leaders.
    Hsdp { replica_groups: u64 },
}

impl std::fmt::Display for DpScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DpScheme::Fsdp => f.write_str("fsdp"),
            DpScheme::Hsdp { replica_groups } => write!(f, "hsdp(r={replica_groups})"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParallelismConfig {
    pub tp: u64,
    pub cp: u64,
    pub ep: u64,
    pub pp: u64,
    pub dp: u64,
    pub placement: Placement,
    pub schedule: Schedule,
    pub dp_scheme: DpScheme,
    /// Layers per model chunk, ordered by chunk index. The chunk-to-stage
    /// assignment is derived from the schedule.
    pub chunk_partition: Vec<u64>,
}

impl ParallelismConfig {
    pub fn world_size(&self) -> u64 {
        self.tp * self.cp * self.pp * self.dp
    }

    pub fn num_chunks(&self) -> usize {
        self.chunk_partition.len()
    }

    /// Stage that runs the given chunk.
    ///
    /// 1F1B: chunk i on stage i. DoraPP: round-robin (i mod pp). ZBV: chunks
    /// sweep first-to-last then last-to-first, so adjacent chunks at the turn
    /// share a stage and no wrap-around transfer exists.
    pub fn chunk_stage(&self, chunk: usize) -> usize {
        let pp = self.pp as usize;
        match self.schedule {
            Schedule::OneFOneB => chunk,
            Schedule::DoraPP => chunk % pp,
            Schedule::InterleavedZbv => {
                let pos = chunk % (2 * pp);
                if pos < pp {
                    pos
                } else {
                    2 * pp - 1 - pos
                }
            }
        }
    }

    /// Shard degree of the DP scheme: the group size over which parameters
    /// and gradients are sharded.
    pub fn shard_degree(&self) -> u64 {
        match self.dp_scheme {
            DpScheme::Fsdp => self.dp,
            DpScheme::Hsdp { replica_groups } => {
                if replica_groups == 0 {
                    0
                } else {
                    self.dp / replica_groups
                }
            }
        }
    }

    /// Layers hosted by each stage under this partition and schedule.
    pub fn stage_layers(&self) -> Vec<u64> {
        let mut layers = vec![0u64; self.pp as usize];
        for (c, &sz) in self.chunk_partition.iter().enumerate() {
            layers[self.chunk_stage(c)] += sz;
        }
        layers
    }

    /// Microbatches a stage keeps in flight at the activation-memory peak.
    pub fn inflight_microbatches(&self) -> u64 {
        match self.schedule {
            Schedule::OneFOneB | Schedule::DoraPP => self.pp,
            Schedule::InterleavedZbv => self.pp.div_ceil(2),
        }
    }

    /// Whether the chunk count is structurally valid for the schedule.
    pub fn chunk_structure_ok(&self) -> bool {
        let c = self.num_chunks() as u64;
        if c == 0 || self.pp == 0 {
            return false;
        }
        match self.schedule {
            Schedule::OneFOneB => c == self.pp,
            Schedule::DoraPP => c.is_multiple_of(self.pp),
            Schedule::InterleavedZbv => c.is_multiple_of(2 * self.pp),
        }
    }
}

/// Microbatches executed per pipeline per iteration.
pub fn num_microbatches(batch: &BatchSpec, p: &ParallelismConfig) -> Result<u64> {
    let denom = p.dp * batch.microbatch_size;
    if denom == 0 {
        return Err(Error::NotDivisible {
            dividend_name: "global_batch_size",
            dividend: batch.global_batch_size,
            divisor_name: "dp * microbatch_size",
            divisor: denom,
        });
    }
    if !batch.global_batch_size.is_multiple_of(denom) {
        return Err(Error::NotDivisible {
            dividend_name: "global_batch_size",
            dividend: batch.global_batch_size,
            divisor_name: "dp * microbatch_size",
            divisor: denom,
        });
    }
    Ok(batch.global_batch_size / denom)
}

/// Checks every cross-cutting invariant and returns the full list of
/// violations. An empty list means the configuration is valid. Violations are
/// data, not faults: an infeasible candidate is a normal search outcome.
pub fn validate_config(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
) -> Vec<String> {
    let mut v = Vec::new();

    if p.tp == 0 || p.cp == 0 || p.ep == 0 || p.pp == 0 || p.dp == 0 {
        v.push("all parallelism degrees must be >= 1".to_string());
        return v;
    }

    let world = topo.world_size();
    if p.world_size() != world {
        v.push(format!(
            "degree product tp*cp*pp*dp = {} does not match world size {}",
            p.world_size(),
            world
        ));
    }

    if !model.hidden_dim.is_multiple_of(p.tp) {
        v.push(format!(
            "tp = {} does not divide hidden_dim = {}",
            p.tp, model.hidden_dim
        ));
    }
    if p.tp > topo.gpu.gpus_per_server {
        v.push(format!(
            "tp = {} exceeds gpus_per_server = {}",
            p.tp, topo.gpu.gpus_per_server
        ));
    }

    if !model.seq_len.is_multiple_of(p.cp) {
        v.push(format!(
            "cp = {} does not divide seq_len = {}",
            p.cp, model.seq_len
        ));
    } else if p.cp > 1 && model.seq_len / p.cp < assumptions.min_context_shard_tokens {
        v.push(format!(
            "context shard below {} tokens: seq_len/cp = {}",
            assumptions.min_context_shard_tokens,
            model.seq_len / p.cp
        ));
    }

    if model.is_dense() {
        if p.ep != 1 {
            v.push("dense model requires ep = 1".to_string());
        }
    } else {
        if !(p.dp * p.cp).is_multiple_of(p.ep) {
            v.push(format!("ep = {} does not divide dp*cp = {}", p.ep, p.dp * p.cp));
        }
        if !model.num_experts.is_multiple_of(p.ep) {
            v.push(format!(
                "ep = {} does not divide num_experts = {}",
                p.ep, model.num_experts
            ));
        }
    }
    // TP, CP, and EP groups must stay inside one zone; configs that would
    // span zones are rejected rather than modelled.
    let innermost = p.tp * p.cp * p.ep;
    if innermost > topo.min_zone_gpus() {
        v.push(format!(
            "tp*cp*ep = {} exceeds GPUs per zone = {}",
            innermost,
            topo.min_zone_gpus()
        ));
    }

    match num_microbatches(batch, p) {
        Err(_) => v.push(format!(
            "global_batch_size = {} is not divisible by dp*microbatch_size = {}",
            batch.global_batch_size,
            p.dp * batch.microbatch_size
        )),
        Ok(mb) => {
            if mb < p.pp {
                v.push(format!("microbatches < pipeline stages ({mb} < {})", p.pp));
            }
        }
    }

    if let DpScheme::Hsdp { replica_groups } = p.dp_scheme {
        if replica_groups == 0 || !p.dp.is_multiple_of(replica_groups) {
            v.push(format!(
                "hsdp replica_groups = {replica_groups} must divide dp = {}",
                p.dp
            ));
        }
    }

    let total_layers: u64 = p.chunk_partition.iter().sum();
    if total_layers != model.num_layers {
        v.push(format!(
            "chunk partition sums to {total_layers}, expected num_layers = {}",
            model.num_layers
        ));
    }
    if p.chunk_partition.contains(&0) {
        v.push("every chunk needs at least one layer".to_string());
    }
    if !p.chunk_structure_ok() {
        v.push(format!(
            "chunk count {} is not valid for schedule {} with pp = {}",
            p.num_chunks(),
            p.schedule,
            p.pp
        ));
    } else if p.stage_layers().contains(&0) {
        v.push("every stage must receive at least one chunk".to_string());
    }
    if let (Some(&max), Some(&min)) = (
        p.chunk_partition.iter().max(),
        p.chunk_partition.iter().min(),
    ) {
        if min > 0 && (max as f64) / (min as f64) > assumptions.chunk_spread_cap {
            v.push(format!(
                "chunk size spread {max}:{min} exceeds cap {}x",
                assumptions.chunk_spread_cap
            ));
        }
    }

    let buildings = topo.num_buildings() as u64;
    if buildings > 1 {
        if topo
            .buildings
            .iter()
            .any(|b| b.gpu_count != world / buildings)
        {
            v.push("buildings must hold equal GPU counts".to_string());
        }
        match p.placement {
            Placement::DpOut => {
                if !p.dp.is_multiple_of(buildings) {
                    v.push(format!(
                        "dp = {} does not split evenly across {buildings} buildings",
                        p.dp
                    ));
                }
            }
            Placement::PpOut => {
                if !p.pp.is_multiple_of(buildings) {
                    v.push(format!(
                        "pp = {} does not split evenly across {buildings} buildings",
                        p.pp
                    ));
                }
            }
        }
    }

    if v.is_empty() {
        let usable = topo.gpu.hbm_bytes as f64 * assumptions.hbm_usable_fraction;
        let need = memory_estimate(model, batch, p, assumptions) as f64;
        if need > usable {
            v.push(format!(
                "estimated memory {:.1} GiB exceeds usable HBM {:.1} GiB",
                need / (1u64 << 30) as f64,
                usable / (1u64 << 30) as f64
            ));
        }
    }

    v
}

/// Coarse per-GPU memory estimate in bytes: sharded model state plus
/// schedule-dependent in-flight activations. Used only as a feasibility
/// filter.
pub fn memory_estimate(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    assumptions: &Assumptions,
) -> u64 {
    let stage_layers = p.stage_layers().into_iter().max().unwrap_or(0) as f64;
    let layer_elems = model.layer_param_elements_per_gpu(p.tp, p.ep.max(1)) as f64;
    let bytes_per_param = model.bytes_per_element as f64
        + assumptions.grad_bytes_per_param
        + assumptions.optimizer_bytes_per_param;
    let shard = p.shard_degree().max(1) as f64;
    let state = layer_elems * stage_layers * bytes_per_param / shard;

    let act_per_layer = assumptions.activation_coefficient
        * batch.microbatch_size as f64
        * (model.seq_len / p.cp) as f64
        * model.hidden_dim as f64
        * model.bytes_per_element as f64;
    let activations = act_per_layer * stage_layers * p.inflight_microbatches() as f64;

    (state + activations).round() as u64
}
