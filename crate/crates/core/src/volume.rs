//! Closed-form communication volume accounting.
//!
//! Everything here is pure counting: element counts per transfer, transfers
//! per iteration, and cross-building byte totals. Ring-collective overhead
//! factors and timing belong to the link model, not this module, so the
//! formulas stay testable as written.

use crate::model::{num_microbatches, BatchSpec, ModelSpec, ParallelismConfig, Placement};
use crate::placement::resolve_placement;
use crate::topology::{LinkClass, Topology};
use crate::DpScheme;

/// Elements moved by one PP activation (or activation-gradient) transfer:
/// `2 * (H/tp) * (S/cp) * m`.
pub fn pp_p2p_elements(model: &ModelSpec, batch: &BatchSpec, p: &ParallelismConfig) -> u64 {
    2 * (model.hidden_dim / p.tp) * (model.seq_len / p.cp) * batch.microbatch_size
}

/// Chunk-chain crossings of each stage boundary per microbatch per direction.
///
/// Boundary `i` is the adjacent-stage pair {i, (i+1) % pp}; the last entry is
/// the wrap-around pair {pp-1, 0}. A crossing is one hop of the chunk chain
/// c -> c+1 whose stages differ, counted whichever way it traverses the pair.
pub fn boundary_hops_per_microbatch(p: &ParallelismConfig) -> Vec<u64> {
    let pp = p.pp as usize;
    let mut hops = vec![0u64; pp];
    if pp <= 1 {
        return hops;
    }
    for c in 0..p.num_chunks().saturating_sub(1) {
        let a = p.chunk_stage(c);
        let b = p.chunk_stage(c + 1);
        if a == b {
            continue;
        }
        // Adjacent stages only: either b = a+1 (forward) or a = b+1 (the ZBV
        // up-leg), or the wrap-around pair.
        let boundary = if b == (a + 1) % pp {
            a
        } else if a == (b + 1) % pp {
            b
        } else {
            unreachable!("chunk chain hops non-adjacent stages: {a} -> {b}");
        };
        hops[boundary] += 1;
    }
    hops
}

/// Transfers per iteration per stage boundary, both directions combined
/// (forward activation + backward gradient).
pub fn pp_p2p_count(batch: &BatchSpec, p: &ParallelismConfig) -> Vec<u64> {
    let mb = num_microbatches(batch, p).unwrap_or(0);
    boundary_hops_per_microbatch(p)
        .into_iter()
        .map(|h| 2 * mb * h)
        .collect()
}

/// Elements exchanged per layer per direction by DP synchronization:
/// `(4H^2 + 3HF) / tp` dense, `(4H^2 + 3H*F_e*E/ep) / tp` MoE.
/// One parameter AllGather and one gradient ReduceScatter each move this
/// volume per layer per iteration.
pub fn dp_layer_elements(model: &ModelSpec, p: &ParallelismConfig) -> u64 {
    model.layer_param_elements_per_gpu(p.tp, p.ep.max(1))
}

/// Bytes per iteration crossing building boundaries under the configuration's
/// placement.
///
/// DP-out counts the per-layer AllGather + ReduceScatter payloads (for HSDP,
/// the single leader-level gradient AllReduce of the replica-sharded volume);
/// the total is independent of the microbatch count. PP-out counts every
/// boundary transfer on a building-crossing stage pair and is linear in the
/// microbatch count.
pub fn cross_building_bytes(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
) -> u64 {
    let placement = resolve_placement(topo, p.pp, p.placement);
    let bpe = model.bytes_per_element as u128;
    match p.placement {
        Placement::DpOut => {
            if placement.dp_outer != LinkClass::CrossBuilding {
                return 0;
            }
            let per_layer = dp_layer_elements(model, p) as u128;
            let layers = model.num_layers as u128;
            let payload = match p.dp_scheme {
                DpScheme::Fsdp => 2 * layers * per_layer,
                DpScheme::Hsdp { .. } => {
                    let shard = p.shard_degree().max(1) as u128;
                    layers * per_layer / shard
                }
            };
            (payload * bpe) as u64
        }
        Placement::PpOut => {
            let elems = pp_p2p_elements(model, batch, p) as u128;
            let counts = pp_p2p_count(batch, p);
            let total: u128 = placement
                .pp_boundaries
                .iter()
                .zip(counts.iter())
                .filter(|(b, _)| b.class == LinkClass::CrossBuilding)
                .map(|(_, &n)| n as u128 * elems * bpe)
                .sum();
            total as u64
        }
    }
}
