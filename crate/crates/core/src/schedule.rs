//! Kernel dependency DAG construction for pipeline schedules.
//!
//! A configuration becomes a graph of typed kernels: chunk compute kernels,
//! PP send/recv kernels per stage boundary, and DP collective kernels. Each
//! kernel carries two durations, one per placement (DP-out and PP-out), so a
//! single reconstruction sweep evaluates both. Resource exclusivity is
//! encoded purely as edges: per-rank compute kernels form a total order
//! (stream chain), transfers on one boundary direction are chained, and DP
//! collectives chain per rank. Communication kernels sit on separate streams
//! so they overlap compute unless a dependency says otherwise.
//!
//! The per-rank compute order comes from a unit-time list simulation: forwards
//! follow each schedule's canonical sequence gated by a warmup window, input
//! gradients (dx) run as their upstream gradients arrive, and deferred weight
//! gradients (dw) fill whatever slots remain. The simulation uses unit
//! durations, so the DAG shape never depends on link parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assumptions::Assumptions;
use crate::error::{Error, Result};
use crate::link::{chunk_compute_time, CollectiveKind, ComputePhase, LinkProfile, LinkTiming};
use crate::model::{
    num_microbatches, validate_config, BatchSpec, DpScheme, ModelSpec, ParallelismConfig,
    Placement, Schedule,
};
use crate::placement::resolve_placement;
use crate::topology::{LinkClass, Topology};
use crate::volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Fwd,
    Bwd,
}

/// Level of a DP collective: FSDP runs a single (outer) level; HSDP splits
/// into an intra-group level and a cross-group leader level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpLevel {
    Outer,
    Intra,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    ChunkCompute {
        chunk: usize,
        microbatch: u64,
        phase: ComputePhase,
    },
    PpSend {
        boundary: usize,
        chunk: usize,
        microbatch: u64,
        direction: Direction,
    },
    PpRecv {
        boundary: usize,
        chunk: usize,
        microbatch: u64,
        direction: Direction,
    },
    DpCollective {
        chunk: usize,
        op: CollectiveKind,
        level: DpLevel,
    },
}

impl KernelKind {
    pub fn is_compute(&self) -> bool {
        matches!(self, KernelKind::ChunkCompute { .. })
    }

    pub fn short_label(&self) -> String {
        match self {
            KernelKind::ChunkCompute { chunk, microbatch, phase } => {
                let tag = match phase {
                    ComputePhase::Fwd => "f",
                    ComputePhase::BwdDx => "dx",
                    ComputePhase::BwdDw => "dw",
                    ComputePhase::BwdFused => "b",
                };
                format!("{tag}{chunk}.{microbatch}")
            }
            KernelKind::PpSend { chunk, microbatch, direction, .. } => {
                let d = if *direction == Direction::Fwd { "sf" } else { "sb" };
                format!("{d}{chunk}.{microbatch}")
            }
            KernelKind::PpRecv { chunk, microbatch, direction, .. } => {
                let d = if *direction == Direction::Fwd { "rf" } else { "rb" };
                format!("{d}{chunk}.{microbatch}")
            }
            KernelKind::DpCollective { chunk, op, level } => {
                let o = match op {
                    CollectiveKind::AllGather => "ag",
                    CollectiveKind::ReduceScatter => "rs",
                    CollectiveKind::AllReduce => "ar",
                };
                let l = match level {
                    DpLevel::Outer => "",
                    DpLevel::Intra => "i",
                    DpLevel::Cross => "x",
                };
                format!("{o}{l}{chunk}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub id: usize,
    pub kind: KernelKind,
    pub rank: usize,
    /// Duration when DP rides the cross-building network.
    pub dur_dp_out: f64,
    /// Duration when PP rides the cross-building network.
    pub dur_pp_out: f64,
}

/// Transfer chains per link class, used for concurrency accounting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConcurrencyCounts {
    pub dp_out: BTreeMap<String, usize>,
    pub pp_out: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagMeta {
    pub pp: u64,
    pub num_chunks: usize,
    pub num_microbatches: u64,
    pub schedule: Schedule,
    pub dp_scheme: DpScheme,
    pub cross_building_bytes_dp_out: u64,
    pub cross_building_bytes_pp_out: u64,
    /// Concurrent transfer chains per link class under each placement.
    pub concurrency: ConcurrencyCounts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelDag {
    pub kernels: Vec<Kernel>,
    /// parents[k] lists the kernels k depends on.
    pub parents: Vec<Vec<usize>>,
    /// Compute kernel ids per rank, in stream order.
    pub rank_order: Vec<Vec<usize>>,
    pub meta: DagMeta,
}

impl KernelDag {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    fn push(&mut self, kind: KernelKind, rank: usize, dur_dp: f64, dur_pp: f64) -> usize {
        let id = self.kernels.len();
        self.kernels.push(Kernel {
            id,
            kind,
            rank,
            dur_dp_out: dur_dp,
            dur_pp_out: dur_pp,
        });
        self.parents.push(Vec::new());
        id
    }

    fn add_edge(&mut self, parent: usize, child: usize) {
        self.parents[child].push(parent);
    }

    /// Per-rank compute order as compact labels, one string per rank. This is
    /// the format stored in golden schedule fixtures.
    pub fn rank_order_labels(&self) -> Vec<String> {
        self.rank_order
            .iter()
            .map(|ids| {
                ids.iter()
                    .map(|&id| self.kernels[id].kind.short_label())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    /// Number of PP send kernels per boundary (both directions combined).
    pub fn pp_sends_per_boundary(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.meta.pp as usize];
        for k in &self.kernels {
            if let KernelKind::PpSend { boundary, .. } = k.kind {
                counts[boundary] += 1;
            }
        }
        counts
    }
}

/// One hop of the chunk chain that crosses stages.
#[derive(Debug, Clone, Copy)]
struct Hop {
    from_chunk: usize,
    boundary: usize,
    from_stage: usize,
    to_stage: usize,
}

fn chain_hops(p: &ParallelismConfig) -> Vec<Hop> {
    let pp = p.pp as usize;
    let mut hops = Vec::new();
    for c in 0..p.num_chunks().saturating_sub(1) {
        let a = p.chunk_stage(c);
        let b = p.chunk_stage(c + 1);
        if a == b {
            continue;
        }
        let boundary = if b == (a + 1) % pp { a } else { b };
        hops.push(Hop {
            from_chunk: c,
            boundary,
            from_stage: a,
            to_stage: b,
        });
    }
    hops
}

/// Warmup window: how many forwards a rank may run ahead of its completed
/// input-gradient count.
fn warmup_window(p: &ParallelismConfig, rank: usize) -> u64 {
    let pp = p.pp;
    let r = rank as u64;
    let v = (p.num_chunks() as u64) / pp;
    match p.schedule {
        Schedule::OneFOneB => pp - r - 1,
        // Stage-depth slack plus one microbatch group per additional chunk
        // on the rank.
        Schedule::DoraPP => (pp - r - 1) * 2 + (v - 1) * pp,
        // The V's gradient takes a full down-and-up round trip before the
        // first dx frees the window, so ZBV needs deeper warmup slack.
        Schedule::InterleavedZbv => (pp - r - 1) * 2 + (v - 1) * pp + 2 * pp,
    }
}

/// Canonical forward issue order of a rank: the key sorts the rank's forward
/// kernels into the schedule's sequence.
///
/// Interleaved schedules run groups of up to pp microbatches per chunk
/// before switching to the rank's next chunk, so a chunk's weights are
/// touched once per group. The rank-local chunk position follows the chunk
/// index, which is the issue order for both the round-robin and the V
/// assignment.
fn fwd_seq_key(p: &ParallelismConfig, mb_count: u64, chunk: usize, mb: u64) -> (u64, u64, u64) {
    match p.schedule {
        // Single chunk per stage: plain microbatch order.
        Schedule::OneFOneB => (mb, 0, 0),
        Schedule::DoraPP | Schedule::InterleavedZbv => {
            let g = p.pp.min(mb_count).max(1);
            let stage = p.chunk_stage(chunk);
            let local = (0..chunk).filter(|&c| p.chunk_stage(c) == stage).count() as u64;
            (mb / g, local, mb % g)
        }
    }
}

struct SimKernel {
    chunk: usize,
    mb: u64,
    phase: ComputePhase,
    rank: usize,
    remaining: usize,
    /// (child index, extra ticks before the child sees the completion).
    children: Vec<(usize, u64)>,
}

fn enqueue_ready(
    idx: usize,
    tick: u64,
    comp: &[SimKernel],
    num_chunks: u64,
    fwd_pos: &[u64],
    fwd_ready: &mut [BTreeMap<u64, usize>],
    dx_ready: &mut [BTreeMap<(u64, u64), usize>],
    dw_ready: &mut [BTreeMap<(u64, u64, u64), usize>],
) {
    let k = &comp[idx];
    match k.phase {
        ComputePhase::Fwd => {
            fwd_ready[k.rank].insert(fwd_pos[idx], idx);
        }
        ComputePhase::BwdDx | ComputePhase::BwdFused => {
            dx_ready[k.rank].insert((num_chunks - 1 - k.chunk as u64, k.mb), idx);
        }
        ComputePhase::BwdDw => {
            dw_ready[k.rank].insert((tick, k.chunk as u64, k.mb), idx);
        }
    }
}

/// Unit-time list simulation fixing the per-rank compute order.
///
/// Returns (per-rank ordered compute indices, completion tick per kernel).
fn simulate_order(
    p: &ParallelismConfig,
    mb_count: u64,
    comp: &mut [SimKernel],
) -> (Vec<Vec<usize>>, Vec<u64>) {
    let pp = p.pp as usize;
    let num_chunks = p.num_chunks() as u64;

    // Ready sets per rank. Forwards are keyed by the canonical sequence and
    // the lowest-keyed ready forward runs next (subject to the warmup
    // window); dx by (reverse chunk, microbatch) so the gradient chain keeps
    // flowing upstream; dw in arrival order.
    let mut fwd_ready: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); pp];
    
    let mut fwd_pos: Vec<u64> = vec![0; comp.len()];
    let mut dx_ready: Vec<BTreeMap<(u64, u64), usize>> = vec![BTreeMap::new(); pp];
    let mut dw_ready: Vec<BTreeMap<(u64, u64, u64), usize>> = vec![BTreeMap::new(); pp];
    let mut dx_done: Vec<u64> = vec![0; pp];

    // Precompute each forward's position in its rank's sequence.
    {
        let mut keys: Vec<Vec<((u64, u64, u64), usize)>> = vec![Vec::new(); pp];
        for (i, k) in comp.iter().enumerate() {
            if k.phase == ComputePhase::Fwd {
                keys[k.rank].push((fwd_seq_key(p, mb_count, k.chunk, k.mb), i));
            }
        }
        for rank_keys in keys.iter_mut() {
            rank_keys.sort();
            for (pos, &(_, idx)) in rank_keys.iter().enumerate() {
                fwd_pos[idx] = pos as u64;
            }
        }
    }

    let mut order: Vec<Vec<usize>> = vec![Vec::new(); pp];
    let mut finish_tick = vec![0u64; comp.len()];
    let mut done = 0usize;
    let total = comp.len();

    for i in 0..comp.len() {
        if comp[i].remaining == 0 {
            enqueue_ready(i, 0, comp, num_chunks, &fwd_pos, &mut fwd_ready, &mut dx_ready, &mut dw_ready);
        }
    }

    let prefer_dx = p.schedule == Schedule::InterleavedZbv;
    let mut in_flight: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut tick: u64 = 0;
    let max_ticks = (total as u64 + 8) * 4 + 64;
    while done < total {
        assert!(tick <= max_ticks, "schedule simulation did not converge");
        if let Some(arrivals) = in_flight.remove(&tick) {
            for child in arrivals {
                comp[child].remaining -= 1;
                if comp[child].remaining == 0 {
                    enqueue_ready(
                        child,
                        tick,
                        comp,
                        num_chunks,
                        &fwd_pos,
                        &mut fwd_ready,
                        &mut dx_ready,
                        &mut dw_ready,
                    );
                }
            }
        }
        let mut completed_now: Vec<usize> = Vec::new();
        for rank in 0..pp {
            // Lowest-keyed ready forward whose canonical position is inside
            // the warmup window: execution may skip past unready earlier
            // positions, but never runs further ahead of the completed input
            // gradients than the window allows.
            let fwd_pick = fwd_ready[rank].iter().next().and_then(|(&pos, &idx)| {
                if pos < dx_done[rank] + warmup_window(p, rank) + 1 {
                    Some(idx)
                } else {
                    None
                }
            });
            let dx_pick = dx_ready[rank].iter().next().map(|(_, &idx)| idx);
            let pick = match (fwd_pick, dx_pick) {
                (Some(f), Some(d)) => Some(if prefer_dx { d } else { f }),
                (Some(f), None) => Some(f),
                (None, Some(d)) => Some(d),
                (None, None) => dw_ready[rank].iter().next().map(|(_, &idx)| idx),
            };
            let Some(idx) = pick else { continue };
            match comp[idx].phase {
                ComputePhase::Fwd => {
                    fwd_ready[rank].remove(&fwd_pos[idx]);
                    
                }
                ComputePhase::BwdDx | ComputePhase::BwdFused => {
                    dx_ready[rank]
                        .remove(&(num_chunks - 1 - comp[idx].chunk as u64, comp[idx].mb));
                    dx_done[rank] += 1;
                }
                ComputePhase::BwdDw => {
                    let key = dw_ready[rank]
                        .iter()
                        .find(|&(_, &i)| i == idx)
                        .map(|(k, _)| *k)
                        .unwrap();
                    dw_ready[rank].remove(&key);
                }
            }
            order[rank].push(idx);
            finish_tick[idx] = tick + 1;
            completed_now.push(idx);
            done += 1;
        }
        for idx in completed_now {
            let children = std::mem::take(&mut comp[idx].children);
            for &(child, delay) in &children {
                if delay == 0 {
                    comp[child].remaining -= 1;
                    if comp[child].remaining == 0 {
                        enqueue_ready(
                            child,
                            tick + 1,
                            comp,
                            num_chunks,
                            &fwd_pos,
                            &mut fwd_ready,
                            &mut dx_ready,
                            &mut dw_ready,
                        );
                    }
                } else {
                    in_flight.entry(tick + 1 + delay).or_default().push(child);
                }
            }
            comp[idx].children = children;
        }
        tick += 1;
    }
    (order, finish_tick)
}

/// Link timing contexts under both placements: index 0 = DP-out, 1 = PP-out.
struct DualTimings {
    boundaries: Vec<[LinkTiming; 2]>,
    dp_outer: [LinkTiming; 2],
    dp_inner: [LinkTiming; 2],
}

/// Largest latency on the ring order of buildings; the DP ring crosses every
/// adjacent building pair and the slowest hop paces the collective.
fn dp_ring_latency_us(topo: &Topology) -> f64 {
    let b = topo.num_buildings();
    if b <= 1 {
        return topo.link_classes.cross_building.latency_us;
    }
    (0..b)
        .map(|i| topo.building_pair_latency_us(i, (i + 1) % b))
        .fold(0.0f64, f64::max)
}

fn dual_timings(
    topo: &Topology,
    p: &ParallelismConfig,
    assumptions: &Assumptions,
    seed: u64,
) -> DualTimings {
    let dp_map = resolve_placement(topo, p.pp, Placement::DpOut);
    let pp_map = resolve_placement(topo, p.pp, Placement::PpOut);
    let timing = |class: LinkClass, pair: Option<(usize, usize)>, ring_dp: bool| {
        let mut profile = LinkProfile::from_class(topo, class, pair);
        if ring_dp && class == LinkClass::CrossBuilding {
            profile.latency_us = dp_ring_latency_us(topo);
        }
        LinkTiming::new(profile, assumptions, seed ^ class as u64)
    };
    let boundaries = (0..p.pp as usize)
        .map(|b| {
            [
                timing(
                    dp_map.pp_boundaries[b].class,
                    dp_map.pp_boundaries[b].building_pair,
                    false,
                ),
                timing(
                    pp_map.pp_boundaries[b].class,
                    pp_map.pp_boundaries[b].building_pair,
                    false,
                ),
            ]
        })
        .collect();
    DualTimings {
        boundaries,
        dp_outer: [
            timing(dp_map.dp_outer, None, true),
            timing(pp_map.dp_outer, None, true),
        ],
        dp_inner: [
            timing(dp_map.dp_inner, None, false),
            timing(pp_map.dp_inner, None, false),
        ],
    }
}

fn check_buildable(model: &ModelSpec, batch: &BatchSpec, p: &ParallelismConfig) -> Result<u64> {
    let mut violations = Vec::new();
    if !p.chunk_structure_ok() {
        violations.push(format!(
            "chunk count {} is not valid for schedule {} with pp = {}",
            p.num_chunks(),
            p.schedule,
            p.pp
        ));
    }
    if p.chunk_partition.iter().sum::<u64>() != model.num_layers {
        violations.push(format!(
            "chunk partition must sum to num_layers = {}",
            model.num_layers
        ));
    }
    if p.chunk_partition.contains(&0) {
        violations.push("every chunk needs at least one layer".to_string());
    }
    let mb = match num_microbatches(batch, p) {
        Ok(mb) => mb,
        Err(e) => {
            violations.push(e.to_string());
            0
        }
    };
    if violations.is_empty() {
        Ok(mb)
    } else {
        Err(Error::InvalidConfig { violations })
    }
}

/// Build the pipeline-schedule DAG (compute + PP communication kernels) for
/// the configuration's schedule. DP collectives are attached separately.
pub fn build_schedule(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
    seed: u64,
) -> Result<KernelDag> {
    let mb_count = check_buildable(model, batch, p)?;
    let pp = p.pp as usize;
    let chunks = p.num_chunks();
    let split = p.schedule != Schedule::OneFOneB;
    let timings = dual_timings(topo, p, assumptions, seed);

    // Compute kernel ids: fwd block, then dx/fused block, then dw block.
    let n_fwd = chunks * mb_count as usize;
    let fwd_id = move |c: usize, i: u64| c * mb_count as usize + i as usize;
    let dx_id = move |c: usize, i: u64| n_fwd + c * mb_count as usize + i as usize;
    let dw_id = move |c: usize, i: u64| 2 * n_fwd + c * mb_count as usize + i as usize;

    let mut comp: Vec<SimKernel> = Vec::with_capacity(if split { 3 * n_fwd } else { 2 * n_fwd });
    let mut push_phase = |phase: ComputePhase| {
        for c in 0..chunks {
            for i in 0..mb_count {
                comp.push(SimKernel {
                    chunk: c,
                    mb: i,
                    phase,
                    rank: p.chunk_stage(c),
                    remaining: 0,
                    children: Vec::new(),
                });
            }
        }
    };
    push_phase(ComputePhase::Fwd);
    push_phase(if split { ComputePhase::BwdDx } else { ComputePhase::BwdFused });
    if split {
        push_phase(ComputePhase::BwdDw);
    }

    let add_dep = |parent: usize, child: usize, comp: &mut Vec<SimKernel>| {
        // Cross-rank handoffs cost one tick in the ordering simulation, so
        // the fixed stream order leaves room for transfers in flight.
        let delay = u64::from(comp[parent].rank != comp[child].rank);
        comp[parent].children.push((child, delay));
        comp[child].remaining += 1;
    };
    for c in 0..chunks {
        for i in 0..mb_count {
            if c > 0 {
                add_dep(fwd_id(c - 1, i), fwd_id(c, i), &mut comp);
            }
            add_dep(fwd_id(c, i), dx_id(c, i), &mut comp);
            if c + 1 < chunks {
                add_dep(dx_id(c + 1, i), dx_id(c, i), &mut comp);
            }
            if split {
                add_dep(dx_id(c, i), dw_id(c, i), &mut comp);
            }
        }
    }
    let (rank_order, finish_tick) = simulate_order(p, mb_count, &mut comp);

    let cross_dp = {
        let mut q = p.clone();
        q.placement = Placement::DpOut;
        volume::cross_building_bytes(model, batch, &q, topo)
    };
    let cross_pp = {
        let mut q = p.clone();
        q.placement = Placement::PpOut;
        volume::cross_building_bytes(model, batch, &q, topo)
    };
    let mut dag = KernelDag {
        kernels: Vec::with_capacity(comp.len() * 2),
        parents: Vec::new(),
        rank_order: vec![Vec::new(); pp],
        meta: DagMeta {
            pp: p.pp,
            num_chunks: chunks,
            num_microbatches: mb_count,
            schedule: p.schedule,
            dp_scheme: p.dp_scheme,
            cross_building_bytes_dp_out: cross_dp,
            cross_building_bytes_pp_out: cross_pp,
            concurrency: ConcurrencyCounts::default(),
        },
    };

    // Compute kernels first, so their ids equal the simulation indices.
    let gpu = &topo.gpu;
    for k in comp.iter() {
        let layers = p.chunk_partition[k.chunk];
        let dur = chunk_compute_time(
            model,
            layers,
            p,
            batch.microbatch_size,
            k.phase,
            gpu,
            assumptions,
        );
        dag.push(
            KernelKind::ChunkCompute {
                chunk: k.chunk,
                microbatch: k.mb,
                phase: k.phase,
            },
            k.rank,
            dur,
            dur,
        );
    }

    // Per-rank stream chains.
    for rank in 0..pp {
        for pair in rank_order[rank].windows(2) {
            dag.add_edge(pair[0], pair[1]);
        }
        dag.rank_order[rank] = rank_order[rank].clone();
    }

    // Dataflow edges between compute kernels on the same stage.
    for c in 0..chunks {
        for i in 0..mb_count {
            if c > 0 && p.chunk_stage(c - 1) == p.chunk_stage(c) {
                dag.add_edge(fwd_id(c - 1, i), fwd_id(c, i));
            }
            dag.add_edge(fwd_id(c, i), dx_id(c, i));
            if c + 1 < chunks && p.chunk_stage(c + 1) == p.chunk_stage(c) {
                dag.add_edge(dx_id(c + 1, i), dx_id(c, i));
            }
            if split {
                dag.add_edge(dx_id(c, i), dw_id(c, i));
            }
        }
    }

    // PP transfers. Transfers whose payloads ride the same physical pipe
    // (ordered stage pair: one direction of one adjacent-stage link) form a
    // serialized chain, so a boundary's activations and the wrap-around
    // boundary's gradients flowing the same way compete for that pipe.
    // Recvs are zero-duration completion markers. When several stage-pair
    // pipes collapse onto one building-pair direction under a placement,
    // they fair-share its bandwidth; this is where DoraPP's wrap-around
    // pattern pays on the cross-building network and ZBV's V does not.
    let bytes = volume::pp_p2p_elements(model, batch, p) * model.bytes_per_element;
    let hops = chain_hops(p);
    // (from_stage, to_stage) -> [(ready tick, mb, hop index, producer, payload dir)]
    let mut pipes: BTreeMap<(usize, usize), Vec<(u64, u64, usize, usize, Direction)>> =
        BTreeMap::new();
    for (h, hop) in hops.iter().enumerate() {
        for i in 0..mb_count {
            let producer_fwd = fwd_id(hop.from_chunk, i);
            pipes
                .entry((hop.from_stage, hop.to_stage))
                .or_default()
                .push((finish_tick[producer_fwd], i, h, producer_fwd, Direction::Fwd));
            let producer_bwd = dx_id(hop.from_chunk + 1, i);
            pipes
                .entry((hop.to_stage, hop.from_stage))
                .or_default()
                .push((finish_tick[producer_bwd], i, h, producer_bwd, Direction::Bwd));
        }
    }
    let buildings = topo.num_buildings();
    // Physical grouping of a pipe under each placement: the ordered building
    // pair when the stages sit in different buildings (PP-out), otherwise
    // the pipe itself.
    let pipe_group = |pl: Placement, from: usize, to: usize| -> (bool, usize, usize) {
        if pl == Placement::PpOut {
            let a = crate::placement::stage_building(from, pp, buildings);
            let b = crate::placement::stage_building(to, pp, buildings);
            if a != b {
                return (true, a, b);
            }
        }
        (false, from, to)
    };
    let pipe_keys: Vec<(usize, usize)> = pipes.keys().copied().collect();
    let share_of = |pl: Placement, from: usize, to: usize| -> u32 {
        let key = pipe_group(pl, from, to);
        pipe_keys
            .iter()
            .filter(|&&(f, t)| pipe_group(pl, f, t) == key)
            .count() as u32
    };
    for ((from_stage, to_stage), mut entries) in pipes {
        entries.sort();
        // Both orientations of a stage pair share the boundary index, hence
        // the same link class and building-pair latency.
        let boundary = {
            let hop = &hops[entries[0].2];
            hop.boundary
        };
        let timing_dp = timings.boundaries[boundary][0]
            .shared(share_of(Placement::DpOut, from_stage, to_stage));
        let timing_pp = timings.boundaries[boundary][1]
            .shared(share_of(Placement::PpOut, from_stage, to_stage));
        let dur_dp = timing_dp.p2p_time(bytes);
        let dur_pp = timing_pp.p2p_time(bytes);
        let mut prev_send: Option<usize> = None;
        for (_, i, h, producer, direction) in entries {
            let hop = &hops[h];
            let consumer = match direction {
                Direction::Fwd => fwd_id(hop.from_chunk + 1, i),
                Direction::Bwd => dx_id(hop.from_chunk, i),
            };
            let send = dag.push(
                KernelKind::PpSend {
                    boundary: hop.boundary,
                    chunk: hop.from_chunk,
                    microbatch: i,
                    direction,
                },
                from_stage,
                dur_dp,
                dur_pp,
            );
            dag.add_edge(producer, send);
            if let Some(prev) = prev_send {
                dag.add_edge(prev, send);
            }
            prev_send = Some(send);
            let recv = dag.push(
                KernelKind::PpRecv {
                    boundary: hop.boundary,
                    chunk: hop.from_chunk,
                    microbatch: i,
                    direction,
                },
                to_stage,
                0.0,
                0.0,
            );
            dag.add_edge(send, recv);
            dag.add_edge(recv, consumer);
        }
    }

    dag.meta.concurrency = concurrency_counts(&dag, p, topo);
    Ok(dag)
}

fn concurrency_counts(dag: &KernelDag, p: &ParallelismConfig, topo: &Topology) -> ConcurrencyCounts {
    let dp_map = resolve_placement(topo, p.pp, Placement::DpOut);
    let pp_map = resolve_placement(topo, p.pp, Placement::PpOut);
    let mut counts = ConcurrencyCounts::default();
    let mut seen: std::collections::BTreeSet<(usize, Direction)> = Default::default();
    for k in &dag.kernels {
        if let KernelKind::PpSend { boundary, direction, .. } = k.kind {
            if seen.insert((boundary, direction)) {
                *counts
                    .dp_out
                    .entry(dp_map.pp_boundaries[boundary].class.to_string())
                    .or_default() += 1;
                *counts
                    .pp_out
                    .entry(pp_map.pp_boundaries[boundary].class.to_string())
                    .or_default() += 1;
            }
        }
    }
    counts
}

/// Wire per-chunk DP collective kernels into a built schedule DAG.
///
/// FSDP adds a parameter AllGather gating each chunk's first forward (chained
/// per rank, so the next chunk's prefetch overlaps the current chunk's
/// compute) and a gradient ReduceScatter hanging off each chunk's last weight
/// gradient. HSDP splits the gradient path into an intra-group ReduceScatter
/// followed by a cross-group AllReduce of the per-leader shard.
pub fn attach_dp(
    mut dag: KernelDag,
    model: &ModelSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
    seed: u64,
) -> KernelDag {
    if p.dp <= 1 {
        return dag;
    }
    let timings = dual_timings(topo, p, assumptions, seed);
    let layer_elems = volume::dp_layer_elements(model, p);
    let chunks = dag.meta.num_chunks;

    // Locate each chunk's first forward and last backward weight kernel in
    // its rank's stream order.
    let mut first_fwd: Vec<Option<(usize, usize)>> = vec![None; chunks]; // (pos, id)
    let mut last_bwd: Vec<Option<(usize, usize)>> = vec![None; chunks];
    for rank_ids in &dag.rank_order {
        for (pos, &id) in rank_ids.iter().enumerate() {
            if let KernelKind::ChunkCompute { chunk, phase, .. } = dag.kernels[id].kind {
                match phase {
                    ComputePhase::Fwd => {
                        if first_fwd[chunk].is_none() {
                            first_fwd[chunk] = Some((pos, id));
                        }
                    }
                    ComputePhase::BwdDw | ComputePhase::BwdFused => {
                        last_bwd[chunk] = Some((pos, id));
                    }
                    ComputePhase::BwdDx => {}
                }
            }
        }
    }

    let (replica_groups, shard) = match p.dp_scheme {
        DpScheme::Fsdp => (1, p.dp),
        DpScheme::Hsdp { replica_groups } => (replica_groups, p.dp / replica_groups.max(1)),
    };
    let hsdp = matches!(p.dp_scheme, DpScheme::Hsdp { .. }) && replica_groups > 1;

    let pp = dag.meta.pp as usize;
    let mut ag_chain: Vec<Option<usize>> = vec![None; pp];
    let mut rs_chain: Vec<Option<usize>> = vec![None; pp];
    let mut ar_chain: Vec<Option<usize>> = vec![None; pp];

    // Parameter AllGathers in each rank's first-use order.
    let mut by_first_use: Vec<(usize, usize)> = first_fwd
        .iter()
        .enumerate()
        .filter_map(|(c, v)| v.map(|(pos, _)| (pos, c)))
        .collect();
    by_first_use.sort();
    for &(_, c) in &by_first_use {
        let rank = p.chunk_stage(c);
        let vol = layer_elems * p.chunk_partition[c] * model.bytes_per_element;
        let (level, group, tims) = if hsdp {
            (DpLevel::Intra, shard, &timings.dp_inner)
        } else {
            (DpLevel::Outer, p.dp, &timings.dp_outer)
        };
        if group <= 1 {
            continue;
        }
        let dur_dp = tims[0].collective_time(CollectiveKind::AllGather, vol, group);
        let dur_pp = tims[1].collective_time(CollectiveKind::AllGather, vol, group);
        let ag = dag.push(
            KernelKind::DpCollective {
                chunk: c,
                op: CollectiveKind::AllGather,
                level,
            },
            rank,
            dur_dp,
            dur_pp,
        );
        if let Some(prev) = ag_chain[rank] {
            dag.add_edge(prev, ag);
        }
        ag_chain[rank] = Some(ag);
        let (_, fwd) = first_fwd[c].unwrap();
        dag.add_edge(ag, fwd);
    }

    // Gradient ReduceScatters (plus HSDP cross AllReduce) in last-bwd order.
    let mut by_last_bwd: Vec<(usize, usize)> = last_bwd
        .iter()
        .enumerate()
        .filter_map(|(c, v)| v.map(|(pos, _)| (pos, c)))
        .collect();
    by_last_bwd.sort();
    for &(_, c) in &by_last_bwd {
        let rank = p.chunk_stage(c);
        let vol = layer_elems * p.chunk_partition[c] * model.bytes_per_element;
        let (_, bwd) = last_bwd[c].unwrap();
        let (level, group, tims) = if hsdp {
            (DpLevel::Intra, shard, &timings.dp_inner)
        } else {
            (DpLevel::Outer, p.dp, &timings.dp_outer)
        };
        let mut tail = bwd;
        if group > 1 {
            let dur_dp = tims[0].collective_time(CollectiveKind::ReduceScatter, vol, group);
            let dur_pp = tims[1].collective_time(CollectiveKind::ReduceScatter, vol, group);
            let rs = dag.push(
                KernelKind::DpCollective {
                    chunk: c,
                    op: CollectiveKind::ReduceScatter,
                    level,
                },
                rank,
                dur_dp,
                dur_pp,
            );
            dag.add_edge(bwd, rs);
            if let Some(prev) = rs_chain[rank] {
                dag.add_edge(prev, rs);
            }
            rs_chain[rank] = Some(rs);
            tail = rs;
        }
        if hsdp {
            let shard_vol = vol / shard.max(1);
            let dur_dp = timings.dp_outer[0].collective_time(
                CollectiveKind::AllReduce,
                shard_vol,
                replica_groups,
            );
            let dur_pp = timings.dp_outer[1].collective_time(
                CollectiveKind::AllReduce,
                shard_vol,
                replica_groups,
            );
            let ar = dag.push(
                KernelKind::DpCollective {
                    chunk: c,
                    op: CollectiveKind::AllReduce,
                    level: DpLevel::Cross,
                },
                rank,
                dur_dp,
                dur_pp,
            );
            dag.add_edge(tail, ar);
            if let Some(prev) = ar_chain[rank] {
                dag.add_edge(prev, ar);
            }
            ar_chain[rank] = Some(ar);
        }
    }

    dag
}

fn expect_schedule(p: &ParallelismConfig, expected: Schedule) -> Result<()> {
    if p.schedule != expected {
        return Err(Error::InvalidConfig {
            violations: vec![format!(
                "builder for {expected} called with schedule {}",
                p.schedule
            )],
        });
    }
    Ok(())
}

pub fn build_dorapp(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
    seed: u64,
) -> Result<KernelDag> {
    expect_schedule(p, Schedule::DoraPP)?;
    build_schedule(model, batch, p, topo, assumptions, seed)
}

pub fn build_zbv(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
    seed: u64,
) -> Result<KernelDag> {
    expect_schedule(p, Schedule::InterleavedZbv)?;
    build_schedule(model, batch, p, topo, assumptions, seed)
}

pub fn build_1f1b(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
    seed: u64,
) -> Result<KernelDag> {
    expect_schedule(p, Schedule::OneFOneB)?;
    if p.num_chunks() as u64 != p.pp {
        return Err(Error::InvalidConfig {
            violations: vec![format!(
                "1f1b requires exactly one chunk per stage; got {} chunks for pp = {}",
                p.num_chunks(),
                p.pp
            )],
        });
    }
    build_schedule(model, batch, p, topo, assumptions, seed)
}

/// Full pipeline: validate, build the schedule DAG, and attach DP kernels.
pub fn build_full(
    model: &ModelSpec,
    batch: &BatchSpec,
    p: &ParallelismConfig,
    topo: &Topology,
    assumptions: &Assumptions,
    seed: u64,
) -> Result<KernelDag> {
    let violations = validate_config(model, batch, p, topo, assumptions);
    if !violations.is_empty() {
        return Err(Error::InvalidConfig { violations });
    }
    let dag = build_schedule(model, batch, p, topo, assumptions, seed)?;
    Ok(attach_dp(dag, model, p, topo, assumptions, seed))
}
