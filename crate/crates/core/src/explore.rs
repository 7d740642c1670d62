//! Configuration search: heuristic enumeration of parallelism tuples,
//! Monte-Carlo layer-partition search with an exploration and an
//! exploitation phase, early pruning of the PP-out pipeline-depth axis, and
//! network-layer recommendations for the winning configuration.
//!
//! Candidate evaluation is embarrassingly parallel. Work is distributed over
//! a thread pool as (candidate index, template) tasks; every candidate
//! derives its RNG stream from (seed, index) and results merge by index, so
//! the outcome is identical regardless of scheduling order or thread count.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assumptions::Assumptions;
use crate::error::{Error, Result};
use crate::link::GBPS_TO_BYTES_PER_SEC;
use crate::model::{
    memory_estimate, num_microbatches, validate_config, BatchSpec, DpScheme, ModelSpec,
    ParallelismConfig, Placement, Schedule,
};
use crate::reconstruct::{bubble_fraction, reconstruct};
use crate::report::{ExplorationReport, ReportEntry};
use crate::rng::SplitMix64;
use crate::schedule::build_full;
use crate::topology::Topology;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SearchBudget {
    /// Fastest exploration survivors that enter the exploitation phase.
    pub top_k: usize,
    /// Perturbed neighbours generated per survivor.
    pub perturbations_m: usize,
    /// Chunk configurations evaluated per sampled layer partition.
    pub chunk_configs_per_partition: usize,
    /// Layer-to-stage partitions sampled per candidate template.
    pub exploration_partitions: usize,
    /// Wall-clock limit for the whole search; best-so-far on expiry.
    pub max_wall_time_s: Option<f64>,
    /// Seed fixing the full search trajectory.
    pub seed: u64,
    /// Override for the TP degrees to explore; defaults to the number of
    /// accelerators per server.
    pub tp_candidates: Option<Vec<u64>>,
    /// Largest microbatch size enumerated.
    pub max_microbatch_size: u64,
    /// Ranked entries kept in the report.
    pub max_report_entries: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            top_k: 1000,
            perturbations_m: 100,
            chunk_configs_per_partition: 100,
            exploration_partitions: 16,
            max_wall_time_s: None,
            seed: 0,
            tp_candidates: None,
            max_microbatch_size: 64,
            max_report_entries: 50,
        }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0
            || self.perturbations_m == 0
            || self.chunk_configs_per_partition == 0
            || self.exploration_partitions == 0
            || self.max_microbatch_size == 0
            || self.max_report_entries == 0
        {
            return Err(Error::InvalidConfig {
                violations: vec!["all search budget counts must be >= 1".to_string()],
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadBalancingChoice {
    Ecmp,
    PacketSpraying { required_qp_count: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionControlChoice {
    Enabled,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMitigation {
    None,
    SelectiveRedundancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkingHint {
    Balanced,
    ImbalancedTowardDistancedBuilding,
}

/// Network-layer recommendations, each with a one-line machine-readable
/// rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecommendation {
    pub load_balancing: LoadBalancingChoice,
    pub load_balancing_rationale: String,
    pub congestion_control: CongestionControlChoice,
    pub congestion_control_rationale: String,
    pub loss_mitigation: LossMitigation,
    pub loss_mitigation_rationale: String,
    pub chunking_hint: ChunkingHint,
    pub chunking_hint_rationale: String,
}

/// Sorted divisors of n.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n.is_multiple_of(i) {
            out.push(i);
            if i != n / i {
                out.push(n / i);
            }
        }
        i += 1;
    }
    out.sort_unstable();
    out
}

/// All (tp, cp, pp, dp) tuples whose product is the world size.
pub fn degree_tuples(world: u64) -> Vec<(u64, u64, u64, u64)> {
    let mut out = Vec::new();
    for tp in divisors(world) {
        for cp in divisors(world / tp) {
            for pp in divisors(world / tp / cp) {
                out.push((tp, cp, pp, world / tp / cp / pp));
            }
        }
    }
    out
}

/// A structural candidate before layer partitioning.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub tp: u64,
    pub cp: u64,
    pub ep: u64,
    pub pp: u64,
    pub dp: u64,
    pub microbatch_size: u64,
    pub schedule: Schedule,
    pub dp_scheme: DpScheme,
}

impl Template {
    fn key(&self) -> String {
        format!(
            "{}-{}-{}-{}-{} m{} {} {}",
            self.tp, self.cp, self.ep, self.pp, self.dp, self.microbatch_size, self.schedule,
            self.dp_scheme
        )
    }

    pub fn config(&self, placement: Placement, chunk_partition: Vec<u64>) -> ParallelismConfig {
        ParallelismConfig {
            tp: self.tp,
            cp: self.cp,
            ep: self.ep,
            pp: self.pp,
            dp: self.dp,
            placement,
            schedule: self.schedule,
            dp_scheme: self.dp_scheme,
            chunk_partition,
        }
    }
}

/// Layers split into `parts` nearly equal chunks.
pub fn near_uniform_partition(layers: u64, parts: usize) -> Vec<u64> {
    let parts64 = parts as u64;
    let base = layers / parts64;
    let extra = (layers % parts64) as usize;
    (0..parts)
        .map(|i| if i < extra { base + 1 } else { base })
        .collect()
}

/// Canonical (smallest valid) chunk count for a schedule.
fn canonical_chunks(schedule: Schedule, pp: u64, layers: u64) -> Option<usize> {
    let base = match schedule {
        Schedule::OneFOneB => pp,
        Schedule::DoraPP => pp,
        Schedule::InterleavedZbv => 2 * pp,
    };
    if layers < base {
        None
    } else {
        Some(base as usize)
    }
}

fn chunk_count_options(schedule: Schedule, pp: u64, layers: u64) -> Vec<usize> {
    match schedule {
        Schedule::OneFOneB => {
            if layers >= pp {
                vec![pp as usize]
            } else {
                vec![]
            }
        }
        Schedule::DoraPP => (1..=(layers / pp))
            .map(|k| (k * pp) as usize)
            .collect(),
        Schedule::InterleavedZbv => (1..=(layers / (2 * pp)))
            .map(|k| (2 * k * pp) as usize)
            .collect(),
    }
}

/// Enumerate all templates that pass validation for the given placement,
/// applying the search heuristics: TP defaults to accelerators per server,
/// CP is bounded by the context-shard floor, the microbatch count must cover
/// the pipeline depth, and memory-infeasible tuples are dropped. Returns the
/// surviving templates plus a tally of rejection reasons.
pub fn enumerate_configs(
    model: &ModelSpec,
    gbs: u64,
    topo: &Topology,
    assumptions: &Assumptions,
    budget: &SearchBudget,
    placement: Placement,
) -> (Vec<Template>, BTreeMap<String, u64>) {
    let world = topo.world_size();
    let mut rejects: BTreeMap<String, u64> = BTreeMap::new();
    let mut out = Vec::new();

    let tp_candidates: Vec<u64> = match &budget.tp_candidates {
        Some(list) => list.clone(),
        None => vec![topo.gpu.gpus_per_server.min(world)],
    };

    for &tp in &tp_candidates {
        if tp == 0 || !world.is_multiple_of(tp) {
            *rejects.entry("tp does not divide world size".into()).or_default() += 1;
            continue;
        }
        for cp in divisors(world / tp) {
            for pp in divisors(world / tp / cp) {
                let dp = world / tp / cp / pp;
                let ep_options: Vec<u64> = if model.is_dense() {
                    vec![1]
                } else {
                    divisors(dp * cp)
                        .into_iter()
                        .filter(|&e| model.num_experts.is_multiple_of(e))
                        .collect()
                };
                for ep in ep_options {
                    for m in 1..=budget.max_microbatch_size {
                        if dp * m > gbs || !gbs.is_multiple_of(dp * m) {
                            continue;
                        }
                        let mut schemes = vec![DpScheme::Fsdp];
                        for r in divisors(dp) {
                            if r > 1 && r <= 8 && r < dp {
                                schemes.push(DpScheme::Hsdp { replica_groups: r });
                            }
                        }
                        for schedule in
                            [Schedule::OneFOneB, Schedule::DoraPP, Schedule::InterleavedZbv]
                        {
                            let Some(chunks) = canonical_chunks(schedule, pp, model.num_layers)
                            else {
                                *rejects
                                    .entry(format!("too few layers for {schedule} chunking"))
                                    .or_default() += 1;
                                continue;
                            };
                            for scheme in &schemes {
                                let template = Template {
                                    tp,
                                    cp,
                                    ep,
                                    pp,
                                    dp,
                                    microbatch_size: m,
                                    schedule,
                                    dp_scheme: *scheme,
                                };
                                let p = template.config(
                                    placement,
                                    near_uniform_partition(model.num_layers, chunks),
                                );
                                let batch = BatchSpec {
                                    global_batch_size: gbs,
                                    microbatch_size: m,
                                };
                                let violations =
                                    validate_config(model, &batch, &p, topo, assumptions);
                                if violations.is_empty() {
                                    out.push(template);
                                } else {
                                    for v in violations {
                                        *rejects.entry(v).or_default() += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (out, rejects)
}

/// Outcome of evaluating one template at its best found partition.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub template: Template,
    pub placement: Placement,
    pub partition: Vec<u64>,
    pub iteration_time_s: f64,
    pub t_dp_out_s: f64,
    pub t_pp_out_s: f64,
    pub num_microbatches: u64,
    pub cross_building_bytes: u64,
    pub memory_estimate_bytes: u64,
    pub max_bubble_fraction: f64,
    pub evals: u64,
}

struct FeatureFit {
    samples: Vec<(f64, f64, f64)>, // (max chunk, std dev, time)
}

impl FeatureFit {
    fn new() -> Self {
        Self { samples: Vec::new() }
    }

    fn push(&mut self, partition: &[u64], time: f64) {
        let (max, std) = partition_features(partition);
        self.samples.push((max, std, time));
    }

    fn median_time(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut times: Vec<f64> = self.samples.iter().map(|s| s.2).collect();
        times.sort_by(f64::total_cmp);
        Some(times[times.len() / 2])
    }

    /// Least-squares fit time ~ a*max + b*std + c over the explored samples.
    fn predict(&self, partition: &[u64]) -> Option<f64> {
        if self.samples.len() < 8 {
            return None;
        }
        // Normal equations for the 3-parameter linear model.
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [0.0f64; 3];
        for &(f1, f2, t) in &self.samples {
            let row = [f1, f2, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    ata[i][j] += row[i] * row[j];
                }
                atb[i] += row[i] * t;
            }
        }
        let theta = solve3(ata, atb)?;
        let (f1, f2) = partition_features(partition);
        Some(theta[0] * f1 + theta[1] * f2 + theta[2])
    }
}

fn partition_features(partition: &[u64]) -> (f64, f64) {
    let n = partition.len() as f64;
    let max = partition.iter().copied().max().unwrap_or(0) as f64;
    let mean = partition.iter().sum::<u64>() as f64 / n;
    let var = partition
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    (max, var.sqrt())
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in (row + 1)..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn spread_ok(partition: &[u64], cap: f64) -> bool {
    let max = partition.iter().copied().max().unwrap_or(1);
    let min = partition.iter().copied().min().unwrap_or(1);
    min > 0 && (max as f64) / (min as f64) <= cap
}

/// Assemble a full chunk vector from per-stage compositions, following the
/// schedule's chunk-to-stage assignment.
fn assemble_chunks(
    p: &ParallelismConfig,
    chunk_count: usize,
    stage_comps: &[Vec<u64>],
) -> Vec<u64> {
    let pp = p.pp as usize;
    let mut next_slot = vec![0usize; pp];
    let mut probe = p.clone();
    probe.chunk_partition = vec![1; chunk_count];
    (0..chunk_count)
        .map(|c| {
            let s = probe.chunk_stage(c);
            let slot = next_slot[s];
            next_slot[s] += 1;
            stage_comps[s][slot]
        })
        .collect()
}

/// Random composition of `total` into `parts` parts, each >= 1: start near
/// uniform, then apply random single-unit moves.
fn random_composition(total: u64, parts: usize, rng: &mut SplitMix64) -> Vec<u64> {
    let mut comp = near_uniform_partition(total, parts);
    if parts <= 1 {
        return comp;
    }
    let moves = rng.next_below(total.max(2)) as usize;
    for _ in 0..moves {
        let from = rng.index(parts);
        let to = rng.index(parts);
        if from != to && comp[from] > 1 {
            comp[from] -= 1;
            comp[to] += 1;
        }
    }
    comp
}

/// Enumerate every chunk partition for the template when the space is small;
/// returns None when it exceeds `limit`.
fn enumerate_all_partitions(
    p0: &ParallelismConfig,
    layers: u64,
    counts: &[usize],
    cap: f64,
    limit: usize,
) -> Option<Vec<Vec<u64>>> {
    let mut all = Vec::new();
    for &cc in counts {
        let mut current = vec![0u64; cc];
        if !compose(layers, 0, cc, &mut current, &mut all, cap, limit) {
            return None;
        }
    }
    // The composition enumerates chunk-index order directly; stage loads
    // follow from the assignment.
    let _ = p0;
    Some(all)
}

fn compose(
    remaining: u64,
    idx: usize,
    cc: usize,
    current: &mut Vec<u64>,
    all: &mut Vec<Vec<u64>>,
    cap: f64,
    limit: usize,
) -> bool {
    if all.len() > limit {
        return false;
    }
    let slots_left = (cc - idx) as u64;
    if slots_left == 0 {
        if remaining == 0 && spread_ok(current, cap) {
            all.push(current.clone());
        }
        return all.len() <= limit;
    }
    // Each remaining slot needs at least one layer.
    let max_here = remaining.saturating_sub(slots_left - 1);
    for size in 1..=max_here {
        current[idx] = size;
        if !compose(remaining - size, idx + 1, cc, current, all, cap, limit) {
            return false;
        }
    }
    true
}

/// Shared evaluation context for a search run.
pub struct EvalContext<'a> {
    model: &'a ModelSpec,
    topo: &'a Topology,
    assumptions: &'a Assumptions,
    deadline: Option<(Instant, f64)>,
    out_of_time: Arc<AtomicBool>,
}

impl<'a> EvalContext<'a> {
    pub fn new(model: &'a ModelSpec, topo: &'a Topology, assumptions: &'a Assumptions) -> Self {
        Self {
            model,
            topo,
            assumptions,
            deadline: None,
            out_of_time: Arc::new(AtomicBool::new(false)),
        }
    }

    fn with_deadline(mut self, start: Instant, limit_s: Option<f64>) -> Self {
        self.deadline = limit_s.map(|l| (start, l));
        self
    }

    fn expired(&self) -> bool {
        if self.out_of_time.load(Ordering::Relaxed) {
            return true;
        }
        if let Some((start, limit)) = self.deadline {
            if start.elapsed().as_secs_f64() > limit {
                self.out_of_time.store(true, Ordering::Relaxed);
                return true;
            }
        }
        false
    }
}

/// Evaluate one partition; returns the placement-objective time plus the
/// full outcome row.
fn eval_partition(
    ctx: &EvalContext,
    template: &Template,
    placement: Placement,
    batch: &BatchSpec,
    partition: Vec<u64>,
    seed: u64,
) -> Option<Evaluated> {
    let p = template.config(placement, partition.clone());
    let dag = build_full(ctx.model, batch, &p, ctx.topo, ctx.assumptions, seed).ok()?;
    let timeline = reconstruct(&dag).ok()?;
    let time = timeline.iteration_time(placement);
    let max_bubble = (0..p.pp as usize)
        .map(|r| bubble_fraction(&timeline, r, placement))
        .fold(0.0f64, f64::max);
    let cross = match placement {
        Placement::DpOut => timeline.cross_building_bytes_dp_out,
        Placement::PpOut => timeline.cross_building_bytes_pp_out,
    };
    Some(Evaluated {
        template: template.clone(),
        placement,
        partition,
        iteration_time_s: time,
        t_dp_out_s: timeline.t_dp_out,
        t_pp_out_s: timeline.t_pp_out,
        num_microbatches: num_microbatches(batch, &p).unwrap_or(0),
        cross_building_bytes: cross,
        memory_estimate_bytes: memory_estimate(ctx.model, batch, &p, ctx.assumptions),
        max_bubble_fraction: max_bubble,
        evals: 1,
    })
}

/// Monte-Carlo search over layer partitions and chunkings for one template.
///
/// Exploration samples layer-to-stage splits and chunk configurations
/// (exhaustively when the whole space is small), biased by a linear fit on
/// (largest chunk, chunk-size spread). Exploitation perturbs the best
/// survivors by moving single layers between adjacent chunks and by
/// re-chunking. Deterministic for a given RNG stream.
pub fn mc_partition_search(
    ctx: &EvalContext,
    template: &Template,
    placement: Placement,
    batch: &BatchSpec,
    budget: &SearchBudget,
    rng: &mut SplitMix64,
) -> Option<Evaluated> {
    let layers = ctx.model.num_layers;
    let counts = chunk_count_options(template.schedule, template.pp, layers);
    if counts.is_empty() {
        return None;
    }
    let cap = ctx.assumptions.chunk_spread_cap;
    let p0 = template.config(placement, near_uniform_partition(layers, counts[0]));

    let mut evals: u64 = 0;
    let mut best: Option<Evaluated> = None;
    let mut fit = FeatureFit::new();
    let consider = |cand: Option<Evaluated>, best: &mut Option<Evaluated>, fit: &mut FeatureFit| {
        if let Some(c) = cand {
            fit.push(&c.partition, c.iteration_time_s);
            let better = match best {
                None => true,
                Some(b) => c.iteration_time_s < b.iteration_time_s,
            };
            if better {
                *best = Some(c);
            }
        }
    };

    let exploration_budget = budget.exploration_partitions * budget.chunk_configs_per_partition;
    if let Some(all) =
        enumerate_all_partitions(&p0, layers, &counts, cap, exploration_budget.max(512))
    {
        // Small space: exhaustive evaluation guarantees the optimum.
        for partition in all {
            if ctx.expired() {
                break;
            }
            evals += 1;
            let cand = eval_partition(ctx, template, placement, batch, partition, rng.next_u64());
            consider(cand, &mut best, &mut fit);
        }
        return best.map(|mut b| {
            b.evals = evals;
            b
        });
    }

    // Exploration phase: sampled stage loads, then sampled chunkings.
    let pp = template.pp as usize;
    let mut explored: Vec<(f64, Vec<u64>)> = Vec::new();
    for _ in 0..budget.exploration_partitions {
        if ctx.expired() {
            break;
        }
        let stage_loads = random_composition(layers, pp, rng);
        let min_load = *stage_loads.iter().min().unwrap_or(&1);
        let usable: Vec<usize> = counts
            .iter()
            .copied()
            .filter(|&cc| (cc / pp) as u64 <= min_load)
            .collect();
        if usable.is_empty() {
            continue;
        }
        for _ in 0..budget.chunk_configs_per_partition {
            if ctx.expired() {
                break;
            }
            let mut chosen: Option<Vec<u64>> = None;
            for _attempt in 0..3 {
                let cc = usable[rng.index(usable.len())];
                let per_stage = cc / pp;
                let comps: Vec<Vec<u64>> = stage_loads
                    .iter()
                    .map(|&l| random_composition(l, per_stage, rng))
                    .collect();
                let partition = assemble_chunks(&p0, cc, &comps);
                if !spread_ok(&partition, cap) {
                    continue;
                }
                // Feature-guided rejection: resample once when the fit
                // predicts a slow configuration.
                if let (Some(pred), Some(median)) = (fit.predict(&partition), fit.median_time()) {
                    if pred > median && rng.next_f64() < 0.7 {
                        continue;
                    }
                }
                chosen = Some(partition);
                break;
            }
            let partition =
                chosen.unwrap_or_else(|| near_uniform_partition(layers, usable[0]));
            evals += 1;
            let cand =
                eval_partition(ctx, template, placement, batch, partition.clone(), rng.next_u64());
            if let Some(ref c) = cand {
                explored.push((c.iteration_time_s, c.partition.clone()));
            }
            consider(cand, &mut best, &mut fit);
        }
    }

    // Exploitation phase: perturb the fastest survivors.
    explored.sort_by(|a, b| a.0.total_cmp(&b.0));
    explored.truncate(budget.top_k);
    for (_, base) in explored {
        if ctx.expired() {
            break;
        }
        for j in 0..budget.perturbations_m {
            if ctx.expired() {
                break;
            }
            let mut partition = base.clone();
            if j % 4 == 3 && counts.len() > 1 {
                // Re-chunk: jump to a neighbouring chunk count.
                let cur = partition.len();
                let pos = counts.iter().position(|&c| c == cur).unwrap_or(0);
                let next = if pos + 1 < counts.len() && rng.next_f64() < 0.5 {
                    counts[pos + 1]
                } else if pos > 0 {
                    counts[pos - 1]
                } else {
                    counts[(pos + 1).min(counts.len() - 1)]
                };
                partition = near_uniform_partition(layers, next);
            } else {
                // Move one layer between adjacent chunks.
                let i = rng.index(partition.len().saturating_sub(1).max(1));
                if i + 1 < partition.len() {
                    if rng.next_f64() < 0.5 && partition[i] > 1 {
                        partition[i] -= 1;
                        partition[i + 1] += 1;
                    } else if partition[i + 1] > 1 {
                        partition[i + 1] -= 1;
                        partition[i] += 1;
                    }
                }
            }
            if !spread_ok(&partition, cap) {
                continue;
            }
            evals += 1;
            let cand = eval_partition(ctx, template, placement, batch, partition, rng.next_u64());
            consider(cand, &mut best, &mut fit);
        }
    }

    best.map(|mut b| {
        b.evals = evals;
        b
    })
}

/// Early-pruning controller for the PP-out branch: stage counts are visited
/// in ascending order and the branch stops as soon as a larger stage count
/// fails to improve the best iteration time.
#[derive(Debug, Default)]
pub struct PpOutPruner {
    best: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneDecision {
    Continue,
    Stop,
}

impl PpOutPruner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed the best iteration time found at one stage count.
    pub fn observe(&mut self, tier_best: f64) -> PruneDecision {
        match self.best {
            Some(best) if tier_best >= best => PruneDecision::Stop,
            _ => {
                self.best = Some(tier_best);
                PruneDecision::Continue
            }
        }
    }
}

/// Network-layer recommendations for a solved configuration on a topology.
pub fn recommend_network(topo: &Topology, assumptions: &Assumptions) -> NetworkRecommendation {
    let nic = &topo.nic;
    let cross = &topo.link_classes.cross_building;
    let multi = topo.num_buildings() > 1;
    let rtt_us = if multi {
        topo.max_cross_building_latency_us()
    } else {
        cross.latency_us
    };
    let rtt_s = rtt_us * 1e-6;
    let line_rate_bytes = cross.bandwidth_gbps / cross.oversubscription * GBPS_TO_BYTES_PER_SEC;
    let window_bytes = nic.max_inflight_packets as f64 * nic.packet_payload as f64;
    let spray_cap_bytes = nic.qp_count as f64 * window_bytes / rtt_s.max(1e-9);

    let (load_balancing, lb_rationale) = if spray_cap_bytes >= line_rate_bytes {
        (
            LoadBalancingChoice::PacketSpraying {
                required_qp_count: nic.qp_count,
            },
            format!(
                "per-QP window sustains line rate: {} QPs x {:.0} B / {:.0} us >= {:.1} Gbps",
                nic.qp_count,
                window_bytes,
                rtt_us,
                line_rate_bytes / GBPS_TO_BYTES_PER_SEC
            ),
        )
    } else {
        let required = (line_rate_bytes * rtt_s / window_bytes).ceil() as u32;
        (
            LoadBalancingChoice::Ecmp,
            format!(
                "in-flight cap limits spraying to {:.1} Gbps at {:.0} us; \
                 spraying needs >= {required} QPs to restore line rate",
                spray_cap_bytes / GBPS_TO_BYTES_PER_SEC,
                rtt_us
            ),
        )
    };

    let (congestion_control, cc_rationale) = if rtt_us > assumptions.cc_disable_latency_us {
        (
            CongestionControlChoice::Disabled,
            format!(
                "ECN feedback loop too slow beyond {:.0} us one-way latency (have {:.0} us)",
                assumptions.cc_disable_latency_us, rtt_us
            ),
        )
    } else {
        (
            CongestionControlChoice::Enabled,
            format!(
                "feedback latency {:.0} us within the {:.0} us control-loop budget",
                rtt_us, assumptions.cc_disable_latency_us
            ),
        )
    };

    let lossy = cross.loss_rate > 0.0;
    let (loss_mitigation, loss_rationale) =
        if lossy && rtt_us > assumptions.redundancy_latency_us {
            (
                LossMitigation::SelectiveRedundancy,
                format!(
                    "loss {:.4}% with {:.0} us latency makes retransmission stalls expensive",
                    cross.loss_rate * 100.0,
                    rtt_us
                ),
            )
        } else {
            (
                LossMitigation::None,
                "loss recovery cost acceptable at this latency and loss rate".to_string(),
            )
        };

    let hetero = multi
        && topo.max_cross_building_latency_us() > topo.min_cross_building_latency_us() + 1e-9;
    let (chunking_hint, chunk_rationale) =
        if hetero && topo.max_cross_building_latency_us() >= assumptions.imbalance_latency_us {
            (
                ChunkingHint::ImbalancedTowardDistancedBuilding,
                format!(
                    "distanced building at {:.0} us: larger chunks there cut crossing frequency",
                    topo.max_cross_building_latency_us()
                ),
            )
        } else {
            (
                ChunkingHint::Balanced,
                "no building is distanced enough to justify imbalanced chunks".to_string(),
            )
        };

    NetworkRecommendation {
        load_balancing,
        load_balancing_rationale: lb_rationale,
        congestion_control,
        congestion_control_rationale: cc_rationale,
        loss_mitigation,
        loss_mitigation_rationale: loss_rationale,
        chunking_hint,
        chunking_hint_rationale: chunk_rationale,
    }
}

/// Evaluate a set of (template, placement) tasks in parallel with
/// deterministic merging: task i uses RNG stream (seed, i) and results land
/// at index i.
fn parallel_eval(
    ctx: &EvalContext,
    tasks: &[(Template, Placement, u64)],
    batch_gbs: u64,
    budget: &SearchBudget,
) -> Vec<Option<Evaluated>> {
    let n = tasks.len();
    let results: Mutex<Vec<Option<Evaluated>>> = Mutex::new(vec![None; n]);
    let next: AtomicUsize = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(n.max(1))
        .min(8);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                if ctx.expired() {
                    continue;
                }
                let (template, placement, rng_index) = &tasks[i];
                let batch = BatchSpec {
                    global_batch_size: batch_gbs,
                    microbatch_size: template.microbatch_size,
                };
                let mut rng = SplitMix64::derive(budget.seed, *rng_index);
                let outcome =
                    mc_partition_search(ctx, template, *placement, &batch, budget, &mut rng);
                results.lock().unwrap()[i] = outcome;
            });
        }
    });
    results.into_inner().unwrap()
}

/// Three-step search: enumerate valid configurations, evaluate them under
/// both placements (with PP-out stage counts pruned early), and attach
/// network recommendations to the ranked result.
pub fn explore(
    model: &ModelSpec,
    gbs: u64,
    topo: &Topology,
    assumptions: &Assumptions,
    budget: &SearchBudget,
) -> Result<ExplorationReport> {
    budget.validate()?;
    model.validate()?;
    topo.validate()?;
    let start = Instant::now();
    let ctx = EvalContext::new(model, topo, assumptions).with_deadline(start, budget.max_wall_time_s);

    let (dp_templates, dp_rejects) =
        enumerate_configs(model, gbs, topo, assumptions, budget, Placement::DpOut);
    let (pp_templates, pp_rejects) =
        enumerate_configs(model, gbs, topo, assumptions, budget, Placement::PpOut);
    if dp_templates.is_empty() && pp_templates.is_empty() {
        let mut constraints: Vec<String> = dp_rejects
            .into_iter()
            .chain(pp_rejects)
            .map(|(reason, count)| format!("{reason} ({count} candidates)"))
            .collect();
        constraints.sort();
        constraints.dedup();
        return Err(Error::NoFeasibleConfig { constraints });
    }

    let mut outcomes: Vec<Evaluated> = Vec::new();
    let mut task_counter: u64 = 0;

    // DP-out branch: evaluate every template.
    let dp_tasks: Vec<(Template, Placement, u64)> = dp_templates
        .into_iter()
        .map(|t| {
            task_counter += 1;
            (t, Placement::DpOut, task_counter)
        })
        .collect();
    outcomes.extend(parallel_eval(&ctx, &dp_tasks, gbs, budget).into_iter().flatten());

    // PP-out branch: ascending stage counts with early pruning.
    let mut by_pp: BTreeMap<u64, Vec<Template>> = BTreeMap::new();
    for t in pp_templates {
        by_pp.entry(t.pp).or_default().push(t);
    }
    let mut pruner = PpOutPruner::new();
    for (_pp, tier) in by_pp {
        if ctx.expired() {
            break;
        }
        let tier_tasks: Vec<(Template, Placement, u64)> = tier
            .into_iter()
            .map(|t| {
                task_counter += 1;
                (t, Placement::PpOut, task_counter)
            })
            .collect();
        let tier_outcomes: Vec<Evaluated> =
            parallel_eval(&ctx, &tier_tasks, gbs, budget).into_iter().flatten().collect();
        let tier_best = tier_outcomes
            .iter()
            .map(|o| o.iteration_time_s)
            .fold(f64::INFINITY, f64::min);
        outcomes.extend(tier_outcomes);
        if tier_best.is_finite() && pruner.observe(tier_best) == PruneDecision::Stop {
            break;
        }
    }

    if outcomes.is_empty() {
        return Err(Error::NoFeasibleConfig {
            constraints: vec!["no candidate survived evaluation".to_string()],
        });
    }

    // Rank: time, then lower cross-building traffic, then lower memory, then
    // lexicographic config key.
    outcomes.sort_by(|a, b| {
        a.iteration_time_s
            .total_cmp(&b.iteration_time_s)
            .then(a.cross_building_bytes.cmp(&b.cross_building_bytes))
            .then(a.memory_estimate_bytes.cmp(&b.memory_estimate_bytes))
            .then(a.template.key().cmp(&b.template.key()))
            .then(a.placement.to_string().cmp(&b.placement.to_string()))
    });

    let evaluated_candidates: u64 = outcomes.iter().map(|o| o.evals).sum();
    let ranked: Vec<ReportEntry> = outcomes
        .iter()
        .take(budget.max_report_entries)
        .enumerate()
        .map(|(i, o)| ReportEntry {
            rank: i,
            batch: BatchSpec {
                global_batch_size: gbs,
                microbatch_size: o.template.microbatch_size,
            },
            parallelism: o.template.config(o.placement, o.partition.clone()),
            placement: o.placement,
            iteration_time_s: o.iteration_time_s,
            t_dp_out_s: o.t_dp_out_s,
            t_pp_out_s: o.t_pp_out_s,
            num_microbatches: o.num_microbatches,
            cross_building_bytes: o.cross_building_bytes,
            memory_estimate_bytes: o.memory_estimate_bytes,
            max_bubble_fraction: o.max_bubble_fraction,
        })
        .collect();

    Ok(ExplorationReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: budget.seed,
        world_size: topo.world_size(),
        evaluated_candidates,
        truncated: ctx.out_of_time.load(Ordering::Relaxed),
        ranked,
        recommendation: recommend_network(topo, assumptions),
        assumptions: assumptions.clone(),
    })
}

/// Public helper for single-template search; used by tests and the CLI.
pub fn search_template(
    model: &ModelSpec,
    gbs: u64,
    topo: &Topology,
    assumptions: &Assumptions,
    budget: &SearchBudget,
    template: &Template,
    placement: Placement,
) -> Option<Evaluated> {
    let ctx = EvalContext::new(model, topo, assumptions);
    let batch = BatchSpec {
        global_batch_size: gbs,
        microbatch_size: template.microbatch_size,
    };
    let mut rng = SplitMix64::derive(budget.seed, 1);
    mc_partition_search(&ctx, template, placement, &batch, budget, &mut rng)
}
