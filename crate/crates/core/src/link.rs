//! Time model for communication and compute kernels on a classified link.
//!
//! Covers latency-bounded throughput, packet-spraying goodput under the
//! per-QP in-flight cap, ECMP hash-collision goodput, Go-Back-N loss
//! inflation, ring-collective times, the two-level HSDP sync, and compute
//! kernel durations. All functions are pure; the ECMP estimate takes an
//! explicit seed.

use serde::{Deserialize, Serialize};

use crate::assumptions::Assumptions;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParallelismConfig, Schedule};
use crate::rng::SplitMix64;
use crate::topology::{GpuSpec, LinkClass, LoadBalancing, Topology};

pub const GBPS_TO_BYTES_PER_SEC: f64 = 1e9 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollectiveKind {
    AllGather,
    ReduceScatter,
    AllReduce,
}

/// A classified link as seen by one transfer: per-pair bandwidth after
/// oversubscription, one-way latency, loss, and the NIC limits that govern
/// windowed throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    /// Effective bandwidth per GPU pair (nominal / oversubscription), Gbps.
    pub bandwidth_gbps: f64,
    /// One-way latency, microseconds.
    pub latency_us: f64,
    /// Packet loss rate in [0, 1).
    pub loss_rate: f64,
    pub load_balancing: LoadBalancing,
    pub qp_count: u32,
    pub packet_payload: u32,
    pub max_inflight_packets: u32,
}

impl LinkProfile {
    /// Build the profile of a link class, taking the latency of a concrete
    /// building pair when the class is cross-building.
    pub fn from_class(topo: &Topology, class: LinkClass, pair: Option<(usize, usize)>) -> Self {
        let spec = topo.class_spec(class);
        let latency_us = match (class, pair) {
            (LinkClass::CrossBuilding, Some((a, b))) => topo.building_pair_latency_us(a, b),
            _ => spec.latency_us,
        };
        LinkProfile {
            bandwidth_gbps: spec.bandwidth_gbps / spec.oversubscription,
            latency_us,
            loss_rate: spec.loss_rate,
            load_balancing: topo.load_balancing,
            qp_count: topo.nic.qp_count,
            packet_payload: topo.nic.packet_payload,
            max_inflight_packets: topo.nic.max_inflight_packets,
        }
    }

    pub fn latency_s(&self) -> f64 {
        self.latency_us * 1e-6
    }

    /// Window recycle delay governing windowed throughput and retransmission
    /// cost: one link traversal in this model.
    pub fn rtt_s(&self) -> f64 {
        self.latency_s()
    }

    pub fn bandwidth_bytes_per_s(&self) -> f64 {
        self.bandwidth_gbps * GBPS_TO_BYTES_PER_SEC
    }
}

/// Maximum achievable throughput for a message over a delay: message / rtt,
/// in bytes per second. Callers cap the achieved rate at
/// `min(line rate, this bound)`.
pub fn throughput_bound(message_bytes: f64, rtt_s: f64) -> f64 {
    if rtt_s <= 0.0 {
        return f64::INFINITY;
    }
    message_bytes / rtt_s
}

/// Packet-spraying goodput per GPU pair, Gbps: the per-QP in-flight packet
/// cap bounds the data outstanding per window turnaround.
pub fn spraying_goodput(link: &LinkProfile) -> f64 {
    let rtt = link.rtt_s();
    if rtt <= 0.0 {
        return link.bandwidth_gbps;
    }
    let window_bytes =
        link.qp_count as f64 * link.max_inflight_packets as f64 * link.packet_payload as f64;
    let cap_gbps = window_bytes / rtt / GBPS_TO_BYTES_PER_SEC;
    link.bandwidth_gbps.min(cap_gbps)
}

/// Mean per-flow ECMP goodput in Gbps, estimated by Monte-Carlo hashing of
/// flows onto equal-cost paths. Deterministic for a seed.
pub fn ecmp_goodput(link: &LinkProfile, concurrent_flows: u32, path_count: u32, seed: u64) -> f64 {
    ecmp_goodput_trials(link, concurrent_flows, path_count, 10_000, seed)
}

pub fn ecmp_goodput_trials(
    link: &LinkProfile,
    concurrent_flows: u32,
    path_count: u32,
    trials: u32,
    seed: u64,
) -> f64 {
    let flows = concurrent_flows.max(1) as usize;
    let paths = path_count.max(1) as usize;
    if flows == 1 {
        return link.bandwidth_gbps;
    }
    let mut rng = SplitMix64::new(seed);
    let mut loads = vec![0u32; paths];
    let mut assigned = vec![0usize; flows];
    let mut acc = 0.0f64;
    for _ in 0..trials.max(1) {
        loads.iter_mut().for_each(|l| *l = 0);
        for slot in assigned.iter_mut() {
            let p = rng.index(paths);
            *slot = p;
            loads[p] += 1;
        }
        let mut per_flow = 0.0;
        for &p in &assigned {
            per_flow += link.bandwidth_gbps / loads[p] as f64;
        }
        acc += per_flow / flows as f64;
    }
    acc / trials.max(1) as f64
}

/// Expected transfer-time multiplier (>= 1) under Go-Back-N recovery:
/// `1/eta` with `eta = (1 - p) / (1 + p (W - 1))` and the window
/// `W = min(max_inflight, rate * rtt / payload)` packets.
pub fn gobackn_inflation(
    loss_rate: f64,
    rtt_s: f64,
    rate_bytes_per_s: f64,
    packet_payload: u32,
    max_inflight_packets: u32,
) -> Result<f64> {
    if !(0.0..1.0).contains(&loss_rate) {
        return Err(Error::OutOfRange {
            name: "loss_rate",
            value: loss_rate,
            requirement: "0 <= p < 1",
        });
    }
    if loss_rate == 0.0 {
        return Ok(1.0);
    }
    let bdp_packets = if packet_payload == 0 {
        max_inflight_packets as f64
    } else {
        rate_bytes_per_s * rtt_s / packet_payload as f64
    };
    let window = bdp_packets.min(max_inflight_packets as f64).max(1.0);
    Ok((1.0 + loss_rate * (window - 1.0)) / (1.0 - loss_rate))
}

/// Timing context for one link: the profile plus the contention and
/// estimation knobs that are properties of the model run, not the link.
#[derive(Debug, Clone)]
pub struct LinkTiming {
    pub link: LinkProfile,
    /// Concurrent flows assumed for ECMP collision estimation.
    pub ecmp_flows: u32,
    pub ecmp_paths: u32,
    pub ecmp_trials: u32,
    pub seed: u64,
    /// Rate derating applied to ring collectives relative to plain p2p.
    pub collective_efficiency: f64,
}

impl LinkTiming {
    pub fn new(link: LinkProfile, assumptions: &Assumptions, seed: u64) -> Self {
        LinkTiming {
            link,
            ecmp_flows: assumptions.ecmp_flows,
            ecmp_paths: assumptions.ecmp_paths,
            ecmp_trials: assumptions.ecmp_trials,
            seed,
            collective_efficiency: assumptions.collective_efficiency,
        }
    }

    /// Same context on a fair share of the link: the line rate divides over
    /// `share` concurrent transfer chains, while per-flow window caps stay.
    pub fn shared(&self, share: u32) -> LinkTiming {
        let mut t = self.clone();
        t.link.bandwidth_gbps /= share.max(1) as f64;
        t
    }

    /// Per-transfer achievable rate in bytes/s under the link's load
    /// balancing scheme.
    pub fn flow_rate_bytes_per_s(&self) -> f64 {
        let gbps = match self.link.load_balancing {
            LoadBalancing::PacketSpraying => spraying_goodput(&self.link),
            LoadBalancing::Ecmp => ecmp_goodput_trials(
                &self.link,
                self.ecmp_flows,
                self.ecmp_paths,
                self.ecmp_trials,
                self.seed,
            ),
        };
        gbps * GBPS_TO_BYTES_PER_SEC
    }

    fn inflation(&self, rate: f64) -> f64 {
        gobackn_inflation(
            self.link.loss_rate,
            self.link.rtt_s(),
            rate,
            self.link.packet_payload,
            self.link.max_inflight_packets,
        )
        .unwrap_or(1.0)
    }

    /// One point-to-point transfer: one-way latency plus serialization at the
    /// achievable rate, inflated by loss recovery. Zero bytes cost exactly
    /// the latency.
    pub fn p2p_time(&self, bytes: u64) -> f64 {
        if bytes == 0 {
            return self.link.latency_s();
        }
        let rate = self
            .flow_rate_bytes_per_s()
            .min(throughput_bound(bytes as f64, self.link.rtt_s()));
        (self.link.latency_s() + bytes as f64 / rate) * self.inflation(rate)
    }

    /// Ring collective: (n-1) steps, each moving total/n at the derated rate
    /// plus one link latency. AllReduce doubles the data term.
    pub fn collective_time(&self, kind: CollectiveKind, total_bytes: u64, group: u64) -> f64 {
        if group <= 1 {
            return 0.0;
        }
        let n = group as f64;
        let rate = self.flow_rate_bytes_per_s() * self.collective_efficiency;
        let data_factor = match kind {
            CollectiveKind::AllGather | CollectiveKind::ReduceScatter => 1.0,
            CollectiveKind::AllReduce => 2.0,
        };
        let per_step = data_factor * total_bytes as f64 / (n * rate) + self.link.latency_s();
        (n - 1.0) * per_step * self.inflation(rate)
    }
}

/// Two-level HSDP gradient sync for one layer volume: ReduceScatter inside
/// the shard group, then one AllReduce of the per-leader shard across the
/// replica groups. The parameter AllGather stays inside the shard group and
/// is accounted separately.
pub fn hsdp_sync_time(
    volume_bytes: u64,
    replica_groups: u64,
    shard_degree: u64,
    intra: &LinkTiming,
    cross: &LinkTiming,
) -> f64 {
    let intra_time = intra.collective_time(CollectiveKind::ReduceScatter, volume_bytes, shard_degree);
    let shard_bytes = volume_bytes / shard_degree.max(1);
    let cross_time = cross.collective_time(CollectiveKind::AllReduce, shard_bytes, replica_groups);
    intra_time + cross_time
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputePhase {
    Fwd,
    BwdDx,
    BwdDw,
    BwdFused,
}

impl std::fmt::Display for ComputePhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ComputePhase::Fwd => "fwd",
            ComputePhase::BwdDx => "bwd_dx",
            ComputePhase::BwdDw => "bwd_dw",
            ComputePhase::BwdFused => "bwd_fused",
        })
    }
}

/// Duration of one compute kernel: a chunk of layers processing one
/// microbatch in the given phase.
///
/// FLOPs per layer are `2 * tokens * (4H^2 + 3H*F_active) / tp` with
/// `F_active` the dense FFN width or `top_k * F_e` for MoE. TP/CP/EP
/// communication is folded into an efficiency factor, and small microbatches
/// derate throughput through a token-saturation curve. The split backward
/// phases carry the schedule's splitting overhead; the fused backward is
/// exactly twice the forward.
pub fn chunk_compute_time(
    model: &ModelSpec,
    chunk_layers: u64,
    p: &ParallelismConfig,
    microbatch_size: u64,
    phase: ComputePhase,
    gpu: &GpuSpec,
    assumptions: &Assumptions,
) -> f64 {
    let tokens = microbatch_size as f64 * (model.seq_len / p.cp) as f64;
    let h = model.hidden_dim as f64;
    let f_active = model.active_ffn_dim() as f64;
    let flops_per_layer = 2.0 * tokens * (4.0 * h * h + 3.0 * h * f_active) / p.tp as f64;
    let saturation = tokens / (tokens + assumptions.tokens_half_saturation);
    let rate = gpu.effective_flops * assumptions.compute_efficiency * saturation;
    let fwd = chunk_layers as f64 * flops_per_layer / rate;
    let epsilon = match p.schedule {
        Schedule::DoraPP => assumptions.epsilon_dora,
        Schedule::InterleavedZbv => assumptions.epsilon_zbv,
        Schedule::OneFOneB => 0.0,
    };
    match phase {
        ComputePhase::Fwd => fwd,
        ComputePhase::BwdFused => 2.0 * fwd,
        ComputePhase::BwdDx | ComputePhase::BwdDw => fwd * (1.0 + epsilon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DpScheme, Placement};

    fn link(bw_gbps: f64, latency_us: f64) -> LinkProfile {
        LinkProfile {
            bandwidth_gbps: bw_gbps,
            latency_us,
            loss_rate: 0.0,
            load_balancing: LoadBalancing::PacketSpraying,
            qp_count: 1,
            packet_payload: 4096,
            max_inflight_packets: 512,
        }
    }

    fn timing(l: LinkProfile) -> LinkTiming {
        LinkTiming {
            link: l,
            ecmp_flows: 1,
            ecmp_paths: 16,
            ecmp_trials: 2000,
            seed: 17,
            collective_efficiency: 1.0,
        }
    }

    #[test]
    fn throughput_bound_values() {
        // 2 MB (decimal) over 1000 us -> 2 GB/s.
        assert_eq!(throughput_bound(2e6, 1e-3), 2e9);
        // Linear in message size.
        assert_eq!(throughput_bound(4e6, 1e-3), 2.0 * throughput_bound(2e6, 1e-3));
        // 1 GiB over 1 ms -> ~1 TiB/s; any line rate dominates the min.
        let bound = throughput_bound((1u64 << 30) as f64, 1e-3);
        assert_eq!(bound, (1u64 << 30) as f64 * 1e3);
        assert!(bound > 400.0 * GBPS_TO_BYTES_PER_SEC);
    }

    #[test]
    fn spraying_cap_matches_window_over_rtt() {
        // 512 packets * 4 KiB with 1 QP over a 1000 us window: 2^21 bytes/ms
        // = 16.777216 Gbps (the "2MB/1000us = 16 Gbps" figure with the
        // megabyte read as decimal).
        let l = link(400.0, 1000.0);
        let got = spraying_goodput(&l);
        assert!((got - 16.777216).abs() < 1e-9, "{got}");
    }

    #[test]
    fn spraying_line_rate_dominates_at_short_rtt() {
        // Same window over 50 us -> 335 Gbps cap; 400 Gbps line loses.
        let l = link(400.0, 50.0);
        let got = spraying_goodput(&l);
        assert!((got - 335.54432).abs() < 1e-6, "{got}");
        let mut wide = link(300.0, 50.0);
        wide.qp_count = 2;
        assert_eq!(spraying_goodput(&wide), 300.0);
    }

    #[test]
    fn spraying_linear_in_qp_count() {
        let mut l = link(1e6, 1000.0);
        l.qp_count = 1;
        let one = spraying_goodput(&l);
        l.qp_count = 2;
        assert!((spraying_goodput(&l) - 2.0 * one).abs() < 1e-9);
    }

    #[test]
    fn ecmp_single_flow_full_rate() {
        let l = link(400.0, 50.0);
        assert_eq!(ecmp_goodput(&l, 1, 8, 3), 400.0);
    }

    #[test]
    fn ecmp_matches_balls_into_bins_expectation() {
        // Independent oracle: per-flow share is R/(1+X) with
        // X ~ Binomial(f-1, 1/k); E[share] = R * k/f * (1 - (1-1/k)^f).
        let l = link(400.0, 50.0);
        for (flows, paths) in [(4u32, 4u32), (8, 8), (6, 16)] {
            let k = paths as f64;
            let f = flows as f64;
            let expect = 400.0 * k / f * (1.0 - (1.0 - 1.0 / k).powf(f));
            let got = ecmp_goodput_trials(&l, flows, paths, 1_000_000, 42);
            assert!(
                (got - expect).abs() / expect < 0.01,
                "flows={flows} paths={paths}: got {got}, expect {expect}"
            );
            assert!(got < 400.0, "collisions must cost something");
        }
    }

    #[test]
    fn ecmp_approaches_full_rate_with_many_paths() {
        let l = link(400.0, 50.0);
        let narrow = ecmp_goodput_trials(&l, 4, 4, 20_000, 7);
        let wide = ecmp_goodput_trials(&l, 4, 4096, 20_000, 7);
        assert!(wide > narrow);
        assert!(wide > 0.999 * 400.0);
    }

    #[test]
    fn gobackn_lossless_is_exactly_one() {
        for rtt in [0.0, 50e-6, 1e-3] {
            assert_eq!(gobackn_inflation(0.0, rtt, 50e9, 4096, 512).unwrap(), 1.0);
        }
    }

    #[test]
    fn gobackn_grows_with_rtt_and_loss() {
        // 16 Gbps keeps the window BDP-limited across the rtt range.
        let rate = 2e9;
        let low = gobackn_inflation(2e-4, 50e-6, rate, 4096, 512).unwrap();
        let high = gobackn_inflation(2e-4, 1000e-6, rate, 4096, 512).unwrap();
        assert!(high > low, "{high} <= {low}");
        let lossier = gobackn_inflation(2e-3, 50e-6, rate, 4096, 512).unwrap();
        let cleaner = gobackn_inflation(2e-5, 50e-6, rate, 4096, 512).unwrap();
        assert!(lossier > low && low > cleaner);
        assert!(low >= 1.0 && cleaner >= 1.0);
    }

    #[test]
    fn gobackn_rejects_certain_loss() {
        assert!(gobackn_inflation(1.0, 1e-3, 1e9, 4096, 512).is_err());
    }

    #[test]
    fn p2p_zero_bytes_is_latency_floor() {
        let t = timing(link(400.0, 50.0));
        assert_eq!(t.p2p_time(0), t.link.latency_s());
    }

    #[test]
    fn p2p_hand_value_32mib() {
        // 32 MiB at 400 Gbps (50 GB/s), 50 us latency, lossless, full rate:
        // 50 us + 671.1 us.
        let mut l = link(400.0, 50.0);
        l.qp_count = 8; // spraying cap above line rate
        let t = timing(l);
        let expect = 50e-6 + (32.0 * 1024.0 * 1024.0) / 50e9;
        let got = t.p2p_time(32 * 1024 * 1024);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn p2p_linear_in_latency() {
        // Message large enough (and window wide enough) to stay
        // bandwidth-bound across the range, so completion time rises with
        // exactly the latency delta.
        let mut a = link(400.0, 50.0);
        a.qp_count = 64;
        let mut b = a.clone();
        b.latency_us = 500.0;
        let mut c = a.clone();
        c.latency_us = 950.0;
        let bytes = 256 * 1024 * 1024;
        let ta = timing(a).p2p_time(bytes);
        let tb = timing(b).p2p_time(bytes);
        let tc = timing(c).p2p_time(bytes);
        assert!((tb - ta - 450e-6).abs() < 1e-12, "{}", tb - ta);
        assert!((tc - tb - 450e-6).abs() < 1e-12, "{}", tc - tb);
    }

    #[test]
    fn collective_single_member_is_free() {
        let t = timing(link(400.0, 1000.0));
        assert_eq!(t.collective_time(CollectiveKind::AllReduce, 1 << 30, 1), 0.0);
    }

    #[test]
    fn collective_latency_dominates_large_groups() {
        let t = timing(link(400.0, 1000.0));
        let n = 1024u64;
        let bytes = 64 * 1024 * 1024;
        let total = t.collective_time(CollectiveKind::AllGather, bytes, n);
        let latency_term = (n - 1) as f64 * 1000e-6;
        assert!(latency_term / total > 0.9, "latency should dominate: {total}");
    }

    #[test]
    fn allreduce_at_least_allgather() {
        let t = timing(link(400.0, 50.0));
        let ar = t.collective_time(CollectiveKind::AllReduce, 1 << 26, 8);
        let ag = t.collective_time(CollectiveKind::AllGather, 1 << 26, 8);
        assert!(ar >= ag);
        assert!((ar - ag) > 0.0);
    }

    #[test]
    fn hsdp_degenerates_to_fsdp_with_one_replica_group() {
        let intra = timing(link(400.0, 20.0));
        let cross = timing(link(100.0, 50.0));
        let v = 256 * 1024 * 1024;
        let h = hsdp_sync_time(v, 1, 8, &intra, &cross);
        let f = intra.collective_time(CollectiveKind::ReduceScatter, v, 8);
        assert_eq!(h, f);
    }

    #[test]
    fn hsdp_single_cross_collective() {
        // The cross-building side of HSDP is one AllReduce; FSDP would put
        // two collectives (AG + RS) on that tier.
        let intra = timing(link(400.0, 20.0));
        let cross = timing(link(25.0, 1000.0));
        let v: u64 = 256 * 1024 * 1024;
        let hsdp_cross = cross.collective_time(CollectiveKind::AllReduce, v / 4, 2);
        let fsdp_cross = cross.collective_time(CollectiveKind::AllGather, v, 8)
            + cross.collective_time(CollectiveKind::ReduceScatter, v, 8);
        assert!(hsdp_sync_time(v, 2, 4, &intra, &cross) < fsdp_cross);
        assert!(hsdp_cross < fsdp_cross);
    }

    fn toy_config(schedule: Schedule) -> ParallelismConfig {
        ParallelismConfig {
            tp: 1,
            cp: 1,
            ep: 1,
            pp: 2,
            dp: 1,
            placement: Placement::DpOut,
            schedule,
            dp_scheme: DpScheme::Fsdp,
            chunk_partition: vec![1; 4],
        }
    }

    fn toy_model() -> ModelSpec {
        ModelSpec {
            num_layers: 4,
            hidden_dim: 1024,
            ffn_dim: 4096,
            seq_len: 4096,
            num_experts: 0,
            expert_ffn_dim: 0,
            top_k: 1,
            bytes_per_element: 2,
        }
    }

    #[test]
    fn fused_backward_is_twice_forward() {
        let gpu = GpuSpec::default();
        let a = Assumptions::default();
        let m = toy_model();
        let p = toy_config(Schedule::OneFOneB);
        let fwd = chunk_compute_time(&m, 2, &p, 1, ComputePhase::Fwd, &gpu, &a);
        let bwd = chunk_compute_time(&m, 2, &p, 1, ComputePhase::BwdFused, &gpu, &a);
        assert_eq!(bwd, 2.0 * fwd);
    }

    #[test]
    fn zbv_costs_more_compute_than_dorapp() {
        let gpu = GpuSpec::default();
        let a = Assumptions::default();
        let m = toy_model();
        let total = |schedule| {
            let p = toy_config(schedule);
            let f = chunk_compute_time(&m, 1, &p, 1, ComputePhase::Fwd, &gpu, &a);
            let dx = chunk_compute_time(&m, 1, &p, 1, ComputePhase::BwdDx, &gpu, &a);
            let dw = chunk_compute_time(&m, 1, &p, 1, ComputePhase::BwdDw, &gpu, &a);
            f + dx + dw
        };
        assert!(total(Schedule::InterleavedZbv) > total(Schedule::DoraPP));
    }

    #[test]
    fn p2p_monotone_in_bytes_latency_loss_and_oversub() {
        let base = |bw: f64, lat: f64, loss: f64| {
            let mut l = link(bw, lat);
            l.loss_rate = loss;
            l.qp_count = 8;
            timing(l)
        };
        let mut prev = 0.0;
        for bytes in [0u64, 1 << 10, 1 << 20, 1 << 26, 1 << 30] {
            let t = base(100.0, 50.0, 0.0).p2p_time(bytes);
            assert!(t >= prev && t.is_finite());
            prev = t;
        }
        let mut prev = 0.0;
        for lat in [0.0, 10.0, 50.0, 500.0, 2000.0] {
            let t = base(100.0, lat, 0.0).p2p_time(1 << 26);
            assert!(t >= prev && t.is_finite());
            prev = t;
        }
        let mut prev = 0.0;
        for loss in [0.0, 1e-5, 2e-4, 2e-3] {
            let t = base(100.0, 50.0, loss).p2p_time(1 << 26);
            assert!(t >= prev && t.is_finite());
            prev = t;
        }
        // Oversubscription enters as reduced per-pair bandwidth.
        let mut prev = 0.0;
        for oversub in [1.0f64, 1.33, 4.0, 16.0] {
            let t = base(400.0 / oversub, 50.0, 0.0).p2p_time(1 << 26);
            assert!(t >= prev && t.is_finite());
            prev = t;
        }
    }

    #[test]
    fn compute_additive_in_layers() {
        let gpu = GpuSpec::default();
        let a = Assumptions::default();
        let m = toy_model();
        let p = toy_config(Schedule::DoraPP);
        let one = chunk_compute_time(&m, 1, &p, 2, ComputePhase::Fwd, &gpu, &a);
        let two = chunk_compute_time(&m, 2, &p, 2, ComputePhase::Fwd, &gpu, &a);
        assert!((two - 2.0 * one).abs() < 1e-18);
    }
}
