//! End-to-end iteration time reconstruction over a kernel DAG.
//!
//! A single topological sweep computes, for every kernel, start = latest
//! parent finish and finish = start + duration, simultaneously under the
//! DP-out and PP-out durations. The iteration time per placement is the
//! maximum finish; the result carries both timelines and their minimum.
//! Dependency-only semantics: all resource exclusivity was already encoded
//! as edges by the schedule builder, so any topological order yields the
//! same times.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Placement;
use crate::schedule::{KernelDag, KernelKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timeline {
    pub start_dp_out: Vec<f64>,
    pub finish_dp_out: Vec<f64>,
    pub start_pp_out: Vec<f64>,
    pub finish_pp_out: Vec<f64>,
    /// Iteration end under each placement.
    pub t_dp_out: f64,
    pub t_pp_out: f64,
    /// Compute-busy seconds per rank (identical under both placements).
    pub compute_busy: Vec<f64>,
    pub cross_building_bytes_dp_out: u64,
    pub cross_building_bytes_pp_out: u64,
}

impl Timeline {
    /// The faster of the two placements.
    pub fn best(&self) -> (Placement, f64) {
        if self.t_dp_out <= self.t_pp_out {
            (Placement::DpOut, self.t_dp_out)
        } else {
            (Placement::PpOut, self.t_pp_out)
        }
    }

    pub fn iteration_time(&self, placement: Placement) -> f64 {
        match placement {
            Placement::DpOut => self.t_dp_out,
            Placement::PpOut => self.t_pp_out,
        }
    }

    pub fn finishes(&self, placement: Placement) -> &[f64] {
        match placement {
            Placement::DpOut => &self.finish_dp_out,
            Placement::PpOut => &self.finish_pp_out,
        }
    }
}

/// Idle fraction of a rank: 1 - compute-busy / iteration time.
pub fn bubble_fraction(timeline: &Timeline, rank: usize, placement: Placement) -> f64 {
    let total = timeline.iteration_time(placement);
    if total <= 0.0 {
        return 0.0;
    }
    let busy = timeline.compute_busy.get(rank).copied().unwrap_or(0.0);
    1.0 - busy / total
}

/// Dependency-driven reconstruction of both placements' timelines.
pub fn reconstruct(dag: &KernelDag) -> Result<Timeline> {
    let n = dag.len();
    for k in &dag.kernels {
        if !k.dur_dp_out.is_finite()
            || !k.dur_pp_out.is_finite()
            || k.dur_dp_out < 0.0
            || k.dur_pp_out < 0.0
        {
            return Err(Error::BadDuration { kernel_id: k.id });
        }
    }

    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (child, parents) in dag.parents.iter().enumerate() {
        indegree[child] = parents.len();
        for &p in parents {
            children[p].push(child);
        }
    }

    let mut start_dp = vec![0.0f64; n];
    let mut start_pp = vec![0.0f64; n];
    let mut finish_dp = vec![0.0f64; n];
    let mut finish_pp = vec![0.0f64; n];

    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut processed = 0usize;
    let mut t_dp = 0.0f64;
    let mut t_pp = 0.0f64;
    while let Some(k) = queue.pop_front() {
        processed += 1;
        let kernel = &dag.kernels[k];
        finish_dp[k] = start_dp[k] + kernel.dur_dp_out;
        finish_pp[k] = start_pp[k] + kernel.dur_pp_out;
        t_dp = t_dp.max(finish_dp[k]);
        t_pp = t_pp.max(finish_pp[k]);
        for &child in &children[k] {
            start_dp[child] = start_dp[child].max(finish_dp[k]);
            start_pp[child] = start_pp[child].max(finish_pp[k]);
            indegree[child] -= 1;
            if indegree[child] == 0 {
                queue.push_back(child);
            }
        }
    }
    if processed != n {
        let culprit = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(Error::CyclicDag { kernel_id: culprit });
    }

    let ranks = dag.rank_order.len().max(
        dag.kernels
            .iter()
            .map(|k| k.rank + 1)
            .max()
            .unwrap_or(0),
    );
    let mut busy = vec![0.0f64; ranks];
    for k in &dag.kernels {
        if k.kind.is_compute() {
            busy[k.rank] += k.dur_dp_out;
        }
    }

    Ok(Timeline {
        start_dp_out: start_dp,
        finish_dp_out: finish_dp,
        start_pp_out: start_pp,
        finish_pp_out: finish_pp,
        t_dp_out: t_dp,
        t_pp_out: t_pp,
        compute_busy: busy,
        cross_building_bytes_dp_out: dag.meta.cross_building_bytes_dp_out,
        cross_building_bytes_pp_out: dag.meta.cross_building_bytes_pp_out,
    })
}

/// Per-kernel timeline rows for CSV export: one row per kernel per placement.
pub fn timeline_csv(dag: &KernelDag, timeline: &Timeline) -> String {
    let mut out = String::from("kernel_id,rank,kind,placement,start_s,finish_s\n");
    for placement in [Placement::DpOut, Placement::PpOut] {
        let (starts, finishes) = match placement {
            Placement::DpOut => (&timeline.start_dp_out, &timeline.finish_dp_out),
            Placement::PpOut => (&timeline.start_pp_out, &timeline.finish_pp_out),
        };
        for k in &dag.kernels {
            out.push_str(&format!(
                "{},{},{},{},{:.9},{:.9}\n",
                k.id,
                k.rank,
                kind_csv(&k.kind),
                placement,
                starts[k.id],
                finishes[k.id],
            ));
        }
    }
    out
}

fn kind_csv(kind: &KernelKind) -> String {
    kind.short_label()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::ComputePhase;
    use crate::model::{DpScheme, Schedule};
    use crate::rng::SplitMix64;
    use crate::schedule::{ConcurrencyCounts, DagMeta, Kernel};

    fn dag_from(kernels: Vec<(f64, f64, Vec<usize>)>) -> KernelDag {
        let mut ks = Vec::new();
        let mut parents = Vec::new();
        for (i, (dp, pp, par)) in kernels.into_iter().enumerate() {
            ks.push(Kernel {
                id: i,
                kind: KernelKind::ChunkCompute {
                    chunk: 0,
                    microbatch: i as u64,
                    phase: ComputePhase::Fwd,
                },
                rank: 0,
                dur_dp_out: dp,
                dur_pp_out: pp,
            });
            parents.push(par);
        }
        KernelDag {
            kernels: ks,
            parents,
            rank_order: vec![vec![]],
            meta: DagMeta {
                pp: 1,
                num_chunks: 1,
                num_microbatches: 1,
                schedule: Schedule::OneFOneB,
                dp_scheme: DpScheme::Fsdp,
                cross_building_bytes_dp_out: 0,
                cross_building_bytes_pp_out: 0,
                concurrency: ConcurrencyCounts::default(),
            },
        }
    }

    #[test]
    fn empty_dag_is_zero() {
        let t = reconstruct(&dag_from(vec![])).unwrap();
        assert_eq!(t.t_dp_out, 0.0);
        assert_eq!(t.t_pp_out, 0.0);
    }

    #[test]
    fn serial_chain_sums() {
        let durs = [1.5, 0.25, 3.0, 0.5];
        let kernels: Vec<_> = durs
            .iter()
            .enumerate()
            .map(|(i, &d)| (d, d, if i == 0 { vec![] } else { vec![i - 1] }))
            .collect();
        let t = reconstruct(&dag_from(kernels)).unwrap();
        let sum: f64 = durs.iter().sum();
        assert_eq!(t.t_dp_out, sum);
        assert_eq!(t.t_pp_out, sum);
    }

    #[test]
    fn cycle_detected() {
        let mut dag = dag_from(vec![(1.0, 1.0, vec![1]), (1.0, 1.0, vec![0])]);
        dag.rank_order = vec![vec![0, 1]];
        match reconstruct(&dag) {
            Err(Error::CyclicDag { .. }) => {}
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn bad_duration_rejected() {
        let dag = dag_from(vec![(f64::NAN, 1.0, vec![])]);
        assert!(matches!(reconstruct(&dag), Err(Error::BadDuration { .. })));
    }

    /// Independent oracle: longest weighted path to each node over an
    /// explicit topological order, computed with a different algorithm
    /// (DFS post-order) than the sweep.
    fn longest_path_oracle(dag: &KernelDag, dp_out: bool) -> Vec<f64> {
        let n = dag.len();
        let mut finish = vec![f64::NEG_INFINITY; n];
        fn visit(
            k: usize,
            dag: &KernelDag,
            finish: &mut Vec<f64>,
            dp_out: bool,
        ) -> f64 {
            if finish[k] > f64::NEG_INFINITY {
                return finish[k];
            }
            let mut start = 0.0f64;
            for &p in &dag.parents[k] {
                start = start.max(visit(p, dag, finish, dp_out));
            }
            let d = if dp_out {
                dag.kernels[k].dur_dp_out
            } else {
                dag.kernels[k].dur_pp_out
            };
            finish[k] = start + d;
            finish[k]
        }
        for k in 0..n {
            visit(k, dag, &mut finish, dp_out);
        }
        finish
    }

    #[test]
    fn random_dags_match_longest_path_oracle() {
        let mut rng = SplitMix64::new(0xfeed);
        for trial in 0..100 {
            let n = 2 + rng.index(199);
            let mut kernels = Vec::with_capacity(n);
            for i in 0..n {
                let n_parents = if i == 0 { 0 } else { rng.index(3.min(i) + 1) };
                let mut parents = Vec::new();
                for _ in 0..n_parents {
                    parents.push(rng.index(i));
                }
                parents.sort_unstable();
                parents.dedup();
                let dur_dp = (rng.next_u64() % 1000) as f64 / 100.0;
                let dur_pp = (rng.next_u64() % 1000) as f64 / 100.0;
                kernels.push((dur_dp, dur_pp, parents));
            }
            let dag = dag_from(kernels);
            let t = reconstruct(&dag).unwrap();
            let oracle_dp = longest_path_oracle(&dag, true);
            let oracle_pp = longest_path_oracle(&dag, false);
            for k in 0..n {
                assert_eq!(
                    t.finish_dp_out[k], oracle_dp[k],
                    "trial {trial}, kernel {k} (dp_out)"
                );
                assert_eq!(
                    t.finish_pp_out[k], oracle_pp[k],
                    "trial {trial}, kernel {k} (pp_out)"
                );
            }
        }
    }

    #[test]
    fn busy_rank_has_zero_bubble() {
        let kernels: Vec<_> = (0..5)
            .map(|i| (2.0, 2.0, if i == 0 { vec![] } else { vec![i - 1] }))
            .collect();
        let dag = dag_from(kernels);
        let t = reconstruct(&dag).unwrap();
        assert!(bubble_fraction(&t, 0, Placement::DpOut).abs() < 1e-12);
    }

    #[test]
    fn iteration_bounded_below_by_rank_compute() {
        use crate::assumptions::Assumptions;
        use crate::model::{BatchSpec, ModelSpec, ParallelismConfig, Placement};
        use crate::schedule::build_full;
        use crate::topology::Topology;
        let topo = Topology::from_json(
            r#"{
            "buildings": [{"gpu_count": 4, "zones": 1}, {"gpu_count": 4, "zones": 1}],
            "link_classes": {
                "intra_server":   {"bandwidth_gbps": 3600, "latency_us": 1},
                "intra_zone":     {"bandwidth_gbps": 400, "latency_us": 20},
                "cross_zone":     {"bandwidth_gbps": 400, "latency_us": 30},
                "cross_building": {"bandwidth_gbps": 400, "latency_us": 50, "oversubscription": 8.0}
            },
            "gpu": {"hbm_bytes": 2000000000000, "effective_flops": 989000000000000.0, "gpus_per_server": 4}
        }"#,
        )
        .unwrap();
        let model = ModelSpec {
            num_layers: 8,
            hidden_dim: 1024,
            ffn_dim: 4096,
            seq_len: 4096,
            num_experts: 0,
            expert_ffn_dim: 0,
            top_k: 1,
            bytes_per_element: 2,
        };
        for schedule in [Schedule::OneFOneB, Schedule::DoraPP, Schedule::InterleavedZbv] {
            let chunks = if schedule == Schedule::OneFOneB { 2 } else { 4 };
            let p = ParallelismConfig {
                tp: 1,
                cp: 1,
                ep: 1,
                pp: 2,
                dp: 4,
                placement: Placement::DpOut,
                schedule,
                dp_scheme: DpScheme::Fsdp,
                chunk_partition: vec![8 / chunks; chunks as usize],
            };
            let b = BatchSpec {
                global_batch_size: 16,
                microbatch_size: 1,
            };
            let dag = build_full(&model, &b, &p, &topo, &Assumptions::default(), 1).unwrap();
            let t = reconstruct(&dag).unwrap();
            let max_busy = t.compute_busy.iter().cloned().fold(0.0, f64::max);
            assert!(t.t_dp_out >= max_busy, "{schedule}");
            assert!(t.t_pp_out >= max_busy, "{schedule}");
        }
    }

    #[test]
    fn neutral_links_make_placements_equal() {
        // With every tier configured identically, swapping the outer
        // dimension only relabels identical links: both timelines coincide.
        use crate::assumptions::Assumptions;
        use crate::model::{BatchSpec, ModelSpec, ParallelismConfig, Placement};
        use crate::schedule::build_full;
        use crate::topology::Topology;
        let link = r#"{"bandwidth_gbps": 400, "latency_us": 20}"#;
        let topo = Topology::from_json(&format!(
            r#"{{
            "buildings": [{{"gpu_count": 4, "zones": 1}}, {{"gpu_count": 4, "zones": 1}}],
            "link_classes": {{
                "intra_server": {link}, "intra_zone": {link},
                "cross_zone": {link}, "cross_building": {link}
            }},
            "gpu": {{"hbm_bytes": 2000000000000, "effective_flops": 989000000000000.0, "gpus_per_server": 4}}
        }}"#
        ))
        .unwrap();
        let model = ModelSpec {
            num_layers: 8,
            hidden_dim: 1024,
            ffn_dim: 4096,
            seq_len: 4096,
            num_experts: 0,
            expert_ffn_dim: 0,
            top_k: 1,
            bytes_per_element: 2,
        };
        let p = ParallelismConfig {
            tp: 1,
            cp: 1,
            ep: 1,
            pp: 2,
            dp: 4,
            placement: Placement::DpOut,
            schedule: Schedule::DoraPP,
            dp_scheme: DpScheme::Fsdp,
            chunk_partition: vec![2; 4],
        };
        let b = BatchSpec {
            global_batch_size: 16,
            microbatch_size: 1,
        };
        let dag = build_full(&model, &b, &p, &topo, &Assumptions::default(), 1).unwrap();
        let t = reconstruct(&dag).unwrap();
        assert_eq!(t.t_dp_out, t.t_pp_out);
    }

    #[test]
    fn one_f_one_b_bubble_matches_analytic() {
        // Uniform chunks and negligible communication: every rank idles for
        // (pp-1)/(mb+pp-1) of the iteration.
        use crate::assumptions::Assumptions;
        use crate::model::{BatchSpec, ModelSpec, ParallelismConfig, Placement};
        use crate::schedule::build_schedule;
        use crate::topology::Topology;

        let topo = Topology::from_json(
            r#"{
            "buildings": [{"gpu_count": 8, "zones": 1}],
            "link_classes": {
                "intra_server":   {"bandwidth_gbps": 1e15, "latency_us": 0},
                "intra_zone":     {"bandwidth_gbps": 1e15, "latency_us": 0},
                "cross_zone":     {"bandwidth_gbps": 1e15, "latency_us": 0},
                "cross_building": {"bandwidth_gbps": 1e15, "latency_us": 0}
            }
        }"#,
        )
        .unwrap();
        let model = ModelSpec {
            num_layers: 8,
            hidden_dim: 1024,
            ffn_dim: 4096,
            seq_len: 4096,
            num_experts: 0,
            expert_ffn_dim: 0,
            top_k: 1,
            bytes_per_element: 2,
        };
        for (pp, mb) in [(2u64, 4u64), (4, 8), (4, 4), (8, 16)] {
            let p = ParallelismConfig {
                tp: 1,
                cp: 1,
                ep: 1,
                pp,
                dp: 1,
                placement: Placement::DpOut,
                schedule: Schedule::OneFOneB,
                dp_scheme: DpScheme::Fsdp,
                chunk_partition: vec![model.num_layers / pp; pp as usize],
            };
            let b = BatchSpec {
                global_batch_size: mb,
                microbatch_size: 1,
            };
            let dag =
                build_schedule(&model, &b, &p, &topo, &Assumptions::default(), 1).unwrap();
            let t = reconstruct(&dag).unwrap();
            let analytic = (pp - 1) as f64 / (mb + pp - 1) as f64;
            for rank in 0..pp as usize {
                let got = bubble_fraction(&t, rank, Placement::DpOut);
                assert!(
                    (got - analytic).abs() < 1e-9,
                    "pp={pp} mb={mb} rank={rank}: got {got}, analytic {analytic}"
                );
            }
        }
    }
}
