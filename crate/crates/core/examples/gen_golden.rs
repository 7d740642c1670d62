//! Regenerates the golden schedule fixtures under tests/golden/ after an
//! intentional scheduler change:
//!
//!   cargo run -p spanopt-core --example gen_golden
//!
//! Review the diff before committing; the per-rank orders are load-bearing.

use spanopt_core::model::{BatchSpec, DpScheme, ModelSpec, ParallelismConfig, Placement, Schedule};
use spanopt_core::schedule::build_schedule;
use spanopt_core::{Assumptions, Topology};

fn main() {
    let topo = Topology::from_json(
        r#"{
        "buildings": [{"gpu_count": 4, "zones": 1}, {"gpu_count": 4, "zones": 1}],
        "link_classes": {
            "intra_server":   {"bandwidth_gbps": 3600, "latency_us": 1},
            "intra_zone":     {"bandwidth_gbps": 400, "latency_us": 20},
            "cross_zone":     {"bandwidth_gbps": 400, "latency_us": 30},
            "cross_building": {"bandwidth_gbps": 400, "latency_us": 50, "oversubscription": 4.0}
        },
        "gpu": {"hbm_bytes": 2000000000000, "effective_flops": 989000000000000.0, "gpus_per_server": 4}
    }"#,
    )
    .unwrap();
    let model = ModelSpec {
        num_layers: 16,
        hidden_dim: 1024,
        ffn_dim: 4096,
        seq_len: 4096,
        num_experts: 0,
        expert_ffn_dim: 0,
        top_k: 1,
        bytes_per_element: 2,
    };
    for schedule in [Schedule::DoraPP, Schedule::InterleavedZbv] {
        let p = ParallelismConfig {
            tp: 1,
            cp: 1,
            ep: 1,
            pp: 4,
            dp: 2,
            placement: Placement::PpOut,
            schedule,
            dp_scheme: DpScheme::Fsdp,
            chunk_partition: vec![2; 8],
        };
        let b = BatchSpec { global_batch_size: 16, microbatch_size: 1 };
        let dag = build_schedule(&model, &b, &p, &topo, &Assumptions::default(), 1).unwrap();
        println!("=== {schedule} ===");
        for line in dag.rank_order_labels() {
            println!("{line}");
        }
    }
}
