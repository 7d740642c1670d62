//! Bundled workload and topology fixtures.
//!
//! The JSON documents under `fixtures/` at the repository root are compiled
//! into the library so tests and the CLI resolve them without touching the
//! filesystem. Accessors parse on demand, which also keeps the files honest.

use crate::assumptions::Assumptions;
use crate::model::ModelSpec;
use crate::report::EvalConfig;
use crate::topology::Topology;

pub const DENSE17B_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/dense17b.json"));
pub const MOE40B_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/moe40b.json"));
pub const TWO_BUILDING_64_JSON: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/two-building-64.json"
));
pub const TWO_BUILDING_128_JSON: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/two-building-128.json"
));
pub const B1_LIKE_128_JSON: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/b1-like-128.json"
));
pub const CONFIG_DENSE17B_JSON: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/config-dense17b.json"
));
pub const CONFIG_MOE40B_JSON: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/config-moe40b.json"
));
pub const ASSUMPTIONS_RECOMPUTE_JSON: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/assumptions-recompute.json"
));

/// Bundled fixture names usable in place of file paths on the CLI.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "dense17b" => Some(DENSE17B_JSON),
        "moe40b" => Some(MOE40B_JSON),
        "two-building-64" => Some(TWO_BUILDING_64_JSON),
        "two-building-128" => Some(TWO_BUILDING_128_JSON),
        "b1-like-128" => Some(B1_LIKE_128_JSON),
        "config-dense17b" => Some(CONFIG_DENSE17B_JSON),
        "config-moe40b" => Some(CONFIG_MOE40B_JSON),
        "assumptions-recompute" => Some(ASSUMPTIONS_RECOMPUTE_JSON),
        _ => None,
    }
}

/// 17B-class dense transformer (48 layers, H=5120, F=13824, 8K context).
pub fn dense17b() -> ModelSpec {
    ModelSpec::from_json(DENSE17B_JSON).expect("bundled dense17b fixture")
}

/// 40B-class MoE transformer (32 layers, H=4096, F_e=4096) with a
/// configurable expert count.
pub fn moe40b(experts: u64) -> ModelSpec {
    let mut m = ModelSpec::from_json(MOE40B_JSON).expect("bundled moe40b fixture");
    m.num_experts = experts;
    m.validate().expect("moe40b expert override");
    m
}

/// Two buildings of 32 GPUs; research-cluster scale for the dense workload.
pub fn two_building_64() -> Topology {
    Topology::from_json(TWO_BUILDING_64_JSON).expect("bundled two-building-64 fixture")
}

/// Two buildings of 64 GPUs; testbed scale for the MoE workload.
pub fn two_building_128() -> Topology {
    Topology::from_json(TWO_BUILDING_128_JSON).expect("bundled two-building-128 fixture")
}

/// Two-building variant with intra-building oversubscription.
pub fn b1_like_128() -> Topology {
    Topology::from_json(B1_LIKE_128_JSON).expect("bundled b1-like-128 fixture")
}

/// Table-style default run for the dense workload (8-1-NA-2-4, mbs 4,
/// gbs 176, one layer per chunk).
pub fn config_dense17b() -> EvalConfig {
    EvalConfig::from_json(CONFIG_DENSE17B_JSON).expect("bundled dense config fixture")
}

/// Table-style default run for the MoE workload (4-1-16-2-16, mbs 1, gbs 64,
/// two layers per chunk).
pub fn config_moe40b() -> EvalConfig {
    EvalConfig::from_json(CONFIG_MOE40B_JSON).expect("bundled moe config fixture")
}

/// Assumptions block for recompute-style activation accounting; the dense
/// workload does not fit HBM under full activation retention.
pub fn assumptions_recompute() -> Assumptions {
    serde_json::from_str(ASSUMPTIONS_RECOMPUTE_JSON).expect("bundled assumptions fixture")
}

/// Convenience: set the cross-building oversubscription ratio.
pub fn with_oversub(mut topo: Topology, ratio: f64) -> Topology {
    topo.link_classes.cross_building.oversubscription = ratio;
    topo
}
