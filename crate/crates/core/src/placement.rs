//! Mapping from parallelism dimensions to network tiers.
//!
//! TP sits innermost (inside a server), CP and EP inside a zone. The
//! placement choice decides whether DP collectives or PP point-to-point
//! transfers ride the cross-building network; the other of the two lands on
//! the cross-zone tier.

use serde::{Deserialize, Serialize};

use crate::model::Placement;
use crate::topology::{LinkClass, Topology};

/// Link assignment for one adjacent-stage pair. Boundary `i` connects stage
/// `i` to stage `(i+1) % pp`; the last entry is the wrap-around boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLink {
    pub class: LinkClass,
    /// Building pair the boundary straddles, if it crosses buildings.
    pub building_pair: Option<(usize, usize)>,
}

/// Resolved link classes for every communication group of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlacement {
    pub tp: LinkClass,
    pub cp: LinkClass,
    pub ep: LinkClass,
    /// Tier of FSDP collectives, and of the HSDP cross-group sync.
    pub dp_outer: LinkClass,
    /// Tier of the HSDP intra-group shard collectives.
    pub dp_inner: LinkClass,
    /// Per-boundary link assignment, length = pp.
    pub pp_boundaries: Vec<BoundaryLink>,
}

impl GroupPlacement {
    /// True when some PP boundary crosses buildings.
    pub fn pp_crosses_buildings(&self) -> bool {
        self.pp_boundaries
            .iter()
            .any(|b| b.class == LinkClass::CrossBuilding)
    }
}

/// Building that hosts a stage under PP-out: stages split into contiguous
/// blocks across buildings.
pub fn stage_building(stage: usize, pp: usize, buildings: usize) -> usize {
    if buildings <= 1 || pp == 0 {
        return 0;
    }
    stage * buildings / pp
}

/// Resolve the tier each group communicates over for the given placement.
pub fn resolve_placement(topo: &Topology, pp: u64, placement: Placement) -> GroupPlacement {
    let b = topo.num_buildings();
    let pp = pp as usize;
    let multi = b > 1;

    match placement {
        Placement::DpOut => GroupPlacement {
            tp: LinkClass::IntraServer,
            cp: LinkClass::IntraZone,
            ep: LinkClass::IntraZone,
            dp_outer: if multi {
                LinkClass::CrossBuilding
            } else {
                LinkClass::CrossZone
            },
            dp_inner: LinkClass::CrossZone,
            pp_boundaries: vec![
                BoundaryLink {
                    class: LinkClass::CrossZone,
                    building_pair: None,
                };
                pp
            ],
        },
        Placement::PpOut => {
            let boundaries = (0..pp)
                .map(|s| {
                    let from = stage_building(s, pp, b);
                    let to = stage_building((s + 1) % pp, pp, b);
                    if from != to {
                        BoundaryLink {
                            class: LinkClass::CrossBuilding,
                            building_pair: Some((from, to)),
                        }
                    } else {
                        BoundaryLink {
                            class: LinkClass::CrossZone,
                            building_pair: None,
                        }
                    }
                })
                .collect();
            GroupPlacement {
                tp: LinkClass::IntraServer,
                cp: LinkClass::IntraZone,
                ep: LinkClass::IntraZone,
                dp_outer: LinkClass::CrossZone,
                dp_inner: LinkClass::IntraZone,
                pp_boundaries: boundaries,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn topo(buildings: usize) -> Topology {
        let b: Vec<String> = (0..buildings)
            .map(|_| r#"{"gpu_count": 32, "zones": 1}"#.to_string())
            .collect();
        Topology::from_json(&format!(
            r#"{{
            "buildings": [{}],
            "link_classes": {{
                "intra_server":   {{"bandwidth_gbps": 3600, "latency_us": 1}},
                "intra_zone":     {{"bandwidth_gbps": 400, "latency_us": 20}},
                "cross_zone":     {{"bandwidth_gbps": 400, "latency_us": 30}},
                "cross_building": {{"bandwidth_gbps": 400, "latency_us": 50, "oversubscription": 4.0}}
            }}
        }}"#,
            b.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn exactly_one_dimension_on_cross_building() {
        let t = topo(2);
        for pp in [2u64, 4, 8] {
            let dp_out = resolve_placement(&t, pp, Placement::DpOut);
            assert_eq!(dp_out.dp_outer, LinkClass::CrossBuilding);
            assert!(!dp_out.pp_crosses_buildings());

            let pp_out = resolve_placement(&t, pp, Placement::PpOut);
            assert_ne!(pp_out.dp_outer, LinkClass::CrossBuilding);
            assert!(pp_out.pp_crosses_buildings());
        }
    }

    #[test]
    fn ppout_boundary_pairs() {
        let t = topo(2);
        let g = resolve_placement(&t, 4, Placement::PpOut);
        // Stages 0,1 in building 0; stages 2,3 in building 1.
        assert_eq!(g.pp_boundaries[0].building_pair, None);
        assert_eq!(g.pp_boundaries[1].building_pair, Some((0, 1)));
        assert_eq!(g.pp_boundaries[2].building_pair, None);
        // The wrap-around boundary crosses back.
        assert_eq!(g.pp_boundaries[3].building_pair, Some((1, 0)));
    }

    #[test]
    fn single_building_has_no_cross_links() {
        let t = topo(1);
        for placement in [Placement::DpOut, Placement::PpOut] {
            let g = resolve_placement(&t, 4, placement);
            assert_ne!(g.dp_outer, LinkClass::CrossBuilding);
            assert!(!g.pp_crosses_buildings());
        }
    }
}
