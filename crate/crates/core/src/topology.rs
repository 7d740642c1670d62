//! Hierarchical cluster description: buildings, zones, link tiers, NIC and
//! GPU limits.
//!
//! Bandwidth figures are per GPU pair; the oversubscription ratio of a tier
//! divides them to get the effective rate a transfer sees. Cross-building
//! latency is a symmetric per-building-pair matrix so buildings at different
//! distances can be described.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four network tiers a communication group can be mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    IntraServer,
    IntraZone,
    CrossZone,
    CrossBuilding,
}

impl std::fmt::Display for LinkClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LinkClass::IntraServer => "intra_server",
            LinkClass::IntraZone => "intra_zone",
            LinkClass::CrossZone => "cross_zone",
            LinkClass::CrossBuilding => "cross_building",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadBalancing {
    Ecmp,
    PacketSpraying,
}

/// One tier of the network as described in a topology document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkClassSpec {
    /// Nominal bandwidth per GPU pair, Gbps.
    pub bandwidth_gbps: f64,
    /// One-way base latency, microseconds.
    pub latency_us: f64,
    /// Packet loss rate in [0, 1).
    #[serde(default)]
    pub loss_rate: f64,
    /// Oversubscription ratio 1:x expressed as x (>= 1).
    #[serde(default = "default_oversub")]
    pub oversubscription: f64,
}

fn default_oversub() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Building {
    pub gpu_count: u64,
    #[serde(default = "default_zones")]
    pub zones: u64,
}

fn default_zones() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NicSpec {
    /// Packet payload in bytes.
    pub packet_payload: u32,
    /// In-flight packet cap per queue pair.
    pub max_inflight_packets: u32,
    /// Queue pairs per GPU pair.
    pub qp_count: u32,
}

impl Default for NicSpec {
    fn default() -> Self {
        Self {
            packet_payload: 4096,
            max_inflight_packets: 512,
            qp_count: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GpuSpec {
    /// HBM capacity in bytes.
    pub hbm_bytes: u64,
    /// Peak dense throughput in FLOP/s before efficiency derating.
    pub effective_flops: f64,
    /// Accelerators per server; the default TP degree.
    pub gpus_per_server: u64,
}

impl Default for GpuSpec {
    fn default() -> Self {
        Self {
            hbm_bytes: 80 * (1 << 30),
            effective_flops: 989e12,
            gpus_per_server: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkClasses {
    pub intra_server: LinkClassSpec,
    pub intra_zone: LinkClassSpec,
    pub cross_zone: LinkClassSpec,
    pub cross_building: LinkClassSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub buildings: Vec<Building>,
    pub link_classes: LinkClasses,
    /// Symmetric one-way latency matrix between buildings, microseconds.
    /// Defaults to the cross_building base latency for every pair.
    #[serde(default)]
    pub cross_building_latency_us: Vec<Vec<f64>>,
    #[serde(default)]
    pub nic: NicSpec,
    #[serde(default)]
    pub gpu: GpuSpec,
    #[serde(default = "default_lb")]
    pub load_balancing: LoadBalancing,
}

fn default_lb() -> LoadBalancing {
    LoadBalancing::PacketSpraying
}

impl Topology {
    pub fn from_json(s: &str) -> Result<Self> {
        let topo: Topology =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("topology: {e}")))?;
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.buildings.is_empty() {
            v.push("topology has no buildings".to_string());
        }
        if self.buildings.iter().any(|b| b.gpu_count == 0 || b.zones == 0) {
            v.push("every building needs gpu_count > 0 and zones > 0".to_string());
        }
        for (name, c) in self.classes() {
            if c.latency_us < 0.0 || !c.latency_us.is_finite() {
                v.push(format!("{name}: latency must be finite and >= 0"));
            }
            if c.oversubscription < 1.0 {
                v.push(format!("{name}: oversubscription ratio must be >= 1:1"));
            }
            if !(0.0..1.0).contains(&c.loss_rate) {
                v.push(format!("{name}: loss rate must be in [0, 1)"));
            }
            if c.bandwidth_gbps <= 0.0 || !c.bandwidth_gbps.is_finite() {
                v.push(format!("{name}: bandwidth must be finite and > 0"));
            }
        }
        let n = self.buildings.len();
        let m = &self.cross_building_latency_us;
        if !m.is_empty() {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                v.push(format!("cross_building_latency_us must be {n}x{n}"));
            } else {
                for i in 0..n {
                    if m[i][i] != 0.0 {
                        v.push("latency matrix diagonal must be zero".to_string());
                        break;
                    }
                    for j in 0..i {
                        if (m[i][j] - m[j][i]).abs() > 1e-9 {
                            v.push("latency matrix must be symmetric".to_string());
                            break;
                        }
                    }
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations: v })
        }
    }

    fn classes(&self) -> [(&'static str, &LinkClassSpec); 4] {
        [
            ("intra_server", &self.link_classes.intra_server),
            ("intra_zone", &self.link_classes.intra_zone),
            ("cross_zone", &self.link_classes.cross_zone),
            ("cross_building", &self.link_classes.cross_building),
        ]
    }

    pub fn class_spec(&self, class: LinkClass) -> &LinkClassSpec {
        match class {
            LinkClass::IntraServer => &self.link_classes.intra_server,
            LinkClass::IntraZone => &self.link_classes.intra_zone,
            LinkClass::CrossZone => &self.link_classes.cross_zone,
            LinkClass::CrossBuilding => &self.link_classes.cross_building,
        }
    }

    pub fn world_size(&self) -> u64 {
        self.buildings.iter().map(|b| b.gpu_count).sum()
    }

    pub fn num_buildings(&self) -> usize {
        self.buildings.len()
    }

    /// Smallest zone in the topology; EP and TP groups must fit inside one.
    pub fn min_zone_gpus(&self) -> u64 {
        self.buildings
            .iter()
            .map(|b| b.gpu_count / b.zones)
            .min()
            .unwrap_or(0)
    }

    /// One-way latency between two buildings, microseconds.
    pub fn building_pair_latency_us(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        if self.cross_building_latency_us.is_empty() {
            self.link_classes.cross_building.latency_us
        } else {
            self.cross_building_latency_us[a][b]
        }
    }

    /// Largest one-way latency between any building pair.
    pub fn max_cross_building_latency_us(&self) -> f64 {
        let n = self.num_buildings();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(self.building_pair_latency_us(i, j));
            }
        }
        if n > 1 && worst == 0.0 {
            self.link_classes.cross_building.latency_us
        } else {
            worst
        }
    }

    /// Smallest one-way latency between any building pair.
    pub fn min_cross_building_latency_us(&self) -> f64 {
        let n = self.num_buildings();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.min(self.building_pair_latency_us(i, j));
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// Replace the cross-building latency matrix with a uniform latency
    /// derived from a physical distance (one-way, fibre propagation).
    pub fn set_uniform_cross_distance_km(&mut self, km: f64, us_per_km: f64) {
        let lat = km * us_per_km;
        let n = self.num_buildings();
        self.cross_building_latency_us = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { lat }).collect())
            .collect();
        self.link_classes.cross_building.latency_us = lat;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_building_json() -> &'static str {
        r#"{
            "buildings": [
                {"gpu_count": 64, "zones": 1},
                {"gpu_count": 64, "zones": 1}
            ],
            "link_classes": {
                "intra_server":   {"bandwidth_gbps": 3600, "latency_us": 1},
                "intra_zone":     {"bandwidth_gbps": 400, "latency_us": 20},
                "cross_zone":     {"bandwidth_gbps": 400, "latency_us": 30, "oversubscription": 1.33},
                "cross_building": {"bandwidth_gbps": 400, "latency_us": 50, "oversubscription": 4.0}
            }
        }"#
    }

    #[test]
    fn parses_and_validates() {
        let t = Topology::from_json(two_building_json()).unwrap();
        assert_eq!(t.world_size(), 128);
        assert_eq!(t.num_buildings(), 2);
        assert_eq!(t.nic.packet_payload, 4096);
        assert_eq!(t.gpu.gpus_per_server, 8);
        assert_eq!(t.building_pair_latency_us(0, 1), 50.0);
    }

    #[test]
    fn rejects_unknown_field() {
        let bad = two_building_json().replace("\"buildings\"", "\"bldgs\"");
        assert!(Topology::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let mut t = Topology::from_json(two_building_json()).unwrap();
        t.cross_building_latency_us = vec![vec![0.0, 100.0], vec![90.0, 0.0]];
        assert!(t.validate().is_err());
    }

    #[test]
    fn rejects_oversub_below_one() {
        let mut t = Topology::from_json(two_building_json()).unwrap();
        t.link_classes.cross_building.oversubscription = 0.5;
        assert!(t.validate().is_err());
    }

    #[test]
    fn distance_override_sets_matrix() {
        let mut t = Topology::from_json(two_building_json()).unwrap();
        t.set_uniform_cross_distance_km(10.0, 5.0);
        assert_eq!(t.building_pair_latency_us(0, 1), 50.0);
        assert_eq!(t.building_pair_latency_us(1, 0), 50.0);
        t.validate().unwrap();
    }
}
