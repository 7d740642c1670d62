//! Externally visible result formats: evaluation configs, report entries,
//! and the exploration report with its CSV projection.

use serde::{Deserialize, Serialize};

use crate::assumptions::Assumptions;
use crate::error::{Error, Result};
use crate::explore::NetworkRecommendation;
use crate::model::{BatchSpec, ParallelismConfig, Placement};

/// A fully specified evaluation target: batch shape plus parallelism config.
/// This is the `config.json` document the CLI consumes and emits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub batch: BatchSpec,
    pub parallelism: ParallelismConfig,
}

impl EvalConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("config: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub rank: usize,
    pub batch: BatchSpec,
    pub parallelism: ParallelismConfig,
    pub placement: Placement,
    pub iteration_time_s: f64,
    pub t_dp_out_s: f64,
    pub t_pp_out_s: f64,
    pub num_microbatches: u64,
    pub cross_building_bytes: u64,
    pub memory_estimate_bytes: u64,
    pub max_bubble_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub tool_version: String,
    pub seed: u64,
    pub world_size: u64,
    pub evaluated_candidates: u64,
    /// True when the wall-time budget expired before the search finished;
    /// the report then holds best-so-far results.
    pub truncated: bool,
    pub ranked: Vec<ReportEntry>,
    pub recommendation: NetworkRecommendation,
    pub assumptions: Assumptions,
}

impl ExplorationReport {
    pub fn best(&self) -> &ReportEntry {
        &self.ranked[0]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Flat CSV projection of the ranked list for sweep plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "rank,placement,schedule,dp_scheme,tp,cp,ep,pp,dp,microbatch_size,\
             num_microbatches,num_chunks,iteration_time_s,t_dp_out_s,t_pp_out_s,\
             cross_building_bytes,memory_estimate_bytes,max_bubble_fraction\n",
        );
        for e in &self.ranked {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{:.9},{:.9},{:.9},{},{},{:.6}\n",
                e.rank,
                e.placement,
                e.parallelism.schedule,
                e.parallelism.dp_scheme,
                e.parallelism.tp,
                e.parallelism.cp,
                e.parallelism.ep,
                e.parallelism.pp,
                e.parallelism.dp,
                e.batch.microbatch_size,
                e.num_microbatches,
                e.parallelism.num_chunks(),
                e.iteration_time_s,
                e.t_dp_out_s,
                e.t_pp_out_s,
                e.cross_building_bytes,
                e.memory_estimate_bytes,
                e.max_bubble_fraction,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DpScheme, Schedule};

    #[test]
    fn eval_config_round_trips() {
        let c = EvalConfig {
            batch: BatchSpec {
                global_batch_size: 64,
                microbatch_size: 1,
            },
            parallelism: ParallelismConfig {
                tp: 4,
                cp: 1,
                ep: 16,
                pp: 2,
                dp: 16,
                placement: Placement::PpOut,
                schedule: Schedule::DoraPP,
                dp_scheme: DpScheme::Hsdp { replica_groups: 2 },
                chunk_partition: vec![2; 16],
            },
        };
        let s = serde_json::to_string_pretty(&c).unwrap();
        let back = EvalConfig::from_json(&s).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn eval_config_rejects_unknown_fields() {
        let s = r#"{"batch": {"global_batch_size": 8, "microbatch_size": 1},
                     "parallelism": {"tp":1,"cp":1,"ep":1,"pp":1,"dp":8,
                       "placement":"dp_out","schedule":"1f1b",
                       "dp_scheme":"fsdp","chunk_partition":[4],"typo_field":1}}"#;
        assert!(EvalConfig::from_json(s).is_err());
    }
}
