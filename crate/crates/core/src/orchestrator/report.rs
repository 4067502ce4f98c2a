use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::job::{FallbackEvent, JobPhase};
use crate::policy::PolicyEvent;
use crate::transport::{ResultStatus, TopicClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub objective: f64,
    /// Exhaustive optimum, computed when `k * n <= 30`.
    pub oracle_objective: Option<f64>,
    pub oracle_gap: Option<f64>,
    /// Agents per subtask.
    pub teams: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: String,
    pub subtask_id: String,
    pub attempt: u32,
    pub members: Vec<String>,
    pub rounds_used: u32,
    pub timed_out: bool,
    pub dropped: Vec<String>,
    /// DRAFT publishes on the channel.
    pub drafts_published: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub description: String,
    pub status: String,
    pub answer: Option<String>,
    pub confidence: Option<f64>,
    pub contributors: Vec<String>,
}

/// Everything observable about one job. Durations are logical: the number
/// of broker publishes during each phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job_id: String,
    pub task_id: String,
    pub status: ResultStatus,
    pub phase: JobPhase,
    pub error: Option<String>,
    pub final_answer: Option<String>,
    pub phase_ticks: BTreeMap<JobPhase, u64>,
    /// Publishes per topic class during the job.
    pub published: BTreeMap<TopicClass, u64>,
    /// Envelopes queued to subscribers during the job, duplicates included.
    pub raw_deliveries: u64,
    pub candidates: Vec<String>,
    pub proposals: usize,
    pub dag_nodes: Vec<String>,
    pub dag_edges: Vec<(String, String)>,
    pub assignment: Option<AssignmentReport>,
    pub clusters: Vec<ClusterReport>,
    pub nodes: BTreeMap<String, NodeReport>,
    pub fallback_events: Vec<FallbackEvent>,
    pub policy_events: Vec<PolicyEvent>,
    pub synth_ops: u64,
    pub reputations: BTreeMap<String, f64>,
}

impl JobReport {
    pub fn is_done(&self) -> bool {
        self.status == ResultStatus::Done
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn total_published(&self) -> u64 {
        self.published.values().sum()
    }

    pub fn total_rounds(&self) -> u32 {
        self.clusters.iter().map(|c| c.rounds_used).sum()
    }
}
