use serde::{Deserialize, Serialize};

use super::synth::SynthMode;
use crate::cluster::ClusterWeights;
use crate::error::{Error, Result};

/// Orchestrator parameters. Any field missing from a JSON document takes
/// its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    /// Minimum task compatibility for a decomposition candidate.
    pub decomp_threshold: f64,
    /// Candidate cap, also the fallback top-k.
    pub decomp_max_agents: usize,
    pub subtasks_min: usize,
    pub subtasks_max: usize,
    /// Subtasks at or above this cosine merge into one node.
    pub merge_sim: f64,
    /// Average-linkage cut for cluster formation.
    pub cluster_sim_threshold: f64,
    pub cluster_max_size: usize,
    pub cluster_weights: ClusterWeights,
    /// Refinement rounds per cluster.
    pub rounds: u32,
    pub early_exit: bool,
    pub majority_stop: bool,
    pub job_timeout_ms: u64,
    /// Team size cap per subtask.
    pub team_size: usize,
    /// Resource penalty rate.
    pub lambda: f64,
    /// Reputation moving-average rate.
    pub reputation_beta: f64,
    pub synth_mode: SynthMode,
    /// Record a GATE_FAIL event for every policy-gated pair.
    pub audit_gate_failures: bool,
    /// How many index hits feed candidate selection.
    pub retrieval_k: usize,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            decomp_threshold: 0.3,
            decomp_max_agents: 4,
            subtasks_min: 2,
            subtasks_max: 4,
            merge_sim: 0.5,
            cluster_sim_threshold: 0.2,
            cluster_max_size: 4,
            cluster_weights: ClusterWeights::default(),
            rounds: 3,
            early_exit: true,
            majority_stop: false,
            job_timeout_ms: 300_000,
            team_size: 3,
            lambda: 1.0,
            reputation_beta: 0.2,
            synth_mode: SynthMode::Concat,
            audit_gate_failures: false,
            retrieval_k: 32,
        }
    }
}

/// Environment variables that override configuration fields.
pub const ENV_OVERRIDES: [&str; 6] = [
    "FOE_DECOMP_THRESHOLD",
    "FOE_DECOMP_MAX_AGENTS",
    "FOE_DECOMP_SUBTASKS_MIN",
    "FOE_DECOMP_SUBTASKS_MAX",
    "FOE_DECOMP_MERGE_SIM",
    "FOE_CLUSTER_SIM_THRESHOLD",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        if !unit_open(self.decomp_threshold) {
            return Err(Error::invalid("decomp_threshold must lie in (0, 1)"));
        }
        if self.decomp_max_agents == 0 {
            return Err(Error::invalid("decomp_max_agents must be positive"));
        }
        if self.subtasks_min == 0 || self.subtasks_min > self.subtasks_max {
            return Err(Error::invalid("need 1 <= subtasks_min <= subtasks_max"));
        }
        if !(-1.0..=1.0).contains(&self.merge_sim) || !(-1.0..=1.0).contains(&self.cluster_sim_threshold) {
            return Err(Error::invalid("similarity thresholds must lie in [-1, 1]"));
        }
        if self.cluster_max_size == 0 || self.team_size == 0 || self.rounds == 0 || self.retrieval_k == 0 {
            return Err(Error::invalid("cluster size, team size, rounds and retrieval_k must be positive"));
        }
        if self.job_timeout_ms == 0 {
            return Err(Error::invalid("job_timeout_ms must be positive"));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 || !(0.0..=1.0).contains(&self.reputation_beta) {
            return Err(Error::invalid("lambda must be >= 0 and reputation_beta in [0, 1]"));
        }
        self.cluster_weights.validate()
    }

    /// Applies `(variable, value)` overrides; unknown variables are ignored.
    pub fn apply_overrides<'a>(&mut self, vars: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (key, value) in vars {
            match key {
                "FOE_DECOMP_THRESHOLD" => self.decomp_threshold = parse(key, value)?,
                "FOE_DECOMP_MAX_AGENTS" => self.decomp_max_agents = parse(key, value)?,
                "FOE_DECOMP_SUBTASKS_MIN" => self.subtasks_min = parse(key, value)?,
                "FOE_DECOMP_SUBTASKS_MAX" => self.subtasks_max = parse(key, value)?,
                "FOE_DECOMP_MERGE_SIM" => self.merge_sim = parse(key, value)?,
                "FOE_CLUSTER_SIM_THRESHOLD" => self.cluster_sim_threshold = parse(key, value)?,
                _ => {}
            }
        }
        self.validate()
    }

    /// Reads the override variables from the process environment.
    pub fn apply_env(&mut self) -> Result<()> {
        let vars: Vec<(&str, String)> = ENV_OVERRIDES
            .iter()
            .filter_map(|k| std::env::var(k).ok().map(|v| (*k, v)))
            .collect();
        self.apply_overrides(vars.iter().map(|(k, v)| (*k, v.as_str())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = OrchestratorConfig::default();
        c.validate().unwrap();
        assert_eq!(c.decomp_threshold, 0.3);
        assert_eq!((c.subtasks_min, c.subtasks_max), (2, 4));
        assert_eq!(c.job_timeout_ms, 300_000);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut c = OrchestratorConfig::default();
        c.apply_overrides([("FOE_DECOMP_MERGE_SIM", "0.7"), ("FOE_CLUSTER_SIM_THRESHOLD", "0.4"), ("OTHER", "x")])
            .unwrap();
        assert_eq!(c.merge_sim, 0.7);
        assert_eq!(c.cluster_sim_threshold, 0.4);
        assert!(c.clone().apply_overrides([("FOE_DECOMP_THRESHOLD", "abc")]).is_err());
        assert!(c.apply_overrides([("FOE_DECOMP_SUBTASKS_MIN", "9")]).is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: OrchestratorConfig = serde_json::from_str(r#"{"rounds": 5}"#).unwrap();
        assert_eq!(c.rounds, 5);
        assert_eq!(c.team_size, 3);
    }
}
