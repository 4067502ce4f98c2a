//! Scenario files: a federation, tasks and configuration in one JSON
//! document, plus the runner that plays them on an in-process broker.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentRegistration, Federation, MockAgent, MockConfig};
use crate::capability::{BitSet, SpecDocument, ENERGY_UNITS, POLICY_BITS, RESOURCE_DIM};
use crate::decompose::TaskSpec;
use crate::error::{Error, Result};
use crate::orchestrator::{JobReport, Orchestrator, OrchestratorConfig};
use crate::policy::build_blocklist;
use crate::routing::DEFAULT_CAPACITY;
use crate::transport::{Broker, BrokerStats};
use crate::vector::splitmix64;

fn default_reputation() -> f64 {
    0.5
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

fn zero_resources() -> Vec<f64> {
    vec![0.0; RESOURCE_DIM]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDef {
    pub id: String,
    #[serde(default)]
    pub goals: Vec<String>,
    #[serde(default)]
    pub rules: Vec<String>,
    #[serde(default)]
    pub skills: Vec<String>,
    /// latency ms, bandwidth Mbps, memory GB, energy units.
    #[serde(default = "zero_resources")]
    pub resources: Vec<f64>,
    /// Indices of held policy bits.
    #[serde(default)]
    pub policies: Vec<usize>,
    #[serde(default = "default_reputation")]
    pub reputation: f64,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default)]
    pub behavior: MockConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub policies: Vec<usize>,
    #[serde(default = "zero_resources")]
    pub resources: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Faults {
    /// Deliver every QoS 1 envelope twice.
    pub duplicate_delivery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: OrchestratorConfig,
    #[serde(default)]
    pub blocklist: Vec<String>,
    #[serde(default)]
    pub faults: Faults,
    pub agents: Vec<AgentDef>,
    pub tasks: Vec<TaskDef>,
}

const BUNDLED: [(&str, &str); 3] = [
    ("smoke", include_str!("../scenarios/smoke.json")),
    ("fault", include_str!("../scenarios/fault.json")),
    ("infeasible", include_str!("../scenarios/infeasible.json")),
];

/// Names of the scenarios compiled into the library.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text).expect("bundled scenarios parse"))
}

fn bits(indices: &[usize]) -> Result<BitSet> {
    BitSet::from_indices(POLICY_BITS, indices.iter().copied())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::invalid(format!("duplicate agent id {}", a.id)));
            }
            if a.resources.len() != RESOURCE_DIM {
                return Err(Error::invalid(format!("agent {}: resources need {RESOURCE_DIM} entries", a.id)));
            }
            bits(&a.policies)?;
        }
        let mut tasks = BTreeSet::new();
        for t in &self.tasks {
            if !tasks.insert(t.id.as_str()) {
                return Err(Error::invalid(format!("duplicate task id {}", t.id)));
            }
            if t.resources.len() != RESOURCE_DIM {
                return Err(Error::invalid(format!("task {}: resources need {RESOURCE_DIM} entries", t.id)));
            }
            bits(&t.policies)?;
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub reports: Vec<JobReport>,
    pub stats: BrokerStats,
}

impl ScenarioOutcome {
    pub fn all_done(&self) -> bool {
        self.reports.iter().all(JobReport::is_done)
    }
}

/// Mixes the scenario seed into each agent's own seed.
pub fn agent_seed(scenario_seed: u64, agent_seed: u64) -> u64 {
    splitmix64(scenario_seed ^ splitmix64(agent_seed))
}

/// Registers the agents, then runs every task in file order.
pub fn run_scenario(scenario: &Scenario, overrides: RunOverrides) -> Result<ScenarioOutcome> {
    let mut config = scenario.config.clone();
    if let Some(t) = overrides.timeout_ms {
        config.job_timeout_ms = t;
    }
    let seed = overrides.seed.unwrap_or(scenario.seed);
    let broker = Broker::new();
    broker.set_duplicate_delivery(scenario.faults.duplicate_delivery);
    let mut orch = Orchestrator::new(broker.clone(), config)?;
    orch.set_blocklist(build_blocklist(scenario.blocklist.iter().map(String::as_str)));
    let mut fed = Federation::new(broker.clone());

    for a in &scenario.agents {
        let mut behavior = a.behavior.clone();
        behavior.seed = agent_seed(seed, behavior.seed);
        if behavior.token_budget == 0 {
            behavior.token_budget = a.resources[ENERGY_UNITS].max(0.0).floor() as usize;
        }
        let spec = SpecDocument::new(
            a.id.clone(),
            a.goals.clone(),
            a.rules.clone(),
            behavior.tools.iter().map(|t| t.name.clone()).collect(),
        );
        fed.register_agent(AgentRegistration {
            spec,
            skills: a.skills.clone(),
            resources: a.resources.clone(),
            policies: bits(&a.policies)?,
            reputation: a.reputation,
            capacity: a.capacity,
            behavior: Box::new(MockAgent::new(a.id.clone(), behavior)),
        })?;
    }

    let mut reports = Vec::with_capacity(scenario.tasks.len());
    for t in &scenario.tasks {
        let task = TaskSpec::new(t.id.clone(), t.description.clone(), bits(&t.policies)?, t.resources.clone())?;
        reports.push(orch.run_job(&mut fed, task)?);
    }
    Ok(ScenarioOutcome {
        reports,
        stats: broker.stats(),
    })
}

/// Renders rows as left-aligned columns separated by two spaces.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{cell:<w$}");
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(headers.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn shorten(text: &str, max: usize) -> String {
    let flat = text.replace('\n', " | ");
    if flat.chars().count() <= max {
        flat
    } else {
        let cut: String = flat.chars().take(max.saturating_sub(3)).collect();
        format!("{cut}...")
    }
}

/// One line per job: status, shape, traffic, rounds, objective and answer.
pub fn summary_table(reports: &[JobReport]) -> String {
    let headers = [
        "job", "task", "status", "nodes", "clusters", "rounds", "ticks", "messages", "objective", "oracle_gap",
        "fallbacks", "answer",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let (objective, gap) = match &r.assignment {
                Some(a) => (
                    format!("{:.6}", a.objective),
                    a.oracle_gap.map_or("-".to_string(), |g| format!("{g:.1e}")),
                ),
                None => ("-".into(), "-".into()),
            };
            vec![
                r.job_id.clone(),
                r.task_id.clone(),
                format!("{:?}", r.status).to_lowercase(),
                r.dag_nodes.len().to_string(),
                r.clusters.len().to_string(),
                r.total_rounds().to_string(),
                r.phase_ticks.values().sum::<u64>().to_string(),
                r.total_published().to_string(),
                objective,
                gap,
                r.fallback_events.len().to_string(),
                match (&r.final_answer, &r.error) {
                    (Some(a), _) => shorten(a, 60),
                    (None, Some(e)) => shorten(e, 60),
                    (None, None) => "-".into(),
                },
            ]
        })
        .collect();
    render_table(&headers, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parse_and_round_trip() {
        for name in bundled_names() {
            let s = bundled(name).unwrap();
            let again = Scenario::from_json(&s.to_json().unwrap()).unwrap();
            assert_eq!(s, again);
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Scenario::from_json("{\n  \"name\": 3\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_agents_rejected() {
        let text = r#"{"name":"x","agents":[{"id":"a"},{"id":"a"}],"tasks":[]}"#;
        assert!(Scenario::from_json(text).is_err());
    }

    #[test]
    fn table_alignment() {
        let t = render_table(&["a", "bbb"], &[vec!["xxxx".into(), "y".into()]]);
        assert_eq!(t, "a     bbb\nxxxx  y\n");
    }
}
