//! Seeded mock agents. Content is a template plus a hash of the seed and the
//! inputs, so runs are reproducible and different seeds produce different
//! drafts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentBehavior, AgentError, AgentResult, ToolStub};
use crate::capability::SpecDocument;
use crate::consensus::{reference_update, Draft, DEFAULT_MARGIN};
use crate::decompose::{RawProposal, TaskSpec};
use crate::transport::DispatchTask;
use crate::vector::{splitmix64, stable_hash, unit_interval};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptedProposal {
    pub subtasks: Vec<String>,
    #[serde(default)]
    pub deps: Vec<(usize, usize)>,
}

fn default_vote_round() -> Option<u32> {
    Some(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    /// Fixed draft confidence; derived from the seed when absent.
    pub confidence: Option<f64>,
    /// Returned from DECOMPOSE; without one the agent proposes nothing.
    pub proposal: Option<ScriptedProposal>,
    /// Votes complete from this round on; `None` never votes.
    #[serde(default = "default_vote_round")]
    pub vote_complete_round: Option<u32>,
    /// Case-insensitive substrings of subtask descriptions to refuse.
    pub refuse: Vec<String>,
    /// UPDATE calls producing this round or later time out.
    pub stall_from_round: Option<u32>,
    /// The UPDATE call producing this round crashes.
    pub crash_at_round: Option<u32>,
    /// DECOMPOSE times out.
    pub decompose_timeout: bool,
    pub tools: Vec<ToolStub>,
    /// Word cap for drafts; 0 means unlimited. Usually taken from the
    /// energy entry of the agent's resource vector.
    pub token_budget: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            confidence: None,
            proposal: None,
            vote_complete_round: default_vote_round(),
            refuse: Vec::new(),
            stall_from_round: None,
            crash_at_round: None,
            decompose_timeout: false,
            tools: Vec::new(),
            token_budget: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockAgent {
    id: String,
    cfg: MockConfig,
}

impl MockAgent {
    pub fn new(id: impl Into<String>, cfg: MockConfig) -> Self {
        Self { id: id.into(), cfg }
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    pub fn confidence(&self) -> f64 {
        self.cfg
            .confidence
            .unwrap_or_else(|| 0.35 + 0.6 * unit_interval(splitmix64(self.cfg.seed)))
            .clamp(0.0, 1.0)
    }

    fn apply_budget(&self, text: String) -> String {
        let budget = self.cfg.token_budget;
        if budget == 0 || text.split_whitespace().count() <= budget {
            return text;
        }
        text.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")
    }

    fn votes_at(&self, round: u32) -> bool {
        self.cfg.vote_complete_round.is_some_and(|r| round >= r)
    }
}

impl AgentBehavior for MockAgent {
    fn agent_id(&self) -> &str {
        &self.id
    }

    fn decompose(&mut self, task: &TaskSpec, _min_sub: usize, _max_sub: usize) -> AgentResult<RawProposal> {
        if self.cfg.decompose_timeout {
            return Err(AgentError::Timeout);
        }
        let script = self.cfg.proposal.clone().unwrap_or_default();
        tracing::debug!(agent = %self.id, task = %task.task_id, n = script.subtasks.len(), "proposing");
        Ok(RawProposal {
            proposer_id: self.id.clone(),
            subtasks: script.subtasks,
            deps: script.deps,
        })
    }

    fn generate_answer(&mut self, task: &DispatchTask, context: &str, _spec: &SpecDocument) -> AgentResult<Draft> {
        let lowered = task.description.to_lowercase();
        if let Some(p) = self.cfg.refuse.iter().find(|p| lowered.contains(&p.to_lowercase())) {
            return Err(AgentError::Refused(format!("matches refusal rule {p:?}")));
        }
        let mut material = format!("{}\u{1f}{}\u{1f}{}", task.subtask_id, task.description, context);
        for (id, text) in &task.inputs {
            material.push('\u{1f}');
            material.push_str(id);
            material.push('\u{1f}');
            material.push_str(text);
        }
        let h = stable_hash(self.cfg.seed, material.as_bytes());
        let mut content = format!("answer: {} ({} ref {h:016x})", task.description, self.id);
        if !context.is_empty() {
            content.push_str("\nnotes: ");
            content.push_str(&context.replace('\n', "; "));
        }
        Ok(Draft {
            author_id: self.id.clone(),
            subtask_id: task.subtask_id.clone(),
            round: 0,
            content: self.apply_budget(content),
            confidence: self.confidence(),
            complete_vote: self.votes_at(0),
        })
    }

    fn update(&mut self, own: &Draft, peers: &[Draft], weights: &BTreeMap<String, f64>) -> AgentResult<Draft> {
        let round = own.round + 1;
        if self.cfg.crash_at_round == Some(round) {
            return Err(AgentError::Crashed);
        }
        if self.cfg.stall_from_round.is_some_and(|r| round >= r) {
            return Err(AgentError::Timeout);
        }
        let mut next = reference_update(own, peers, weights, DEFAULT_MARGIN);
        next.content = self.apply_budget(next.content);
        next.complete_vote = self.votes_at(round);
        Ok(next)
    }

    fn tools(&self) -> &[ToolStub] {
        &self.cfg.tools
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> DispatchTask {
        DispatchTask {
            subtask_id: "s000".into(),
            description: "review imaging results".into(),
            inputs: vec![],
        }
    }

    fn spec() -> SpecDocument {
        SpecDocument::new("a", vec![], vec![], vec![])
    }

    #[test]
    fn drafts_are_deterministic() {
        let mut a = MockAgent::new("a", MockConfig { seed: 3, ..Default::default() });
        let d1 = a.generate_answer(&task(), "", &spec()).unwrap();
        let d2 = a.generate_answer(&task(), "", &spec()).unwrap();
        assert_eq!(d1, d2);
        let mut b = MockAgent::new("a", MockConfig { seed: 4, ..Default::default() });
        assert_ne!(b.generate_answer(&task(), "", &spec()).unwrap().content, d1.content);
    }

    #[test]
    fn refusal_and_faults() {
        let mut a = MockAgent::new(
            "a",
            MockConfig {
                refuse: vec!["IMAGING".into()],
                stall_from_round: Some(2),
                ..Default::default()
            },
        );
        assert!(matches!(a.generate_answer(&task(), "", &spec()), Err(AgentError::Refused(_))));
        let own = Draft {
            author_id: "a".into(),
            subtask_id: "s".into(),
            round: 0,
            content: "x".into(),
            confidence: 0.5,
            complete_vote: false,
        };
        let w = BTreeMap::new();
        let r1 = a.update(&own, &[], &w).unwrap();
        assert_eq!(a.update(&r1, &[], &w), Err(AgentError::Timeout));
        let mut c = MockAgent::new("c", MockConfig { crash_at_round: Some(1), ..Default::default() });
        assert_eq!(c.update(&own, &[], &w), Err(AgentError::Crashed));
    }

    #[test]
    fn budget_caps_words() {
        let mut a = MockAgent::new("a", MockConfig { token_budget: 3, ..Default::default() });
        let d = a.generate_answer(&task(), "long context here", &spec()).unwrap();
        assert!(d.content.split_whitespace().count() <= 3);
    }

    #[test]
    fn votes_follow_config() {
        let mut a = MockAgent::new("a", MockConfig { vote_complete_round: Some(1), ..Default::default() });
        let d = a.generate_answer(&task(), "", &spec()).unwrap();
        assert!(!d.complete_vote);
        assert!(a.update(&d, &[], &BTreeMap::new()).unwrap().complete_vote);
    }
}
