//! Worker agents: the behavior interface, scripted tool stubs, seeded mock
//! agents and the reactive worker that connects a behavior to the broker.

mod mock;
mod worker;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use mock::{MockAgent, MockConfig, ScriptedProposal};
pub use worker::{capability_text, AgentRegistration, AgentWorker, Federation};

use crate::capability::{tokenize, SpecDocument};
use crate::consensus::Draft;
use crate::decompose::{RawProposal, TaskSpec};
use crate::transport::DispatchTask;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("agent call timed out")]
    Timeout,
    #[error("agent crashed")]
    Crashed,
    #[error("agent refused: {0}")]
    Refused(String),
}

pub type AgentResult<T> = std::result::Result<T, AgentError>;

/// What an agent can be asked to do. Implementations must be deterministic
/// given their configuration and inputs.
pub trait AgentBehavior: Send {
    fn agent_id(&self) -> &str;

    fn decompose(&mut self, task: &TaskSpec, min_sub: usize, max_sub: usize) -> AgentResult<RawProposal>;

    fn generate_answer(
        &mut self,
        task: &DispatchTask,
        context: &str,
        spec: &SpecDocument,
    ) -> AgentResult<Draft>;

    fn update(
        &mut self,
        own: &Draft,
        peers: &[Draft],
        weights: &BTreeMap<String, f64>,
    ) -> AgentResult<Draft>;

    fn tools(&self) -> &[ToolStub];
}

/// A scripted local resource: fixed key -> snippet lookups.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ToolStub {
    pub name: String,
    pub lookup: BTreeMap<String, String>,
}

/// Snippets whose keys share a token with the description, in key order
/// across all tools, one per line. Empty when nothing matches.
pub fn retrieve_resources(tools: &[ToolStub], description: &str) -> String {
    let words: BTreeSet<String> = tokenize(description).collect();
    let mut hits: Vec<(&str, &str)> = tools
        .iter()
        .flat_map(|t| t.lookup.iter())
        .filter(|(key, _)| tokenize(key).any(|k| words.contains(&k)))
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    hits.sort();
    hits.into_iter().map(|(_, v)| v).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tool(pairs: &[(&str, &str)]) -> ToolStub {
        ToolStub {
            name: "kb".into(),
            lookup: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    #[test]
    fn no_tools_no_context() {
        assert_eq!(retrieve_resources(&[], "anything"), "");
    }

    #[test]
    fn matching_keys_in_key_order() {
        let t = tool(&[("zeta dosing", "Z"), ("alpha dosing", "A"), ("imaging", "I")]);
        assert_eq!(retrieve_resources(std::slice::from_ref(&t), "review imaging"), "I");
        assert_eq!(retrieve_resources(&[t], "check Dosing"), "A\nZ");
    }
}
