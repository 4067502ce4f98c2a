//! Per-job state machine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusResult, Draft};
use crate::decompose::{TaskDag, TaskSpec};
use crate::error::{Error, Result};
use crate::routing::AssignmentMatrix;
use crate::transport::{Envelope, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Decomposing,
    Assigning,
    Executing,
    Synthesizing,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Pending,
    Ready,
    Running,
    Complete(ConsensusResult),
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum FallbackEvent {
    Reassigned {
        subtask_id: String,
        agents: Vec<String>,
        at: u64,
    },
    AcceptedBestDraft {
        subtask_id: String,
        author_id: String,
        confidence: f64,
        at: u64,
    },
    TimedOut {
        subtask_id: String,
        at: u64,
    },
}

#[derive(Debug, Clone)]
pub struct JobState {
    pub job_id: String,
    pub task: TaskSpec,
    pub dag: TaskDag,
    pub assignment: Option<AssignmentMatrix>,
    pub phase: JobPhase,
    pub node_status: BTreeMap<String, NodeStatus>,
    pub started_at: u64,
    /// Correlation ids already handled.
    seen: BTreeSet<String>,
    /// Clusters still working per subtask.
    pending_clusters: BTreeMap<String, BTreeSet<String>>,
    cluster_results: BTreeMap<String, Vec<(String, ConsensusResult)>>,
    /// Every agent ever asked to work on a subtask.
    pub assignees: BTreeMap<String, BTreeSet<String>>,
    /// Drafts observed per subtask, first drafts and channel traffic.
    pub drafts_seen: BTreeMap<String, Vec<Draft>>,
    pub timeouts: BTreeMap<String, u32>,
    pub fallback_events: Vec<FallbackEvent>,
}

impl JobState {
    pub fn new(job_id: impl Into<String>, task: TaskSpec, started_at: u64) -> Self {
        Self {
            job_id: job_id.into(),
            task,
            dag: TaskDag::default(),
            assignment: None,
            phase: JobPhase::Decomposing,
            node_status: BTreeMap::new(),
            started_at,
            seen: BTreeSet::new(),
            pending_clusters: BTreeMap::new(),
            cluster_results: BTreeMap::new(),
            assignees: BTreeMap::new(),
            drafts_seen: BTreeMap::new(),
            timeouts: BTreeMap::new(),
            fallback_events: Vec::new(),
        }
    }

    /// Installs the DAG; every node starts Pending, sources become Ready.
    pub fn set_dag(&mut self, dag: TaskDag) {
        self.node_status = dag.nodes.keys().map(|k| (k.clone(), NodeStatus::Pending)).collect();
        self.dag = dag;
        self.refresh_ready();
    }

    /// Marks `correlation_id` handled; false if it already was.
    pub fn first_sight(&mut self, correlation_id: &str) -> bool {
        self.seen.insert(correlation_id.to_string())
    }

    pub fn status(&self, id: &str) -> Option<&NodeStatus> {
        self.node_status.get(id)
    }

    fn is_complete(&self, id: &str) -> bool {
        matches!(self.node_status.get(id), Some(NodeStatus::Complete(_)))
    }

    /// Promotes Pending nodes whose predecessors are all Complete; returns
    /// the newly Ready ids.
    pub fn refresh_ready(&mut self) -> Vec<String> {
        let mut newly = Vec::new();
        let ids: Vec<String> = self.node_status.keys().cloned().collect();
        for id in ids {
            if self.node_status[&id] != NodeStatus::Pending {
                continue;
            }
            if self.dag.predecessors(&id).iter().all(|p| self.is_complete(p)) {
                self.node_status.insert(id.clone(), NodeStatus::Ready);
                newly.push(id);
            }
        }
        newly
    }

    pub fn ready_nodes(&self) -> Vec<String> {
        self.node_status
            .iter()
            .filter(|(_, s)| **s == NodeStatus::Ready)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Ready or re-dispatched node starts running with these clusters.
    pub fn mark_running(&mut self, id: &str, clusters: BTreeSet<String>) -> Result<()> {
        match self.node_status.get(id) {
            Some(NodeStatus::Ready) | Some(NodeStatus::Running) => {}
            other => {
                return Err(Error::Protocol(format!(
                    "cannot run {id} from state {other:?}"
                )))
            }
        }
        self.node_status.insert(id.to_string(), NodeStatus::Running);
        self.pending_clusters.insert(id.to_string(), clusters);
        self.cluster_results.remove(id);
        Ok(())
    }

    pub fn pending_clusters(&self, id: &str) -> usize {
        self.pending_clusters.get(id).map_or(0, BTreeSet::len)
    }

    /// A cluster ended without a usable result.
    pub fn cluster_timed_out(&mut self, id: &str, cluster_id: &str) {
        if let Some(p) = self.pending_clusters.get_mut(id) {
            p.remove(cluster_id);
        }
    }

    pub fn record_draft(&mut self, correlation_id: &str, draft: Draft) {
        if self.first_sight(correlation_id) {
            self.drafts_seen.entry(draft.subtask_id.clone()).or_default().push(draft);
        }
    }

    /// Handles a TASK_COMPLETE envelope. Duplicates and completions for
    /// nodes that are no longer running are no-ops. Once every cluster of a
    /// node has reported, the node completes with the most confident
    /// cluster result and its successors are promoted; those ids are
    /// returned.
    pub fn on_task_complete(&mut self, env: &Envelope) -> Result<Vec<String>> {
        if self.seen.contains(&env.correlation_id) {
            return Ok(Vec::new());
        }
        let Message::TaskComplete {
            job_id,
            cluster_id,
            result,
        } = env.message()?
        else {
            return Err(Error::Protocol("expected TASK_COMPLETE".into()));
        };
        if job_id != self.job_id {
            return Err(Error::Protocol(format!("completion for foreign job {job_id}")));
        }
        let id = result.subtask_id.clone();
        if !self.node_status.contains_key(&id) {
            return Err(Error::Protocol(format!("completion for unknown subtask {id}")));
        }
        self.seen.insert(env.correlation_id.clone());
        if self.node_status[&id] != NodeStatus::Running {
            return Ok(Vec::new());
        }
        let Some(pending) = self.pending_clusters.get_mut(&id) else {
            return Ok(Vec::new());
        };
        if !pending.remove(&cluster_id) {
            return Ok(Vec::new());
        }
        self.cluster_results.entry(id.clone()).or_default().push((cluster_id, result));
        if !pending.is_empty() {
            return Ok(Vec::new());
        }
        let best = self.cluster_results[&id]
            .iter()
            .max_by(|(ca, a), (cb, b)| a.confidence.total_cmp(&b.confidence).then_with(|| cb.cmp(ca)))
            .map(|(_, r)| r.clone())
            .expect("at least one cluster result");
        self.complete(&id, best);
        Ok(self.refresh_ready())
    }

    pub fn complete(&mut self, id: &str, result: ConsensusResult) {
        self.node_status.insert(id.to_string(), NodeStatus::Complete(result));
        self.pending_clusters.remove(id);
    }

    pub fn all_complete(&self) -> bool {
        self.node_status.values().all(|s| matches!(s, NodeStatus::Complete(_)))
    }

    pub fn results(&self) -> BTreeMap<String, ConsensusResult> {
        self.node_status
            .iter()
            .filter_map(|(k, s)| match s {
                NodeStatus::Complete(r) => Some((k.clone(), r.clone())),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::BitSet;
    use crate::routing::SubtaskRequirement;
    use crate::transport::Topic;

    fn node(id: &str) -> (String, SubtaskRequirement) {
        let mut e = vec![0.0; 4];
        e[0] = 1.0;
        (
            id.to_string(),
            SubtaskRequirement {
                subtask_id: id.into(),
                description: id.into(),
                c_s: e.clone(),
                p_s: BitSet::new(64).unwrap(),
                r_s: vec![0.0; 4],
                e_s: e,
                r_i_cap: 1,
            },
        )
    }

    fn job(ids: &[&str], edges: &[(&str, &str)]) -> JobState {
        let task = TaskSpec::new("t", "task", BitSet::new(64).unwrap(), vec![0.0; 4]).unwrap();
        let mut j = JobState::new("job", task, 0);
        j.set_dag(TaskDag {
            nodes: ids.iter().map(|i| node(i)).collect(),
            edges: edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        });
        j
    }

    fn completion(subtask: &str, cluster: &str) -> Envelope {
        let msg = Message::TaskComplete {
            job_id: "job".into(),
            cluster_id: cluster.into(),
            result: ConsensusResult {
                subtask_id: subtask.into(),
                answer: format!("done {subtask}"),
                confidence: 0.7,
                rounds_used: 1,
                contributors: vec!["a".into()],
            },
        };
        Envelope::new(Topic::cluster_channel(cluster).unwrap(), &msg, format!("{cluster}:complete"), "a").unwrap()
    }

    fn run(j: &mut JobState, id: &str, cluster: &str) {
        j.mark_running(id, [cluster.to_string()].into()).unwrap();
    }

    #[test]
    fn chain_promotes_successor() {
        let mut j = job(&["A", "B"], &[("A", "B")]);
        assert_eq!(j.ready_nodes(), ["A"]);
        run(&mut j, "A", "cA");
        let ready = j.on_task_complete(&completion("A", "cA")).unwrap();
        assert_eq!(ready, ["B"]);
    }

    #[test]
    fn diamond_waits_for_all_predecessors() {
        let mut j = job(&["A", "B", "C", "D"], &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]);
        run(&mut j, "A", "cA");
        j.on_task_complete(&completion("A", "cA")).unwrap();
        run(&mut j, "B", "cB");
        j.on_task_complete(&completion("B", "cB")).unwrap();
        assert_eq!(j.status("D"), Some(&NodeStatus::Pending));
    }

    #[test]
    fn duplicate_completion_is_noop() {
        let mut j = job(&["A", "B"], &[("A", "B")]);
        run(&mut j, "A", "cA");
        let env = completion("A", "cA");
        j.on_task_complete(&env).unwrap();
        let before = j.node_status.clone();
        assert!(j.on_task_complete(&env).unwrap().is_empty());
        assert_eq!(j.node_status, before);
    }

    #[test]
    fn unknown_subtask_is_protocol_error() {
        let mut j = job(&["A"], &[]);
        let before = j.node_status.clone();
        assert!(matches!(j.on_task_complete(&completion("Z", "cZ")), Err(Error::Protocol(_))));
        assert_eq!(j.node_status, before);
    }
}
