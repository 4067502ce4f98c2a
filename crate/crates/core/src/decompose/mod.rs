//! Collaborative decomposition: pick candidate agents for a task, gather
//! their subtask proposals, merge similar subtasks across proposals and
//! return a validated DAG.

mod dag;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use dag::{
    break_cycles, strongly_connected, topo_sort, validate_dag, CandidateGraph, Edge, TaskDag,
};

use crate::capability::{embed_text, BitSet, FULL_DIM};
use crate::error::{Error, Result};
use crate::routing::{policy_gate, resource_penalty, AgentProfile, SubtaskRequirement};
use crate::vector::{cosine, is_unit, normalized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub description: String,
    pub c_t: Vec<f64>,
    pub p_req: BitSet,
    pub r_req: Vec<f64>,
}

impl TaskSpec {
    /// Embeds the description to build `c_t`.
    pub fn new(
        task_id: impl Into<String>,
        description: impl Into<String>,
        p_req: BitSet,
        r_req: Vec<f64>,
    ) -> Result<Self> {
        let description = description.into();
        let c_t = embed_text(&description, FULL_DIM)?;
        let task = TaskSpec {
            task_id: task_id.into(),
            description,
            c_t,
            p_req,
            r_req,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(Error::invalid("empty task_id"));
        }
        if !is_unit(&self.c_t) {
            return Err(Error::invalid("task embedding is not unit norm"));
        }
        crate::capability::validate_resources(&self.r_req)
    }
}

/// A proposal as returned by an agent, before bounds and embedding.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawProposal {
    pub proposer_id: String,
    pub subtasks: Vec<String>,
    /// `(prerequisite, dependent)` index pairs into `subtasks`.
    #[serde(default)]
    pub deps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedSubtask {
    pub description: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub proposer_id: String,
    pub subtasks: Vec<ProposedSubtask>,
    pub deps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub agent_id: String,
    /// Task-level compatibility: `cos(c_t, c_a) * gate * penalty`.
    pub alpha: f64,
    pub cosine: f64,
}

/// Agents whose task compatibility exceeds `tau`, best first, at most
/// `k_fallback` of them. If none qualify, the `k_fallback` agents with the
/// highest capability cosine. Ties break by ascending agent id.
pub fn select_candidates(
    task: &TaskSpec,
    agents: &[AgentProfile],
    tau: f64,
    k_fallback: usize,
    lambda: f64,
) -> Result<Vec<Candidate>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("threshold {tau} outside (0, 1)")));
    }
    if k_fallback == 0 {
        return Err(Error::invalid("k_fallback must be positive"));
    }
    let mut scored = Vec::with_capacity(agents.len());
    for a in agents {
        let cos = cosine(&task.c_t, a.vcv.capability())?;
        let gate = policy_gate(&task.p_req, a.vcv.policies());
        let alpha = if gate {
            cos * resource_penalty(&task.r_req, a.vcv.resources(), lambda)?
        } else {
            0.0
        };
        scored.push(Candidate {
            agent_id: a.agent_id().to_string(),
            alpha,
            cosine: cos,
        });
    }
    let mut qualified: Vec<Candidate> = scored.iter().filter(|c| c.alpha > tau).cloned().collect();
    if qualified.is_empty() {
        qualified = scored;
        qualified.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.agent_id.cmp(&b.agent_id)));
    } else {
        qualified.sort_by(|a, b| b.alpha.total_cmp(&a.alpha).then_with(|| a.agent_id.cmp(&b.agent_id)));
    }
    qualified.truncate(k_fallback);
    Ok(qualified)
}

/// Applies bounds to the replies of `candidates`: fewer than `min_sub`
/// subtasks rejects a proposal, more than `max_sub` keeps the first
/// `max_sub`. Dependencies that fall out of range or loop on themselves are
/// dropped. Replies from non-candidates and repeat replies are ignored.
/// Output is ordered by proposer id.
pub fn collect_proposals(
    replies: &[RawProposal],
    candidates: &[String],
    min_sub: usize,
    max_sub: usize,
) -> Result<Vec<Proposal>> {
    if min_sub == 0 || min_sub > max_sub {
        return Err(Error::invalid(format!("bad subtask bounds [{min_sub}, {max_sub}]")));
    }
    let allowed: BTreeSet<&str> = candidates.iter().map(String::as_str).collect();
    let mut by_proposer: BTreeMap<&str, &RawProposal> = BTreeMap::new();
    for r in replies {
        if !allowed.contains(r.proposer_id.as_str()) {
            tracing::warn!(proposer = %r.proposer_id, "proposal from non-candidate ignored");
            continue;
        }
        by_proposer.entry(r.proposer_id.as_str()).or_insert(r);
    }
    let mut out = Vec::new();
    'proposals: for (proposer, raw) in by_proposer {
        if raw.subtasks.len() < min_sub {
            tracing::info!(%proposer, n = raw.subtasks.len(), "proposal below minimum, rejected");
            continue;
        }
        let kept = raw.subtasks.len().min(max_sub);
        let mut subtasks = Vec::with_capacity(kept);
        for d in &raw.subtasks[..kept] {
            match embed_text(d, FULL_DIM) {
                Ok(embedding) => subtasks.push(ProposedSubtask {
                    description: d.clone(),
                    embedding,
                }),
                Err(_) => {
                    tracing::info!(%proposer, "proposal with empty subtask rejected");
                    continue 'proposals;
                }
            }
        }
        let mut deps: Vec<(usize, usize)> = raw
            .deps
            .iter()
            .copied()
            .filter(|&(a, b)| a < kept && b < kept && a != b)
            .collect();
        deps.sort_unstable();
        deps.dedup();
        out.push(Proposal {
            proposer_id: proposer.to_string(),
            subtasks,
            deps,
        });
    }
    Ok(out)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Unions subtasks whose embeddings have cosine `>= merge_sim`
/// (transitively) into canonical nodes.
///
/// A node's description is the lexicographically smallest member
/// description and its embedding the normalized member sum. Node ids are
/// `s000`, `s001`, ... in order of canonical description, so the result does
/// not depend on proposal order. Requirement fields other than the
/// embeddings come from the task; `team_size` becomes each node's `r_i_cap`.
pub fn merge_proposals(
    proposals: &[Proposal],
    merge_sim: f64,
    task: &TaskSpec,
    team_size: usize,
) -> Result<CandidateGraph> {
    if proposals.is_empty() || proposals.iter().all(|p| p.subtasks.is_empty()) {
        return Err(Error::EmptyDecomposition);
    }
    if team_size == 0 {
        return Err(Error::invalid("team size must be at least 1"));
    }
    let flat: Vec<(usize, usize, &ProposedSubtask)> = proposals
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| p.subtasks.iter().enumerate().map(move |(si, s)| (pi, si, s)))
        .collect();
    let n = flat.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&flat[i].2.embedding, &flat[j].2.embedding)? >= merge_sim {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }

    struct Group {
        description: String,
        embedding: Vec<f64>,
        members: Vec<usize>,
    }

    let mut canon: Vec<Group> = Vec::with_capacity(groups.len());
    for members in groups.into_values() {
        let mut order: Vec<usize> = members.clone();
        order.sort_by(|&a, &b| {
            flat[a]
                .2
                .description
                .cmp(&flat[b].2.description)
                .then_with(|| {
                    flat[a]
                        .2
                        .embedding
                        .iter()
                        .zip(&flat[b].2.embedding)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        let dim = flat[order[0]].2.embedding.len();
        let mut sum = vec![0.0; dim];
        for &m in &order {
            for (s, x) in sum.iter_mut().zip(&flat[m].2.embedding) {
                *s += x;
            }
        }
        canon.push(Group {
            description: flat[order[0]].2.description.clone(),
            embedding: normalized(&sum)?,
            members,
        });
    }
    canon.sort_by(|a, b| a.description.cmp(&b.description));

    let mut node_of = vec![String::new(); n];
    let mut nodes = BTreeMap::new();
    for (k, g) in canon.iter().enumerate() {
        let id = format!("s{k:03}");
        for &m in &g.members {
            node_of[m] = id.clone();
        }
        nodes.insert(
            id.clone(),
            SubtaskRequirement {
                subtask_id: id,
                description: g.description.clone(),
                c_s: g.embedding.clone(),
                p_s: task.p_req.clone(),
                r_s: task.r_req.clone(),
                e_s: g.embedding.clone(),
                r_i_cap: team_size,
            },
        );
    }
    let mut offset = Vec::with_capacity(proposals.len());
    let mut acc = 0;
    for p in proposals {
        offset.push(acc);
        acc += p.subtasks.len();
    }
    let mut edges = BTreeSet::new();
    for (pi, p) in proposals.iter().enumerate() {
        for &(a, b) in &p.deps {
            if a >= p.subtasks.len() || b >= p.subtasks.len() {
                continue;
            }
            let (from, to) = (&node_of[offset[pi] + a], &node_of[offset[pi] + b]);
            if from != to {
                edges.insert((from.clone(), to.clone()));
            }
        }
    }
    Ok(CandidateGraph { nodes, edges })
}

/// Bounds, merge and validation in one step.
pub fn build_dag(
    replies: &[RawProposal],
    candidates: &[String],
    task: &TaskSpec,
    bounds: (usize, usize),
    merge_sim: f64,
    team_size: usize,
) -> Result<TaskDag> {
    let proposals = collect_proposals(replies, candidates, bounds.0, bounds.1)?;
    let graph = merge_proposals(&proposals, merge_sim, task, team_size)?;
    Ok(validate_dag(graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::{BloomFilter, Vcv};

    fn task() -> TaskSpec {
        TaskSpec::new("t", "assess chest pain triage", BitSet::new(64).unwrap(), vec![0.0; 4]).unwrap()
    }

    fn raw(id: &str, subs: &[&str], deps: &[(usize, usize)]) -> RawProposal {
        RawProposal {
            proposer_id: id.into(),
            subtasks: subs.iter().map(|s| s.to_string()).collect(),
            deps: deps.to_vec(),
        }
    }

    fn profile(id: &str, text: &str) -> AgentProfile {
        let c = embed_text(text, FULL_DIM).unwrap();
        let vcv = Vcv::new(id, c.clone(), BloomFilter::default(), vec![0.0; 4], BitSet::new(64).unwrap(), c, 0)
            .unwrap();
        AgentProfile::new(vcv, 0.5, 2).unwrap()
    }

    #[test]
    fn single_strong_candidate() {
        let t = task();
        let agents = vec![profile("a", "assess chest pain triage"), profile("b", "orbital mechanics")];
        let got = select_candidates(&t, &agents, 0.3, 4, 1.0).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].agent_id, "a");
    }

    #[test]
    fn fallback_when_nobody_qualifies() {
        let t = task();
        let agents: Vec<_> = ["x", "y", "z", "w", "v"]
            .iter()
            .map(|id| profile(id, &format!("unrelated {id} topic")))
            .collect();
        let got = select_candidates(&t, &agents, 0.3, 4, 1.0).unwrap();
        assert_eq!(got.len(), 4);
        assert!(got.windows(2).all(|w| w[0].cosine >= w[1].cosine));
    }

    #[test]
    fn proposal_bounds() {
        let cands = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let replies = vec![
            raw("a", &["one", "two", "three"], &[(0, 1)]),
            raw("b", &["only"], &[]),
            raw("c", &["p1", "p2", "p3", "p4", "p5", "p6"], &[(0, 5), (1, 2), (2, 2)]),
            raw("zz", &["x", "y"], &[]),
        ];
        let got = collect_proposals(&replies, &cands, 2, 4).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].subtasks.len(), 3);
        assert_eq!(got[1].subtasks.len(), 4);
        assert_eq!(got[1].deps, vec![(1, 2)]);
    }

    #[test]
    fn single_proposal_is_isomorphic() {
        let cands = vec!["a".to_string()];
        let replies = vec![raw("a", &["gather vitals", "review imaging", "write summary"], &[(0, 2), (1, 2)])];
        let dag = build_dag(&replies, &cands, &task(), (2, 4), 0.99, 3).unwrap();
        assert_eq!(dag.len(), 3);
        assert_eq!(dag.edges.len(), 2);
        let sink = &dag.sinks()[0];
        assert_eq!(dag.nodes[sink].description, "write summary");
    }

    #[test]
    fn identical_proposals_merge_fully() {
        let cands = vec!["a".to_string(), "b".to_string()];
        let subs = ["gather vitals", "write summary"];
        let replies = vec![raw("a", &subs, &[(0, 1)]), raw("b", &subs, &[(0, 1)])];
        let dag = build_dag(&replies, &cands, &task(), (2, 4), 0.5, 3).unwrap();
        assert_eq!(dag.len(), 2);
        assert_eq!(dag.edges.len(), 1);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            merge_proposals(&[], 0.5, &task(), 3),
            Err(Error::EmptyDecomposition)
        ));
    }
}
