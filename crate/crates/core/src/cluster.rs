//! Grouping the agents assigned to one subtask.
//!
//! Similarity mixes four cosines (capability, resources, first draft, spec)
//! with weights summing to one; average-linkage agglomeration then merges
//! groups while the best pair's average similarity stays at or above the cut
//! and the merged size fits the cap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capability::{embed_text, FULL_DIM};
use crate::error::{Error, Result};
use crate::routing::AgentProfile;
use crate::transport::Topic;
use crate::vector::{cosine, norm};

pub const DEFAULT_CUT: f64 = 0.2;
pub const DEFAULT_MAX_CLUSTER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterWeights {
    pub capability: f64,
    pub resources: f64,
    pub draft: f64,
    pub spec: f64,
}

impl Default for ClusterWeights {
    fn default() -> Self {
        Self {
            capability: 0.25,
            resources: 0.25,
            draft: 0.25,
            spec: 0.25,
        }
    }
}

impl ClusterWeights {
    pub fn new(capability: f64, resources: f64, draft: f64, spec: f64) -> Result<Self> {
        let w = Self {
            capability,
            resources,
            draft,
            spec,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.capability, self.resources, self.draft, self.spec];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("cluster weights must be non-negative"));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("cluster weights must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: String,
    pub subtask_id: String,
    pub members: Vec<String>,
    pub channel_topic: String,
}

impl Cluster {
    pub fn new(cluster_id: impl Into<String>, subtask_id: impl Into<String>, members: Vec<String>) -> Result<Self> {
        let cluster_id = cluster_id.into();
        if members.is_empty() {
            return Err(Error::invalid("cluster needs at least one member"));
        }
        let channel_topic = Topic::cluster_channel(&cluster_id)?.to_string();
        Ok(Self {
            cluster_id,
            subtask_id: subtask_id.into(),
            members,
            channel_topic,
        })
    }

    pub fn topic(&self) -> Topic {
        Topic::parse(&self.channel_topic).expect("channel topic is built from the schema")
    }
}

/// Cosine of resource vectors with the zero-vector convention: two zero
/// vectors are identical, a zero and a non-zero vector share nothing.
pub fn resource_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    match (norm(a) == 0.0, norm(b) == 0.0) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        (false, false) => cosine(a, b),
    }
}

/// A symmetric matrix and the number of off-diagonal entries computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Vec<Vec<f64>>,
    pub entries_computed: usize,
}

/// `S_ij = w1 cos(c) + w2 cos(r) + w3 cos(draft embeddings) + w4 cos(e)`,
/// computed for `i < j` and mirrored; the diagonal is 1.
pub fn similarity_matrix(
    agents: &[AgentProfile],
    drafts: &BTreeMap<String, String>,
    weights: &ClusterWeights,
) -> Result<SimilarityMatrix> {
    weights.validate()?;
    let mut draft_vecs = Vec::with_capacity(agents.len());
    for a in agents {
        let text = drafts
            .get(a.agent_id())
            .ok_or_else(|| Error::invalid(format!("missing draft for {}", a.agent_id())))?;
        draft_vecs.push(embed_text(text, FULL_DIM)?);
    }
    let n = agents.len();
    let mut values = vec![vec![1.0; n]; n];
    let mut entries = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&agents[i].vcv, &agents[j].vcv);
            let s = weights.capability * cosine(a.capability(), b.capability())?
                + weights.resources * resource_similarity(a.resources(), b.resources())?
                + weights.draft * cosine(&draft_vecs[i], &draft_vecs[j])?
                + weights.spec * cosine(a.spec_embedding(), b.spec_embedding())?;
            values[i][j] = s;
            values[j][i] = s;
            entries += 1;
        }
    }
    Ok(SimilarityMatrix {
        values,
        entries_computed: entries,
    })
}

/// Average-linkage agglomerative clustering over indices `0..n`.
///
/// Each step merges the pair with the highest average similarity among the
/// pairs whose union fits `max_size`; ties go to the pair with the smallest
/// (first, second) minimum member indices. Stops once that best average is
/// below `cut`. Members are ascending and clusters are ordered by their
/// smallest member.
pub fn hier_cluster(s: &[Vec<f64>], cut: f64, max_size: usize) -> Result<Vec<Vec<usize>>> {
    let n = s.len();
    if s.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("similarity matrix must be square"));
    }
    if max_size == 0 {
        return Err(Error::invalid("max cluster size must be positive"));
    }
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                if groups[a].len() + groups[b].len() > max_size {
                    continue;
                }
                let mut total = 0.0;
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        total += s[i][j];
                    }
                }
                let avg = total / (groups[a].len() * groups[b].len()) as f64;
                if best.is_none_or(|(bv, _, _)| avg > bv) {
                    best = Some((avg, a, b));
                }
            }
        }
        match best {
            Some((avg, a, b)) if avg >= cut => {
                let moved = groups.remove(b);
                groups[a].extend(moved);
                groups[a].sort_unstable();
            }
            _ => break,
        }
    }
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

/// Clusters the agents assigned to one subtask. Agents are ordered by id
/// before clustering so input order never matters; cluster ids are
/// `{prefix}-c{index}`.
pub fn form_clusters(
    prefix: &str,
    subtask_id: &str,
    agents: &[AgentProfile],
    drafts: &BTreeMap<String, String>,
    weights: &ClusterWeights,
    cut: f64,
    max_size: usize,
) -> Result<(Vec<Cluster>, usize)> {
    let mut sorted: Vec<AgentProfile> = agents.to_vec();
    sorted.sort_by(|a, b| a.agent_id().cmp(b.agent_id()));
    let sim = similarity_matrix(&sorted, drafts, weights)?;
    let groups = hier_cluster(&sim.values, cut, max_size)?;
    let clusters = groups
        .into_iter()
        .enumerate()
        .map(|(k, g)| {
            Cluster::new(
                format!("{prefix}-c{k}"),
                subtask_id,
                g.into_iter().map(|i| sorted[i].agent_id().to_string()).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((clusters, sim.entries_computed))
}
