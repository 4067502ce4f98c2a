//! Size sweeps over routing, clustering and consensus. Each row reports
//! the work counters next to their closed-form expectations, plus wall time.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{MockAgent, MockConfig};
use crate::capability::{embed_text, reduce_dim, BitSet, BloomFilter, Vcv, FULL_DIM, POLICY_BITS, REDUCED_DIM};
use crate::cluster::{similarity_matrix, hier_cluster, Cluster, ClusterWeights};
use crate::consensus::{run_rounds, ConsensusConfig, Draft, Member};
use crate::error::{Error, Result};
use crate::index::ShardedIndex;
use crate::routing::{score_matrix, solve_assignment, AgentProfile, AssignmentProblem, SubtaskRequirement};
use crate::scenario::render_table;
use crate::transport::Broker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Routing,
    Clustering,
    Consensus,
}

impl std::str::FromStr for BenchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "routing" => Ok(BenchMode::Routing),
            "clustering" => Ok(BenchMode::Clustering),
            "consensus" => Ok(BenchMode::Consensus),
            other => Err(Error::invalid(format!(
                "unknown bench mode {other:?}; expected routing, clustering or consensus"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub mode: BenchMode,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl BenchTable {
    pub fn render(&self) -> String {
        let headers: Vec<&str> = self.headers.iter().map(String::as_str).collect();
        render_table(&headers, &self.rows)
    }
}

const VOCAB: [&str; 12] = [
    "triage", "dosing", "renal", "cardiac", "imaging", "audit", "contract", "supply", "risk", "billing",
    "scheduling", "genomics",
];

fn topic_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn synthetic_profile(rng: &mut ChaCha8Rng, i: usize) -> Result<AgentProfile> {
    let id = format!("agent-{i:04}");
    let text = format!("{} {}", topic_text(rng, 3), id);
    let c = embed_text(&text, FULL_DIM)?;
    let e = embed_text(&format!("agent: {id}\ngoals\n{text}"), FULL_DIM)?;
    let mut skills = BloomFilter::default();
    skills.insert(VOCAB[i % VOCAB.len()]);
    let r = vec![
        rng.random_range(10.0..200.0),
        rng.random_range(10.0..200.0),
        rng.random_range(1.0..16.0),
        rng.random_range(50.0..500.0),
    ];
    let vcv = Vcv::new(id, c, skills, r, BitSet::new(POLICY_BITS)?, e, 0)?;
    AgentProfile::new(vcv, rng.random_range(0.2..1.0), 2)
}

fn profiles(seed: u64, n: usize) -> Result<(ChaCha8Rng, Vec<AgentProfile>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = (0..n).map(|i| synthetic_profile(&mut rng, i)).collect::<Result<Vec<_>>>()?;
    Ok((rng, agents))
}

pub fn run_bench(mode: BenchMode, sizes: &[usize], seed: u64) -> Result<BenchTable> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::invalid("bench sizes must be positive"));
    }
    match mode {
        BenchMode::Routing => bench_routing(sizes, seed),
        BenchMode::Clustering => bench_clustering(sizes, seed),
        BenchMode::Consensus => bench_consensus(sizes, seed),
    }
}

const ROUTING_SUBTASKS: usize = 4;

/// Index search plus score matrix plus exact assignment over `n` agents.
pub fn bench_routing(sizes: &[usize], seed: u64) -> Result<BenchTable> {
    let mut rows = Vec::new();
    for &n in sizes {
        let (mut rng, agents) = profiles(seed, n)?;
        let index = ShardedIndex::with_defaults(REDUCED_DIM);
        for a in &agents {
            index.insert(a.agent_id(), 0, &reduce_dim(a.vcv.capability())?)?;
        }
        let subtasks: Vec<SubtaskRequirement> = (0..ROUTING_SUBTASKS)
            .map(|i| {
                let text = topic_text(&mut rng, 3);
                let c = embed_text(&text, FULL_DIM)?;
                Ok(SubtaskRequirement {
                    subtask_id: format!("s{i:03}"),
                    description: text,
                    c_s: c.clone(),
                    p_s: BitSet::new(POLICY_BITS)?,
                    r_s: vec![100.0, 10.0, 2.0, 50.0],
                    e_s: c,
                    r_i_cap: 3,
                })
            })
            .collect::<Result<_>>()?;

        let start = Instant::now();
        let before = index.distance_evals();
        let hits = index.search(&reduce_dim(&subtasks[0].c_s)?, 32.min(n))?;
        let evals = index.distance_evals() - before;
        let scores = score_matrix(&subtasks, &agents, 1.0)?;
        let problem = AssignmentProblem {
            subtask_ids: subtasks.iter().map(|s| s.subtask_id.clone()).collect(),
            agent_ids: agents.iter().map(|a| a.agent_id().to_string()).collect(),
            scores: scores.scores,
            reputations: agents.iter().map(AgentProfile::reputation).collect(),
            caps: subtasks.iter().map(|s| s.r_i_cap).collect(),
            capacities: agents.iter().map(|a| a.capacity).collect(),
        };
        let (objective, assigned) = match solve_assignment(&problem) {
            Ok(x) => (format!("{:.6}", x.objective(&problem)), x.x.iter().flatten().filter(|b| **b).count()),
            Err(Error::Infeasible { .. }) => ("infeasible".to_string(), 0),
            Err(e) => return Err(e),
        };
        let micros = start.elapsed().as_micros();
        rows.push(vec![
            n.to_string(),
            ROUTING_SUBTASKS.to_string(),
            hits.len().to_string(),
            evals.to_string(),
            (ROUTING_SUBTASKS * n).to_string(),
            assigned.to_string(),
            objective,
            micros.to_string(),
        ]);
    }
    Ok(BenchTable {
        mode: BenchMode::Routing,
        headers: ["agents", "subtasks", "hits", "distance_evals", "score_evals", "pairs", "objective", "micros"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

/// Pairwise similarity plus average-linkage clustering over `n` agents.
pub fn bench_clustering(sizes: &[usize], seed: u64) -> Result<BenchTable> {
    let mut rows = Vec::new();
    for &n in sizes {
        let (mut rng, agents) = profiles(seed, n)?;
        let drafts: BTreeMap<String, String> = agents
            .iter()
            .map(|a| (a.agent_id().to_string(), topic_text(&mut rng, 6)))
            .collect();
        let start = Instant::now();
        let m = similarity_matrix(&agents, &drafts, &ClusterWeights::default())?;
        let groups = hier_cluster(&m.values, 0.2, 4)?;
        let micros = start.elapsed().as_micros();
        let expected = n * (n - 1) / 2;
        rows.push(vec![
            n.to_string(),
            m.entries_computed.to_string(),
            expected.to_string(),
            (m.entries_computed == expected).to_string(),
            groups.len().to_string(),
            micros.to_string(),
        ]);
    }
    Ok(BenchTable {
        mode: BenchMode::Clustering,
        headers: ["agents", "entries", "expected", "match", "clusters", "micros"].map(String::from).to_vec(),
        rows,
    })
}

const CONSENSUS_ROUNDS: u32 = 3;

/// Full rounds with early exit off, so channel deliveries are `k|C|(|C|-1)`.
pub fn bench_consensus(sizes: &[usize], seed: u64) -> Result<BenchTable> {
    let mut rows = Vec::new();
    let cfg = ConsensusConfig {
        k_max: CONSENSUS_ROUNDS,
        early_exit: false,
        ..ConsensusConfig::default()
    };
    for &c in sizes {
        let broker = Broker::new();
        let ids: Vec<String> = (0..c).map(|i| format!("agent-{i:04}")).collect();
        let mut agents: Vec<MockAgent> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                MockAgent::new(
                    id.clone(),
                    MockConfig {
                        seed: seed ^ i as u64,
                        vote_complete_round: None,
                        ..MockConfig::default()
                    },
                )
            })
            .collect();
        let cluster = Cluster::new(format!("bench-c{c}"), "s000", ids.clone())?;
        let weights: BTreeMap<String, f64> = ids.iter().map(|id| (id.clone(), 0.5)).collect();
        let members: Vec<Member<'_>> = agents
            .iter_mut()
            .zip(&ids)
            .enumerate()
            .map(|(i, (agent, id))| Member {
                agent,
                draft: Draft {
                    author_id: id.clone(),
                    subtask_id: "s000".into(),
                    round: 0,
                    content: format!("answer: draft {i}"),
                    confidence: 0.4 + 0.5 * (i as f64 / c as f64),
                    complete_vote: false,
                },
            })
            .collect();
        let start = Instant::now();
        let outcome = run_rounds(&broker, &cluster, "bench", members, &weights, &cfg)?;
        let micros = start.elapsed().as_micros();
        let stats = broker.stats();
        let topic = cluster.topic().to_string();
        let deliveries = stats.deliveries_on(&topic);
        let expected = CONSENSUS_ROUNDS as u64 * (c * (c - 1)) as u64;
        rows.push(vec![
            c.to_string(),
            outcome.rounds_used.to_string(),
            stats.published_on(&topic).to_string(),
            deliveries.to_string(),
            expected.to_string(),
            (deliveries == expected).to_string(),
            micros.to_string(),
        ]);
    }
    Ok(BenchTable {
        mode: BenchMode::Consensus,
        headers: ["members", "rounds", "published", "deliveries", "expected", "match", "micros"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_counts_match_closed_form() {
        let t = bench_consensus(&[1, 2, 5], 1).unwrap();
        assert!(t.rows.iter().all(|r| r[5] == "true"), "{}", t.render());
    }

    #[test]
    fn clustering_counts_match_closed_form() {
        let t = bench_clustering(&[1, 4, 9], 1).unwrap();
        assert!(t.rows.iter().all(|r| r[3] == "true"), "{}", t.render());
    }

    #[test]
    fn routing_runs() {
        let t = bench_routing(&[4, 16], 1).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!("nope".parse::<BenchMode>().is_err());
    }
}
