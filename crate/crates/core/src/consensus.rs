//! Bounded-round refinement inside one cluster.
//!
//! Rounds are barrier-synchronized: every live member publishes its current
//! draft on the cluster channel, then each member reads its peers' drafts
//! for that round and produces an updated one. A cluster of `|C|` members
//! therefore causes `|C| (|C| - 1)` channel deliveries per round.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentBehavior, AgentError};
use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::transport::{Broker, Envelope, Message, SubscribeOptions, Subscription};

pub const DEFAULT_ROUNDS: u32 = 3;
pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub author_id: String,
    pub subtask_id: String,
    pub round: u32,
    pub content: String,
    pub confidence: f64,
    pub complete_vote: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub subtask_id: String,
    pub answer: String,
    pub confidence: f64,
    pub rounds_used: u32,
    pub contributors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    pub k_max: u32,
    pub timeout: Duration,
    /// Stop as soon as the completion vote passes.
    pub early_exit: bool,
    /// Completion needs a strict majority instead of unanimity.
    pub majority_stop: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_ROUNDS,
            timeout: Duration::from_secs(300),
            early_exit: true,
            majority_stop: false,
        }
    }
}

fn weight(weights: &BTreeMap<String, f64>, id: &str) -> f64 {
    weights.get(id).copied().unwrap_or(0.0)
}

/// Reference update: adopt the content of the peer with the highest
/// `reputation * confidence` if it beats the own value by more than
/// `margin`; otherwise keep the own content and move confidence halfway to
/// the reputation-weighted mean confidence of all drafts. Round advances by
/// one; the completion vote is left as it was.
pub fn reference_update(
    own: &Draft,
    peers: &[Draft],
    weights: &BTreeMap<String, f64>,
    margin: f64,
) -> Draft {
    let mut next = own.clone();
    next.round = own.round + 1;
    if peers.is_empty() {
        return next;
    }
    let own_score = weight(weights, &own.author_id) * own.confidence;
    let best = peers.iter().max_by(|a, b| {
        (weight(weights, &a.author_id) * a.confidence)
            .total_cmp(&(weight(weights, &b.author_id) * b.confidence))
            .then_with(|| b.author_id.cmp(&a.author_id))
    });
    if let Some(best) = best {
        if weight(weights, &best.author_id) * best.confidence > own_score + margin {
            next.content = best.content.clone();
            next.confidence = best.confidence;
            return next;
        }
    }
    let mut wsum = 0.0;
    let mut csum = 0.0;
    for d in std::iter::once(own).chain(peers) {
        let w = weight(weights, &d.author_id);
        wsum += w;
        csum += w * d.confidence;
    }
    if wsum > 0.0 {
        let mean = csum / wsum;
        next.confidence = (own.confidence + 0.5 * (mean - own.confidence)).clamp(0.0, 1.0);
    }
    next
}

/// Majority content if one is held by more than half the drafts, otherwise
/// the best `reputation * confidence`; ties go to the smallest author id.
pub fn select_representative(drafts: &[Draft], weights: &BTreeMap<String, f64>) -> Option<Draft> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in drafts {
        *counts.entry(d.content.as_str()).or_default() += 1;
    }
    let majority = counts
        .iter()
        .find(|(_, &c)| 2 * c > drafts.len())
        .map(|(content, _)| *content);
    drafts
        .iter()
        .filter(|d| majority.is_none_or(|m| d.content == m))
        .max_by(|a, b| {
            (weight(weights, &a.author_id) * a.confidence)
                .total_cmp(&(weight(weights, &b.author_id) * b.confidence))
                .then_with(|| b.author_id.cmp(&a.author_id))
        })
        .cloned()
}

/// Checks that every peer matches the own draft's subtask and round, then
/// delegates to the agent and pins the result's author and round.
pub fn update_draft(
    agent: &mut dyn AgentBehavior,
    own: &Draft,
    peers: &[Draft],
    weights: &BTreeMap<String, f64>,
) -> Result<std::result::Result<Draft, AgentError>> {
    if let Some(p) = peers.iter().find(|p| p.round != own.round || p.subtask_id != own.subtask_id) {
        return Err(Error::Protocol(format!(
            "peer draft from {} is for {}@{} but own draft is {}@{}",
            p.author_id, p.subtask_id, p.round, own.subtask_id, own.round
        )));
    }
    Ok(agent.update(own, peers, weights).map(|mut d| {
        d.author_id = own.author_id.clone();
        d.subtask_id = own.subtask_id.clone();
        d.round = own.round + 1;
        d.confidence = d.confidence.clamp(0.0, 1.0);
        d
    }))
}

pub struct Member<'a> {
    pub agent: &'a mut dyn AgentBehavior,
    /// The member's first draft (round 0).
    pub draft: Draft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundsOutcome {
    pub result: ConsensusResult,
    pub timed_out: bool,
    pub rounds_used: u32,
    /// Members that crashed and were dropped.
    pub dropped: Vec<String>,
    /// Latest draft of every live member.
    pub final_drafts: Vec<Draft>,
    /// Every draft published on the channel, in publish order.
    pub channel_drafts: Vec<Draft>,
}

fn round_correlation(cluster_id: &str, round: u32, author: &str) -> String {
    format!("{cluster_id}:{round}:{author}")
}

/// Runs up to `k_max` rounds for one cluster over its channel.
///
/// A member whose agent reports a crash is dropped; a timeout from any
/// member, or the wall-clock budget running out, ends the run with
/// `timed_out` set and a representative picked from the drafts so far.
pub fn run_rounds(
    broker: &Broker,
    cluster: &Cluster,
    job_id: &str,
    members: Vec<Member<'_>>,
    weights: &BTreeMap<String, f64>,
    cfg: &ConsensusConfig,
) -> Result<RoundsOutcome> {
    if members.is_empty() {
        return Err(Error::invalid(format!("cluster {} has no members", cluster.cluster_id)));
    }
    let started = Instant::now();
    let topic = cluster.topic();

    struct Live<'a> {
        agent: &'a mut dyn AgentBehavior,
        draft: Draft,
        sub: Subscription,
        seen: BTreeSet<String>,
    }

    let mut live: Vec<Live<'_>> = Vec::with_capacity(members.len());
    for m in members {
        let sub = broker.subscribe_with(
            topic.as_str(),
            SubscribeOptions {
                client_id: m.draft.author_id.clone(),
                no_local: true,
            },
        )?;
        live.push(Live {
            agent: m.agent,
            draft: m.draft,
            sub,
            seen: BTreeSet::new(),
        });
    }
    live.sort_by(|a, b| a.draft.author_id.cmp(&b.draft.author_id));

    let mut dropped = Vec::new();
    let mut channel_drafts = Vec::new();
    let mut timed_out = false;
    let mut rounds_used = 0;

    for round in 1..=cfg.k_max {
        for m in &live {
            let msg = Message::Draft {
                job_id: job_id.to_string(),
                draft: m.draft.clone(),
            };
            let corr = round_correlation(&cluster.cluster_id, round, &m.draft.author_id);
            broker.publish(Envelope::new(topic.clone(), &msg, corr, m.draft.author_id.clone())?)?;
            channel_drafts.push(m.draft.clone());
        }
        rounds_used = round;

        let mut next = Vec::with_capacity(live.len());
        for mut m in live.drain(..) {
            let mut peers = Vec::new();
            for env in m.sub.drain() {
                if !m.seen.insert(env.correlation_id.clone()) {
                    continue;
                }
                if let Message::Draft { draft, .. } = env.message()? {
                    peers.push(draft);
                }
            }
            peers.sort_by(|a, b| a.author_id.cmp(&b.author_id));
            if timed_out {
                next.push(m);
                continue;
            }
            match update_draft(m.agent, &m.draft, &peers, weights)? {
                Ok(d) => {
                    m.draft = d;
                    next.push(m);
                }
                Err(AgentError::Crashed) => {
                    tracing::warn!(agent = %m.draft.author_id, cluster = %cluster.cluster_id, "member crashed, dropped");
                    dropped.push(m.draft.author_id.clone());
                }
                Err(AgentError::Timeout) | Err(AgentError::Refused(_)) => {
                    tracing::warn!(agent = %m.draft.author_id, cluster = %cluster.cluster_id, "member timed out");
                    timed_out = true;
                    next.push(m);
                }
            }
        }
        live = next;
        if live.is_empty() {
            return Err(Error::ConsensusFailed(format!(
                "every member of {} crashed",
                cluster.cluster_id
            )));
        }
        if started.elapsed() > cfg.timeout {
            timed_out = true;
        }
        if timed_out {
            break;
        }
        let votes = live.iter().filter(|m| m.draft.complete_vote).count();
        let passed = if cfg.majority_stop {
            2 * votes > live.len()
        } else {
            votes == live.len()
        };
        if cfg.early_exit && passed {
            break;
        }
    }

    let final_drafts: Vec<Draft> = live.iter().map(|m| m.draft.clone()).collect();
    let rep = select_representative(&final_drafts, weights)
        .ok_or_else(|| Error::ConsensusFailed("no drafts".into()))?;
    let result = ConsensusResult {
        subtask_id: cluster.subtask_id.clone(),
        answer: rep.content,
        confidence: rep.confidence,
        rounds_used,
        contributors: final_drafts.iter().map(|d| d.author_id.clone()).collect(),
    };
    Ok(RoundsOutcome {
        result,
        timed_out,
        rounds_used,
        dropped,
        final_drafts,
        channel_drafts,
    })
}

/// Publishes the cluster's TASK_COMPLETE on its channel.
pub fn publish_completion(
    broker: &Broker,
    cluster: &Cluster,
    job_id: &str,
    result: &ConsensusResult,
    sender: &str,
) -> Result<()> {
    let msg = Message::TaskComplete {
        job_id: job_id.to_string(),
        cluster_id: cluster.cluster_id.clone(),
        result: result.clone(),
    };
    let corr = format!("{}:complete", cluster.cluster_id);
    broker.publish(Envelope::new(cluster.topic(), &msg, corr, sender)?)?;
    Ok(())
}
