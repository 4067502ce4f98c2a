//! The coordinating agent. A job runs through decomposition, assignment,
//! drafting, clustering, refinement and synthesis; every exchange with
//! agents goes over the broker.
//!
//! Jobs are driven one at a time and ready DAG nodes and their clusters are
//! processed in ascending id order, so a run is a pure function of the
//! registered agents, the task and the configuration.

mod config;
mod job;
mod report;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

pub use config::{OrchestratorConfig, ENV_OVERRIDES};
pub use job::{FallbackEvent, JobPhase, JobState, NodeStatus};
pub use report::{AssignmentReport, ClusterReport, JobReport, NodeReport};
pub use synth::{synth, synthesize_dag, SynthMode, SynthOutput};

use crate::agents::Federation;
use crate::capability::{apply_delta, reduce_dim, BloomFilter, VcvSet, REDUCED_DIM};
use crate::cluster::form_clusters;
use crate::consensus::{publish_completion, run_rounds, ConsensusConfig, ConsensusResult, Draft, Member};
use crate::decompose::{collect_proposals, merge_proposals, select_candidates, validate_dag, RawProposal, TaskSpec};
use crate::error::{Error, Result};
use crate::index::ShardedIndex;
use crate::policy::{screen_submission, PolicyEvent, PolicyEventKind, PolicyLog, Screening};
use crate::routing::{
    compatibility_score, exhaustive_assignment, score_matrix, solve_assignment, AgentProfile, AssignmentProblem,
    DEFAULT_CAPACITY,
};
use crate::transport::{
    Broker, DispatchTask, Envelope, Message, ResultStatus, SubscribeOptions, Subscription, Topic,
};

pub const ORCHESTRATOR_ID: &str = "orchestrator";
const DEFAULT_REPUTATION: f64 = 0.5;
const ORACLE_LIMIT: usize = 30;

/// `rep' = (1 - beta) rep + beta score`, clamped to `[0, 1]`.
pub fn update_reputation(profile: &AgentProfile, outcome_score: f64, beta: f64) -> Result<AgentProfile> {
    if !(0.0..=1.0).contains(&outcome_score) {
        return Err(Error::invalid(format!("outcome score {outcome_score} outside [0, 1]")));
    }
    let next = ((1.0 - beta) * profile.reputation() + beta * outcome_score).clamp(0.0, 1.0);
    let mut p = profile.clone();
    p.set_reputation(next)?;
    Ok(p)
}

/// Per-job bookkeeping that ends up in the report.
#[derive(Default)]
struct RunLog {
    phase: Option<JobPhase>,
    phase_start: u64,
    ticks: BTreeMap<JobPhase, u64>,
    candidates: Vec<String>,
    proposals: usize,
    assignment: Option<AssignmentReport>,
    clusters: Vec<ClusterReport>,
    synth_ops: u64,
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    broker: Broker,
    index: ShardedIndex,
    registry: VcvSet,
    profiles: BTreeMap<String, AgentProfile>,
    policy_log: PolicyLog,
    blocklist: BloomFilter,
    jobs_sub: Subscription,
    channel_sub: Subscription,
    caps_sub: Subscription,
    policy_sub: Subscription,
    seen: BTreeSet<String>,
    job_counter: u64,
}

impl Orchestrator {
    pub fn new(broker: Broker, config: OrchestratorConfig) -> Result<Self> {
        config.validate()?;
        let own = |pattern: &str| {
            broker.subscribe_with(
                pattern,
                SubscribeOptions {
                    client_id: ORCHESTRATOR_ID.into(),
                    no_local: true,
                },
            )
        };
        Ok(Self {
            jobs_sub: own(Topic::jobs().as_str())?,
            channel_sub: own("foa/clusters/+/channel")?,
            caps_sub: own(Topic::capability_updates().as_str())?,
            policy_sub: own(Topic::policy_enforcement().as_str())?,
            config,
            broker,
            index: ShardedIndex::with_defaults(REDUCED_DIM),
            registry: VcvSet::new(),
            profiles: BTreeMap::new(),
            policy_log: PolicyLog::new(),
            blocklist: BloomFilter::default(),
            seen: BTreeSet::new(),
            job_counter: 0,
        })
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn profiles(&self) -> &BTreeMap<String, AgentProfile> {
        &self.profiles
    }

    pub fn index(&self) -> &ShardedIndex {
        &self.index
    }

    pub fn policy_log(&self) -> &PolicyLog {
        &self.policy_log
    }

    pub fn set_blocklist(&mut self, blocklist: BloomFilter) {
        self.blocklist = blocklist;
    }

    fn publish(&self, topic: Topic, msg: &Message, corr: impl Into<String>) -> Result<()> {
        self.broker.publish(Envelope::new(topic, msg, corr, ORCHESTRATOR_ID)?)?;
        Ok(())
    }

    /// Applies queued capability traffic to the registry, index and profiles.
    pub fn sync_capabilities(&mut self) -> Result<usize> {
        let mut changed = 0;
        for env in self.caps_sub.drain() {
            if !self.seen.insert(format!("caps:{}", env.correlation_id)) {
                continue;
            }
            match env.message()? {
                Message::VcvUpdate {
                    vcv,
                    reputation,
                    capacity,
                } => {
                    if self.registry.upsert(vcv.clone()) {
                        self.index.insert(vcv.agent_id(), vcv.version(), &reduce_dim(vcv.capability())?)?;
                        match self.profiles.get_mut(vcv.agent_id()) {
                            Some(p) => p.vcv = vcv,
                            None => {
                                let id = vcv.agent_id().to_string();
                                self.profiles.insert(id, AgentProfile::new(vcv, reputation, capacity)?);
                            }
                        }
                        changed += 1;
                    }
                }
                Message::VcvDelta { delta } => {
                    for id in apply_delta(&mut self.registry, &delta)? {
                        let vcv = self.registry.get(&id).expect("applied entry").clone();
                        self.index.insert(&id, vcv.version(), &reduce_dim(vcv.capability())?)?;
                        match self.profiles.get_mut(&id) {
                            Some(p) => p.vcv = vcv,
                            None => {
                                self.profiles
                                    .insert(id, AgentProfile::new(vcv, DEFAULT_REPUTATION, DEFAULT_CAPACITY)?);
                            }
                        }
                        changed += 1;
                    }
                }
                other => tracing::debug!(kind = other.type_name(), "ignored on capability topic"),
            }
        }
        Ok(changed)
    }

    fn ingest_policy_events(&mut self) -> Result<()> {
        for env in self.policy_sub.drain() {
            if !self.seen.insert(format!("policy:{}", env.correlation_id)) {
                continue;
            }
            if let Message::PolicyEvent { event } = env.message()? {
                self.policy_log.record(event.kind, event.subject, event.detail, env.seq);
            }
        }
        Ok(())
    }

    /// New messages on the jobs topic for this job.
    fn drain_jobs(&mut self, job: &mut JobState) -> Result<Vec<(String, Message)>> {
        let mut out = Vec::new();
        for env in self.jobs_sub.drain() {
            let msg = env.message()?;
            let job_id = match &msg {
                Message::DecomposeProp { job_id, .. } | Message::Draft { job_id, .. } => job_id,
                _ => continue,
            };
            if *job_id == job.job_id && job.first_sight(&env.correlation_id) {
                out.push((env.correlation_id, msg));
            }
        }
        Ok(out)
    }

    fn drain_channels(&mut self, job: &mut JobState) -> Result<()> {
        for env in self.channel_sub.drain() {
            match env.message()? {
                Message::Draft { job_id, draft } if job_id == job.job_id => job.record_draft(&env.correlation_id, draft),
                Message::TaskComplete { job_id, .. } if job_id == job.job_id => {
                    if let Err(e) = job.on_task_complete(&env) {
                        tracing::warn!(error = %e, "bad completion ignored");
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn enter_phase(&self, job: &mut JobState, log: &mut RunLog, phase: JobPhase) {
        let now = self.broker.seq();
        if let Some(prev) = log.phase {
            *log.ticks.entry(prev).or_default() += now - log.phase_start;
        }
        log.phase = Some(phase);
        log.phase_start = now;
        job.phase = phase;
    }

    /// Runs one task end to end. Job-level failures come back as a report
    /// with status `failed`; only broker outages are errors.
    pub fn run_job(&mut self, fed: &mut Federation, task: TaskSpec) -> Result<JobReport> {
        self.job_counter += 1;
        let job_id = format!("job-{:04}", self.job_counter);
        let stats0 = self.broker.stats();
        let policy_start = self.policy_log.len();

        self.broker.publish(Envelope::new(
            Topic::jobs(),
            &Message::JobSubmit { task: task.clone() },
            format!("{job_id}:submit"),
            format!("client:{}", task.task_id),
        )?)?;
        self.sync_capabilities()?;

        let mut job = JobState::new(job_id.clone(), task, self.broker.seq());
        let mut log = RunLog::default();
        let outcome = self.drive(&mut job, fed, &mut log);
        let (status, final_answer, error) = match outcome {
            Ok(answer) => (ResultStatus::Done, Some(answer), None),
            Err(Error::Unavailable) => return Err(Error::Unavailable),
            Err(e) => {
                tracing::warn!(job = %job_id, error = %e, "job failed");
                (ResultStatus::Failed, None, Some(e.to_string()))
            }
        };
        self.enter_phase(
            &mut job,
            &mut log,
            if status == ResultStatus::Done { JobPhase::Done } else { JobPhase::Failed },
        );
        self.publish(
            Topic::result(),
            &Message::Result {
                job_id: job_id.clone(),
                task_id: job.task.task_id.clone(),
                status,
                answer: final_answer.clone(),
            },
            format!("{job_id}:result"),
        )?;
        // leftovers such as our own submission
        self.drain_jobs(&mut job)?;
        self.ingest_policy_events()?;

        if status == ResultStatus::Done {
            for result in job.results().values() {
                for agent in &result.contributors {
                    if let Some(p) = self.profiles.get(agent) {
                        let next = update_reputation(p, result.confidence.clamp(0.0, 1.0), self.config.reputation_beta)?;
                        self.profiles.insert(agent.clone(), next);
                    }
                }
            }
        }

        let delta = self.broker.stats().since(&stats0);
        let nodes = job
            .dag
            .nodes
            .iter()
            .map(|(id, req)| {
                let status = job.status(id).cloned().unwrap_or(NodeStatus::Pending);
                let (label, result): (&str, Option<&ConsensusResult>) = match &status {
                    NodeStatus::Pending => ("pending", None),
                    NodeStatus::Ready => ("ready", None),
                    NodeStatus::Running => ("running", None),
                    NodeStatus::Complete(r) => ("complete", Some(r)),
                    NodeStatus::TimedOut => ("timed_out", None),
                };
                (
                    id.clone(),
                    NodeReport {
                        description: req.description.clone(),
                        status: label.to_string(),
                        answer: result.map(|r| r.answer.clone()),
                        confidence: result.map(|r| r.confidence),
                        contributors: result.map(|r| r.contributors.clone()).unwrap_or_default(),
                    },
                )
            })
            .collect();
        Ok(JobReport {
            job_id,
            task_id: job.task.task_id.clone(),
            status,
            phase: job.phase,
            error,
            final_answer,
            phase_ticks: log.ticks,
            published: delta.published.clone(),
            raw_deliveries: delta.total_deliveries(),
            candidates: log.candidates,
            proposals: log.proposals,
            dag_nodes: job.dag.nodes.keys().cloned().collect(),
            dag_edges: job.dag.edges.iter().cloned().collect(),
            assignment: log.assignment,
            clusters: log.clusters,
            nodes,
            fallback_events: job.fallback_events.clone(),
            policy_events: self.policy_log.events()[policy_start..].to_vec(),
            synth_ops: log.synth_ops,
            reputations: self.profiles.iter().map(|(k, p)| (k.clone(), p.reputation())).collect(),
        })
    }

    fn drive(&mut self, job: &mut JobState, fed: &mut Federation, log: &mut RunLog) -> Result<String> {
        self.enter_phase(job, log, JobPhase::Decomposing);
        if let Screening::Blocked(event) =
            screen_submission(&job.task, &self.blocklist, &mut self.policy_log, self.broker.seq())
        {
            let detail = event.detail.clone();
            let corr = format!("{}:blocked", job.job_id);
            self.publish(Topic::policy_enforcement(), &Message::PolicyEvent { event }, corr)?;
            return Err(Error::PolicyBlocked(detail));
        }

        // Phase 1: candidates and proposals
        let pool: Vec<AgentProfile> = {
            let query = reduce_dim(&job.task.c_t)?;
            let hits: BTreeSet<String> = self
                .index
                .search(&query, self.config.retrieval_k)?
                .into_iter()
                .map(|h| h.agent_id)
                .collect();
            hits.iter().filter_map(|id| self.profiles.get(id).cloned()).collect()
        };
        let candidates = select_candidates(
            &job.task,
            &pool,
            self.config.decomp_threshold,
            self.config.decomp_max_agents,
            self.config.lambda,
        )?;
        if candidates.is_empty() {
            return Err(Error::Routing("no candidate agents in the federation".into()));
        }
        log.candidates = candidates.iter().map(|c| c.agent_id.clone()).collect();
        for c in &log.candidates {
            let msg = Message::DecomposeReq {
                job_id: job.job_id.clone(),
                task: job.task.clone(),
                min_subtasks: self.config.subtasks_min,
                max_subtasks: self.config.subtasks_max,
            };
            self.publish(Topic::agent_tasks(c)?, &msg, format!("{}:decompose:{c}", job.job_id))?;
        }
        fed.pump()?;
        self.ingest_policy_events()?;
        let replies: Vec<RawProposal> = self
            .drain_jobs(job)?
            .into_iter()
            .filter_map(|(_, m)| match m {
                Message::DecomposeProp { proposal, .. } => Some(proposal),
                _ => None,
            })
            .collect();
        let proposals = collect_proposals(
            &replies,
            &log.candidates,
            self.config.subtasks_min,
            self.config.subtasks_max,
        )?;
        log.proposals = proposals.len();
        let graph = merge_proposals(&proposals, self.config.merge_sim, &job.task, self.config.team_size)?;
        job.set_dag(validate_dag(graph));

        // Phase 1: assignment
        self.enter_phase(job, log, JobPhase::Assigning);
        let subtasks: Vec<_> = job.dag.nodes.values().cloned().collect();
        let agents: Vec<AgentProfile> = self.profiles.values().cloned().collect();
        let sm = score_matrix(&subtasks, &agents, self.config.lambda)?;
        if self.config.audit_gate_failures {
            for (s, a) in &sm.gate_failures {
                let event = self.policy_log.record(
                    PolicyEventKind::GateFail,
                    a.clone(),
                    format!("job {} subtask {s}: required policy bits missing", job.job_id),
                    self.broker.seq(),
                );
                let corr = format!("{}:gate:{s}:{a}", job.job_id);
                self.publish(Topic::policy_enforcement(), &Message::PolicyEvent { event }, corr)?;
            }
        }
        let problem = AssignmentProblem {
            subtask_ids: subtasks.iter().map(|s| s.subtask_id.clone()).collect(),
            agent_ids: agents.iter().map(|a| a.agent_id().to_string()).collect(),
            scores: sm.scores,
            reputations: agents.iter().map(AgentProfile::reputation).collect(),
            caps: subtasks.iter().map(|s| s.r_i_cap).collect(),
            capacities: agents.iter().map(|a| a.capacity).collect(),
        };
        let x = solve_assignment(&problem)?;
        let objective = x.objective(&problem);
        let oracle = if problem.k() * problem.n() <= ORACLE_LIMIT {
            Some(exhaustive_assignment(&problem)?.0)
        } else {
            None
        };
        log.assignment = Some(AssignmentReport {
            objective,
            oracle_objective: oracle,
            oracle_gap: oracle.map(|o| o - objective),
            teams: problem
                .subtask_ids
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), x.agents_for(i)))
                .collect(),
        });
        self.publish(
            Topic::meta(),
            &Message::TaskAssign {
                job_id: job.job_id.clone(),
                attempt: 0,
                assignment: x.clone(),
            },
            format!("{}:assign", job.job_id),
        )?;
        job.assignment = Some(x);

        // Phases 2-5: drafting, clustering, refinement, collection
        self.enter_phase(job, log, JobPhase::Executing);
        loop {
            let ready = job.ready_nodes();
            if ready.is_empty() {
                break;
            }
            for id in ready {
                let team = job
                    .assignment
                    .as_ref()
                    .map(|x| x.agents_for_subtask(&id))
                    .unwrap_or_default();
                self.execute_node(job, fed, log, &id, team, 0)?;
            }
        }
        if !job.all_complete() {
            return Err(Error::Protocol("execution stalled with incomplete nodes".into()));
        }

        // Phase 6
        self.enter_phase(job, log, JobPhase::Synthesizing);
        let answers: BTreeMap<String, String> = job
            .results()
            .into_iter()
            .map(|(k, r)| (k, r.answer))
            .collect();
        let out = synthesize_dag(&job.dag, &answers, self.config.synth_mode)?;
        log.synth_ops = out.ops;
        Ok(out.final_answer)
    }

    fn execute_node(
        &mut self,
        job: &mut JobState,
        fed: &mut Federation,
        log: &mut RunLog,
        id: &str,
        team: Vec<String>,
        attempt: u32,
    ) -> Result<()> {
        job.assignees.entry(id.to_string()).or_default().extend(team.iter().cloned());
        let req = job.dag.nodes[id].clone();
        let results = job.results();
        let inputs: Vec<(String, String)> = job
            .dag
            .predecessors(id)
            .into_iter()
            .filter_map(|p| results.get(&p).map(|r| (p, r.answer.clone())))
            .collect();
        let prefix = format!("{}:{id}:a{attempt}:", job.job_id);
        for agent in &team {
            let msg = Message::Dispatch {
                job_id: job.job_id.clone(),
                attempt,
                task: DispatchTask {
                    subtask_id: id.to_string(),
                    description: req.description.clone(),
                    inputs: inputs.clone(),
                },
            };
            self.publish(Topic::agent_tasks(agent)?, &msg, format!("{prefix}{agent}"))?;
        }
        fed.pump()?;
        self.ingest_policy_events()?;

        let mut first: BTreeMap<String, Draft> = BTreeMap::new();
        for (corr, msg) in self.drain_jobs(job)? {
            if let Message::Draft { draft, .. } = msg {
                if corr.starts_with(&prefix) && draft.subtask_id == id {
                    job.drafts_seen.entry(id.to_string()).or_default().push(draft.clone());
                    first.entry(draft.author_id.clone()).or_insert(draft);
                }
            }
        }
        if first.is_empty() {
            job.mark_running(id, BTreeSet::new())?;
            return self.resolve_timeout(job, fed, log, id, attempt);
        }

        let drafting: Vec<AgentProfile> = first.keys().filter_map(|a| self.profiles.get(a).cloned()).collect();
        let contents: BTreeMap<String, String> = first.iter().map(|(a, d)| (a.clone(), d.content.clone())).collect();
        let (clusters, _) = form_clusters(
            &format!("{}-{id}-a{attempt}", job.job_id),
            id,
            &drafting,
            &contents,
            &self.config.cluster_weights,
            self.config.cluster_sim_threshold,
            self.config.cluster_max_size,
        )?;
        job.mark_running(id, clusters.iter().map(|c| c.cluster_id.clone()).collect())?;

        let cfg = ConsensusConfig {
            k_max: self.config.rounds,
            timeout: std::time::Duration::from_millis(self.config.job_timeout_ms),
            early_exit: self.config.early_exit,
            majority_stop: self.config.majority_stop,
        };
        for cluster in &clusters {
            let ids: BTreeSet<String> = cluster.members.iter().cloned().collect();
            let weights: BTreeMap<String, f64> = ids
                .iter()
                .map(|a| (a.clone(), self.profiles.get(a).map_or(0.0, AgentProfile::reputation)))
                .collect();
            let mut behaviors = fed.behaviors_mut(&ids);
            let members: Vec<Member<'_>> = behaviors
                .iter_mut()
                .map(|(a, b)| Member {
                    agent: &mut **b,
                    draft: first[a.as_str()].clone(),
                })
                .collect();
            let mut report = ClusterReport {
                cluster_id: cluster.cluster_id.clone(),
                subtask_id: id.to_string(),
                attempt,
                members: cluster.members.clone(),
                rounds_used: 0,
                timed_out: true,
                dropped: Vec::new(),
                drafts_published: 0,
            };
            match run_rounds(&self.broker, cluster, &job.job_id, members, &weights, &cfg) {
                Ok(out) => {
                    report.rounds_used = out.rounds_used;
                    report.timed_out = out.timed_out;
                    report.dropped = out.dropped.clone();
                    report.drafts_published = out.channel_drafts.len();
                    if out.timed_out {
                        job.cluster_timed_out(id, &cluster.cluster_id);
                    } else {
                        let sender = out.result.contributors[0].clone();
                        publish_completion(&self.broker, cluster, &job.job_id, &out.result, &sender)?;
                    }
                }
                Err(Error::ConsensusFailed(reason)) => {
                    tracing::warn!(cluster = %cluster.cluster_id, %reason, "cluster failed");
                    report.dropped = cluster.members.clone();
                    job.cluster_timed_out(id, &cluster.cluster_id);
                }
                Err(e) => return Err(e),
            }
            log.clusters.push(report);
            self.drain_channels(job)?;
        }

        if job.status(id) == Some(&NodeStatus::Running) && job.pending_clusters(id) == 0 {
            return self.resolve_timeout(job, fed, log, id, attempt);
        }
        Ok(())
    }

    /// Unused eligible agents for `id`, solved as a one-row assignment.
    fn reassignment(&self, job: &JobState, id: &str) -> Result<Option<Vec<String>>> {
        let used = job.assignees.get(id).cloned().unwrap_or_default();
        let alternatives: Vec<&AgentProfile> =
            self.profiles.values().filter(|p| !used.contains(p.agent_id())).collect();
        if alternatives.is_empty() {
            return Ok(None);
        }
        let req = &job.dag.nodes[id];
        let row = alternatives
            .iter()
            .map(|a| compatibility_score(req, a, self.config.lambda))
            .collect::<Result<Vec<_>>>()?;
        let problem = AssignmentProblem {
            subtask_ids: vec![id.to_string()],
            agent_ids: alternatives.iter().map(|a| a.agent_id().to_string()).collect(),
            scores: vec![row],
            reputations: alternatives.iter().map(|a| a.reputation()).collect(),
            caps: vec![req.r_i_cap],
            capacities: alternatives.iter().map(|a| a.capacity).collect(),
        };
        match solve_assignment(&problem) {
            Ok(x) => Ok(Some(x.agents_for(0))),
            Err(Error::Infeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// First timeout of a node reassigns it to unused agents; after that, or
    /// without alternatives, the best `reputation * confidence` draft seen
    /// so far is accepted. No draft at all fails the job.
    pub fn timeout_fallback(&mut self, job: &mut JobState, id: &str) -> Result<Option<Vec<String>>> {
        let count = {
            let c = job.timeouts.entry(id.to_string()).or_default();
            *c += 1;
            *c
        };
        let at = self.broker.seq();
        if count == 1 {
            if let Some(team) = self.reassignment(job, id)? {
                job.fallback_events.push(FallbackEvent::Reassigned {
                    subtask_id: id.to_string(),
                    agents: team.clone(),
                    at,
                });
                return Ok(Some(team));
            }
        }
        let rep = |a: &str| self.profiles.get(a).map_or(0.0, AgentProfile::reputation);
        let best = job.drafts_seen.get(id).and_then(|drafts| {
            drafts
                .iter()
                .max_by(|a, b| {
                    (rep(&a.author_id) * a.confidence)
                        .total_cmp(&(rep(&b.author_id) * b.confidence))
                        .then_with(|| b.author_id.cmp(&a.author_id))
                })
                .cloned()
        });
        match best {
            Some(d) => {
                job.fallback_events.push(FallbackEvent::AcceptedBestDraft {
                    subtask_id: id.to_string(),
                    author_id: d.author_id.clone(),
                    confidence: d.confidence,
                    at,
                });
                job.complete(
                    id,
                    ConsensusResult {
                        subtask_id: id.to_string(),
                        answer: d.content,
                        confidence: d.confidence,
                        rounds_used: d.round,
                        contributors: vec![d.author_id],
                    },
                );
                job.refresh_ready();
                Ok(None)
            }
            None => {
                job.node_status.insert(id.to_string(), NodeStatus::TimedOut);
                job.fallback_events.push(FallbackEvent::TimedOut {
                    subtask_id: id.to_string(),
                    at,
                });
                Err(Error::TimedOut(format!("subtask {id} produced no usable draft")))
            }
        }
    }

    fn resolve_timeout(
        &mut self,
        job: &mut JobState,
        fed: &mut Federation,
        log: &mut RunLog,
        id: &str,
        attempt: u32,
    ) -> Result<()> {
        match self.timeout_fallback(job, id)? {
            Some(team) => self.execute_node(job, fed, log, id, team, attempt + 1),
            None => Ok(()),
        }
    }

    /// Policy events recorded so far.
    pub fn policy_events(&self) -> &[PolicyEvent] {
        self.policy_log.events()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::{BitSet, BloomFilter, Vcv};

    fn profile(rep: f64) -> AgentProfile {
        let mut c = vec![0.0; 4];
        c[0] = 1.0;
        let vcv = Vcv::new("a", c.clone(), BloomFilter::default(), vec![0.0; 4], BitSet::new(64).unwrap(), c, 0)
            .unwrap();
        AgentProfile::new(vcv, rep, 2).unwrap()
    }

    #[test]
    fn reputation_ema() {
        let r = |rep: f64, score: f64| update_reputation(&profile(rep), score, 0.2).unwrap().reputation();
        assert_eq!(r(0.5, 0.5), 0.5);
        assert!((r(0.0, 1.0) - 0.2).abs() < 1e-15);
        assert_eq!(r(1.0, 1.0), 1.0);
        assert!(update_reputation(&profile(0.5), 1.5, 0.2).is_err());
    }
}
