//! Broker-facing side of agents: reactive workers and the federation that
//! registers and drives them.

use std::collections::{BTreeMap, BTreeSet};

use super::{retrieve_resources, AgentBehavior, AgentError};
use crate::capability::{embed_text, BitSet, BloomFilter, SpecDocument, Vcv, VcvDelta, FULL_DIM};
use crate::error::{Error, Result};
use crate::policy::{PolicyEvent, PolicyEventKind};
use crate::routing::AgentProfile;
use crate::transport::{Broker, Envelope, Message, Subscription, Topic};

/// Text the capability embedding is computed from: goals, tools and skills.
pub fn capability_text(spec: &SpecDocument, skills: &[String]) -> String {
    let parts: Vec<&str> = spec
        .goals
        .iter()
        .chain(&spec.tools)
        .chain(skills)
        .map(String::as_str)
        .filter(|s| !s.trim().is_empty())
        .collect();
    if parts.is_empty() {
        spec.text.clone()
    } else {
        parts.join("\n")
    }
}

/// Consumes `foa/agents/{id}/tasks`, handling each correlation id once.
pub struct AgentWorker {
    id: String,
    spec: SpecDocument,
    behavior: Box<dyn AgentBehavior>,
    sub: Subscription,
    seen: BTreeSet<String>,
    broker: Broker,
}

impl AgentWorker {
    pub fn new(spec: SpecDocument, behavior: Box<dyn AgentBehavior>, broker: &Broker) -> Result<Self> {
        let id = spec.agent_id.clone();
        if behavior.agent_id() != id {
            return Err(Error::invalid(format!(
                "behavior id {} does not match spec id {id}",
                behavior.agent_id()
            )));
        }
        let sub = broker.subscribe(Topic::agent_tasks(&id)?.as_str(), &id)?;
        Ok(Self {
            id,
            spec,
            behavior,
            sub,
            seen: BTreeSet::new(),
            broker: broker.clone(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn spec(&self) -> &SpecDocument {
        &self.spec
    }

    pub fn behavior_mut(&mut self) -> &mut dyn AgentBehavior {
        self.behavior.as_mut()
    }

    fn reply(&self, topic: Topic, msg: &Message, corr: &str) -> Result<()> {
        self.broker
            .publish(Envelope::new(topic, msg, corr, self.id.clone())?)?;
        Ok(())
    }

    fn refuse(&self, job_id: &str, corr: &str, reason: String, at: u64) -> Result<()> {
        let event = PolicyEvent {
            event_id: format!("{}:{corr}", self.id),
            kind: PolicyEventKind::AgentRefusal,
            subject: self.id.clone(),
            detail: format!("job {job_id}: {reason}"),
            at,
        };
        self.reply(Topic::policy_enforcement(), &Message::PolicyEvent { event }, corr)
    }

    /// Handles everything queued; returns how many new messages were handled.
    pub fn pump(&mut self) -> Result<usize> {
        let mut handled = 0;
        while let Some(env) = self.sub.try_recv() {
            if !self.seen.insert(env.correlation_id.clone()) {
                continue;
            }
            handled += 1;
            match env.message()? {
                Message::DecomposeReq {
                    job_id,
                    task,
                    min_subtasks,
                    max_subtasks,
                } => match self.behavior.decompose(&task, min_subtasks, max_subtasks) {
                    Ok(mut proposal) => {
                        proposal.proposer_id = self.id.clone();
                        let msg = Message::DecomposeProp { job_id, proposal };
                        self.reply(Topic::jobs(), &msg, &env.correlation_id)?;
                    }
                    Err(AgentError::Refused(reason)) => {
                        self.refuse(&job_id, &env.correlation_id, reason, env.sent_at)?
                    }
                    Err(e) => tracing::info!(agent = %self.id, %job_id, error = %e, "no proposal"),
                },
                Message::Dispatch { job_id, task, .. } => {
                    let context = retrieve_resources(self.behavior.tools(), &task.description);
                    match self.behavior.generate_answer(&task, &context, &self.spec) {
                        Ok(mut draft) => {
                            draft.author_id = self.id.clone();
                            draft.subtask_id = task.subtask_id.clone();
                            let msg = Message::Draft { job_id, draft };
                            self.reply(Topic::jobs(), &msg, &env.correlation_id)?;
                        }
                        Err(AgentError::Refused(reason)) => {
                            self.refuse(&job_id, &env.correlation_id, reason, env.sent_at)?
                        }
                        Err(e) => tracing::info!(agent = %self.id, %job_id, error = %e, "no draft"),
                    }
                }
                other => tracing::debug!(agent = %self.id, kind = other.type_name(), "ignored"),
            }
        }
        Ok(handled)
    }
}

pub struct AgentRegistration {
    pub spec: SpecDocument,
    pub skills: Vec<String>,
    pub resources: Vec<f64>,
    pub policies: BitSet,
    pub reputation: f64,
    pub capacity: usize,
    pub behavior: Box<dyn AgentBehavior>,
}

/// The registered agents and the broker they share.
pub struct Federation {
    broker: Broker,
    workers: BTreeMap<String, AgentWorker>,
    vcvs: BTreeMap<String, Vcv>,
}

impl Federation {
    pub fn new(broker: Broker) -> Self {
        Self {
            broker,
            workers: BTreeMap::new(),
            vcvs: BTreeMap::new(),
        }
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.workers.keys().cloned().collect()
    }

    pub fn worker_mut(&mut self, id: &str) -> Option<&mut AgentWorker> {
        self.workers.get_mut(id)
    }

    /// Mutable behaviors for `ids` (ascending, unknown ids skipped).
    pub fn behaviors_mut(&mut self, ids: &BTreeSet<String>) -> Vec<(String, &mut dyn AgentBehavior)> {
        self.workers
            .iter_mut()
            .filter(|(id, _)| ids.contains(*id))
            .map(|(id, w)| (id.clone(), w.behavior_mut()))
            .collect()
    }

    /// Builds the agent's VCV at version 0, starts its worker and announces
    /// it: a VCV_UPDATE on the capability topic and a retained snapshot of
    /// every registered VCV on `foa/retain`.
    pub fn register_agent(&mut self, reg: AgentRegistration) -> Result<AgentProfile> {
        let id = reg.spec.agent_id.clone();
        if self.workers.contains_key(&id) {
            return Err(Error::Conflict(format!("agent {id} already registered")));
        }
        let mut skills = BloomFilter::default();
        for s in &reg.skills {
            skills.insert(s);
        }
        let c = embed_text(&capability_text(&reg.spec, &reg.skills), FULL_DIM)?;
        let e = embed_text(&reg.spec.text, FULL_DIM)?;
        let vcv = Vcv::new(id.clone(), c, skills, reg.resources, reg.policies, e, 0)?;
        let profile = AgentProfile::new(vcv.clone(), reg.reputation, reg.capacity)?;
        let worker = AgentWorker::new(reg.spec, reg.behavior, &self.broker)?;

        let update = Message::VcvUpdate {
            vcv: vcv.clone(),
            reputation: reg.reputation,
            capacity: reg.capacity,
        };
        self.broker.publish(Envelope::new(
            Topic::capability_updates(),
            &update,
            format!("{id}:v0"),
            id.clone(),
        )?)?;
        self.workers.insert(id.clone(), worker);
        self.vcvs.insert(id.clone(), vcv);

        let snapshot = Message::VcvDelta {
            delta: VcvDelta {
                origin_id: "federation".into(),
                entries: self.vcvs.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            },
        };
        self.broker.publish(
            Envelope::new(Topic::retain(), &snapshot, format!("snapshot:{}", self.vcvs.len()), "federation")?
                .retained(),
        )?;
        Ok(profile)
    }

    /// Pumps every worker in id order until none has anything left to do.
    pub fn pump(&mut self) -> Result<usize> {
        let mut total = 0;
        loop {
            let mut round = 0;
            for w in self.workers.values_mut() {
                round += w.pump()?;
            }
            if round == 0 {
                return Ok(total);
            }
            total += round;
        }
    }
}
