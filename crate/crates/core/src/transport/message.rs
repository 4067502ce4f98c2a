//! Envelopes and the typed protocol payloads they carry.
//!
//! Payloads are JSON objects tagged by `type`:
//!
//! | type           | topic                          | fields                                         |
//! |----------------|--------------------------------|------------------------------------------------|
//! | JOB_SUBMIT     | foa/orchestrator/jobs          | task                                           |
//! | VCV_UPDATE     | foa/capabilities/updates       | vcv, reputation, capacity                      |
//! | VCV_DELTA      | foa/capabilities/updates, retain | delta                                        |
//! | DECOMPOSE_REQ  | foa/agents/{id}/tasks          | job_id, task, min_subtasks, max_subtasks       |
//! | DECOMPOSE_PROP | foa/orchestrator/jobs          | job_id, proposal                               |
//! | TASK_ASSIGN    | foa/meta                       | job_id, attempt, assignment                    |
//! | DISPATCH       | foa/agents/{id}/tasks          | job_id, attempt, task                          |
//! | DRAFT          | foa/orchestrator/jobs, cluster | job_id, draft                                  |
//! | TASK_COMPLETE  | foa/clusters/{id}/channel      | job_id, cluster_id, result                     |
//! | POLICY_EVENT   | foa/policies/enforcement       | event                                          |
//! | RESULT         | foa/result                     | job_id, task_id, status, answer                |

use serde::{Deserialize, Serialize};

use super::topic::Topic;
use crate::capability::{Vcv, VcvDelta};
use crate::consensus::{ConsensusResult, Draft};
use crate::decompose::{RawProposal, TaskSpec};
use crate::error::Result;
use crate::policy::PolicyEvent;
use crate::routing::AssignmentMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qos {
    AtMostOnce,
    AtLeastOnce,
}

/// Work handed to an agent for one subtask attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchTask {
    pub subtask_id: String,
    pub description: String,
    /// Solutions of the subtask's DAG predecessors, ascending by id.
    pub inputs: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    JobSubmit {
        task: TaskSpec,
    },
    VcvUpdate {
        vcv: Vcv,
        reputation: f64,
        capacity: usize,
    },
    VcvDelta {
        delta: VcvDelta,
    },
    DecomposeReq {
        job_id: String,
        task: TaskSpec,
        min_subtasks: usize,
        max_subtasks: usize,
    },
    DecomposeProp {
        job_id: String,
        proposal: RawProposal,
    },
    TaskAssign {
        job_id: String,
        attempt: u32,
        assignment: AssignmentMatrix,
    },
    Dispatch {
        job_id: String,
        attempt: u32,
        task: DispatchTask,
    },
    Draft {
        job_id: String,
        draft: Draft,
    },
    TaskComplete {
        job_id: String,
        cluster_id: String,
        result: ConsensusResult,
    },
    PolicyEvent {
        event: PolicyEvent,
    },
    Result {
        job_id: String,
        task_id: String,
        status: ResultStatus,
        answer: Option<String>,
    },
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::JobSubmit { .. } => "JOB_SUBMIT",
            Message::VcvUpdate { .. } => "VCV_UPDATE",
            Message::VcvDelta { .. } => "VCV_DELTA",
            Message::DecomposeReq { .. } => "DECOMPOSE_REQ",
            Message::DecomposeProp { .. } => "DECOMPOSE_PROP",
            Message::TaskAssign { .. } => "TASK_ASSIGN",
            Message::Dispatch { .. } => "DISPATCH",
            Message::Draft { .. } => "DRAFT",
            Message::TaskComplete { .. } => "TASK_COMPLETE",
            Message::PolicyEvent { .. } => "POLICY_EVENT",
            Message::Result { .. } => "RESULT",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Message> {
        Ok(serde_json::from_str(s)?)
    }
}

/// What the broker routes. `sent_at` is the sender's logical clock and `seq`
/// the broker-wide publish sequence, both stamped at publish time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: Topic,
    pub payload: String,
    pub qos: Qos,
    pub retained: bool,
    pub correlation_id: String,
    pub sender_id: String,
    pub sent_at: u64,
    pub seq: u64,
}

impl Envelope {
    pub fn new(
        topic: Topic,
        message: &Message,
        correlation_id: impl Into<String>,
        sender_id: impl Into<String>,
    ) -> Result<Envelope> {
        Ok(Envelope {
            topic,
            payload: message.to_json()?,
            qos: Qos::AtLeastOnce,
            retained: false,
            correlation_id: correlation_id.into(),
            sender_id: sender_id.into(),
            sent_at: 0,
            seq: 0,
        })
    }

    pub fn with_qos(mut self, qos: Qos) -> Envelope {
        self.qos = qos;
        self
    }

    pub fn retained(mut self) -> Envelope {
        self.retained = true;
        self
    }

    pub fn message(&self) -> Result<Message> {
        Message::from_json(&self.payload)
    }
}
