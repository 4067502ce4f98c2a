//! Topic schema and MQTT-style wildcard matching.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse topic classes used for per-class message accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicClass {
    Jobs,
    AgentTasks,
    ClusterChannel,
    CapabilityUpdates,
    PolicyEnforcement,
    Meta,
    Retain,
    Result,
}

impl TopicClass {
    pub const ALL: [TopicClass; 8] = [
        TopicClass::Jobs,
        TopicClass::AgentTasks,
        TopicClass::ClusterChannel,
        TopicClass::CapabilityUpdates,
        TopicClass::PolicyEnforcement,
        TopicClass::Meta,
        TopicClass::Retain,
        TopicClass::Result,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicClass::Jobs => "jobs",
            TopicClass::AgentTasks => "agent_tasks",
            TopicClass::ClusterChannel => "cluster_channel",
            TopicClass::CapabilityUpdates => "capability_updates",
            TopicClass::PolicyEnforcement => "policy_enforcement",
            TopicClass::Meta => "meta",
            TopicClass::Retain => "retain",
            TopicClass::Result => "result",
        }
    }

    /// Retained publishes are only accepted on these classes.
    pub fn allows_retained(self) -> bool {
        matches!(
            self,
            TopicClass::CapabilityUpdates | TopicClass::Retain | TopicClass::Result
        )
    }
}

impl fmt::Display for TopicClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete (wildcard-free) topic that belongs to the schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topic {
    path: String,
    class: TopicClass,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '+', '#']) {
        return Err(Error::invalid(format!("invalid topic id {id:?}")));
    }
    Ok(())
}

impl Topic {
    pub fn jobs() -> Topic {
        Topic {
            path: "foa/orchestrator/jobs".into(),
            class: TopicClass::Jobs,
        }
    }

    pub fn agent_tasks(agent_id: &str) -> Result<Topic> {
        check_id(agent_id)?;
        Ok(Topic {
            path: format!("foa/agents/{agent_id}/tasks"),
            class: TopicClass::AgentTasks,
        })
    }

    pub fn cluster_channel(cluster_id: &str) -> Result<Topic> {
        check_id(cluster_id)?;
        Ok(Topic {
            path: format!("foa/clusters/{cluster_id}/channel"),
            class: TopicClass::ClusterChannel,
        })
    }

    pub fn capability_updates() -> Topic {
        Topic {
            path: "foa/capabilities/updates".into(),
            class: TopicClass::CapabilityUpdates,
        }
    }

    pub fn policy_enforcement() -> Topic {
        Topic {
            path: "foa/policies/enforcement".into(),
            class: TopicClass::PolicyEnforcement,
        }
    }

    pub fn meta() -> Topic {
        Topic {
            path: "foa/meta".into(),
            class: TopicClass::Meta,
        }
    }

    pub fn retain() -> Topic {
        Topic {
            path: "foa/retain".into(),
            class: TopicClass::Retain,
        }
    }

    pub fn result() -> Topic {
        Topic {
            path: "foa/result".into(),
            class: TopicClass::Result,
        }
    }

    /// Parses a path and checks it against the schema.
    pub fn parse(path: &str) -> Result<Topic> {
        let segs: Vec<&str> = path.split('/').collect();
        let topic = match segs.as_slice() {
            ["foa", "orchestrator", "jobs"] => Topic::jobs(),
            ["foa", "agents", id, "tasks"] => Topic::agent_tasks(id)?,
            ["foa", "clusters", id, "channel"] => Topic::cluster_channel(id)?,
            ["foa", "capabilities", "updates"] => Topic::capability_updates(),
            ["foa", "policies", "enforcement"] => Topic::policy_enforcement(),
            ["foa", "meta"] => Topic::meta(),
            ["foa", "retain"] => Topic::retain(),
            ["foa", "result"] => Topic::result(),
            _ => return Err(Error::invalid(format!("topic {path:?} is not in the schema"))),
        };
        Ok(topic)
    }

    pub fn as_str(&self) -> &str {
        &self.path
    }

    pub fn class(&self) -> TopicClass {
        self.class
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path)
    }
}

impl TryFrom<String> for Topic {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Topic::parse(&s)
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> String {
        t.path
    }
}

/// Checks filter syntax: no empty segments, `+` occupies a whole segment,
/// `#` occupies the whole last segment.
pub fn validate_pattern(pattern: &str) -> Result<()> {
    let segs: Vec<&str> = pattern.split('/').collect();
    for (i, seg) in segs.iter().enumerate() {
        if seg.is_empty() {
            return Err(Error::invalid(format!("empty segment in pattern {pattern:?}")));
        }
        if seg.contains('#') && (*seg != "#" || i + 1 != segs.len()) {
            return Err(Error::invalid(format!("'#' must be the final segment in {pattern:?}")));
        }
        if seg.contains('+') && *seg != "+" {
            return Err(Error::invalid(format!("'+' must fill a segment in {pattern:?}")));
        }
    }
    Ok(())
}

/// Segment-wise filter match. Assumes `pattern` passed [`validate_pattern`].
pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    let mut pat = pattern.split('/');
    let mut top = topic.split('/');
    loop {
        match (pat.next(), top.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(p), Some(t)) if p == t => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}
