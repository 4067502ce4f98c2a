//! Submission screening and the policy audit trail.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::capability::BloomFilter;
use crate::decompose::TaskSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyEventKind {
    BlockedSubmission,
    AgentRefusal,
    GateFail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEvent {
    pub event_id: String,
    pub kind: PolicyEventKind,
    /// Task or agent id the event is about.
    pub subject: String,
    pub detail: String,
    pub at: u64,
}

/// Append-only event log with unique ids.
#[derive(Debug, Clone, Default)]
pub struct PolicyLog {
    events: Vec<PolicyEvent>,
    ids: BTreeSet<String>,
}

impl PolicyLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event with a generated id (`pe-000001`, ...).
    pub fn record(
        &mut self,
        kind: PolicyEventKind,
        subject: impl Into<String>,
        detail: impl Into<String>,
        at: u64,
    ) -> PolicyEvent {
        let event = PolicyEvent {
            event_id: format!("pe-{:06}", self.events.len() + 1),
            kind,
            subject: subject.into(),
            detail: detail.into(),
            at,
        };
        self.ids.insert(event.event_id.clone());
        self.events.push(event.clone());
        event
    }

    /// Appends an externally created event; ids must stay unique.
    pub fn append(&mut self, event: PolicyEvent) -> Result<()> {
        if !self.ids.insert(event.event_id.clone()) {
            return Err(Error::Conflict(format!(
                "duplicate policy event id {}",
                event.event_id
            )));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn contains(&self, event_id: &str) -> bool {
        self.ids.contains(event_id)
    }

    pub fn events(&self) -> &[PolicyEvent] {
        &self.events
    }

    pub fn count(&self, kind: PolicyEventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One JSON object per line.
    pub fn export_jsonl(&self, mut out: impl Write) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Lowercased tokens with punctuation stripped; empty tokens dropped.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Builds a blocklist filter from banned terms, normalized like submissions.
pub fn build_blocklist<'a>(terms: impl IntoIterator<Item = &'a str>) -> BloomFilter {
    let mut f = BloomFilter::default();
    for term in terms {
        for tok in normalized_tokens(term) {
            f.insert(&tok);
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Screening {
    Accepted,
    Blocked(PolicyEvent),
}

/// Blocks the task iff any normalized token of its description hits the
/// filter; the event is recorded in `log`.
pub fn screen_submission(
    task: &TaskSpec,
    blocklist: &BloomFilter,
    log: &mut PolicyLog,
    at: u64,
) -> Screening {
    let hit = normalized_tokens(&task.description)
        .into_iter()
        .find(|t| blocklist.contains(t));
    match hit {
        None => Screening::Accepted,
        Some(token) => Screening::Blocked(log.record(
            PolicyEventKind::BlockedSubmission,
            task.task_id.clone(),
            format!("blocked token {token:?}"),
            at,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::BitSet;

    fn task(desc: &str) -> TaskSpec {
        TaskSpec::new("t1", desc, BitSet::new(64).unwrap(), vec![0.0; 4]).unwrap()
    }

    #[test]
    fn tokens_are_normalized() {
        assert_eq!(normalized_tokens("Make a BOMB!  now?"), ["make", "a", "bomb", "now"]);
        assert!(normalized_tokens(" ... ").is_empty());
    }

    #[test]
    fn empty_blocklist_accepts() {
        let mut log = PolicyLog::new();
        let f = BloomFilter::default();
        assert_eq!(screen_submission(&task("anything at all"), &f, &mut log, 0), Screening::Accepted);
        assert!(log.is_empty());
    }

    #[test]
    fn blocked_token_records_event() {
        let mut log = PolicyLog::new();
        let f = build_blocklist(["Weapon"]);
        match screen_submission(&task("design a weapon, quickly"), &f, &mut log, 9) {
            Screening::Blocked(e) => {
                assert_eq!(e.kind, PolicyEventKind::BlockedSubmission);
                assert_eq!(e.subject, "t1");
                assert_eq!(e.at, 9);
            }
            other => panic!("expected block, got {other:?}"),
        }
        assert_eq!(log.count(PolicyEventKind::BlockedSubmission), 1);
    }

    #[test]
    fn ids_unique_and_export() {
        let mut log = PolicyLog::new();
        let a = log.record(PolicyEventKind::GateFail, "s1", "x", 1);
        let b = log.record(PolicyEventKind::GateFail, "s2", "y", 2);
        assert_ne!(a.event_id, b.event_id);
        assert!(log.append(a.clone()).is_err());
        let mut buf = Vec::new();
        log.export_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: PolicyEvent = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
