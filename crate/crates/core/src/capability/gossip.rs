//! Δ-gossip: anti-entropy reconciliation of VCV sets by version digest.
//!
//! A node advertises a digest (`agent_id -> version`); its peer answers with
//! only the entries that digest is missing or behind on. Higher versions win,
//! and an equal version never replaces the incumbent, so re-delivery of the
//! same delta is a no-op.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::vcv::Vcv;
use crate::error::{Error, Result};

pub type Digest = BTreeMap<String, u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcvDelta {
    pub origin_id: String,
    pub entries: Vec<(String, Vcv)>,
}

impl VcvDelta {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VcvSet {
    entries: BTreeMap<String, Vcv>,
}

impl VcvSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, agent_id: &str) -> Option<&Vcv> {
        self.entries.get(agent_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vcv> {
        self.entries.values()
    }

    pub fn digest(&self) -> Digest {
        self.entries
            .iter()
            .map(|(id, v)| (id.clone(), v.version()))
            .collect()
    }

    /// Local update by the owning node. Returns false if `vcv` is not newer
    /// than what is held.
    pub fn upsert(&mut self, vcv: Vcv) -> bool {
        match self.entries.get(vcv.agent_id()) {
            Some(cur) if cur.version() >= vcv.version() => false,
            _ => {
                self.entries.insert(vcv.agent_id().to_string(), vcv);
                true
            }
        }
    }
}

/// Entries of `local` that `remote_digest` lacks or holds at a lower version.
pub fn diff_deltas(origin_id: &str, local: &VcvSet, remote_digest: &Digest) -> VcvDelta {
    let entries = local
        .entries
        .iter()
        .filter(|(id, v)| remote_digest.get(*id).is_none_or(|rv| v.version() > *rv))
        .map(|(id, v)| (id.clone(), v.clone()))
        .collect();
    VcvDelta {
        origin_id: origin_id.to_string(),
        entries,
    }
}

/// Merges `delta` into `local` (highest version wins, ties keep the
/// incumbent). Returns the agent ids that changed. A delta naming an agent
/// twice is rejected before anything is applied.
pub fn apply_delta(local: &mut VcvSet, delta: &VcvDelta) -> Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    for (id, vcv) in &delta.entries {
        if !seen.insert(id.as_str()) {
            return Err(Error::Protocol(format!("duplicate agent_id {id} in delta")));
        }
        if id != vcv.agent_id() {
            return Err(Error::Protocol(format!(
                "delta key {id} does not match vcv {}",
                vcv.agent_id()
            )));
        }
    }
    let mut changed = Vec::new();
    for (id, vcv) in &delta.entries {
        if local.upsert(vcv.clone()) {
            changed.push(id.clone());
        }
    }
    Ok(changed)
}

/// A gossip participant. The set is guarded so concurrent applies serialize.
#[derive(Debug)]
pub struct GossipNode {
    id: String,
    set: Mutex<VcvSet>,
}

impl GossipNode {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            set: Mutex::new(VcvSet::new()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn snapshot(&self) -> VcvSet {
        self.lock().clone()
    }

    pub fn digest(&self) -> Digest {
        self.lock().digest()
    }

    pub fn upsert(&self, vcv: Vcv) -> bool {
        self.lock().upsert(vcv)
    }

    pub fn delta_for(&self, remote_digest: &Digest) -> VcvDelta {
        diff_deltas(&self.id, &self.lock(), remote_digest)
    }

    pub fn apply(&self, delta: &VcvDelta) -> Result<Vec<String>> {
        apply_delta(&mut self.lock(), delta)
    }

    /// One push-pull exchange. Returns the number of entries transferred.
    pub fn exchange(&self, peer: &GossipNode) -> Result<usize> {
        let to_peer = self.delta_for(&peer.digest());
        let to_self = peer.delta_for(&self.digest());
        peer.apply(&to_peer)?;
        self.apply(&to_self)?;
        Ok(to_peer.entries.len() + to_self.entries.len())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, VcvSet> {
        self.set.lock().unwrap_or_else(|p| p.into_inner())
    }
}
