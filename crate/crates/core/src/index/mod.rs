//! Sharded HNSW index over capability embeddings.
//!
//! Each agent lives in exactly one shard, chosen by a stable hash of its id.
//! Re-inserting an agent at a higher version tombstones the old node; a shard
//! is rebuilt once more than a quarter of its nodes are tombstones.

mod hnsw;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};

pub use hnsw::{HnswGraph, HnswParams};

use crate::capability::Vcv;
use crate::error::{Error, Result};
use crate::vector::{is_unit, stable_hash};

pub const DEFAULT_SHARDS: usize = 4;
const SHARD_SEED: u64 = 0x05ba_4d00;
const COMPACT_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub shard: usize,
    pub node: u32,
    pub version: u64,
}

/// A search hit: agent id and cosine similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub agent_id: String,
    pub similarity: f64,
}

#[derive(Debug)]
pub struct ShardedIndex {
    params: HnswParams,
    dim: usize,
    shards: Vec<RwLock<HnswGraph>>,
    id_map: RwLock<BTreeMap<String, Placement>>,
}

pub fn shard_of(agent_id: &str, shard_count: usize) -> usize {
    (stable_hash(SHARD_SEED, agent_id.as_bytes()) % shard_count as u64) as usize
}

fn read<T>(l: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|p| p.into_inner())
}

fn write<T>(l: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|p| p.into_inner())
}

impl ShardedIndex {
    pub fn new(dim: usize, shard_count: usize, params: HnswParams) -> Result<Self> {
        if shard_count == 0 {
            return Err(Error::invalid("shard count must be positive"));
        }
        if params.m < 2 {
            return Err(Error::invalid("HNSW M must be at least 2"));
        }
        Ok(Self {
            params,
            dim,
            shards: (0..shard_count).map(|_| RwLock::new(HnswGraph::new(params))).collect(),
            id_map: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn with_defaults(dim: usize) -> Self {
        Self::new(dim, DEFAULT_SHARDS, HnswParams::default()).expect("default index parameters")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    /// Number of live (non-superseded) agents.
    pub fn len(&self) -> usize {
        read(&self.id_map).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn placement(&self, agent_id: &str) -> Option<Placement> {
        read(&self.id_map).get(agent_id).copied()
    }

    /// Indexes `vector` for `agent_id` at `version`. Returns false when an
    /// equal or newer version is already present (stale insert is a no-op).
    pub fn insert(&self, agent_id: &str, version: u64, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::invalid(format!(
                "index dimension is {}, got {}",
                self.dim,
                vector.len()
            )));
        }
        if !is_unit(vector) {
            return Err(Error::invalid("index vectors must be unit norm"));
        }
        let mut ids = write(&self.id_map);
        let shard_idx = shard_of(agent_id, self.shards.len());
        let mut shard = write(&self.shards[shard_idx]);
        if let Some(old) = ids.get(agent_id) {
            if old.version >= version {
                return Ok(false);
            }
            shard.mark_deleted(old.node);
        }
        let node = shard.insert(agent_id.to_string(), version, vector.to_vec());
        ids.insert(
            agent_id.to_string(),
            Placement {
                shard: shard_idx,
                node,
                version,
            },
        );
        if shard.tombstones() as f64 > COMPACT_RATIO * shard.len() as f64 {
            *shard = shard.compacted();
            for id in 0..shard.len() as u32 {
                let n = shard.node(id);
                ids.insert(
                    n.key.clone(),
                    Placement {
                        shard: shard_idx,
                        node: id,
                        version: n.version,
                    },
                );
            }
        }
        Ok(true)
    }

    /// Indexes a VCV's capability embedding.
    pub fn insert_vcv(&self, vcv: &Vcv) -> Result<bool> {
        self.insert(vcv.agent_id(), vcv.version(), vcv.capability())
    }

    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<Hit>> {
        self.search_with_ef(query, k, self.params.ef_search)
    }

    /// Top-`k` by cosine across all shards; ties broken by ascending agent id.
    pub fn search_with_ef(&self, query: &[f64], k: usize, ef: usize) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if query.len() != self.dim || !is_unit(query) {
            return Err(Error::invalid("query must be a unit vector of the index dimension"));
        }
        let mut hits = Vec::new();
        for shard in &self.shards {
            let g = read(shard);
            hits.extend(g.search(query, k, ef.max(k)).into_iter().map(|(id, sim)| Hit {
                agent_id: g.node(id).key.clone(),
                similarity: sim,
            }));
        }
        sort_hits(&mut hits);
        hits.truncate(k);
        Ok(hits)
    }

    pub fn distance_evals(&self) -> u64 {
        self.shards.iter().map(|s| read(s).distance_evals()).sum()
    }

    pub fn degree_bounds_hold(&self) -> bool {
        self.shards.iter().all(|s| read(s).degree_bounds_hold())
    }

    pub fn to_snapshot(&self) -> IndexSnapshot {
        IndexSnapshot {
            params: self.params,
            shard_count: self.shards.len(),
            dim: self.dim,
            shards: self.shards.iter().map(|s| read(s).clone()).collect(),
        }
    }

    pub fn from_snapshot(snap: IndexSnapshot) -> Result<Self> {
        if snap.shards.len() != snap.shard_count {
            return Err(Error::invalid("snapshot shard count does not match header"));
        }
        let mut ids = BTreeMap::new();
        for (shard_idx, g) in snap.shards.iter().enumerate() {
            for id in 0..g.len() as u32 {
                let n = g.node(id);
                if !n.deleted {
                    ids.insert(
                        n.key.clone(),
                        Placement {
                            shard: shard_idx,
                            node: id,
                            version: n.version,
                        },
                    );
                }
            }
        }
        Ok(Self {
            params: snap.params,
            dim: snap.dim,
            shards: snap.shards.into_iter().map(RwLock::new).collect(),
            id_map: RwLock::new(ids),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_snapshot())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let snap: IndexSnapshot = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_snapshot(snap)
    }
}

/// Header plus per-shard graphs (vectors and adjacency lists).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexSnapshot {
    pub params: HnswParams,
    pub shard_count: usize,
    pub dim: usize,
    pub shards: Vec<HnswGraph>,
}

pub fn sort_hits(hits: &mut [Hit]) {
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.agent_id.cmp(&b.agent_id))
    });
}

/// Exact cosine scan, the reference the graph search is measured against.
pub fn brute_force_top_k<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    query: &[f64],
    k: usize,
) -> Vec<Hit> {
    let mut hits: Vec<Hit> = items
        .into_iter()
        .map(|(id, v)| Hit {
            agent_id: id.to_string(),
            similarity: crate::vector::unit_cosine(query, v),
        })
        .collect();
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        crate::vector::normalized(&v).unwrap()
    }

    fn axis(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = ShardedIndex::with_defaults(8);
        assert!(idx.search(&axis(8, 0), 3).unwrap().is_empty());
    }

    #[test]
    fn self_retrieval_and_single_agent() {
        let idx = ShardedIndex::with_defaults(8);
        idx.insert("A", 1, &axis(8, 0)).unwrap();
        let hits = idx.search(&axis(8, 0), 1).unwrap();
        assert_eq!(hits[0].agent_id, "A");
        let hits = idx.search(&axis(8, 5), 1).unwrap();
        assert_eq!(hits[0].agent_id, "A");
    }

    #[test]
    fn supersede_and_stale_noop() {
        let idx = ShardedIndex::with_defaults(8);
        assert!(idx.insert("A", 1, &axis(8, 0)).unwrap());
        assert!(idx.insert("A", 2, &axis(8, 1)).unwrap());
        let hits = idx.search(&axis(8, 0), 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert!((hits[0].similarity - 0.0).abs() < 1e-12);
        let hits = idx.search(&axis(8, 1), 5).unwrap();
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);

        assert!(!idx.insert("A", 1, &axis(8, 3)).unwrap());
        assert_eq!(idx.placement("A").unwrap().version, 2);
        assert!((idx.search(&axis(8, 1), 1).unwrap()[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_beyond_population_returns_all_sorted() {
        let idx = ShardedIndex::with_defaults(8);
        for i in 0..5 {
            idx.insert(&format!("a{i}"), 0, &axis(8, i)).unwrap();
        }
        let q = crate::vector::normalized(&[5.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let hits = idx.search(&q, 50).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.agent_id.as_str()).collect();
        assert_eq!(ids, ["a0", "a1", "a2", "a3", "a4"]);
    }

    #[test]
    fn ties_break_by_agent_id() {
        let idx = ShardedIndex::with_defaults(4);
        for id in ["c", "a", "b"] {
            idx.insert(id, 0, &axis(4, 0)).unwrap();
        }
        let ids: Vec<_> = idx
            .search(&axis(4, 0), 3)
            .unwrap()
            .into_iter()
            .map(|h| h.agent_id)
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn rejects_bad_vectors() {
        let idx = ShardedIndex::with_defaults(4);
        assert!(idx.insert("a", 0, &[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(idx.insert("a", 0, &[1.0, 0.0]).is_err());
        assert!(idx.search(&axis(4, 0), 0).is_err());
    }

    #[test]
    fn churn_compacts_and_keeps_latest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx = ShardedIndex::new(16, 1, HnswParams::default()).unwrap();
        let mut latest = BTreeMap::new();
        for round in 0..6u64 {
            for a in 0..20 {
                let v = random_unit(&mut rng, 16);
                idx.insert(&format!("a{a}"), round, &v).unwrap();
                latest.insert(format!("a{a}"), v);
            }
        }
        assert_eq!(idx.len(), 20);
        {
            let g = read(&idx.shards[0]);
            assert!(g.tombstones() as f64 <= COMPACT_RATIO * g.len() as f64);
        }
        for (id, v) in &latest {
            let hits = idx.search_with_ef(v, 1, 64).unwrap();
            assert_eq!(&hits[0].agent_id, id);
        }
        assert!(idx.degree_bounds_hold());
    }

    #[test]
    fn snapshot_round_trip_reproduces_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let idx = ShardedIndex::with_defaults(32);
        for i in 0..200 {
            idx.insert(&format!("a{i:03}"), 0, &random_unit(&mut rng, 32)).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let loaded = ShardedIndex::load(&path).unwrap();
        for _ in 0..20 {
            let q = random_unit(&mut rng, 32);
            assert_eq!(idx.search(&q, 10).unwrap(), loaded.search(&q, 10).unwrap());
        }
    }
}
