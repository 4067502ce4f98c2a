//! Single-shard HNSW graph over unit vectors with distance `1 - cosine`.
//!
//! Levels are drawn from a hash of `(seed, insertion index)` rather than a
//! stateful RNG, so a graph rebuilt from the same insertion sequence (or
//! loaded from a snapshot) is identical.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::vector::{splitmix64, unit_cosine, unit_interval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max neighbours per node above level 0; level 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub level_lambda: f64,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self::with_m(16)
    }
}

impl HnswParams {
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            ef_construction: 200,
            ef_search: 64,
            level_lambda: 1.0 / (m as f64).ln(),
            seed: 0x4e53_5721,
        }
    }

    pub fn max_neighbors(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Node {
    pub key: String,
    pub version: u64,
    pub vector: Vec<f64>,
    pub level: usize,
    pub neighbors: Vec<Vec<u32>>,
    pub deleted: bool,
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    dist: f64,
    id: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HnswGraph {
    pub(crate) params: HnswParams,
    pub(crate) nodes: Vec<Node>,
    entry: Option<u32>,
    max_level: usize,
    #[serde(skip)]
    distance_evals: AtomicU64,
}

impl Clone for HnswGraph {
    fn clone(&self) -> Self {
        Self {
            params: self.params,
            nodes: self.nodes.clone(),
            entry: self.entry,
            max_level: self.max_level,
            distance_evals: AtomicU64::new(self.distance_evals()),
        }
    }
}

impl HnswGraph {
    pub fn new(params: HnswParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            entry: None,
            max_level: 0,
            distance_evals: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn live_len(&self) -> usize {
        self.nodes.iter().filter(|n| !n.deleted).count()
    }

    pub fn tombstones(&self) -> usize {
        self.nodes.len() - self.live_len()
    }

    pub fn distance_evals(&self) -> u64 {
        self.distance_evals.load(AtomicOrdering::Relaxed)
    }

    fn dist(&self, q: &[f64], id: u32) -> f64 {
        self.distance_evals.fetch_add(1, AtomicOrdering::Relaxed);
        1.0 - unit_cosine(q, &self.nodes[id as usize].vector)
    }

    fn draw_level(&self, index: usize) -> usize {
        let u = unit_interval(splitmix64(self.params.seed ^ splitmix64(index as u64)));
        // 1 - u lies in (0, 1], so the log is finite
        let level = -(1.0 - u).ln() * self.params.level_lambda;
        level.floor().min(32.0) as usize
    }

    pub(crate) fn mark_deleted(&mut self, id: u32) {
        self.nodes[id as usize].deleted = true;
    }

    /// Inserts a vector and returns its internal id.
    pub fn insert(&mut self, key: String, version: u64, vector: Vec<f64>) -> u32 {
        let id = self.nodes.len() as u32;
        let level = self.draw_level(self.nodes.len());
        self.nodes.push(Node {
            key,
            version,
            vector,
            level,
            neighbors: vec![Vec::new(); level + 1],
            deleted: false,
        });

        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return id;
        };

        let q = self.nodes[id as usize].vector.clone();
        let mut ep = Scored {
            dist: self.dist(&q, entry),
            id: entry,
        };
        for lc in (level + 1..=self.max_level).rev() {
            ep = self.greedy_closest(&q, ep, lc);
        }
        let mut entry_points = vec![ep];
        for lc in (0..=level.min(self.max_level)).rev() {
            let candidates = self.search_layer(&q, &entry_points, self.params.ef_construction, lc);
            let selected = self.select_neighbors(&candidates, self.params.m);
            self.nodes[id as usize].neighbors[lc] = selected.iter().map(|s| s.id).collect();
            for s in &selected {
                self.link(s.id, id, lc);
            }
            entry_points = candidates;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
        id
    }

    fn link(&mut self, from: u32, to: u32, level: usize) {
        let cap = self.params.max_neighbors(level);
        let node = &mut self.nodes[from as usize];
        if node.neighbors[level].contains(&to) {
            return;
        }
        node.neighbors[level].push(to);
        if node.neighbors[level].len() <= cap {
            return;
        }
        let base = self.nodes[from as usize].vector.clone();
        let mut scored: Vec<Scored> = self.nodes[from as usize].neighbors[level]
            .iter()
            .map(|&n| Scored {
                dist: self.dist(&base, n),
                id: n,
            })
            .collect();
        scored.sort();
        let kept = self.select_neighbors(&scored, cap);
        self.nodes[from as usize].neighbors[level] = kept.iter().map(|s| s.id).collect();
    }

    fn greedy_closest(&self, q: &[f64], mut best: Scored, level: usize) -> Scored {
        loop {
            let mut improved = false;
            for &n in &self.nodes[best.id as usize].neighbors[level] {
                let cand = Scored {
                    dist: self.dist(q, n),
                    id: n,
                };
                if cand < best {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes sorted nearest first.
    fn search_layer(&self, q: &[f64], entry: &[Scored], ef: usize, level: usize) -> Vec<Scored> {
        let mut visited: HashSet<u32> = entry.iter().map(|s| s.id).collect();
        let mut candidates: BinaryHeap<Reverse<Scored>> = entry.iter().copied().map(Reverse).collect();
        let mut results: BinaryHeap<Scored> = entry.iter().copied().collect();
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(c)) = candidates.pop() {
            let worst = results.peek().copied();
            if let Some(w) = worst {
                if c.dist > w.dist && results.len() >= ef {
                    break;
                }
            }
            for &n in &self.nodes[c.id as usize].neighbors[level] {
                if !visited.insert(n) {
                    continue;
                }
                let s = Scored {
                    dist: self.dist(q, n),
                    id: n,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| s < *w);
                if admit {
                    candidates.push(Reverse(s));
                    results.push(s);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every neighbour already kept, then top up with the nearest
    /// pruned candidates.
    fn select_neighbors(&self, sorted: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned: Vec<Scored> = Vec::new();
        for &c in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = &self.nodes[c.id as usize].vector;
            let diverse = kept.iter().all(|k| {
                let d = 1.0 - unit_cosine(cv, &self.nodes[k.id as usize].vector);
                c.dist < d
            });
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for p in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(p);
        }
        kept
    }

    /// Returns up to `k` live nodes nearest to `q` as `(internal id, cosine)`.
    pub fn search(&self, q: &[f64], k: usize, ef: usize) -> Vec<(u32, f64)> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut ep = Scored {
            dist: self.dist(q, entry),
            id: entry,
        };
        for lc in (1..=self.max_level).rev() {
            ep = self.greedy_closest(q, ep, lc);
        }
        let ef = ef.max(k) + self.tombstones();
        self.search_layer(q, &[ep], ef, 0)
            .into_iter()
            .filter(|s| !self.nodes[s.id as usize].deleted)
            .take(k)
            .map(|s| (s.id, 1.0 - s.dist))
            .collect()
    }

    pub(crate) fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    /// Neighbour-count bound check: `<= m` above level 0, `<= 2m` at level 0.
    pub fn degree_bounds_hold(&self) -> bool {
        self.nodes.iter().all(|n| {
            n.neighbors
                .iter()
                .enumerate()
                .all(|(lvl, ns)| ns.len() <= self.params.max_neighbors(lvl))
        })
    }

    /// Rebuilds the graph from live nodes in original insertion order.
    pub fn compacted(&self) -> HnswGraph {
        let mut g = HnswGraph::new(self.params);
        for n in self.nodes.iter().filter(|n| !n.deleted) {
            g.insert(n.key.clone(), n.version, n.vector.clone());
        }
        g
    }
}
