//! Task DAG container and deterministic cycle breaking.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::routing::SubtaskRequirement;

pub type Edge = (String, String);

/// Subtasks plus prerequisite -> dependent edges. Acyclic when produced by
/// [`validate_dag`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskDag {
    pub nodes: BTreeMap<String, SubtaskRequirement>,
    pub edges: BTreeSet<Edge>,
}

/// A graph that may still contain cycles or dangling edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateGraph {
    pub nodes: BTreeMap<String, SubtaskRequirement>,
    pub edges: BTreeSet<Edge>,
}

impl TaskDag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Predecessors of `id`, ascending.
    pub fn predecessors(&self, id: &str) -> Vec<String> {
        self.edges
            .iter()
            .filter(|(_, to)| to == id)
            .map(|(from, _)| from.clone())
            .collect()
    }

    pub fn successors(&self, id: &str) -> Vec<String> {
        self.edges
            .iter()
            .filter(|(from, _)| from == id)
            .map(|(_, to)| to.clone())
            .collect()
    }

    /// Nodes without outgoing edges, ascending.
    pub fn sinks(&self) -> Vec<String> {
        self.nodes
            .keys()
            .filter(|id| !self.edges.iter().any(|(from, _)| from == *id))
            .cloned()
            .collect()
    }

    /// Kahn's algorithm, smallest ready id first; `None` on a cycle.
    pub fn topo_order(&self) -> Option<Vec<String>> {
        let ids: BTreeSet<String> = self.nodes.keys().cloned().collect();
        topo_sort(&ids, &self.edges)
    }
}

pub fn topo_sort(nodes: &BTreeSet<String>, edges: &BTreeSet<Edge>) -> Option<Vec<String>> {
    let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in edges {
        if !nodes.contains(a) || !nodes.contains(b) {
            continue;
        }
        *indeg.get_mut(b.as_str())? += 1;
        out.entry(a.as_str()).or_default().push(b.as_str());
    }
    let mut ready: BinaryHeap<Reverse<&str>> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| Reverse(n))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n.to_string());
        for &m in out.get(n).into_iter().flatten() {
            let d = indeg.get_mut(m)?;
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(m));
            }
        }
    }
    (order.len() == nodes.len()).then_some(order)
}

/// Tarjan's strongly connected components over the given node set.
pub fn strongly_connected(nodes: &BTreeSet<String>, edges: &BTreeSet<Edge>) -> Vec<BTreeSet<String>> {
    let ids: Vec<&String> = nodes.iter().collect();
    let index_of: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut adj = vec![Vec::new(); ids.len()];
    for (a, b) in edges {
        if let (Some(&i), Some(&j)) = (index_of.get(a.as_str()), index_of.get(b.as_str())) {
            adj[i].push(j);
        }
    }

    struct Tarjan<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }

    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for &w in &self.adj[v] {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                self.out.push(comp);
            }
        }
    }

    let n = ids.len();
    let mut t = Tarjan {
        adj: &adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    let mut comps: Vec<BTreeSet<String>> = t
        .out
        .into_iter()
        .map(|c| c.into_iter().map(|i| ids[i].clone()).collect())
        .collect();
    comps.sort();
    comps
}

/// Drops dangling edges, then repeatedly removes the lexicographically
/// greatest edge inside every cyclic strongly connected component until the
/// graph is acyclic. Returns the surviving edges and the removed cycle edges
/// in removal order.
pub fn break_cycles(nodes: &BTreeSet<String>, edges: &BTreeSet<Edge>) -> (BTreeSet<Edge>, Vec<Edge>) {
    let mut kept: BTreeSet<Edge> = edges
        .iter()
        .filter(|(a, b)| nodes.contains(a) && nodes.contains(b))
        .cloned()
        .collect();
    let mut removed = Vec::new();
    loop {
        let mut victims = Vec::new();
        for comp in strongly_connected(nodes, &kept) {
            let greatest = kept
                .iter()
                .filter(|(a, b)| comp.contains(a) && comp.contains(b))
                .max()
                .cloned();
            if let Some(e) = greatest {
                victims.push(e);
            }
        }
        if victims.is_empty() {
            break;
        }
        for e in victims {
            kept.remove(&e);
            removed.push(e);
        }
    }
    (kept, removed)
}

/// Returns an acyclic graph over the candidate's nodes.
pub fn validate_dag(g: CandidateGraph) -> TaskDag {
    let ids: BTreeSet<String> = g.nodes.keys().cloned().collect();
    let (edges, removed) = break_cycles(&ids, &g.edges);
    if !removed.is_empty() {
        tracing::debug!(?removed, "removed cycle edges");
    }
    TaskDag {
        nodes: g.nodes,
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn edges(pairs: &[(&str, &str)]) -> BTreeSet<Edge> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn acyclic_input_unchanged() {
        let n = set(&["a", "b", "c"]);
        let e = edges(&[("a", "b"), ("b", "c"), ("a", "c")]);
        let (kept, removed) = break_cycles(&n, &e);
        assert_eq!(kept, e);
        assert!(removed.is_empty());
    }

    #[test]
    fn two_cycle_drops_greater_edge() {
        let n = set(&["A", "B"]);
        let (kept, removed) = break_cycles(&n, &edges(&[("A", "B"), ("B", "A")]));
        assert_eq!(kept, edges(&[("A", "B")]));
        assert_eq!(removed, vec![("B".to_string(), "A".to_string())]);
    }

    #[test]
    fn self_loop_and_dangling() {
        let n = set(&["a", "b"]);
        let (kept, removed) = break_cycles(&n, &edges(&[("a", "a"), ("a", "b"), ("b", "zz")]));
        assert_eq!(kept, edges(&[("a", "b")]));
        assert_eq!(removed.len(), 1);
    }

    #[test]
    fn topo_prefers_small_ids() {
        let n = set(&["a", "b", "c", "d"]);
        let e = edges(&[("c", "d"), ("a", "d")]);
        assert_eq!(topo_sort(&n, &e).unwrap(), ["a", "b", "c", "d"]);
        assert!(topo_sort(&n, &edges(&[("a", "b"), ("b", "a")])).is_none());
    }

    #[test]
    fn scc_groups() {
        let n = set(&["a", "b", "c", "d"]);
        let comps = strongly_connected(&n, &edges(&[("a", "b"), ("b", "a"), ("c", "d")]));
        assert!(comps.contains(&set(&["a", "b"])));
        assert_eq!(comps.len(), 3);
    }
}
