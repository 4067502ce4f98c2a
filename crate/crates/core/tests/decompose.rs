//! DAG validation against brute-force oracles.

use std::collections::BTreeSet;

use foa_core::decompose::{break_cycles, topo_sort};
use proptest::prelude::*;

fn has_path(edges: &BTreeSet<(String, String)>, from: &str, to: &str) -> bool {
    let mut stack = vec![from.to_string()];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n.clone()) {
            stack.extend(edges.iter().filter(|(a, _)| *a == n).map(|(_, b)| b.clone()));
        }
    }
    false
}

fn graph(n: usize, raw: &[(usize, usize)]) -> (BTreeSet<String>, BTreeSet<(String, String)>) {
    let nodes: BTreeSet<String> = (0..n).map(|i| format!("s{i:03}")).collect();
    let edges = raw
        .iter()
        .filter(|(a, b)| a % n != b % n)
        .map(|(a, b)| (format!("s{:03}", a % n), format!("s{:03}", b % n)))
        .collect();
    (nodes, edges)
}

proptest! {
    #[test]
    fn kept_edges_form_a_dag_and_removed_edges_were_on_cycles(
        n in 1usize..9,
        raw in prop::collection::vec((0usize..8, 0usize..8), 0..24),
    ) {
        let (nodes, edges) = graph(n, &raw);
        let (kept, removed) = break_cycles(&nodes, &edges);
        prop_assert!(kept.is_subset(&edges));
        prop_assert_eq!(kept.len() + removed.len(), edges.len());
        let order = topo_sort(&nodes, &kept);
        prop_assert!(order.is_some());
        let order = order.unwrap();
        let pos = |id: &str| order.iter().position(|x| x == id).unwrap();
        for (a, b) in &kept {
            prop_assert!(pos(a) < pos(b));
        }
        for (a, b) in &removed {
            // each removed edge closed a cycle in the input
            prop_assert!(has_path(&edges, b, a));
        }
    }

    #[test]
    fn acyclic_input_is_untouched(n in 1usize..9, raw in prop::collection::vec((0usize..8, 0usize..8), 0..24)) {
        let nodes: BTreeSet<String> = (0..n).map(|i| format!("s{i:03}")).collect();
        let edges: BTreeSet<(String, String)> = raw
            .iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|(a, b)| a < b)
            .map(|(a, b)| (format!("s{a:03}"), format!("s{b:03}")))
            .collect();
        let (kept, removed) = break_cycles(&nodes, &edges);
        prop_assert!(removed.is_empty());
        prop_assert_eq!(kept, edges);
    }
}
