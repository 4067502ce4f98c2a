//! Combining predecessor solutions with a node's own answer.
//!
//! Lines of the form `key: value` conflict with other lines sharing the same
//! key; any other line is its own key.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::decompose::TaskDag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    #[default]
    Concat,
    Rebase,
    Merge,
}

fn line_key(line: &str) -> &str {
    match line.split_once(':') {
        Some((k, _)) if !k.trim().is_empty() => k.trim(),
        _ => line,
    }
}

/// Combines `preds` (ascending by id) with the node's answer. Without
/// predecessors the answer is returned unchanged in every mode.
pub fn synth(preds: &[(String, String)], node: (&str, &str), mode: SynthMode) -> String {
    let (node_id, answer) = node;
    if preds.is_empty() {
        return answer.to_string();
    }
    match mode {
        SynthMode::Concat => {
            let mut out = String::new();
            for (id, text) in preds.iter().map(|(i, t)| (i.as_str(), t.as_str())).chain([(node_id, answer)]) {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{id}]\n{text}"));
            }
            out
        }
        SynthMode::Rebase => {
            let own: BTreeSet<&str> = answer.lines().map(line_key).collect();
            let mut emitted = BTreeSet::new();
            let mut out = Vec::new();
            for (_, text) in preds {
                for line in text.lines() {
                    if !own.contains(line_key(line)) && emitted.insert(line) {
                        out.push(line);
                    }
                }
            }
            out.extend(answer.lines());
            out.join("\n")
        }
        SynthMode::Merge => {
            let mut seen_lines = BTreeSet::new();
            let mut key_source: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
            let mut out = Vec::new();
            for (id, text) in preds.iter().map(|(i, t)| (i.as_str(), t.as_str())).chain([(node_id, answer)]) {
                for line in text.lines() {
                    if !seen_lines.insert(line) {
                        continue;
                    }
                    let key = line_key(line);
                    match key_source.get(key) {
                        Some(&(first_id, first_line)) if first_line != line => {
                            out.push(format!("{line} [conflicts with {first_id}]"));
                        }
                        _ => {
                            key_source.insert(key, (id, line));
                            out.push(line.to_string());
                        }
                    }
                }
            }
            out.join("\n")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub final_answer: String,
    /// Per-node solutions.
    pub solutions: BTreeMap<String, String>,
    /// One per node visited, one per edge consumed, one per sink merged.
    pub ops: u64,
}

/// Solves every node in topological order from its predecessors' solutions
/// and its own answer, then merges the sinks in ascending id order.
pub fn synthesize_dag(dag: &TaskDag, answers: &BTreeMap<String, String>, mode: SynthMode) -> Result<SynthOutput> {
    let order = dag
        .topo_order()
        .ok_or_else(|| Error::invalid("synthesis needs an acyclic graph"))?;
    let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut has_out: BTreeSet<&str> = BTreeSet::new();
    for (a, b) in &dag.edges {
        preds.entry(b.as_str()).or_default().push(a.as_str());
        has_out.insert(a.as_str());
    }
    let mut ops = 0u64;
    let mut solutions: BTreeMap<String, String> = BTreeMap::new();
    for id in &order {
        ops += 1;
        let answer = answers
            .get(id)
            .ok_or_else(|| Error::invalid(format!("no answer for node {id}")))?;
        let inputs: Vec<(String, String)> = preds
            .get(id.as_str())
            .into_iter()
            .flatten()
            .map(|p| {
                ops += 1;
                (p.to_string(), solutions[*p].clone())
            })
            .collect();
        let sol = synth(&inputs, (id, answer), mode);
        solutions.insert(id.clone(), sol);
    }
    let sinks: Vec<&String> = order.iter().filter(|id| !has_out.contains(id.as_str())).collect();
    let mut sink_inputs: Vec<(String, String)> = sinks
        .iter()
        .map(|id| {
            ops += 1;
            ((*id).clone(), solutions[*id].clone())
        })
        .collect();
    sink_inputs.sort();
    let final_answer = match sink_inputs.pop() {
        None => String::new(),
        Some((last_id, last)) => synth(&sink_inputs, (&last_id, &last), mode),
    };
    Ok(SynthOutput {
        final_answer,
        solutions,
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn no_predecessors_is_identity() {
        for mode in [SynthMode::Concat, SynthMode::Rebase, SynthMode::Merge] {
            assert_eq!(synth(&[], ("s", "answer: x\nmore"), mode), "answer: x\nmore");
        }
    }

    #[test]
    fn concat_labels_in_order() {
        let out = synth(&preds(&[("s0", "A"), ("s1", "B")]), ("s2", "C"), SynthMode::Concat);
        assert_eq!(out, "[s0]\nA\n[s1]\nB\n[s2]\nC");
    }

    #[test]
    fn rebase_node_wins_conflicts() {
        let out = synth(
            &preds(&[("s0", "answer: old\nshared fact")]),
            ("s1", "answer: new"),
            SynthMode::Rebase,
        );
        assert!(out.contains("answer: new"));
        assert!(!out.contains("answer: old"));
        assert!(out.contains("shared fact"));
    }

    #[test]
    fn merge_annotates_conflicts() {
        let out = synth(
            &preds(&[("s0", "answer: old\nsame")]),
            ("s1", "answer: new\nsame"),
            SynthMode::Merge,
        );
        assert_eq!(out, "answer: old\nsame\nanswer: new [conflicts with s0]");
    }
}
