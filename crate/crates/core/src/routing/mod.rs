//! Compatibility scoring and subtask-to-agent assignment.
//!
//! The score for a (subtask, agent) pair is the product
//! `cos(c_s, c_a) * gate * penalty * cos(e_s, e_a)`, where the gate is 1 iff the
//! subtask's required policy bits are a subset of the agent's, and the
//! penalty is `exp(-lambda * ||max(0, r_s - r_a)||)` so only resource
//! shortfalls cost anything.

mod assignment;

use serde::{Deserialize, Serialize};

pub use assignment::{
    exhaustive_assignment, solve_assignment, solve_assignment_greedy, AssignmentMatrix,
    AssignmentProblem,
};

use crate::capability::{BitSet, Vcv};
use crate::error::{Error, Result};
use crate::vector::{cosine, is_unit};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_CAPACITY: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRequirement {
    pub subtask_id: String,
    pub description: String,
    pub c_s: Vec<f64>,
    pub p_s: BitSet,
    pub r_s: Vec<f64>,
    pub e_s: Vec<f64>,
    /// Maximum team size for this subtask.
    pub r_i_cap: usize,
}

impl SubtaskRequirement {
    pub fn validate(&self) -> Result<()> {
        if !is_unit(&self.c_s) || !is_unit(&self.e_s) {
            return Err(Error::invalid(format!(
                "subtask {} embeddings must be unit norm",
                self.subtask_id
            )));
        }
        if self.r_i_cap == 0 {
            return Err(Error::invalid("team size cap must be at least 1"));
        }
        crate::capability::validate_resources(&self.r_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub vcv: Vcv,
    reputation: f64,
    pub capacity: usize,
}

impl AgentProfile {
    pub fn new(vcv: Vcv, reputation: f64, capacity: usize) -> Result<Self> {
        check_reputation(reputation)?;
        Ok(Self {
            vcv,
            reputation,
            capacity,
        })
    }

    pub fn agent_id(&self) -> &str {
        self.vcv.agent_id()
    }

    pub fn reputation(&self) -> f64 {
        self.reputation
    }

    pub fn set_reputation(&mut self, reputation: f64) -> Result<()> {
        check_reputation(reputation)?;
        self.reputation = reputation;
        Ok(())
    }
}

fn check_reputation(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!("reputation {r} outside [0, 1]")));
    }
    Ok(())
}

/// `exp(-lambda * ||max(0, r_s - r_a)||_2)`; 1 when every demand is met.
pub fn resource_penalty(r_s: &[f64], r_a: &[f64], lambda: f64) -> Result<f64> {
    if r_s.len() != r_a.len() {
        return Err(Error::invalid(format!(
            "resource dimension mismatch: {} vs {}",
            r_s.len(),
            r_a.len()
        )));
    }
    let gap = r_s
        .iter()
        .zip(r_a)
        .map(|(s, a)| (s - a).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((-lambda * gap).exp())
}

pub fn spec_alignment(e_s: &[f64], e_a: &[f64]) -> Result<f64> {
    cosine(e_s, e_a)
}

/// True iff the required policy bits are all held by the agent.
pub fn policy_gate(p_s: &BitSet, p_a: &BitSet) -> bool {
    p_s.is_subset_of(p_a)
}

pub fn compatibility_score(s: &SubtaskRequirement, a: &AgentProfile, lambda: f64) -> Result<f64> {
    if !policy_gate(&s.p_s, a.vcv.policies()) {
        return Ok(0.0);
    }
    let sim = cosine(&s.c_s, a.vcv.capability())?;
    let f = resource_penalty(&s.r_s, a.vcv.resources(), lambda)?;
    let g = spec_alignment(&s.e_s, a.vcv.spec_embedding())?;
    Ok(sim * f * g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    /// `scores[i][j]` for subtask `i`, agent `j`.
    pub scores: Vec<Vec<f64>>,
    /// Pairs zeroed by the policy gate, as (subtask_id, agent_id).
    pub gate_failures: Vec<(String, String)>,
}

pub fn score_matrix(
    subtasks: &[SubtaskRequirement],
    agents: &[AgentProfile],
    lambda: f64,
) -> Result<ScoreMatrix> {
    let mut gate_failures = Vec::new();
    let mut scores = Vec::with_capacity(subtasks.len());
    for s in subtasks {
        let mut row = Vec::with_capacity(agents.len());
        for a in agents {
            if !policy_gate(&s.p_s, a.vcv.policies()) {
                gate_failures.push((s.subtask_id.clone(), a.agent_id().to_string()));
            }
            row.push(compatibility_score(s, a, lambda)?);
        }
        scores.push(row);
    }
    Ok(ScoreMatrix {
        scores,
        gate_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::{embed_text, BloomFilter};

    fn axis(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    fn agent(c: Vec<f64>, e: Vec<f64>, r: Vec<f64>, bits: &[usize]) -> AgentProfile {
        let vcv = Vcv::new(
            "a",
            c,
            BloomFilter::default(),
            r,
            BitSet::from_indices(64, bits.iter().copied()).unwrap(),
            e,
            0,
        )
        .unwrap();
        AgentProfile::new(vcv, 1.0, 2).unwrap()
    }

    fn subtask(c: Vec<f64>, e: Vec<f64>, r: Vec<f64>, bits: &[usize]) -> SubtaskRequirement {
        SubtaskRequirement {
            subtask_id: "s".into(),
            description: "s".into(),
            c_s: c,
            p_s: BitSet::from_indices(64, bits.iter().copied()).unwrap(),
            r_s: r,
            e_s: e,
            r_i_cap: 1,
        }
    }

    #[test]
    fn penalty_cases() {
        assert_eq!(resource_penalty(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), 1.0);
        assert_eq!(resource_penalty(&[1.0, 2.0], &[5.0, 9.0], 1.0).unwrap(), 1.0);
        let p = resource_penalty(&[2.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert!((p - 0.367_879_441_171_442_33).abs() < 1e-15);
        assert!(resource_penalty(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn alignment_cases() {
        assert!((spec_alignment(&axis(3, 0), &axis(3, 0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(spec_alignment(&axis(3, 0), &axis(3, 1)).unwrap().abs() < 1e-12);
        let neg: Vec<f64> = axis(3, 0).iter().map(|x| -x).collect();
        assert!((spec_alignment(&axis(3, 0), &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(spec_alignment(&[0.0; 3], &axis(3, 0)).is_err());
    }

    #[test]
    fn gate_cases() {
        let empty = BitSet::new(64).unwrap();
        let a = BitSet::from_indices(64, [1, 2]).unwrap();
        assert!(policy_gate(&empty, &a));
        assert!(policy_gate(&a, &a));
        assert!(!policy_gate(&BitSet::from_indices(64, [3]).unwrap(), &a));
    }

    #[test]
    fn score_cases() {
        let c = embed_text("cardiology", 768).unwrap();
        let e = embed_text("be careful", 768).unwrap();
        let perfect = compatibility_score(
            &subtask(c.clone(), e.clone(), vec![1.0; 4], &[2]),
            &agent(c.clone(), e.clone(), vec![2.0; 4], &[2, 5]),
            1.0,
        )
        .unwrap();
        assert!((perfect - 1.0).abs() < 1e-9);

        let gated = compatibility_score(
            &subtask(c.clone(), e.clone(), vec![1.0; 4], &[7]),
            &agent(c.clone(), e, vec![2.0; 4], &[2]),
            1.0,
        )
        .unwrap();
        assert_eq!(gated, 0.0);
    }

    #[test]
    fn product_of_stated_factors() {
        // c-cosine 0.8, penalty e^-1, spec cosine 0.5
        let c_s = vec![1.0, 0.0];
        let c_a = vec![0.8, 0.6];
        let e_s = vec![1.0, 0.0];
        let e_a = vec![0.5, 0.75f64.sqrt()];
        let s = subtask(c_s, e_s, vec![2.0, 0.0, 0.0, 0.0], &[]);
        let a = agent(c_a, e_a, vec![1.0, 0.0, 0.0, 0.0], &[]);
        let alpha = compatibility_score(&s, &a, 1.0).unwrap();
        assert!((alpha - 0.147_151_776_468_576_94).abs() < 1e-12, "{alpha}");
    }

    #[test]
    fn reputation_bounds() {
        let a = agent(axis(2, 0), axis(2, 0), vec![0.0; 4], &[]);
        assert!(AgentProfile::new(a.vcv.clone(), 1.5, 1).is_err());
        let mut a = a;
        assert!(a.set_reputation(-0.1).is_err());
        a.set_reputation(0.3).unwrap();
        assert_eq!(a.reputation(), 0.3);
    }
}
