//! Constrained assignment: maximize `sum x_ij * alpha_ij * rep_j` subject to
//! every subtask getting between 1 and `r_i` agents and every agent taking at
//! most `capacity_j` subtasks. Pairs with non-positive utility are ineligible.
//!
//! [`solve_assignment`] is exact: the problem is a b-matching with a lower
//! bound of one per row, solved as a min-cost flow whose arc costs are
//! lexicographic pairs `(uncovered rows, -utility)`. Coverage is maximized
//! first, utility second. [`solve_assignment_greedy`] is the cheaper greedy +
//! 2-swap heuristic and [`exhaustive_assignment`] enumerates every feasible
//! matrix for small instances.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AssignmentProblem {
    pub subtask_ids: Vec<String>,
    pub agent_ids: Vec<String>,
    /// `scores[i][j]`: compatibility of subtask `i` with agent `j`.
    pub scores: Vec<Vec<f64>>,
    pub reputations: Vec<f64>,
    /// Per-subtask team size cap `r_i`.
    pub caps: Vec<usize>,
    /// Per-agent capacity.
    pub capacities: Vec<usize>,
}

impl AssignmentProblem {
    /// Builds a problem with generated ids (`s0.., a0..`).
    pub fn unlabeled(
        scores: Vec<Vec<f64>>,
        reputations: Vec<f64>,
        caps: Vec<usize>,
        capacities: Vec<usize>,
    ) -> Self {
        let k = scores.len();
        let n = reputations.len();
        Self {
            subtask_ids: (0..k).map(|i| format!("s{i}")).collect(),
            agent_ids: (0..n).map(|j| format!("a{j}")).collect(),
            scores,
            reputations,
            caps,
            capacities,
        }
    }

    pub fn k(&self) -> usize {
        self.subtask_ids.len()
    }

    pub fn n(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn utility(&self, i: usize, j: usize) -> f64 {
        self.scores[i][j] * self.reputations[j]
    }

    pub fn eligible(&self, i: usize, j: usize) -> bool {
        self.utility(i, j) > 0.0
    }

    fn validate(&self) -> Result<()> {
        let (k, n) = (self.k(), self.n());
        if k == 0 || n == 0 {
            return Err(Error::invalid("assignment needs at least one subtask and one agent"));
        }
        if self.scores.len() != k
            || self.scores.iter().any(|r| r.len() != n)
            || self.reputations.len() != n
            || self.caps.len() != k
            || self.capacities.len() != n
        {
            return Err(Error::invalid("assignment input dimensions disagree"));
        }
        if self.caps.contains(&0) {
            return Err(Error::invalid("team size caps must be at least 1"));
        }
        let uncovered: Vec<String> = (0..k)
            .filter(|&i| !(0..n).any(|j| self.eligible(i, j) && self.capacities[j] > 0))
            .map(|i| self.subtask_ids[i].clone())
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::Infeasible { uncovered });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    pub subtask_ids: Vec<String>,
    pub agent_ids: Vec<String>,
    pub x: Vec<Vec<bool>>,
}

impl AssignmentMatrix {
    fn empty(p: &AssignmentProblem) -> Self {
        Self {
            subtask_ids: p.subtask_ids.clone(),
            agent_ids: p.agent_ids.clone(),
            x: vec![vec![false; p.n()]; p.k()],
        }
    }

    pub fn objective(&self, p: &AssignmentProblem) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.x.iter().enumerate() {
            for (j, &on) in row.iter().enumerate() {
                if on {
                    total += p.utility(i, j);
                }
            }
        }
        total
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.x[i].iter().filter(|&&b| b).count()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        self.x.iter().filter(|r| r[j]).count()
    }

    /// Agent ids assigned to subtask row `i`, in column order.
    pub fn agents_for(&self, i: usize) -> Vec<String> {
        self.x[i]
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(j, _)| self.agent_ids[j].clone())
            .collect()
    }

    pub fn agents_for_subtask(&self, subtask_id: &str) -> Vec<String> {
        self.subtask_ids
            .iter()
            .position(|s| s == subtask_id)
            .map(|i| self.agents_for(i))
            .unwrap_or_default()
    }

    /// Row sums within `[1, r_i]`, column sums within capacity, and only
    /// eligible pairs set.
    pub fn is_feasible(&self, p: &AssignmentProblem) -> bool {
        (0..p.k()).all(|i| {
            let r = self.row_sum(i);
            r >= 1 && r <= p.caps[i]
        }) && (0..p.n()).all(|j| self.col_sum(j) <= p.capacities[j])
            && (0..p.k()).all(|i| (0..p.n()).all(|j| !self.x[i][j] || p.eligible(i, j)))
    }
}

/// Lexicographic arc cost: uncovered-row count first, then negated utility.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(i64, f64);

impl Cost {
    const ZERO: Cost = Cost(0, 0.0);

    fn add(self, o: Cost) -> Cost {
        Cost(self.0 + o.0, self.1 + o.1)
    }

    fn neg(self) -> Cost {
        Cost(-self.0, -self.1)
    }

    /// Strictly less, with a tolerance on the real component.
    fn lt(self, o: Cost) -> bool {
        match self.0.cmp(&o.0) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.1 < o.1 - EPS,
        }
    }
}

struct Arc {
    to: usize,
    cap: i64,
    cost: Cost,
}

struct FlowGraph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: Cost) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.adj[from].push(id);
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: cost.neg(),
        });
        self.adj[to].push(id + 1);
        id
    }

    /// Bellman-Ford shortest path from `s` to `t` in the residual graph.
    fn shortest_path(&self, s: usize, t: usize) -> Option<(Cost, Vec<usize>)> {
        let n = self.adj.len();
        let mut dist: Vec<Option<Cost>> = vec![None; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        dist[s] = Some(Cost::ZERO);
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                let Some(du) = dist[u] else { continue };
                for &a in &self.adj[u] {
                    let arc = &self.arcs[a];
                    if arc.cap <= 0 {
                        continue;
                    }
                    let nd = du.add(arc.cost);
                    if dist[arc.to].is_none_or(|dv| nd.lt(dv)) {
                        dist[arc.to] = Some(nd);
                        via[arc.to] = Some(a);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let cost = dist[t]?;
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            let a = via[v]?;
            path.push(a);
            v = self.arcs[a ^ 1].to;
            if path.len() > n {
                return None;
            }
        }
        Some((cost, path))
    }
}

/// Exact optimum via lexicographic min-cost flow.
pub fn solve_assignment(p: &AssignmentProblem) -> Result<AssignmentMatrix> {
    p.validate()?;
    let (k, n) = (p.k(), p.n());
    let source = 0;
    let row = |i: usize| 1 + i;
    let col = |j: usize| 1 + k + j;
    let sink = 1 + k + n;
    let mut g = FlowGraph::new(sink + 1);

    let mut cover_arcs = Vec::with_capacity(k);
    for i in 0..k {
        cover_arcs.push(g.add(source, row(i), 1, Cost(-1, 0.0)));
        if p.caps[i] > 1 {
            g.add(source, row(i), p.caps[i] as i64 - 1, Cost::ZERO);
        }
    }
    let mut pair_arcs = Vec::new();
    for i in 0..k {
        for j in 0..n {
            if p.eligible(i, j) {
                let a = g.add(row(i), col(j), 1, Cost(0, -p.utility(i, j)));
                pair_arcs.push((i, j, a));
            }
        }
    }
    for j in 0..n {
        if p.capacities[j] > 0 {
            g.add(col(j), sink, p.capacities[j] as i64, Cost::ZERO);
        }
    }

    while let Some((cost, path)) = g.shortest_path(source, sink) {
        if !cost.lt(Cost::ZERO) {
            break;
        }
        for a in path {
            g.arcs[a].cap -= 1;
            g.arcs[a ^ 1].cap += 1;
        }
    }

    let uncovered: Vec<String> = (0..k)
        .filter(|&i| g.arcs[cover_arcs[i]].cap > 0)
        .map(|i| p.subtask_ids[i].clone())
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::Infeasible { uncovered });
    }
    let mut m = AssignmentMatrix::empty(p);
    for (i, j, a) in pair_arcs {
        if g.arcs[a].cap == 0 {
            m.x[i][j] = true;
        }
    }
    Ok(m)
}

/// Greedy by descending utility (ties: subtask id, then agent id) with
/// coverage repair, followed by move/2-swap local search until no move
/// improves the objective.
pub fn solve_assignment_greedy(p: &AssignmentProblem) -> Result<AssignmentMatrix> {
    p.validate()?;
    let (k, n) = (p.k(), p.n());
    let mut pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| p.eligible(i, j))
        .collect();
    pairs.sort_by(|&(i1, j1), &(i2, j2)| {
        p.utility(i2, j2)
            .total_cmp(&p.utility(i1, j1))
            .then_with(|| p.subtask_ids[i1].cmp(&p.subtask_ids[i2]))
            .then_with(|| p.agent_ids[j1].cmp(&p.agent_ids[j2]))
    });

    let mut m = AssignmentMatrix::empty(p);
    let mut rows = vec![0usize; k];
    let mut cols = vec![0usize; n];

    // coverage first: one agent per subtask
    for &(i, j) in &pairs {
        if rows[i] == 0 && cols[j] < p.capacities[j] {
            m.x[i][j] = true;
            rows[i] += 1;
            cols[j] += 1;
        }
    }
    // repair: free a slot on a full agent by moving it off a row that has spare members
    for i in 0..k {
        if rows[i] > 0 {
            continue;
        }
        'repair: for &(ri, j) in &pairs {
            if ri != i {
                continue;
            }
            for other in 0..k {
                if other != i && m.x[other][j] && rows[other] > 1 {
                    m.x[other][j] = false;
                    rows[other] -= 1;
                    m.x[i][j] = true;
                    rows[i] += 1;
                    break 'repair;
                }
            }
        }
    }
    let uncovered: Vec<String> = (0..k)
        .filter(|&i| rows[i] == 0)
        .map(|i| p.subtask_ids[i].clone())
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::Infeasible { uncovered });
    }
    // fill remaining team slots
    for &(i, j) in &pairs {
        if !m.x[i][j] && rows[i] < p.caps[i] && cols[j] < p.capacities[j] {
            m.x[i][j] = true;
            rows[i] += 1;
            cols[j] += 1;
        }
    }

    loop {
        let mut improved = false;
        // single move: (i, j) -> (i, j2) where j2 has spare capacity
        for i in 0..k {
            for j in 0..n {
                if !m.x[i][j] {
                    continue;
                }
                for j2 in 0..n {
                    if j2 != j
                        && !m.x[i][j2]
                        && p.eligible(i, j2)
                        && cols[j2] < p.capacities[j2]
                        && p.utility(i, j2) > p.utility(i, j) + EPS
                    {
                        m.x[i][j] = false;
                        m.x[i][j2] = true;
                        cols[j] -= 1;
                        cols[j2] += 1;
                        improved = true;
                        break;
                    }
                }
            }
        }
        // 2-swap: (i1, j1), (i2, j2) -> (i1, j2), (i2, j1)
        for i1 in 0..k {
            for i2 in i1 + 1..k {
                for j1 in 0..n {
                    for j2 in 0..n {
                        if j1 == j2 || !m.x[i1][j1] || !m.x[i2][j2] || m.x[i1][j2] || m.x[i2][j1] {
                            continue;
                        }
                        if !p.eligible(i1, j2) || !p.eligible(i2, j1) {
                            continue;
                        }
                        let before = p.utility(i1, j1) + p.utility(i2, j2);
                        let after = p.utility(i1, j2) + p.utility(i2, j1);
                        if after > before + EPS {
                            m.x[i1][j1] = false;
                            m.x[i2][j2] = false;
                            m.x[i1][j2] = true;
                            m.x[i2][j1] = true;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(m)
}

/// Enumerates every feasible matrix row by row and returns the best
/// objective. Only meant for `k * n <= 30`.
pub fn exhaustive_assignment(p: &AssignmentProblem) -> Result<(f64, AssignmentMatrix)> {
    p.validate()?;
    if p.k() * p.n() > 30 {
        return Err(Error::invalid("exhaustive assignment limited to k * n <= 30"));
    }
    let row_options: Vec<Vec<u32>> = (0..p.k())
        .map(|i| {
            (1u32..1 << p.n())
                .filter(|mask| {
                    let size = mask.count_ones() as usize;
                    size <= p.caps[i] && (0..p.n()).all(|j| mask & (1 << j) == 0 || p.eligible(i, j))
                })
                .collect()
        })
        .collect();

    struct Search<'a> {
        p: &'a AssignmentProblem,
        options: &'a [Vec<u32>],
        load: Vec<usize>,
        chosen: Vec<u32>,
        best: Option<(f64, Vec<u32>)>,
    }

    impl Search<'_> {
        fn go(&mut self, i: usize, value: f64) {
            if i == self.p.k() {
                if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                    self.best = Some((value, self.chosen.clone()));
                }
                return;
            }
            for &mask in &self.options[i] {
                let fits = (0..self.p.n())
                    .all(|j| mask & (1 << j) == 0 || self.load[j] < self.p.capacities[j]);
                if !fits {
                    continue;
                }
                let mut gain = 0.0;
                for j in 0..self.p.n() {
                    if mask & (1 << j) != 0 {
                        self.load[j] += 1;
                        gain += self.p.utility(i, j);
                    }
                }
                self.chosen.push(mask);
                self.go(i + 1, value + gain);
                self.chosen.pop();
                for j in 0..self.p.n() {
                    if mask & (1 << j) != 0 {
                        self.load[j] -= 1;
                    }
                }
            }
        }
    }

    let mut search = Search {
        p,
        options: &row_options,
        load: vec![0; p.n()],
        chosen: Vec::new(),
        best: None,
    };
    search.go(0, 0.0);
    let (value, masks) = search.best.ok_or_else(|| Error::Infeasible {
        uncovered: p.subtask_ids.clone(),
    })?;
    let mut m = AssignmentMatrix::empty(p);
    for (i, mask) in masks.iter().enumerate() {
        for j in 0..p.n() {
            m.x[i][j] = mask & (1 << j) != 0;
        }
    }
    Ok((value, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_cell() {
        let p = AssignmentProblem::unlabeled(vec![vec![0.4]], vec![1.0], vec![1], vec![1]);
        assert_eq!(solve_assignment(&p).unwrap().x, vec![vec![true]]);
    }

    #[test]
    fn dominant_diagonal() {
        let p = AssignmentProblem::unlabeled(
            vec![vec![1.0, 0.1], vec![0.1, 1.0]],
            vec![1.0, 1.0],
            vec![1, 1],
            vec![1, 1],
        );
        let want = vec![vec![true, false], vec![false, true]];
        assert_eq!(solve_assignment(&p).unwrap().x, want);
        assert_eq!(solve_assignment_greedy(&p).unwrap().x, want);
    }

    #[test]
    fn coverage_beats_utility() {
        // agent 0 is best for both but can only take one subtask
        let p = AssignmentProblem::unlabeled(
            vec![vec![0.9, 0.0], vec![0.8, 0.1]],
            vec![1.0, 1.0],
            vec![1, 1],
            vec![1, 1],
        );
        let m = solve_assignment(&p).unwrap();
        assert_eq!(m.x, vec![vec![true, false], vec![false, true]]);
    }

    #[test]
    fn infeasible_lists_uncovered() {
        let p = AssignmentProblem::unlabeled(
            vec![vec![0.5, 0.5], vec![0.0, -0.2]],
            vec![1.0, 1.0],
            vec![1, 1],
            vec![1, 1],
        );
        match solve_assignment(&p) {
            Err(Error::Infeasible { uncovered }) => assert_eq!(uncovered, ["s1"]),
            other => panic!("expected infeasible, got {other:?}"),
        }
        // capacity exhaustion is caught by the flow as well
        let p = AssignmentProblem::unlabeled(
            vec![vec![0.5], vec![0.6]],
            vec![1.0],
            vec![1, 1],
            vec![1],
        );
        assert!(matches!(solve_assignment(&p), Err(Error::Infeasible { .. })));
    }

    fn instance() -> impl Strategy<Value = AssignmentProblem> {
        (1usize..=5, 1usize..=6).prop_flat_map(|(k, n)| {
            (
                proptest::collection::vec(proptest::collection::vec(-0.2f64..1.0, n), k),
                proptest::collection::vec(0.05f64..1.0, n),
                proptest::collection::vec(1usize..=2, k),
                proptest::collection::vec(1usize..=3, n),
            )
                .prop_map(|(s, r, c, cap)| AssignmentProblem::unlabeled(s, r, c, cap))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn exact_matches_exhaustive(p in instance()) {
            match exhaustive_assignment(&p) {
                Ok((best, _)) => {
                    let m = solve_assignment(&p).unwrap();
                    prop_assert!(m.is_feasible(&p));
                    prop_assert!((m.objective(&p) - best).abs() <= 1e-9);
                    let g = solve_assignment_greedy(&p);
                    if let Ok(g) = g {
                        prop_assert!(g.is_feasible(&p));
                        prop_assert!(g.objective(&p) <= best + 1e-9);
                    }
                }
                Err(_) => prop_assert!(solve_assignment(&p).is_err()),
            }
        }

        #[test]
        fn reputation_scaling_keeps_argmax(p in instance(), pow in -3i32..=3) {
            let Ok(base) = solve_assignment(&p) else { return Ok(()); };
            let mut scaled = p.clone();
            let c = 2f64.powi(pow);
            scaled.reputations.iter_mut().for_each(|r| *r *= c);
            let m = solve_assignment(&scaled).unwrap();
            prop_assert_eq!(&m.x, &base.x);
            prop_assert!((m.objective(&p) - base.objective(&p)).abs() <= 1e-9);
        }
    }
}
