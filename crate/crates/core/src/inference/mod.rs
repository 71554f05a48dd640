//! MAP inference over scored factor graphs.
//!
//! A [`FactorGraph`] plus one [`ScoreTable`] per potential becomes an
//! [`Objective`]: weighted clauses (one per potential and head label) and
//! integer constraints. The exact solver is a branch and bound with bounds
//! propagation; the approximate solver is seeded multi-start local search.

mod approx;
mod exact;
mod lp;
mod objective;


use thiserror::Error;

use crate::grounder::FactorGraph;

pub use exact::free_after_propagation;
pub use lp::{dump_lp, feasible_z, linearize};
pub use objective::{IntConstraint, Objective, WeightedClause};

/// Raw scores of one ground rule, one per head label.
pub type ScoreTable = Vec<f64>;

pub const DEFAULT_EXACT_CAP: usize = 40;
pub const DEFAULT_RESTARTS: usize = 8;
const ORACLE_MAX_VARS: usize = 26;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("hard constraints are unsatisfiable")]
    Infeasible,
    #[error("{free} free variables after propagation exceed the exact-solver cap of {cap}")]
    TooLarge { free: usize, cap: usize },
    #[error("potential {potential}: expected {expected} scores, got {got}")]
    ScoreShape { potential: usize, expected: usize, got: usize },
    #[error("potential {potential} has a non-finite score")]
    NonFinite { potential: usize },
    #[error("pool size must be at least 1")]
    EmptyPool,
    #[error("gold assignment has {got} values for {expected} variables")]
    GoldShape { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<bool>,
    pub score: f64,
}

pub type SolutionPool = Vec<Assignment>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Exact { cap: usize },
    Approx { restarts: usize, seed: u64 },
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Exact { cap: DEFAULT_EXACT_CAP }
    }
}

impl Objective {
    pub fn solve_exact(&self, cap: usize) -> Result<Assignment, InferenceError> {
        exact::solve(self, &[], cap)
    }

    pub fn solve_approx(&self, restarts: usize, seed: u64) -> Result<Assignment, InferenceError> {
        approx::solve(self, restarts, seed)
    }

    pub fn solve(&self, solver: Solver) -> Result<Assignment, InferenceError> {
        match solver {
            Solver::Exact { cap } => self.solve_exact(cap),
            Solver::Approx { restarts, seed } => self.solve_approx(restarts, seed),
        }
    }

    /// Top-`k` feasible assignments by repeated exact solves with no-good
    /// cuts. Stops early, without error, once the feasible set runs out.
    pub fn k_best(&self, k: usize, cap: usize) -> Result<SolutionPool, InferenceError> {
        if k == 0 {
            return Err(InferenceError::EmptyPool);
        }
        let mut cuts = Vec::new();
        let mut pool = Vec::new();
        while pool.len() < k {
            match exact::solve(self, &cuts, cap) {
                Ok(a) => {
                    cuts.push(IntConstraint::no_good(&a.values));
                    pool.push(a);
                }
                Err(InferenceError::Infeasible) if !pool.is_empty() => break,
                Err(e) => return Err(e),
            }
        }
        Ok(pool)
    }
}

pub fn solve_exact(graph: &FactorGraph, scores: &[ScoreTable]) -> Result<Assignment, InferenceError> {
    Objective::new(graph, scores)?.solve_exact(DEFAULT_EXACT_CAP)
}

pub fn solve_approx(
    graph: &FactorGraph,
    scores: &[ScoreTable],
    restarts: usize,
    seed: u64,
) -> Result<Assignment, InferenceError> {
    Objective::new(graph, scores)?.solve_approx(restarts, seed)
}

/// MAP under score plus Hamming distance to `gold`. The returned score
/// includes the distance term.
pub fn solve_loss_augmented(
    graph: &FactorGraph,
    scores: &[ScoreTable],
    gold: &[bool],
    solver: Solver,
) -> Result<Assignment, InferenceError> {
    if gold.len() != graph.num_vars() {
        return Err(InferenceError::GoldShape { expected: graph.num_vars(), got: gold.len() });
    }
    Objective::new(graph, scores)?.with_hamming(gold).solve(solver)
}

pub fn k_best(graph: &FactorGraph, scores: &[ScoreTable], k: usize) -> Result<SolutionPool, InferenceError> {
    Objective::new(graph, scores)?.k_best(k, DEFAULT_EXACT_CAP)
}

/// Every feasible assignment in lexicographic order (variable 0 most
/// significant, false before true). For tests and small fixtures only.
pub fn enumerate_feasible(obj: &Objective) -> Vec<Assignment> {
    let n = obj.num_vars;
    assert!(n <= ORACLE_MAX_VARS, "enumeration over {} variables", n);
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << n) {
        let values: Vec<bool> = (0..n).map(|i| mask >> (n - 1 - i) & 1 == 1).collect();
        if obj.is_feasible(&values) {
            let score = obj.evaluate(&values);
            out.push(Assignment { values, score });
        }
    }
    out
}

/// Exhaustive argmax with the same tie-break as the exact solver.
pub fn brute_force(obj: &Objective) -> Option<Assignment> {
    let mut best: Option<Assignment> = None;
    for a in enumerate_feasible(obj) {
        if best.as_ref().is_none_or(|b| a.score > b.score) {
            best = Some(a);
        }
    }
    best
}
