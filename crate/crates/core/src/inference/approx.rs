use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Assignment, InferenceError, Objective};

const REPAIR_STEPS_PER_VAR: usize = 50;

struct Local<'a> {
    obj: &'a Objective,
    var_clauses: Vec<Vec<usize>>,
    var_cons: Vec<Vec<usize>>,
}

impl<'a> Local<'a> {
    fn new(obj: &'a Objective) -> Self {
        let mut var_clauses = vec![Vec::new(); obj.num_vars];
        for (i, c) in obj.clauses.iter().enumerate() {
            for &v in c.pos.iter().chain(&c.neg) {
                if var_clauses[v].last() != Some(&i) {
                    var_clauses[v].push(i);
                }
            }
        }
        let mut var_cons = vec![Vec::new(); obj.num_vars];
        for (i, c) in obj.constraints.iter().enumerate() {
            for &(v, _) in &c.coeffs {
                if var_cons[v].last() != Some(&i) {
                    var_cons[v].push(i);
                }
            }
        }
        Local { obj, var_clauses, var_cons }
    }

    fn total_violation(&self, values: &[bool]) -> i64 {
        self.obj.constraints.iter().map(|c| c.violation(values)).sum()
    }

    fn local_violation(&self, values: &[bool], vars: &[usize]) -> i64 {
        let mut ids: Vec<usize> = vars.iter().flat_map(|&v| self.var_cons[v].iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.iter().map(|&i| self.obj.constraints[i].violation(values)).sum()
    }

    fn local_score(&self, values: &[bool], vars: &[usize]) -> f64 {
        let mut ids: Vec<usize> = vars.iter().flat_map(|&v| self.var_clauses[v].iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.iter().filter(|&&i| self.obj.clauses[i].is_satisfied(values)).map(|&i| self.obj.clauses[i].weight).sum()
    }

    /// Greedy min-violation flips with random breakouts. Returns whether a
    /// feasible point was reached.
    fn repair(&self, values: &mut [bool], rng: &mut ChaCha8Rng) -> bool {
        let n = values.len();
        for _ in 0..REPAIR_STEPS_PER_VAR * n.max(1) {
            if self.total_violation(values) == 0 {
                return true;
            }
            let mut best: Option<(i64, usize)> = None;
            for v in 0..n {
                let before = self.local_violation(values, &[v]);
                values[v] = !values[v];
                let after = self.local_violation(values, &[v]);
                values[v] = !values[v];
                let delta = after - before;
                if best.is_none_or(|(d, _)| delta < d) {
                    best = Some((delta, v));
                }
            }
            match best {
                Some((d, v)) if d < 0 => values[v] = !values[v],
                _ => {
                    // Stuck: flip a random variable from a violated row.
                    let violated: Vec<usize> = self
                        .obj
                        .constraints
                        .iter()
                        .filter(|c| !c.is_satisfied(values))
                        .flat_map(|c| c.coeffs.iter().map(|(v, _)| *v))
                        .collect();
                    if violated.is_empty() {
                        return self.total_violation(values) == 0;
                    }
                    let v = violated[rng.random_range(0..violated.len())];
                    values[v] = !values[v];
                }
            }
        }
        self.total_violation(values) == 0
    }

    /// Best-improvement ascent over feasible single flips and pairwise
    /// swaps until neither improves.
    fn climb(&self, values: &mut [bool]) {
        let n = values.len();
        loop {
            let mut best: Option<(f64, usize, Option<usize>)> = None;
            for v in 0..n {
                let before = self.local_score(values, &[v]);
                values[v] = !values[v];
                if self.local_violation(values, &[v]) == 0 {
                    let gain = self.local_score(values, &[v]) - before;
                    if gain > 1e-12 && best.is_none_or(|(g, ..)| gain > g) {
                        best = Some((gain, v, None));
                    }
                }
                values[v] = !values[v];
            }
            if best.is_none() {
                for v in 0..n {
                    for u in v + 1..n {
                        if values[u] == values[v] || !self.shares_constraint(u, v) {
                            continue;
                        }
                        let pair = [v, u];
                        let before = self.local_score(values, &pair);
                        values[v] = !values[v];
                        values[u] = !values[u];
                        if self.local_violation(values, &pair) == 0 {
                            let gain = self.local_score(values, &pair) - before;
                            if gain > 1e-12 && best.is_none_or(|(g, ..)| gain > g) {
                                best = Some((gain, v, Some(u)));
                            }
                        }
                        values[v] = !values[v];
                        values[u] = !values[u];
                    }
                }
            }
            match best {
                Some((_, v, u)) => {
                    values[v] = !values[v];
                    if let Some(u) = u {
                        values[u] = !values[u];
                    }
                }
                None => return,
            }
        }
    }

    fn shares_constraint(&self, u: usize, v: usize) -> bool {
        self.var_cons[u].iter().any(|c| self.var_cons[v].contains(c))
    }
}

/// Seeded multi-start local search. Restart 0 begins from all zeros, the
/// rest from uniform random points.
pub(super) fn solve(obj: &Objective, restarts: usize, seed: u64) -> Result<Assignment, InferenceError> {
    let local = Local::new(obj);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Assignment> = None;
    for r in 0..restarts.max(1) {
        let mut values: Vec<bool> =
            if r == 0 { vec![false; obj.num_vars] } else { (0..obj.num_vars).map(|_| rng.random()).collect() };
        if !local.repair(&mut values, &mut rng) {
            continue;
        }
        local.climb(&mut values);
        let score = obj.evaluate(&values);
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && values < b.values),
        };
        if better {
            best = Some(Assignment { values, score });
        }
    }
    best.ok_or(InferenceError::Infeasible)
}
