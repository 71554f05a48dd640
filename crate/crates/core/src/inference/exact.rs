use super::{Assignment, InferenceError, IntConstraint, Objective};
use crate::dsl::Comparator;

const UNSET: i8 = -1;
const PRUNE_SLACK: f64 = 1e-9;

/// Depth-first branch and bound. Variables are branched in index order,
/// 0 before 1, and an incumbent is only replaced by a strictly better
/// leaf; the first optimum found is therefore the lexicographically
/// smallest one.
struct Search<'a> {
    obj: &'a Objective,
    extra: &'a [IntConstraint],
    values: Vec<i8>,
    trail: Vec<usize>,
    best: Option<Assignment>,
    nodes: u64,
}

impl<'a> Search<'a> {
    fn constraints(&self) -> impl Iterator<Item = &'a IntConstraint> {
        self.obj.constraints.iter().chain(self.extra.iter())
    }

    fn set(&mut self, v: usize, b: bool) {
        self.values[v] = b as i8;
        self.trail.push(v);
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().unwrap();
            self.values[v] = UNSET;
        }
    }

    /// Bounds propagation to a fixpoint. Returns false on conflict.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            for c in self.constraints() {
                let mut fixed = 0i64;
                let (mut lo, mut hi) = (0i64, 0i64);
                for &(v, a) in &c.coeffs {
                    match self.values[v] {
                        UNSET => {
                            if a < 0 {
                                lo += a;
                            } else {
                                hi += a;
                            }
                        }
                        1 => fixed += a,
                        _ => {}
                    }
                }
                let (min, max) = (fixed + lo, fixed + hi);
                let need_le = matches!(c.comparator, Comparator::Le | Comparator::Eq);
                let need_ge = matches!(c.comparator, Comparator::Ge | Comparator::Eq);
                if (need_le && min > c.rhs) || (need_ge && max < c.rhs) {
                    return false;
                }
                for &(v, a) in &c.coeffs {
                    if self.values[v] != UNSET || a == 0 {
                        continue;
                    }
                    // Pushing v to its "expensive" side must not break the row.
                    if need_le && min + a.abs() > c.rhs {
                        self.set(v, a < 0);
                        changed = true;
                        break;
                    }
                    if need_ge && max - a.abs() < c.rhs {
                        self.set(v, a > 0);
                        changed = true;
                        break;
                    }
                }
                if changed {
                    break;
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn bound(&self) -> f64 {
        let mut total = 0.0;
        for c in &self.obj.clauses {
            let mut open = false;
            let mut sat = false;
            for &v in &c.pos {
                match self.values[v] {
                    1 => sat = true,
                    UNSET => open = true,
                    _ => {}
                }
            }
            for &v in &c.neg {
                match self.values[v] {
                    0 => sat = true,
                    UNSET => open = true,
                    _ => {}
                }
            }
            if sat {
                total += c.weight;
            } else if open {
                total += c.weight.max(0.0);
            }
        }
        total
    }

    fn dfs(&mut self) {
        self.nodes += 1;
        if let Some(best) = &self.best {
            if self.bound() < best.score - PRUNE_SLACK {
                return;
            }
        }
        let Some(v) = self.values.iter().position(|&x| x == UNSET) else {
            let values: Vec<bool> = self.values.iter().map(|&x| x == 1).collect();
            debug_assert!(self.obj.is_feasible(&values));
            let score = self.obj.evaluate(&values);
            if self.best.as_ref().is_none_or(|b| score > b.score) {
                self.best = Some(Assignment { values, score });
            }
            return;
        };
        for b in [false, true] {
            let mark = self.trail.len();
            self.set(v, b);
            if self.propagate() {
                self.dfs();
            }
            self.undo_to(mark);
        }
    }
}

/// Number of variables left free after root propagation, or `None` when
/// propagation alone proves infeasibility.
pub fn free_after_propagation(obj: &Objective) -> Option<usize> {
    let mut s = Search { obj, extra: &[], values: vec![UNSET; obj.num_vars], trail: Vec::new(), best: None, nodes: 0 };
    s.propagate().then(|| s.values.iter().filter(|&&x| x == UNSET).count())
}

pub(super) fn solve(obj: &Objective, extra: &[IntConstraint], cap: usize) -> Result<Assignment, InferenceError> {
    let mut s = Search { obj, extra, values: vec![UNSET; obj.num_vars], trail: Vec::new(), best: None, nodes: 0 };
    if !s.propagate() {
        return Err(InferenceError::Infeasible);
    }
    let free = s.values.iter().filter(|&&x| x == UNSET).count();
    if free > cap {
        return Err(InferenceError::TooLarge { free, cap });
    }
    s.dfs();
    log::trace!("branch and bound visited {} nodes over {} free variables", s.nodes, free);
    s.best.ok_or(InferenceError::Infeasible)
}
