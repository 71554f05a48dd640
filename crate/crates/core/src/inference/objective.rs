use num_rational::Rational64;

use super::{InferenceError, ScoreTable};
use crate::dsl::Comparator;
use crate::grounder::{FactorGraph, LinearConstraint, VarId};

/// One weighted clause: contributes `weight` when some literal holds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedClause {
    pub pos: Vec<VarId>,
    pub neg: Vec<VarId>,
    pub weight: f64,
    /// Index of the originating potential, or `None` for task-loss terms.
    pub potential: Option<usize>,
    pub label: usize,
}

impl WeightedClause {
    pub fn is_satisfied(&self, values: &[bool]) -> bool {
        self.pos.iter().any(|&v| values[v]) || self.neg.iter().any(|&v| !values[v])
    }

    /// `s = Σ_{I⁺} y + Σ_{I⁻} (1 − y)`.
    pub fn literal_count(&self, values: &[bool]) -> usize {
        self.pos.iter().filter(|&&v| values[v]).count() + self.neg.iter().filter(|&&v| !values[v]).count()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// `Σ coeffs·y  comparator  rhs` over integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntConstraint {
    pub coeffs: Vec<(VarId, i64)>,
    pub comparator: Comparator,
    pub rhs: i64,
    pub origin: String,
}

impl IntConstraint {
    pub fn from_linear(c: &LinearConstraint) -> Self {
        let factor = c.coeffs.values().chain(std::iter::once(&c.rhs)).fold(1i64, |acc, r| lcm(acc, *r.denom()));
        let scale = |r: &Rational64| (r * Rational64::from_integer(factor)).to_integer();
        IntConstraint {
            coeffs: c.coeffs.iter().map(|(v, r)| (*v, scale(r))).collect(),
            comparator: c.comparator,
            rhs: scale(&c.rhs),
            origin: c.origin.clone(),
        }
    }

    /// Excludes exactly the assignment `values`.
    pub fn no_good(values: &[bool]) -> Self {
        let ones = values.iter().filter(|v| **v).count() as i64;
        IntConstraint {
            coeffs: values.iter().enumerate().map(|(i, &v)| (i, if v { -1 } else { 1 })).collect(),
            comparator: Comparator::Ge,
            rhs: 1 - ones,
            origin: "no-good".into(),
        }
    }

    pub fn lhs(&self, values: &[bool]) -> i64 {
        self.coeffs.iter().filter(|(v, _)| values[*v]).map(|(_, c)| c).sum()
    }

    pub fn is_satisfied(&self, values: &[bool]) -> bool {
        let l = self.lhs(values);
        match self.comparator {
            Comparator::Le => l <= self.rhs,
            Comparator::Ge => l >= self.rhs,
            Comparator::Eq => l == self.rhs,
        }
    }

    /// Distance to satisfaction, 0 when satisfied.
    pub fn violation(&self, values: &[bool]) -> i64 {
        let l = self.lhs(values);
        match self.comparator {
            Comparator::Le => (l - self.rhs).max(0),
            Comparator::Ge => (self.rhs - l).max(0),
            Comparator::Eq => (l - self.rhs).abs(),
        }
    }
}

/// A MAP problem: maximize the clause-weight sum subject to integer
/// constraints over `num_vars` binary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub num_vars: usize,
    pub clauses: Vec<WeightedClause>,
    pub constraints: Vec<IntConstraint>,
}

impl Objective {
    pub fn new(graph: &FactorGraph, scores: &[ScoreTable]) -> Result<Self, InferenceError> {
        if scores.len() != graph.potentials.len() {
            return Err(InferenceError::ScoreShape {
                potential: scores.len().min(graph.potentials.len()),
                expected: graph.potentials.len(),
                got: scores.len(),
            });
        }
        let mut clauses = Vec::new();
        for (p, (rule, table)) in graph.potentials.iter().zip(scores).enumerate() {
            if table.len() != rule.num_labels() {
                return Err(InferenceError::ScoreShape { potential: p, expected: rule.num_labels(), got: table.len() });
            }
            if table.iter().any(|w| !w.is_finite()) {
                return Err(InferenceError::NonFinite { potential: p });
            }
            for (label, &weight) in table.iter().enumerate() {
                let (pos, neg) = rule.clause(label);
                clauses.push(WeightedClause { pos, neg, weight, potential: Some(p), label });
            }
        }
        Ok(Objective {
            num_vars: graph.num_vars(),
            clauses,
            constraints: graph.constraints.iter().map(IntConstraint::from_linear).collect(),
        })
    }

    /// Adds the Hamming task loss: +1 for every variable that disagrees
    /// with `gold`.
    pub fn with_hamming(mut self, gold: &[bool]) -> Self {
        for (v, &g) in gold.iter().enumerate() {
            let (pos, neg) = if g { (vec![], vec![v]) } else { (vec![v], vec![]) };
            self.clauses.push(WeightedClause { pos, neg, weight: 1.0, potential: None, label: 0 });
        }
        self
    }

    /// Objective value. Summation order is fixed, so equal assignments
    /// always produce bit-identical scores.
    pub fn evaluate(&self, values: &[bool]) -> f64 {
        let mut total = 0.0;
        for c in &self.clauses {
            if c.is_satisfied(values) {
                total += c.weight;
            }
        }
        total
    }

    pub fn is_feasible(&self, values: &[bool]) -> bool {
        self.constraints.iter().all(|c| c.is_satisfied(values))
    }
}
