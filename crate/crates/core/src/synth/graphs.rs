use std::collections::BTreeMap;

use num_rational::Rational64;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dsl::Comparator;
use crate::grounder::{FactorGraph, GroundRule, Head, LinearConstraint};
use crate::inference::ScoreTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomGraphConfig {
    pub max_vars: usize,
    pub max_potentials: usize,
    pub max_constraints: usize,
    pub max_body: usize,
    /// Probability that weights are multiples of 1/4, producing exact ties.
    pub quantized: f64,
    /// Probability that constraint right-hand sides ignore the reference
    /// point, which may make the graph infeasible.
    pub wild_constraints: f64,
}

impl Default for RandomGraphConfig {
    fn default() -> Self {
        RandomGraphConfig {
            max_vars: 20,
            max_potentials: 40,
            max_constraints: 5,
            max_body: 3,
            quantized: 0.5,
            wild_constraints: 0.1,
        }
    }
}

fn weight<R: Rng>(rng: &mut R, quantized: bool) -> f64 {
    if quantized {
        rng.random_range(-12i32..=12) as f64 / 4.0
    } else {
        rng.random_range(-3.0..3.0)
    }
}

/// A random scored factor graph with mixed-sign weights, binary and
/// multiclass heads, and hard constraints that usually admit a hidden
/// reference assignment.
pub fn random_factor_graph<R: Rng>(rng: &mut R, cfg: &RandomGraphConfig) -> (FactorGraph, Vec<ScoreTable>) {
    let n = rng.random_range(1..=cfg.max_vars.max(1));
    let mut reference: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let quantized = rng.random_bool(cfg.quantized);
    let wild = rng.random_bool(cfg.wild_constraints);
    let vars: Vec<usize> = (0..n).collect();

    let mut potentials = Vec::new();
    let mut scores = Vec::new();
    let mut constraints = Vec::new();
    let m = rng.random_range(0..=cfg.max_potentials);
    for t in 0..m {
        let mut picked: Vec<usize> = vars.choose_multiple(rng, n.min(cfg.max_body + 4)).copied().collect();
        let multiclass = n >= 3 && rng.random_bool(0.15);
        let head = if multiclass {
            let k = rng.random_range(2..=picked.len().min(4));
            let classes: Vec<usize> = picked.drain(..k).collect();
            let on = rng.random_range(0..k);
            for (i, v) in classes.iter().enumerate() {
                reference[*v] = i == on;
            }
            Head::Multiclass(classes.into_iter().enumerate().map(|(c, v)| (v, c)).collect())
        } else {
            Head::Binary(picked.remove(0))
        };
        let body_len = rng.random_range(0..=cfg.max_body.min(picked.len()));
        let (mut body_pos, mut body_neg) = (Vec::new(), Vec::new());
        for v in picked.into_iter().take(body_len) {
            if rng.random_bool(0.3) {
                body_pos.push(v);
            } else {
                body_neg.push(v);
            }
        }
        body_pos.sort_unstable();
        body_neg.sort_unstable();
        let rule = GroundRule::bare(t % 4, body_pos, body_neg, head);
        scores.push((0..rule.num_labels()).map(|_| weight(rng, quantized)).collect());
        if let Head::Multiclass(hs) = &rule.head {
            let coeffs: BTreeMap<usize, Rational64> = hs.iter().map(|h| (h.0, Rational64::from_integer(1))).collect();
            constraints.push(LinearConstraint {
                coeffs,
                comparator: Comparator::Eq,
                rhs: Rational64::from_integer(1),
                origin: format!("c{}", constraints.len()),
            });
        }
        potentials.push(rule);
    }

    let extra = rng.random_range(0..=cfg.max_constraints);
    for _ in 0..extra {
        let k = rng.random_range(1..=n.min(4));
        let support: Vec<usize> = vars.choose_multiple(rng, k).copied().collect();
        let mut coeffs = BTreeMap::new();
        for v in support {
            let c = *[1i64, 1, -1, 2].choose(rng).unwrap();
            let c = if rng.random_bool(0.2) { Rational64::new(c, 2) } else { Rational64::from_integer(c) };
            coeffs.insert(v, c);
        }
        let comparator = *[Comparator::Le, Comparator::Ge, Comparator::Eq].choose(rng).unwrap();
        let at_ref: Rational64 = coeffs.iter().filter(|(v, _)| reference[**v]).map(|(_, c)| *c).sum();
        let rhs = if wild {
            Rational64::from_integer(rng.random_range(-2..=3))
        } else {
            match comparator {
                Comparator::Eq => at_ref,
                Comparator::Le => at_ref + Rational64::from_integer(rng.random_range(0..=1)),
                Comparator::Ge => at_ref - Rational64::from_integer(rng.random_range(0..=1)),
            }
        };
        constraints.push(LinearConstraint { coeffs, comparator, rhs, origin: format!("c{}", constraints.len()) });
    }
    (FactorGraph::bare(n, potentials, constraints), scores)
}
