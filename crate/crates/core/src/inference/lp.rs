use std::fmt::Write as _;

use super::{IntConstraint, Objective, WeightedClause};
use crate::dsl::Comparator;

fn term(coef: i64, name: &str) -> String {
    if coef < 0 {
        format!("- {} {}", -coef, name)
    } else {
        format!("+ {} {}", coef, name)
    }
}

fn cmp(c: Comparator) -> &'static str {
    match c {
        Comparator::Le => "<=",
        Comparator::Ge => ">=",
        Comparator::Eq => "=",
    }
}

/// The two rows tying the auxiliary `z` to `s = Σ_{I⁺} y + Σ_{I⁻} (1 − y)`:
/// `z − s ≤ 0` and `s − n·z ≤ 0`, with the constant part of `s` moved to
/// the right-hand side. Each row is `(coefficients, rhs)` where index
/// `num_vars` stands for `z`.
pub fn linearize(clause: &WeightedClause, num_vars: usize) -> [(Vec<(usize, i64)>, i64); 2] {
    let mut s: Vec<(usize, i64)> = Vec::new();
    for &v in &clause.pos {
        s.push((v, 1));
    }
    for &v in &clause.neg {
        s.push((v, -1));
    }
    let s_const = clause.neg.len() as i64;
    let n = (clause.pos.len() + clause.neg.len()) as i64;
    // z − s ≤ 0  →  z − Σ s_terms ≤ s_const
    let mut upper: Vec<(usize, i64)> = vec![(num_vars, 1)];
    upper.extend(s.iter().map(|(v, c)| (*v, -c)));
    // s − n z ≤ 0  →  Σ s_terms − n z ≤ −s_const
    let mut lower: Vec<(usize, i64)> = s.clone();
    lower.push((num_vars, -n));
    [(upper, s_const), (lower, -s_const)]
}

/// Values of `z` allowed by [`linearize`] under a fixed assignment.
pub fn feasible_z(clause: &WeightedClause, values: &[bool]) -> Vec<bool> {
    let rows = linearize(clause, values.len());
    [false, true]
        .into_iter()
        .filter(|&z| {
            rows.iter().all(|(coeffs, rhs)| {
                let lhs: i64 = coeffs
                    .iter()
                    .map(|&(v, c)| {
                        let on = if v == values.len() { z } else { values[v] };
                        if on {
                            c
                        } else {
                            0
                        }
                    })
                    .sum();
                lhs <= *rhs
            })
        })
        .collect()
}

fn row(out: &mut String, name: &str, coeffs: &[(usize, i64)], c: Comparator, rhs: i64, names: &dyn Fn(usize) -> String) {
    let terms: Vec<String> = coeffs.iter().map(|&(v, a)| term(a, &names(v))).collect();
    let body = if terms.is_empty() { "0 y0".to_string() } else { terms.join(" ") };
    writeln!(out, " {}: {} {} {}", name, body, cmp(c), rhs).unwrap();
}

/// LP-format text of the linearized MAP program.
pub fn dump_lp(obj: &Objective, extra: &[IntConstraint]) -> String {
    let mut out = String::new();
    let n = obj.num_vars;
    writeln!(out, "\\ variables {} clauses {} constraints {}", n, obj.clauses.len(), obj.constraints.len() + extra.len())
        .unwrap();
    writeln!(out, "Maximize").unwrap();
    let obj_terms: Vec<String> = obj
        .clauses
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{} {:e} z{}", if c.weight < 0.0 { "-" } else { "+" }, c.weight.abs(), i))
        .collect();
    writeln!(out, " obj: {}", if obj_terms.is_empty() { "0 y0".into() } else { obj_terms.join(" ") }).unwrap();
    writeln!(out, "Subject To").unwrap();
    for (i, c) in obj.clauses.iter().enumerate() {
        let names = |v: usize| if v == n { format!("z{}", i) } else { format!("y{}", v) };
        let [(up, up_rhs), (lo, lo_rhs)] = linearize(c, n);
        row(&mut out, &format!("z{}_le_s", i), &up, Comparator::Le, up_rhs, &names);
        row(&mut out, &format!("s{}_le_nz", i), &lo, Comparator::Le, lo_rhs, &names);
    }
    let names = |v: usize| format!("y{}", v);
    for (i, c) in obj.constraints.iter().chain(extra).enumerate() {
        row(&mut out, &format!("{}_{}", c.origin.replace('-', "_"), i), &c.coeffs, c.comparator, c.rhs, &names);
    }
    writeln!(out, "Binary").unwrap();
    let mut vars: Vec<String> = (0..n).map(|v| format!("y{}", v)).collect();
    vars.extend((0..obj.clauses.len()).map(|i| format!("z{}", i)));
    for chunk in vars.chunks(16) {
        writeln!(out, " {}", chunk.join(" ")).unwrap();
    }
    writeln!(out, "End").unwrap();
    out
}
