use std::fmt::Write;

use num_rational::Rational64;

use super::{FactorGraph, Head};
use crate::datastore::Datastore;

fn rational(r: &Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn var_list(vs: &[usize]) -> String {
    let parts: Vec<String> = vs.iter().map(|v| format!("v{}", v)).collect();
    format!("{{{}}}", parts.join(","))
}

/// Deterministic text rendering of one factor graph.
pub fn dump_graph(graph: &FactorGraph, data: &Datastore) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "factor-graph {}", graph.instance_id);
    let _ = writeln!(out, "variables {}", graph.variables.len());
    for v in &graph.variables {
        let gold = match v.gold {
            Some(true) => "1",
            Some(false) => "0",
            None => "?",
        };
        let _ = writeln!(out, "  v{} {} gold={}", v.id, v.atom.display(data), gold);
    }
    let _ = writeln!(out, "potentials {}", graph.potentials.len());
    for p in &graph.potentials {
        let head = match &p.head {
            Head::Binary(h) => format!("v{}", h),
            Head::Multiclass(hs) => {
                let parts: Vec<String> = hs.iter().map(|(v, c)| format!("v{}:{}", v, c)).collect();
                format!("[{}]", parts.join(","))
            }
        };
        let _ = writeln!(
            out,
            "  {} I+={} I-={} head={}",
            p.template_id,
            var_list(&p.pos_vars()),
            var_list(&p.neg_vars()),
            head
        );
    }
    let _ = writeln!(out, "constraints {}", graph.constraints.len());
    for c in &graph.constraints {
        let mut row = String::new();
        for (v, k) in &c.coeffs {
            let sign = if *k < Rational64::from_integer(0) { "-" } else { "+" };
            let mag = if *k < Rational64::from_integer(0) { -*k } else { *k };
            let _ = write!(row, "{}{} v{} ", sign, rational(&mag), v);
        }
        let _ = writeln!(out, "  {}: {}{} {}", c.origin, row, c.comparator, rational(&c.rhs));
    }
    out
}

pub fn dump_graphs(graphs: &[FactorGraph], data: &Datastore) -> String {
    graphs.iter().map(|g| dump_graph(g, data)).collect::<Vec<_>>().join("\n")
}
