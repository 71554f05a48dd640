use std::fmt::Write;

use num_rational::Rational64;

use super::ast::*;

fn rational(r: &Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Canonical program text; reparses to a structurally identical program.
pub fn pretty_print(program: &AbstractProgram) -> String {
    let mut out = String::new();
    for item in &program.items {
        match item {
            Item::Entity(e) => {
                let _ = match e.kind {
                    EntityKindDecl::Symbolic => writeln!(out, "entity {}", e.name),
                    EntityKindDecl::Vocab => writeln!(out, "entity {} vocab", e.name),
                    EntityKindDecl::Features(n) => writeln!(out, "entity {} features={}", e.name, n),
                };
            }
            Item::Predicate(p) => {
                let _ = writeln!(out, "predicate {}({}){}", p.name, p.arg_types.join(", "), if p.open { "?" } else { "" });
            }
            Item::Rule(r) => {
                let kw = match r.kind {
                    RuleKind::Weighted => "rule",
                    RuleKind::Hard => "hardconstraint",
                };
                let body: Vec<String> = r.body.iter().map(|l| l.to_string()).collect();
                let _ = writeln!(out, "{}: {}{}=> {}", kw, body.join(" & "), if body.is_empty() { "" } else { " " }, r.head);
            }
            Item::Arith(a) => {
                out.push_str("arith: ");
                for (i, (c, atom)) in a.terms.iter().enumerate() {
                    let neg = *c < Rational64::from_integer(0);
                    if i == 0 {
                        if neg {
                            out.push_str("- ");
                        }
                    } else {
                        out.push_str(if neg { " - " } else { " + " });
                    }
                    let mag = if neg { -*c } else { *c };
                    if mag != Rational64::from_integer(1) {
                        let _ = write!(out, "{} * ", rational(&mag));
                    }
                    let _ = write!(out, "{}", atom);
                }
                let neg_rhs = a.rhs < Rational64::from_integer(0);
                let _ = writeln!(
                    out,
                    " {} {}{}",
                    a.comparator,
                    if neg_rhs { "-" } else { "" },
                    rational(&if neg_rhs { -a.rhs } else { a.rhs })
                );
            }
        }
    }
    out
}
