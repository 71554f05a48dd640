use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use relgraph::dsl::{CheckedProgram, Constraint, EntityKind, Literal, RuleTemplate};

use crate::pipeline::load_program;

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Program file
    #[arg(long)]
    pub program: PathBuf,
    /// Print the report as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct Report {
    entities: Vec<String>,
    closed_predicates: Vec<String>,
    open_predicates: Vec<String>,
    weighted_templates: Vec<(String, String)>,
    constraints: Vec<(String, String)>,
}

fn rule_text(t: &RuleTemplate) -> String {
    let body: Vec<String> = t.body.iter().map(Literal::to_string).collect();
    format!("{} => {}", body.join(" & "), t.head)
}

fn report(p: &CheckedProgram) -> Report {
    let entities = p
        .entities
        .values()
        .map(|e| match e.kind {
            EntityKind::Attributed { dim } => format!("{} (features={})", e.name, dim),
            EntityKind::Symbolic { .. } => format!("{} (symbolic)", e.name),
        })
        .collect();
    let schema = |open: bool| {
        p.predicates
            .values()
            .filter(|s| s.open == open)
            .map(|s| format!("{}({})", s.predicate, s.arg_types.join(", ")))
            .collect()
    };
    let mut constraints: Vec<(String, String)> =
        p.templates.iter().filter(|t| !t.weighted).map(|t| (t.template_id.clone(), rule_text(t))).collect();
    constraints.extend(p.constraints.iter().map(|c| {
        let text = match c {
            Constraint::Logical(t) => rule_text(t),
            Constraint::Arith(a) => {
                let terms: Vec<String> = a
                    .terms
                    .iter()
                    .map(|(k, atom)| if *k.numer() == *k.denom() { atom.to_string() } else { format!("{} {}", k, atom) })
                    .collect();
                format!("{} {} {}", terms.join(" + "), a.comparator, a.rhs)
            }
        };
        (c.id().to_string(), text)
    }));
    constraints.sort_by_key(|(id, _)| id[1..].parse::<usize>().unwrap_or(usize::MAX));
    Report {
        entities,
        closed_predicates: schema(false),
        open_predicates: schema(true),
        weighted_templates: p.templates.iter().filter(|t| t.weighted).map(|t| (t.template_id.clone(), rule_text(t))).collect(),
        constraints,
    }
}

pub fn run(args: &CompileArgs) -> Result<()> {
    let program = load_program(&args.program)?;
    let r = report(&program);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    println!("{}: ok", args.program.display());
    println!("entities: {}", r.entities.join(", "));
    println!("closed predicates: {}", r.closed_predicates.join(", "));
    println!("open predicates: {}", r.open_predicates.join(", "));
    println!("{} weighted templates", r.weighted_templates.len());
    for (id, text) in &r.weighted_templates {
        println!("  {:<4} {}", id, text);
    }
    println!("{} constraints", r.constraints.len());
    for (id, text) in &r.constraints {
        println!("  {:<4} {}", id, text);
    }
    Ok(())
}
