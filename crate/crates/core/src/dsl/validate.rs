use std::collections::{BTreeMap, BTreeSet};

use num_rational::Rational64;
use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("{span}: duplicate declaration of `{name}`")]
    Duplicate { name: String, span: Span },
    #[error("{span}: undeclared entity type `{name}`")]
    UndeclaredType { name: String, span: Span },
    #[error("{span}: predicate `{name}` used before declaration")]
    UndeclaredPredicate { name: String, span: Span },
    #[error("{span}: predicate `{predicate}` declared with no arguments")]
    EmptyPredicate { predicate: String, span: Span },
    #[error("{span}: `{predicate}` expects {expected} arguments, found {found}")]
    ArityMismatch { predicate: String, expected: usize, found: usize, span: Span },
    #[error("{span}: `{term}` has type {found} here but {expected} elsewhere")]
    TypeMismatch { term: String, expected: String, found: String, span: Span },
    #[error("{span}: head variable `{var}` is not bound by the body")]
    UnboundHeadVariable { var: String, span: Span },
    #[error("{span}: head relation `{predicate}` is closed")]
    ClosedHeadRelation { predicate: String, span: Span },
    #[error("{span}: weighted rules must have a positive head")]
    NegatedWeightedHead { span: Span },
    #[error("{span}: rule head must be an atom")]
    GuardHead { span: Span },
    #[error("{span}: `{predicate}` marked `?` but declared closed")]
    OpennessMismatch { predicate: String, span: Span },
    #[error("{span}: variable `{var}` only occurs in a negated closed literal or guard")]
    UnsafeVariable { var: String, span: Span },
    #[error("{span}: rule duplicates template {first}")]
    DuplicateTemplate { first: String, span: Span },
    #[error("{span}: arithmetic constraint mentions no open relation")]
    NoOpenTerm { span: Span },
    #[error("{span}: variable `{var}` must appear in every term, or only as a summation variable")]
    SumVariableScope { var: String, span: Span },
}

impl ValidationError {
    pub fn span(&self) -> Span {
        use ValidationError::*;
        match self {
            Duplicate { span, .. }
            | UndeclaredType { span, .. }
            | UndeclaredPredicate { span, .. }
            | EmptyPredicate { span, .. }
            | ArityMismatch { span, .. }
            | TypeMismatch { span, .. }
            | UnboundHeadVariable { span, .. }
            | ClosedHeadRelation { span, .. }
            | NegatedWeightedHead { span }
            | GuardHead { span }
            | OpennessMismatch { span, .. }
            | UnsafeVariable { span, .. }
            | DuplicateTemplate { span, .. }
            | NoOpenTerm { span }
            | SumVariableScope { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Symbolic { vocab_file: bool },
    Attributed { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityType {
    pub name: String,
    pub kind: EntityKind,
}

impl EntityType {
    pub fn is_symbolic(&self) -> bool {
        matches!(self.kind, EntityKind::Symbolic { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub predicate: String,
    pub arg_types: Vec<String>,
    pub open: bool,
}

impl RelationSchema {
    pub fn arity(&self) -> usize {
        self.arg_types.len()
    }
}

/// A checked rule: either a weighted template or a hard logical constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTemplate {
    /// `r<i>` for weighted templates, `c<i>` for constraints.
    pub template_id: String,
    pub weighted: bool,
    pub body: Vec<Literal>,
    pub head: Literal,
    pub var_types: BTreeMap<String, String>,
    /// Head argument position holding the class label of a multiclass template.
    pub label_position: Option<usize>,
    pub span: Span,
}

impl RuleTemplate {
    pub fn head_atom(&self) -> &Atom {
        self.head.atom().expect("validated head is an atom")
    }

    pub fn as_decl(&self) -> RuleDecl {
        RuleDecl {
            kind: if self.weighted { RuleKind::Weighted } else { RuleKind::Hard },
            body: self.body.clone(),
            head: self.head.clone(),
            span: self.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArithmeticConstraint {
    pub id: String,
    pub terms: Vec<(Rational64, Atom)>,
    pub comparator: Comparator,
    pub rhs: Rational64,
    pub var_types: BTreeMap<String, String>,
    pub span: Span,
}

impl ArithmeticConstraint {
    /// Variables that are not summed over, sorted.
    pub fn group_vars(&self) -> Vec<String> {
        let mut out = BTreeSet::new();
        for (_, a) in &self.terms {
            for t in &a.args {
                if let Term::Var(v) = t {
                    out.insert(v.clone());
                }
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    Logical(RuleTemplate),
    Arith(ArithmeticConstraint),
}

impl Constraint {
    pub fn id(&self) -> &str {
        match self {
            Constraint::Logical(r) => &r.template_id,
            Constraint::Arith(a) => &a.id,
        }
    }
}

/// Validated, immutable program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckedProgram {
    pub entities: BTreeMap<String, EntityType>,
    pub predicates: BTreeMap<String, RelationSchema>,
    pub templates: Vec<RuleTemplate>,
    pub constraints: Vec<Constraint>,
}

impl CheckedProgram {
    pub fn entity(&self, name: &str) -> Option<&EntityType> {
        self.entities.get(name)
    }

    pub fn predicate(&self, name: &str) -> Option<&RelationSchema> {
        self.predicates.get(name)
    }

    pub fn template(&self, id: &str) -> Option<&RuleTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }

    pub fn open_predicates(&self) -> impl Iterator<Item = &RelationSchema> {
        self.predicates.values().filter(|p| p.open)
    }
}

pub fn validate(program: &AbstractProgram) -> Result<CheckedProgram, ValidationError> {
    let mut out = CheckedProgram::default();
    let mut rules: Vec<&RuleDecl> = Vec::new();
    let mut ariths: Vec<(usize, &ArithDecl)> = Vec::new();
    let mut order: Vec<(bool, usize)> = Vec::new();

    for item in &program.items {
        match item {
            Item::Entity(e) => {
                if out.entities.contains_key(&e.name) {
                    return Err(ValidationError::Duplicate { name: e.name.clone(), span: e.span });
                }
                let kind = match e.kind {
                    EntityKindDecl::Symbolic => EntityKind::Symbolic { vocab_file: false },
                    EntityKindDecl::Vocab => EntityKind::Symbolic { vocab_file: true },
                    EntityKindDecl::Features(dim) => EntityKind::Attributed { dim },
                };
                out.entities.insert(e.name.clone(), EntityType { name: e.name.clone(), kind });
            }
            Item::Predicate(p) => {
                if out.predicates.contains_key(&p.name) {
                    return Err(ValidationError::Duplicate { name: p.name.clone(), span: p.span });
                }
                if p.arg_types.is_empty() {
                    return Err(ValidationError::EmptyPredicate { predicate: p.name.clone(), span: p.span });
                }
                for t in &p.arg_types {
                    if !out.entities.contains_key(t) {
                        return Err(ValidationError::UndeclaredType { name: t.clone(), span: p.span });
                    }
                }
                out.predicates.insert(
                    p.name.clone(),
                    RelationSchema { predicate: p.name.clone(), arg_types: p.arg_types.clone(), open: p.open },
                );
            }
            Item::Rule(r) => {
                // Checked against the declarations visible at this point.
                check_rule_atoms(&out, r)?;
                order.push((true, rules.len()));
                rules.push(r);
            }
            Item::Arith(a) => {
                for (_, atom) in &a.terms {
                    check_atom(&out, atom)?;
                }
                order.push((false, ariths.len()));
                ariths.push((0, a));
            }
        }
    }

    let mut weighted_seen: Vec<(RuleDecl, String)> = Vec::new();
    let mut hard_seen: Vec<(RuleDecl, String)> = Vec::new();
    let mut checked_ariths = Vec::new();
    let (mut next_r, mut next_c) = (0usize, 0usize);
    for (is_rule, idx) in order {
        if is_rule {
            let r = rules[idx];
            let weighted = r.kind == RuleKind::Weighted;
            let id = if weighted {
                next_r += 1;
                format!("r{}", next_r - 1)
            } else {
                next_c += 1;
                format!("c{}", next_c - 1)
            };
            let template = check_rule(&out, r, id)?;
            let stripped = strip(r);
            let seen = if weighted { &mut weighted_seen } else { &mut hard_seen };
            if let Some((_, first)) = seen.iter().find(|(d, _)| *d == stripped) {
                return Err(ValidationError::DuplicateTemplate { first: first.clone(), span: r.span });
            }
            seen.push((stripped, template.template_id.clone()));
            if weighted {
                out.templates.push(template);
            } else {
                out.constraints.push(Constraint::Logical(template));
            }
        } else {
            let a = ariths[idx].1;
            next_c += 1;
            let c = check_arith(&out, a, format!("c{}", next_c - 1))?;
            checked_ariths.push(c.clone());
            out.constraints.push(Constraint::Arith(c));
        }
    }

    for t in &mut out.templates {
        t.label_position = detect_label_position(&out.entities, t, &checked_ariths);
    }
    Ok(out)
}

fn strip(r: &RuleDecl) -> RuleDecl {
    let prog = AbstractProgram { items: vec![Item::Rule(r.clone())] }.without_spans();
    match prog.items.into_iter().next() {
        Some(Item::Rule(r)) => r,
        _ => unreachable!(),
    }
}

fn check_atom(prog: &CheckedProgram, atom: &Atom) -> Result<(), ValidationError> {
    let schema = prog
        .predicates
        .get(&atom.predicate)
        .ok_or_else(|| ValidationError::UndeclaredPredicate { name: atom.predicate.clone(), span: atom.span })?;
    if schema.arity() != atom.args.len() {
        return Err(ValidationError::ArityMismatch {
            predicate: atom.predicate.clone(),
            expected: schema.arity(),
            found: atom.args.len(),
            span: atom.span,
        });
    }
    if atom.open_mark && !schema.open {
        return Err(ValidationError::OpennessMismatch { predicate: atom.predicate.clone(), span: atom.span });
    }
    Ok(())
}

fn check_rule_atoms(prog: &CheckedProgram, r: &RuleDecl) -> Result<(), ValidationError> {
    for lit in r.body.iter().chain(std::iter::once(&r.head)) {
        if let Some(a) = lit.atom() {
            check_atom(prog, a)?;
        }
    }
    Ok(())
}

fn bind_type(
    types: &mut BTreeMap<String, String>,
    var: &str,
    ty: &str,
    span: Span,
) -> Result<(), ValidationError> {
    match types.get(var) {
        Some(prev) if prev != ty => Err(ValidationError::TypeMismatch {
            term: var.to_string(),
            expected: prev.clone(),
            found: ty.to_string(),
            span,
        }),
        Some(_) => Ok(()),
        None => {
            types.insert(var.to_string(), ty.to_string());
            Ok(())
        }
    }
}

fn atom_types(
    prog: &CheckedProgram,
    atom: &Atom,
    types: &mut BTreeMap<String, String>,
) -> Result<(), ValidationError> {
    let schema = &prog.predicates[&atom.predicate];
    for (term, ty) in atom.args.iter().zip(&schema.arg_types) {
        if let Some(v) = term.var_name() {
            bind_type(types, v, ty, atom.span)?;
        }
    }
    Ok(())
}

fn check_rule(prog: &CheckedProgram, r: &RuleDecl, id: String) -> Result<RuleTemplate, ValidationError> {
    let weighted = r.kind == RuleKind::Weighted;
    let head = match &r.head {
        Literal::Atom { atom, negated } => {
            if *negated && weighted {
                return Err(ValidationError::NegatedWeightedHead { span: atom.span });
            }
            atom
        }
        Literal::Guard { span, .. } => return Err(ValidationError::GuardHead { span: *span }),
    };
    let head_schema = &prog.predicates[&head.predicate];
    if !head_schema.open {
        return Err(ValidationError::ClosedHeadRelation { predicate: head.predicate.clone(), span: head.span });
    }

    let mut types = BTreeMap::new();
    let mut generated: BTreeSet<String> = BTreeSet::new();
    for lit in &r.body {
        if let Literal::Atom { atom, negated } = lit {
            atom_types(prog, atom, &mut types)?;
            let open = prog.predicates[&atom.predicate].open;
            if !*negated || open {
                generated.extend(atom.args.iter().filter_map(|t| t.var_name().map(str::to_string)));
            }
        }
    }
    let body_vars = generated.clone();
    atom_types(prog, head, &mut types)?;
    generated.extend(head.args.iter().filter_map(|t| t.var_name().map(str::to_string)));

    if weighted {
        for t in &head.args {
            if let Some(v) = t.var_name() {
                let symbolic = prog.entities[&types[v]].is_symbolic();
                if !body_vars.contains(v) && !symbolic {
                    return Err(ValidationError::UnboundHeadVariable { var: v.to_string(), span: head.span });
                }
            }
        }
    }

    for lit in &r.body {
        let vars: Vec<&str> = match lit {
            Literal::Atom { atom, .. } => atom.args.iter().filter_map(|t| t.var_name()).collect(),
            Literal::Guard { lhs, rhs, .. } => [lhs, rhs].into_iter().filter_map(|t| t.var_name()).collect(),
        };
        for v in vars {
            if !generated.contains(v) {
                return Err(ValidationError::UnsafeVariable { var: v.to_string(), span: lit.span() });
            }
        }
        if let Literal::Guard { lhs: Term::Var(a), rhs: Term::Var(b), span, .. } = lit {
            if types[a] != types[b] {
                return Err(ValidationError::TypeMismatch {
                    term: b.clone(),
                    expected: types[a].clone(),
                    found: types[b].clone(),
                    span: *span,
                });
            }
        }
    }

    Ok(RuleTemplate {
        template_id: id,
        weighted,
        body: r.body.clone(),
        head: r.head.clone(),
        var_types: types,
        label_position: None,
        span: r.span,
    })
}

fn check_arith(prog: &CheckedProgram, a: &ArithDecl, id: String) -> Result<ArithmeticConstraint, ValidationError> {
    let mut types = BTreeMap::new();
    let mut sum_vars = BTreeSet::new();
    let mut plain_vars = BTreeSet::new();
    let mut any_open = false;
    for (_, atom) in &a.terms {
        atom_types(prog, atom, &mut types)?;
        any_open |= prog.predicates[&atom.predicate].open;
        for t in &atom.args {
            match t {
                Term::SumVar(v) => {
                    sum_vars.insert(v.clone());
                }
                Term::Var(v) => {
                    plain_vars.insert(v.clone());
                }
                Term::Const(_) => {}
            }
        }
    }
    if !any_open {
        return Err(ValidationError::NoOpenTerm { span: a.span });
    }
    if let Some(v) = sum_vars.intersection(&plain_vars).next() {
        return Err(ValidationError::SumVariableScope { var: v.clone(), span: a.span });
    }
    for (_, atom) in &a.terms {
        for v in &plain_vars {
            if !atom.args.iter().any(|t| matches!(t, Term::Var(x) if x == v)) {
                return Err(ValidationError::SumVariableScope { var: v.clone(), span: atom.span });
            }
        }
    }
    Ok(ArithmeticConstraint {
        id,
        terms: a.terms.clone(),
        comparator: a.comparator,
        rhs: a.rhs,
        var_types: types,
        span: a.span,
    })
}

/// A weighted head is multiclass when exactly one of its variables is a
/// symbolic type not bound by the body and an `H(..., +T, ...) = 1`
/// constraint sums over that position.
fn detect_label_position(
    entities: &BTreeMap<String, EntityType>,
    t: &RuleTemplate,
    ariths: &[ArithmeticConstraint],
) -> Option<usize> {
    let head = t.head_atom();
    let body_vars: BTreeSet<&str> =
        t.body.iter().filter_map(|l| l.atom()).flat_map(|a| a.args.iter().filter_map(|x| x.var_name())).collect();
    let free: Vec<usize> = head
        .args
        .iter()
        .enumerate()
        .filter(|(_, a)| match a {
            Term::Var(v) => !body_vars.contains(v.as_str()) && entities[&t.var_types[v]].is_symbolic(),
            _ => false,
        })
        .map(|(i, _)| i)
        .collect();
    let [pos] = free[..] else { return None };
    let one = Rational64::from_integer(1);
    ariths
        .iter()
        .any(|c| {
            c.comparator == Comparator::Eq
                && c.rhs == one
                && c.terms.len() == 1
                && c.terms[0].0 == one
                && c.terms[0].1.predicate == head.predicate
                && c.terms[0].1.args.iter().enumerate().all(|(i, a)| {
                    if i == pos {
                        matches!(a, Term::SumVar(_))
                    } else {
                        matches!(a, Term::Var(_))
                    }
                })
        })
        .then_some(pos)
}
