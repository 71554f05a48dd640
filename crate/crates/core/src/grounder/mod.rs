//! Instantiates templates and constraints over a [`Datastore`], producing
//! one [`FactorGraph`] per connected component of the variable/factor graph.
//!
//! Every candidate row of an open relation becomes a binary decision
//! variable. A template or constraint is grounded only over bindings whose
//! atoms all exist: closed atoms as observed rows (closed world), open atoms
//! as candidate rows. Negated closed literals and `=`/`!=` guards filter
//! bindings once their variables are bound.

mod dump;

use std::collections::{BTreeMap, HashMap};

use num_rational::Rational64;
use rayon::prelude::*;
use thiserror::Error;

use crate::datastore::{Datastore, GroundAtomTable, Sym};
use crate::dsl::{ArithmeticConstraint, CheckedProgram, Comparator, Constraint, Literal, RuleTemplate, Term};

pub use dump::{dump_graph, dump_graphs};

pub type VarId = usize;

pub const DEFAULT_VARIABLE_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundError {
    #[error("grounding produced {count} {what}, above the cap of {cap}")]
    GroundingExplosion { what: &'static str, count: usize, cap: usize },
    #[error("constraint {origin} reduces to the false constant `0 {comparator} {rhs}`")]
    InfeasibleConstant { origin: String, comparator: Comparator, rhs: Rational64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<Sym>,
}

impl GroundAtom {
    pub fn display(&self, data: &Datastore) -> String {
        let args: Vec<String> = self.args.iter().map(|s| format!("\"{}\"", data.name(*s))).collect();
        format!("{}({})", self.predicate, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVariable {
    pub id: VarId,
    pub atom: GroundAtom,
    pub gold: Option<bool>,
}

/// The head of a ground rule: a single binary atom, or one atom per class
/// for multiclass templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Binary(VarId),
    /// `(variable, vocabulary index of the class)`, sorted by class.
    Multiclass(Vec<(VarId, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundRule {
    pub template_id: String,
    pub template_index: usize,
    /// Open atoms negated in the body, hence positive in the clause.
    pub body_pos: Vec<VarId>,
    /// Open atoms positive in the body, hence negated in the clause.
    pub body_neg: Vec<VarId>,
    pub head: Head,
    /// Every body atom, closed and open, in body order.
    pub body_atoms: Vec<GroundAtom>,
    /// Head arguments; `None` at the class position of a multiclass head.
    pub head_args: Vec<Option<Sym>>,
    pub head_predicate: String,
}

impl GroundRule {
    /// A rule with no source atoms, for hand-built graphs.
    pub fn bare(template_index: usize, body_pos: Vec<VarId>, body_neg: Vec<VarId>, head: Head) -> Self {
        GroundRule {
            template_id: format!("r{}", template_index),
            template_index,
            body_pos,
            body_neg,
            head,
            body_atoms: Vec::new(),
            head_args: Vec::new(),
            head_predicate: "Y".into(),
        }
    }

    pub fn num_labels(&self) -> usize {
        match &self.head {
            Head::Binary(_) => 2,
            Head::Multiclass(v) => v.len(),
        }
    }

    /// I⁺ of the clause with a positive head.
    pub fn pos_vars(&self) -> Vec<VarId> {
        let mut v = self.body_pos.clone();
        match &self.head {
            Head::Binary(h) => v.push(*h),
            Head::Multiclass(hs) => v.extend(hs.iter().map(|h| h.0)),
        }
        v
    }

    pub fn neg_vars(&self) -> Vec<VarId> {
        self.body_neg.clone()
    }

    pub fn head_vars(&self) -> Vec<VarId> {
        match &self.head {
            Head::Binary(h) => vec![*h],
            Head::Multiclass(hs) => hs.iter().map(|h| h.0).collect(),
        }
    }

    /// Clause `(I⁺, I⁻)` whose satisfaction is ψ for head label `label`.
    /// Binary label 1 asserts the head, label 0 its negation; multiclass
    /// label k asserts the k-th class atom.
    pub fn clause(&self, label: usize) -> (Vec<VarId>, Vec<VarId>) {
        let mut pos = self.body_pos.clone();
        let mut neg = self.body_neg.clone();
        match &self.head {
            Head::Binary(h) if label == 1 => pos.push(*h),
            Head::Binary(h) => neg.push(*h),
            Head::Multiclass(hs) => pos.push(hs[label].0),
        }
        (pos, neg)
    }

    /// Head label under a full assignment, if the assignment picks exactly
    /// one (always for binary heads).
    pub fn label_of(&self, values: &[bool]) -> Option<usize> {
        match &self.head {
            Head::Binary(h) => Some(values[*h] as usize),
            Head::Multiclass(hs) => {
                let on: Vec<usize> = (0..hs.len()).filter(|&k| values[hs[k].0]).collect();
                (on.len() == 1).then(|| on[0])
            }
        }
    }

    /// ψ for every label, as 0/1 reals.
    pub fn satisfaction(&self, values: &[bool]) -> Vec<f64> {
        let body = self.body_pos.iter().any(|&v| values[v]) || self.body_neg.iter().any(|&v| !values[v]);
        (0..self.num_labels())
            .map(|l| {
                let head = match &self.head {
                    Head::Binary(h) => values[*h] == (l == 1),
                    Head::Multiclass(hs) => values[hs[l].0],
                };
                if body || head {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn remap(&mut self, map: &HashMap<VarId, VarId>) {
        for v in self.body_pos.iter_mut().chain(self.body_neg.iter_mut()) {
            *v = map[v];
        }
        match &mut self.head {
            Head::Binary(h) => *h = map[h],
            Head::Multiclass(hs) => {
                for h in hs {
                    h.0 = map[&h.0];
                }
            }
        }
    }

    fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.body_pos.iter().chain(self.body_neg.iter()).copied().chain(self.head_vars())
    }
}

/// `Σ coeffs·y  comparator  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: BTreeMap<VarId, Rational64>,
    pub comparator: Comparator,
    pub rhs: Rational64,
    pub origin: String,
}

impl LinearConstraint {
    pub fn is_satisfied(&self, values: &[bool]) -> bool {
        let lhs: Rational64 = self.coeffs.iter().filter(|(v, _)| values[**v]).map(|(_, c)| *c).sum();
        match self.comparator {
            Comparator::Le => lhs <= self.rhs,
            Comparator::Ge => lhs >= self.rhs,
            Comparator::Eq => lhs == self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub instance_id: usize,
    pub variables: Vec<DecisionVariable>,
    pub potentials: Vec<GroundRule>,
    pub constraints: Vec<LinearConstraint>,
}

impl FactorGraph {
    /// A graph over anonymous variables `Y(0)`, `Y(1)`, ... with no gold.
    pub fn bare(num_vars: usize, potentials: Vec<GroundRule>, constraints: Vec<LinearConstraint>) -> Self {
        let variables = (0..num_vars)
            .map(|id| DecisionVariable {
                id,
                atom: GroundAtom { predicate: "Y".into(), args: vec![Sym(id as u32)] },
                gold: None,
            })
            .collect();
        FactorGraph { instance_id: 0, variables, potentials, constraints }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Gold labels of every variable, if all are known.
    pub fn gold(&self) -> Option<Vec<bool>> {
        self.variables.iter().map(|v| v.gold).collect()
    }

    pub fn is_feasible(&self, values: &[bool]) -> bool {
        self.constraints.iter().all(|c| c.is_satisfied(values))
    }
}

/// `Σ_{I⁺} y + Σ_{I⁻} (1 − y) ≥ 1`, normalized to `Σ c·y ≥ 1 − |I⁻|`.
pub fn rule_to_inequality(pos: &[VarId], neg: &[VarId], origin: &str) -> LinearConstraint {
    let one = Rational64::from_integer(1);
    let mut coeffs: BTreeMap<VarId, Rational64> = BTreeMap::new();
    for &v in pos {
        *coeffs.entry(v).or_default() += one;
    }
    for &v in neg {
        *coeffs.entry(v).or_default() -= one;
    }
    coeffs.retain(|_, c| *c != Rational64::from_integer(0));
    LinearConstraint {
        coeffs,
        comparator: Comparator::Ge,
        rhs: one - Rational64::from_integer(neg.len() as i64),
        origin: origin.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundConfig {
    pub variable_cap: usize,
}

impl Default for GroundConfig {
    fn default() -> Self {
        GroundConfig { variable_cap: DEFAULT_VARIABLE_CAP }
    }
}

/// Global index of open candidate atoms.
struct AtomIndex<'d> {
    offsets: BTreeMap<&'d str, (usize, &'d GroundAtomTable)>,
    total: usize,
}

impl<'d> AtomIndex<'d> {
    fn new(program: &CheckedProgram, data: &'d Datastore) -> Self {
        let mut offsets = BTreeMap::new();
        let mut total = 0;
        for schema in program.open_predicates() {
            if let Some(t) = data.table(&schema.predicate) {
                offsets.insert(t.predicate.as_str(), (total, t));
                total += t.len();
            }
        }
        AtomIndex { offsets, total }
    }

    fn var(&self, predicate: &str, row: &[Sym]) -> Option<VarId> {
        let (off, t) = self.offsets.get(predicate)?;
        t.position(row).map(|p| off + p)
    }

    fn variables(&self) -> Vec<DecisionVariable> {
        let mut out = Vec::with_capacity(self.total);
        for (pred, (_, t)) in &self.offsets {
            for row in t.rows() {
                out.push(DecisionVariable {
                    id: out.len(),
                    atom: GroundAtom { predicate: pred.to_string(), args: row.clone() },
                    gold: t.gold(row),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Var(usize),
    Const(Option<Sym>),
}

struct PlanAtom<'d> {
    table: Option<&'d GroundAtomTable>,
    slots: Vec<Slot>,
    open: bool,
}

enum Step<'d> {
    Generate(PlanAtom<'d>),
    FilterAbsent(PlanAtom<'d>),
    Guard { lhs: Slot, rhs: Slot, equal: bool },
}

struct Plan<'d> {
    vars: Vec<String>,
    steps: Vec<Step<'d>>,
}

fn slot_of(term: &Term, vars: &mut Vec<String>, data: &Datastore) -> Slot {
    match term {
        Term::Const(c) => Slot::Const(data.sym(c)),
        Term::Var(v) | Term::SumVar(v) => match vars.iter().position(|x| x == v) {
            Some(i) => Slot::Var(i),
            None => {
                vars.push(v.clone());
                Slot::Var(vars.len() - 1)
            }
        },
    }
}

/// Join order: repeatedly take the generator with the most bound arguments
/// (closed relations first on ties), then every filter that became ready.
fn plan<'d>(
    program: &CheckedProgram,
    data: &'d Datastore,
    literals: &'d [Literal],
    extra_generators: &'d [&'d crate::dsl::Atom],
) -> Plan<'d> {
    let mut vars = Vec::new();
    let mut gens: Vec<PlanAtom<'d>> = Vec::new();
    let mut filters: Vec<Step<'d>> = Vec::new();
    let mk = |atom: &'d crate::dsl::Atom, vars: &mut Vec<String>| PlanAtom {
        table: data.table(&atom.predicate),
        slots: atom.args.iter().map(|t| slot_of(t, vars, data)).collect(),
        open: program.predicates[&atom.predicate].open,
    };
    for lit in literals {
        if let Literal::Atom { atom, negated } = lit {
            let open = program.predicates[&atom.predicate].open;
            let p = mk(atom, &mut vars);
            if *negated && !open {
                filters.push(Step::FilterAbsent(p));
            } else {
                gens.push(p);
            }
        }
    }
    for atom in extra_generators {
        let p = mk(atom, &mut vars);
        gens.push(p);
    }
    for lit in literals {
        if let Literal::Guard { lhs, rhs, equal, .. } = lit {
            let lhs = slot_of(lhs, &mut vars, data);
            let rhs = slot_of(rhs, &mut vars, data);
            filters.push(Step::Guard { lhs, rhs, equal: *equal });
        }
    }

    let slot_vars = |s: &Slot| match s {
        Slot::Var(i) => Some(*i),
        Slot::Const(_) => None,
    };
    let step_vars = |s: &Step| -> Vec<usize> {
        match s {
            Step::Generate(p) | Step::FilterAbsent(p) => p.slots.iter().filter_map(slot_vars).collect(),
            Step::Guard { lhs, rhs, .. } => [lhs, rhs].into_iter().filter_map(slot_vars).collect(),
        }
    };

    let mut bound = vec![false; vars.len()];
    let mut steps = Vec::new();
    let mut pending: Vec<Option<Step<'d>>> = filters.into_iter().map(Some).collect();
    let mut gens: Vec<Option<PlanAtom<'d>>> = gens.into_iter().map(Some).collect();
    loop {
        for f in pending.iter_mut() {
            if let Some(step) = f {
                if step_vars(step).iter().all(|&v| bound[v]) {
                    steps.push(f.take().unwrap());
                }
            }
        }
        let best = gens
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (i, g)))
            .max_by_key(|(i, g)| {
                let nb = g.slots.iter().filter(|s| slot_vars(s).is_none_or(|v| bound[v])).count();
                (nb, !g.open, std::cmp::Reverse(*i))
            })
            .map(|(i, _)| i);
        let Some(i) = best else { break };
        let g = gens[i].take().unwrap();
        for s in &g.slots {
            if let Some(v) = slot_vars(s) {
                bound[v] = true;
            }
        }
        steps.push(Step::Generate(g));
    }
    debug_assert!(pending.iter().all(Option::is_none), "validated rules have safe variables");
    Plan { vars, steps }
}

fn enumerate(plan: &Plan, cap: usize) -> Result<Vec<Vec<Sym>>, GroundError> {
    let mut out = Vec::new();
    let mut binding: Vec<Option<Sym>> = vec![None; plan.vars.len()];
    fn resolve(s: &Slot, b: &[Option<Sym>]) -> Option<Option<Sym>> {
        match s {
            Slot::Const(c) => Some(*c),
            Slot::Var(i) => b[*i].map(Some),
        }
    }
    fn rec(
        plan: &Plan,
        depth: usize,
        binding: &mut Vec<Option<Sym>>,
        out: &mut Vec<Vec<Sym>>,
        cap: usize,
    ) -> Result<(), GroundError> {
        let Some(step) = plan.steps.get(depth) else {
            if out.len() >= cap {
                return Err(GroundError::GroundingExplosion { what: "groundings", count: out.len() + 1, cap });
            }
            out.push(binding.iter().map(|s| s.expect("all variables bound")).collect());
            return Ok(());
        };
        match step {
            Step::Guard { lhs, rhs, equal } => {
                let a = resolve(lhs, binding).expect("bound");
                let b = resolve(rhs, binding).expect("bound");
                let eq = a.is_some() && a == b;
                if eq == *equal {
                    rec(plan, depth + 1, binding, out, cap)?;
                }
            }
            Step::FilterAbsent(p) => {
                let row: Option<Vec<Sym>> = p.slots.iter().map(|s| resolve(s, binding).expect("bound")).collect();
                let present = match (row, p.table) {
                    (Some(r), Some(t)) => t.contains(&r),
                    _ => false,
                };
                if !present {
                    rec(plan, depth + 1, binding, out, cap)?;
                }
            }
            Step::Generate(p) => {
                let Some(table) = p.table else { return Ok(()) };
                let mut pattern = Vec::with_capacity(p.slots.len());
                for s in &p.slots {
                    match s {
                        Slot::Const(None) => return Ok(()),
                        Slot::Const(Some(c)) => pattern.push(Some(*c)),
                        Slot::Var(i) => pattern.push(binding[*i]),
                    }
                }
                let rows: Vec<&[Sym]> = table.matching(&pattern).collect();
                for row in rows {
                    let mut newly = Vec::new();
                    let mut ok = true;
                    for (s, v) in p.slots.iter().zip(row) {
                        if let Slot::Var(i) = s {
                            match binding[*i] {
                                Some(b) if b != *v => {
                                    ok = false;
                                    break;
                                }
                                Some(_) => {}
                                None => {
                                    binding[*i] = Some(*v);
                                    newly.push(*i);
                                }
                            }
                        }
                    }
                    if ok {
                        rec(plan, depth + 1, binding, out, cap)?;
                    }
                    for i in newly {
                        binding[i] = None;
                    }
                }
            }
        }
        Ok(())
    }
    rec(plan, 0, &mut binding, &mut out, cap)?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn row_of(atom: &crate::dsl::Atom, vars: &[String], binding: &[Sym], data: &Datastore) -> Option<Vec<Sym>> {
    atom.args
        .iter()
        .map(|t| match t {
            Term::Const(c) => data.sym(c),
            Term::Var(v) | Term::SumVar(v) => vars.iter().position(|x| x == v).map(|i| binding[i]),
        })
        .collect()
}

fn ground_template(
    program: &CheckedProgram,
    data: &Datastore,
    index: &AtomIndex,
    template: &RuleTemplate,
    template_index: usize,
    cap: usize,
) -> Result<Vec<GroundRule>, GroundError> {
    let head = template.head_atom();
    let extra = [head];
    let plan = plan(program, data, &template.body, &extra);
    let bindings = enumerate(&plan, cap)?;

    let label_slot = template.label_position.map(|pos| match &head.args[pos] {
        Term::Var(v) => plan.vars.iter().position(|x| x == v).expect("head var planned"),
        _ => unreachable!("label position holds a variable"),
    });
    let label_type = template.label_position.map(|pos| program.predicates[&head.predicate].arg_types[pos].clone());

    let mut rules = Vec::new();
    let mut groups: BTreeMap<Vec<Sym>, Vec<(usize, VarId)>> = BTreeMap::new();
    let mut group_rule: BTreeMap<Vec<Sym>, GroundRule> = BTreeMap::new();

    for b in &bindings {
        let mut body_pos = Vec::new();
        let mut body_neg = Vec::new();
        let mut body_atoms = Vec::new();
        for lit in &template.body {
            if let Literal::Atom { atom, negated } = lit {
                let row = row_of(atom, &plan.vars, b, data).expect("generated atoms are ground");
                if program.predicates[&atom.predicate].open {
                    let v = index.var(&atom.predicate, &row).expect("open atoms generated from candidates");
                    if *negated {
                        body_pos.push(v);
                    } else {
                        body_neg.push(v);
                    }
                }
                body_atoms.push(GroundAtom { predicate: atom.predicate.clone(), args: row });
            }
        }
        body_pos.sort_unstable();
        body_pos.dedup();
        body_neg.sort_unstable();
        body_neg.dedup();
        if body_pos.iter().any(|v| body_neg.binary_search(v).is_ok()) {
            continue;
        }
        let head_row = row_of(head, &plan.vars, b, data).expect("head generated from candidates");
        let head_var = index.var(&head.predicate, &head_row).expect("head is a candidate");
        if body_pos.contains(&head_var) || body_neg.contains(&head_var) {
            continue;
        }
        let mut head_args: Vec<Option<Sym>> = head_row.iter().copied().map(Some).collect();
        match (label_slot, template.label_position) {
            (Some(slot), Some(pos)) => {
                head_args[pos] = None;
                let key: Vec<Sym> =
                    b.iter().enumerate().filter(|(i, _)| *i != slot).map(|(_, s)| *s).collect();
                let class = data
                    .vocab_index(label_type.as_deref().unwrap(), b[slot])
                    .expect("symbolic constants have a vocabulary index");
                groups.entry(key.clone()).or_default().push((class, head_var));
                group_rule.entry(key).or_insert_with(|| GroundRule {
                    template_id: template.template_id.clone(),
                    template_index,
                    body_pos,
                    body_neg,
                    head: Head::Multiclass(Vec::new()),
                    body_atoms,
                    head_args,
                    head_predicate: head.predicate.clone(),
                });
            }
            _ => rules.push(GroundRule {
                template_id: template.template_id.clone(),
                template_index,
                body_pos,
                body_neg,
                head: Head::Binary(head_var),
                body_atoms,
                head_args,
                head_predicate: head.predicate.clone(),
            }),
        }
    }
    for (key, mut rule) in group_rule {
        let mut classes = groups.remove(&key).unwrap_or_default();
        classes.sort_unstable_by_key(|c| c.0);
        rule.head = Head::Multiclass(classes.into_iter().map(|(c, v)| (v, c)).collect());
        rules.push(rule);
    }
    Ok(rules)
}

fn ground_logical_constraint(
    program: &CheckedProgram,
    data: &Datastore,
    index: &AtomIndex,
    rule: &RuleTemplate,
    cap: usize,
) -> Result<Vec<LinearConstraint>, GroundError> {
    let literals: Vec<Literal> = rule.body.iter().cloned().chain(std::iter::once(rule.head.clone())).collect();
    let plan = plan(program, data, &literals, &[]);
    let bindings = enumerate(&plan, cap)?;
    let mut out = Vec::new();
    for b in &bindings {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, lit) in literals.iter().enumerate() {
            let Literal::Atom { atom, negated } = lit else { continue };
            if !program.predicates[&atom.predicate].open {
                continue;
            }
            let row = row_of(atom, &plan.vars, b, data).expect("ground");
            let v = index.var(&atom.predicate, &row).expect("open atoms generated from candidates");
            // Body literals flip polarity in the clause; the head keeps it.
            let positive_in_clause = if i + 1 == literals.len() { !negated } else { *negated };
            if positive_in_clause {
                pos.push(v);
            } else {
                neg.push(v);
            }
        }
        pos.sort_unstable();
        pos.dedup();
        neg.sort_unstable();
        neg.dedup();
        if pos.iter().any(|v| neg.binary_search(v).is_ok()) {
            continue;
        }
        out.push(rule_to_inequality(&pos, &neg, &rule.template_id));
    }
    Ok(out)
}

/// Expands summation atoms: one constraint per binding of the non-summed
/// variables, each summation atom replaced by the sum over its candidates.
/// Closed atoms contribute their truth value to the right-hand side.
pub fn expand_summation(
    program: &CheckedProgram,
    data: &Datastore,
    constraint: &ArithmeticConstraint,
) -> Result<Vec<LinearConstraint>, GroundError> {
    let index = AtomIndex::new(program, data);
    expand_with_index(program, data, &index, constraint)
}

fn expand_with_index(
    program: &CheckedProgram,
    data: &Datastore,
    index: &AtomIndex,
    constraint: &ArithmeticConstraint,
) -> Result<Vec<LinearConstraint>, GroundError> {
    let group_vars = constraint.group_vars();
    let zero = Rational64::from_integer(0);
    type Group = (BTreeMap<VarId, Rational64>, Rational64);
    let mut groups: BTreeMap<Vec<Sym>, Group> = BTreeMap::new();
    if group_vars.is_empty() {
        groups.insert(Vec::new(), (BTreeMap::new(), zero));
    }
    for (coef, atom) in &constraint.terms {
        let Some(table) = data.table(&atom.predicate) else { continue };
        let mut pattern = Vec::new();
        let mut unknown_const = false;
        for t in &atom.args {
            match t {
                Term::Const(c) => match data.sym(c) {
                    Some(s) => pattern.push(Some(s)),
                    None => unknown_const = true,
                },
                _ => pattern.push(None),
            }
        }
        if unknown_const {
            continue;
        }
        let open = program.predicates[&atom.predicate].open;
        'rows: for row in table.matching(&pattern) {
            let mut seen: BTreeMap<&str, Sym> = BTreeMap::new();
            for (t, s) in atom.args.iter().zip(row) {
                if let Some(v) = t.var_name() {
                    if let Some(prev) = seen.insert(v, *s) {
                        if prev != *s {
                            continue 'rows;
                        }
                    }
                }
            }
            let key: Vec<Sym> = group_vars.iter().map(|g| seen[g.as_str()]).collect();
            let entry = groups.entry(key).or_insert_with(|| (BTreeMap::new(), zero));
            if open {
                let v = index.var(&atom.predicate, row).expect("row of an open table");
                *entry.0.entry(v).or_insert(zero) += *coef;
            } else {
                entry.1 += *coef;
            }
        }
    }
    let mut out = Vec::new();
    for (_, (mut coeffs, constant)) in groups {
        coeffs.retain(|_, c| *c != zero);
        let rhs = constraint.rhs - constant;
        if coeffs.is_empty() {
            let holds = match constraint.comparator {
                Comparator::Le => zero <= rhs,
                Comparator::Ge => zero >= rhs,
                Comparator::Eq => zero == rhs,
            };
            if holds {
                continue;
            }
            return Err(GroundError::InfeasibleConstant {
                origin: constraint.id.clone(),
                comparator: constraint.comparator,
                rhs,
            });
        }
        out.push(LinearConstraint { coeffs, comparator: constraint.comparator, rhs, origin: constraint.id.clone() });
    }
    Ok(out)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Grounds the whole program; one factor graph per connected component,
/// ordered by their smallest atom.
pub fn ground(program: &CheckedProgram, data: &Datastore) -> Result<Vec<FactorGraph>, GroundError> {
    ground_with(program, data, GroundConfig::default())
}

pub fn ground_with(
    program: &CheckedProgram,
    data: &Datastore,
    config: GroundConfig,
) -> Result<Vec<FactorGraph>, GroundError> {
    let index = AtomIndex::new(program, data);
    if index.total > config.variable_cap {
        return Err(GroundError::GroundingExplosion {
            what: "variables",
            count: index.total,
            cap: config.variable_cap,
        });
    }
    if index.total == 0 {
        return Ok(Vec::new());
    }
    let cap = config.variable_cap;
    let rules: Vec<Vec<GroundRule>> = program
        .templates
        .par_iter()
        .enumerate()
        .map(|(i, t)| ground_template(program, data, &index, t, i, cap))
        .collect::<Result<_, _>>()?;
    let constraints: Vec<Vec<LinearConstraint>> = program
        .constraints
        .par_iter()
        .map(|c| match c {
            Constraint::Logical(r) => ground_logical_constraint(program, data, &index, r, cap),
            Constraint::Arith(a) => expand_with_index(program, data, &index, a),
        })
        .collect::<Result<_, _>>()?;

    let variables = index.variables();
    let rules: Vec<GroundRule> = rules.into_iter().flatten().collect();
    let constraints: Vec<LinearConstraint> = constraints.into_iter().flatten().collect();

    let mut uf = UnionFind((0..variables.len()).collect());
    for r in &rules {
        let vs: Vec<VarId> = r.vars().collect();
        for w in vs.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    for c in &constraints {
        let vs: Vec<VarId> = c.coeffs.keys().copied().collect();
        for w in vs.windows(2) {
            uf.union(w[0], w[1]);
        }
    }

    // Roots are component minima, so sorting by root orders by smallest atom.
    let mut comp_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let comp: Vec<usize> = (0..variables.len())
        .map(|v| {
            let r = uf.find(v);
            let next = comp_of_root.len();
            *comp_of_root.entry(r).or_insert(next)
        })
        .collect();
    let mut graphs: Vec<FactorGraph> = (0..comp_of_root.len())
        .map(|i| FactorGraph { instance_id: i, variables: Vec::new(), potentials: Vec::new(), constraints: Vec::new() })
        .collect();
    let mut local: HashMap<VarId, VarId> = HashMap::with_capacity(variables.len());
    for mut v in variables {
        let g = &mut graphs[comp[v.id]];
        local.insert(v.id, g.variables.len());
        v.id = g.variables.len();
        g.variables.push(v);
    }
    for mut r in rules {
        let g = comp[r.head_vars()[0]];
        r.remap(&local);
        graphs[g].potentials.push(r);
    }
    for c in constraints {
        let g = comp[*c.coeffs.keys().next().expect("non-empty")];
        let coeffs = c.coeffs.into_iter().map(|(v, k)| (local[&v], k)).collect();
        graphs[g].constraints.push(LinearConstraint { coeffs, ..c });
    }
    Ok(graphs)
}
