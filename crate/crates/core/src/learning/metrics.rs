use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

use serde::Serialize;

use crate::datastore::Sym;
use crate::dsl::CheckedProgram;
use crate::grounder::FactorGraph;

use super::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationMetrics {
    pub relation: String,
    /// Scored decisions: atoms for binary relations, argument groups for
    /// multiclass ones.
    pub support: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// F1 of the true class; `None` for multiclass relations.
    pub positive_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub relations: Vec<RelationMetrics>,
    /// Micro accuracy over every scored decision.
    pub accuracy: f64,
    /// Mean of the per-relation macro-F1.
    pub macro_f1: f64,
    /// Mean positive F1 over binary relations.
    pub positive_f1: Option<f64>,
}

/// Head predicates of multiclass templates, with their class position.
pub fn multiclass_positions(program: &CheckedProgram) -> BTreeMap<String, usize> {
    program
        .templates
        .iter()
        .filter_map(|t| t.label_position.map(|p| (t.head_atom().predicate.clone(), p)))
        .collect()
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let d = 2 * tp + fp + fn_;
    if d == 0 {
        1.0
    } else {
        2.0 * tp as f64 / d as f64
    }
}

/// Accuracy and macro-F1 over the classes seen in gold or prediction.
pub fn classification_scores<C: Ord + Clone + Hash>(pairs: &[(C, C)]) -> (f64, f64) {
    if pairs.is_empty() {
        return (1.0, 1.0);
    }
    let correct = pairs.iter().filter(|(p, g)| p == g).count();
    let classes: BTreeSet<&C> = pairs.iter().flat_map(|(p, g)| [p, g]).collect();
    let mut total = 0.0;
    for c in &classes {
        let tp = pairs.iter().filter(|(p, g)| p == *c && g == *c).count();
        let fp = pairs.iter().filter(|(p, g)| p == *c && g != *c).count();
        let fn_ = pairs.iter().filter(|(p, g)| p != *c && g == *c).count();
        total += f1(tp, fp, fn_);
    }
    (correct as f64 / pairs.len() as f64, total / classes.len() as f64)
}

/// Per-relation accuracy, macro-F1 and positive F1 of `pred` against
/// `gold`, both given per graph in variable order.
pub fn evaluate(
    graphs: &[FactorGraph],
    pred: &[Vec<bool>],
    gold: &[Vec<bool>],
    multiclass: &BTreeMap<String, usize>,
) -> Result<Metrics, LearnError> {
    if pred.len() != graphs.len() || gold.len() != graphs.len() {
        return Err(LearnError::Alignment(format!(
            "{} graphs, {} predictions, {} gold assignments",
            graphs.len(),
            pred.len(),
            gold.len()
        )));
    }
    let mut binary: BTreeMap<&str, Vec<(bool, bool)>> = BTreeMap::new();
    // (graph, arguments without the class) -> (predicted classes, gold classes)
    type Groups = BTreeMap<(usize, Vec<Sym>), (Vec<Sym>, Vec<Sym>)>;
    let mut groups: BTreeMap<&str, Groups> = BTreeMap::new();
    for (gi, ((g, p), y)) in graphs.iter().zip(pred).zip(gold).enumerate() {
        if p.len() != g.num_vars() || y.len() != g.num_vars() {
            return Err(LearnError::Alignment(format!(
                "graph {}: {} variables, {} predicted, {} gold",
                g.instance_id,
                g.num_vars(),
                p.len(),
                y.len()
            )));
        }
        for v in &g.variables {
            let rel = v.atom.predicate.as_str();
            match multiclass.get(rel) {
                Some(&pos) if pos < v.atom.args.len() => {
                    let mut key = v.atom.args.clone();
                    let class = key.remove(pos);
                    let entry = groups.entry(rel).or_default().entry((gi, key)).or_default();
                    if p[v.id] {
                        entry.0.push(class);
                    }
                    if y[v.id] {
                        entry.1.push(class);
                    }
                }
                _ => binary.entry(rel).or_default().push((p[v.id], y[v.id])),
            }
        }
    }

    let mut relations = Vec::new();
    let mut correct = 0.0;
    let mut support = 0;
    for (rel, pairs) in binary {
        let (accuracy, macro_f1) = classification_scores(&pairs);
        let tp = pairs.iter().filter(|(p, g)| *p && *g).count();
        let fp = pairs.iter().filter(|(p, g)| *p && !*g).count();
        let fn_ = pairs.iter().filter(|(p, g)| !*p && *g).count();
        correct += accuracy * pairs.len() as f64;
        support += pairs.len();
        relations.push(RelationMetrics {
            relation: rel.to_string(),
            support: pairs.len(),
            accuracy,
            macro_f1,
            positive_f1: Some(f1(tp, fp, fn_)),
        });
    }
    for (rel, by_key) in groups {
        let one = |v: Vec<Sym>| if v.len() == 1 { Some(v[0]) } else { None };
        let pairs: Vec<(Option<Sym>, Option<Sym>)> = by_key.into_values().map(|(p, g)| (one(p), one(g))).collect();
        let (accuracy, macro_f1) = classification_scores(&pairs);
        correct += accuracy * pairs.len() as f64;
        support += pairs.len();
        relations.push(RelationMetrics { relation: rel.to_string(), support: pairs.len(), accuracy, macro_f1, positive_f1: None });
    }
    relations.sort_by(|a, b| a.relation.cmp(&b.relation));

    let n = relations.len().max(1) as f64;
    let pos: Vec<f64> = relations.iter().filter_map(|r| r.positive_f1).collect();
    Ok(Metrics {
        accuracy: if support == 0 { 1.0 } else { correct / support as f64 },
        macro_f1: relations.iter().map(|r| r.macro_f1).sum::<f64>() / n,
        positive_f1: (!pos.is_empty()).then(|| pos.iter().sum::<f64>() / pos.len() as f64),
        relations,
    })
}
