use crate::autodiff::{NodeId, Tape, Tensor};
use crate::grounder::FactorGraph;
use crate::inference::{Objective, SolutionPool, Solver};
use crate::relnets::Forward;

use super::LearnError;

/// `Σ_r w_r · ψ_r(values)` as a tape scalar, where `scores[r]` is the score
/// node of potential `r`.
pub fn structure_score(
    tape: &mut Tape,
    graph: &FactorGraph,
    scores: &[NodeId],
    values: &[bool],
) -> Result<NodeId, LearnError> {
    let mut terms = Vec::with_capacity(scores.len());
    for (rule, &node) in graph.potentials.iter().zip(scores) {
        let psi = tape.constant(Tensor::vector(rule.satisfaction(values)));
        terms.push(tape.dot(node, psi)?);
    }
    if terms.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let s = tape.stack(&terms)?;
    Ok(tape.sum(s)?)
}

/// Head label of every potential under `gold`.
pub fn gold_labels(graph: &FactorGraph, gold: &[bool]) -> Result<Vec<usize>, LearnError> {
    graph
        .potentials
        .iter()
        .map(|r| {
            r.label_of(gold)
                .ok_or_else(|| LearnError::MissingGold { graph: graph.instance_id, variable: r.head_vars()[0] })
        })
        .collect()
}

/// Summed cross-entropy of every potential against its gold head label.
pub fn local_loss(fwd: &mut Forward<'_>, graph: &FactorGraph, gold: &[bool]) -> Result<NodeId, LearnError> {
    let labels = gold_labels(graph, gold)?;
    let nodes = fwd.score_graph(graph)?;
    let mut terms = Vec::with_capacity(nodes.len());
    for (node, label) in nodes.into_iter().zip(labels) {
        terms.push(fwd.tape.cross_entropy_logits(node, label)?);
    }
    if terms.is_empty() {
        return Ok(fwd.tape.constant(Tensor::scalar(0.0)));
    }
    let s = fwd.tape.stack(&terms)?;
    Ok(fwd.tape.sum(s)?)
}

fn hamming(a: &[bool], b: &[bool]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64
}

/// `Δ(ŷ, gold) + S(ŷ) − S(gold)` for a fixed `ŷ`.
pub fn hinge_at(
    tape: &mut Tape,
    graph: &FactorGraph,
    scores: &[NodeId],
    gold: &[bool],
    yhat: &[bool],
) -> Result<NodeId, LearnError> {
    let mut terms = Vec::with_capacity(scores.len() + 1);
    terms.push(tape.constant(Tensor::scalar(hamming(yhat, gold))));
    for (rule, &node) in graph.potentials.iter().zip(scores) {
        let diff: Vec<f64> =
            rule.satisfaction(yhat).iter().zip(rule.satisfaction(gold)).map(|(a, b)| a - b).collect();
        let d = tape.constant(Tensor::vector(diff));
        terms.push(tape.dot(node, d)?);
    }
    let s = tape.stack(&terms)?;
    Ok(tape.sum(s)?)
}

/// Structured hinge for one graph: the loss value, and the loss node when
/// the margin is violated.
pub fn hinge_loss(
    fwd: &mut Forward<'_>,
    graph: &FactorGraph,
    gold: &[bool],
    solver: Solver,
) -> Result<(f64, Option<NodeId>), LearnError> {
    let nodes = fwd.score_graph(graph)?;
    let obj = Objective::new(graph, &fwd.values(&nodes))?;
    if !obj.is_feasible(gold) {
        return Err(LearnError::GoldInfeasible { graph: graph.instance_id });
    }
    let gold_score = obj.evaluate(gold);
    let yhat = obj.with_hamming(gold).solve(solver)?;
    if yhat.score - gold_score <= 0.0 {
        return Ok((0.0, None));
    }
    let node = hinge_at(&mut fwd.tape, graph, &nodes, gold, &yhat.values)?;
    let value = fwd.tape.scalar(node);
    if value <= 0.0 {
        return Ok((0.0, None));
    }
    Ok((value, Some(node)))
}

/// A gold-inclusive solution pool and the log-partition it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEstimate {
    pub pool: SolutionPool,
    pub log_z: f64,
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Top-`beta` assignments of `obj` plus the gold one if missing.
pub fn partition_estimate(obj: &Objective, gold: &[bool], beta: usize, cap: usize) -> Result<PartitionEstimate, LearnError> {
    let mut pool = obj.k_best(beta, cap)?;
    if !pool.iter().any(|a| a.values == gold) {
        pool.push(crate::inference::Assignment { values: gold.to_vec(), score: obj.evaluate(gold) });
    }
    let scores: Vec<f64> = pool.iter().map(|a| a.score).collect();
    Ok(PartitionEstimate { log_z: logsumexp(&scores), pool })
}

/// `log Σ_{y ∈ pool} exp S(y) − S(gold)` for a fixed pool.
pub fn crf_at(
    tape: &mut Tape,
    graph: &FactorGraph,
    scores: &[NodeId],
    gold: &[bool],
    pool: &[Vec<bool>],
) -> Result<NodeId, LearnError> {
    let mut members = Vec::with_capacity(pool.len());
    for y in pool {
        members.push(structure_score(tape, graph, scores, y)?);
    }
    let stacked = tape.stack(&members)?;
    let lz = tape.logsumexp(stacked)?;
    let g = structure_score(tape, graph, scores, gold)?;
    Ok(tape.sub(lz, g)?)
}

/// Pooled CRF loss for one graph with a pool of size `beta`.
pub fn crf_loss(
    fwd: &mut Forward<'_>,
    graph: &FactorGraph,
    gold: &[bool],
    beta: usize,
    cap: usize,
) -> Result<(PartitionEstimate, NodeId), LearnError> {
    let nodes = fwd.score_graph(graph)?;
    let obj = Objective::new(graph, &fwd.values(&nodes))?;
    if !obj.is_feasible(gold) {
        return Err(LearnError::GoldInfeasible { graph: graph.instance_id });
    }
    let est = partition_estimate(&obj, gold, beta, cap)?;
    let pool: Vec<Vec<bool>> = est.pool.iter().map(|a| a.values.clone()).collect();
    let node = crf_at(&mut fwd.tape, graph, &nodes, gold, &pool)?;
    Ok((est, node))
}
