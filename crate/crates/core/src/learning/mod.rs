//! Training regimes and evaluation.
//!
//! `local` and `joint` share the same training, per-rule cross-entropy,
//! and both predict by MAP inference over log-softmax scores under the
//! hard constraints. The two global modes train through inference with a
//! structured hinge or a pooled CRF likelihood and predict with MAP over
//! raw scores. [`predict_local`] gives the unconstrained per-factor
//! baseline, which is scored but never emitted as an assignment.

mod losses;
mod metrics;
mod split;

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{read_checkpoint, AutodiffError, Gradients, Optimizer, OptimizerConfig, ParamStore};
use crate::datastore::Datastore;
use crate::grounder::{FactorGraph, Head};
use crate::inference::{Assignment, InferenceError, Objective, ScoreTable, Solver, DEFAULT_EXACT_CAP};
use crate::relnets::{score_graph, Forward, RelnetsError, ScorerGraph};
use crate::seeds::SeedStream;

pub use losses::{
    crf_at, crf_loss, gold_labels, hinge_at, hinge_loss, local_loss, partition_estimate, structure_score,
    PartitionEstimate,
};
pub use metrics::{classification_scores, evaluate, multiclass_positions, Metrics, RelationMetrics};
pub use split::{splits, Split};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("graph {graph}: variable {variable} has no gold value")]
    MissingGold { graph: usize, variable: usize },
    #[error("graph {graph}: gold assignment violates a hard constraint")]
    GoldInfeasible { graph: usize },
    #[error("misaligned assignments: {0}")]
    Alignment(String),
    #[error("training config: {0}")]
    Config(String),
    #[error(transparent)]
    Relnets(#[from] RelnetsError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Local,
    Joint,
    GlobalHinge,
    GlobalCrf,
}

impl Mode {
    pub fn is_global(self) -> bool {
        matches!(self, Mode::GlobalHinge | Mode::GlobalCrf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Local => "local",
            Mode::Joint => "joint",
            Mode::GlobalHinge => "global-hinge",
            Mode::GlobalCrf => "global-crf",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::Local, Mode::Joint, Mode::GlobalHinge, Mode::GlobalCrf]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| LearnError::Config(format!("unknown mode {:?}", s)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Solution pool size β, global-crf only.
    pub pool: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub solver: Solver,
    /// Graphs per optimizer step.
    pub batch: usize,
    /// Global modes only: update rule scorers but not encoders.
    pub freeze_encoders: bool,
    /// Global modes start from this checkpoint; without one they first
    /// train locally.
    pub warm_start: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Local,
            epochs: 20,
            patience: 5,
            pool: None,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            solver: Solver::default(),
            batch: 1,
            freeze_encoders: false,
            warm_start: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        match (self.mode, self.pool) {
            (Mode::GlobalCrf, None) => return Err(LearnError::Config("global-crf needs a pool size".into())),
            (Mode::GlobalCrf, Some(0)) => return Err(LearnError::Config("pool size must be at least 1".into())),
            (Mode::GlobalCrf, _) | (_, None) => {}
            (m, Some(_)) => return Err(LearnError::Config(format!("pool size given for mode {}", m))),
        }
        if self.batch == 0 {
            return Err(LearnError::Config("batch must be at least 1".into()));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(LearnError::Config(format!("learning rate {} is not positive", self.optimizer.lr)));
        }
        Ok(())
    }

    fn cap(&self) -> usize {
        match self.solver {
            Solver::Exact { cap } => cap,
            Solver::Approx { .. } => DEFAULT_EXACT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Higher is better: negated dev loss for local training, dev accuracy
    /// for global training.
    pub dev_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Gold assignment of every graph.
pub fn golds(graphs: &[FactorGraph]) -> Result<Vec<Vec<bool>>, LearnError> {
    graphs
        .iter()
        .map(|g| {
            g.variables
                .iter()
                .map(|v| v.gold.ok_or(LearnError::MissingGold { graph: g.instance_id, variable: v.id }))
                .collect()
        })
        .collect()
}

type StepFn<'a> = dyn Fn(&ScorerGraph, &FactorGraph, &[bool]) -> Result<(f64, Option<Gradients>), LearnError> + Sync + 'a;
type DevFn<'a> = dyn Fn(&ScorerGraph) -> Result<f64, LearnError> + 'a;

fn run_epochs(
    scorers: &mut ScorerGraph,
    train: &[FactorGraph],
    has_dev: bool,
    config: &TrainConfig,
    step: &StepFn<'_>,
    dev_score: &DevFn<'_>,
    frozen: bool,
) -> Result<TrainReport, LearnError> {
    let gold = golds(train)?;
    let mut opt = Optimizer::new(config.optimizer);
    let mut rng = SeedStream::new(config.seed).rng(&format!("shuffle.{}", config.mode));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let snapshot = &*scorers;
            let results: Vec<(f64, Option<Gradients>)> =
                chunk.par_iter().map(|&i| step(snapshot, &train[i], &gold[i])).collect::<Result<_, _>>()?;
            let mut grads = Gradients::default();
            for (loss, g) in &results {
                total += loss;
                if let Some(g) = g {
                    grads.merge(g);
                }
            }
            grads.accumulate_into(&mut scorers.store);
            if frozen {
                let enc = scorers.encoder_params().clone();
                opt.step_filtered(&mut scorers.store, |id| !enc.contains(&id));
            } else {
                opt.step(&mut scorers.store);
            }
        }
        let dev = if has_dev { Some(dev_score(scorers)?) } else { None };
        debug!("{} epoch {}: train loss {:.6}, dev {:?}", config.mode, epoch, total, dev);
        history.push(EpochStats { epoch, train_loss: total, dev_score: dev });
        let current = dev.unwrap_or(-total);
        if best.as_ref().is_none_or(|b| current > b.0) {
            best = Some((current, epoch, scorers.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, store)) => {
            scorers.store = store;
            epoch
        }
        None => 0,
    };
    info!("{}: {} epochs, best at {}", config.mode, history.len(), best_epoch);
    Ok(TrainReport { mode: config.mode, epochs_run: history.len(), best_epoch, history })
}

fn backward(fwd: &Forward<'_>, node: crate::autodiff::NodeId) -> Result<(f64, Option<Gradients>), LearnError> {
    Ok((fwd.tape.scalar(node), Some(fwd.tape.backward(node)?)))
}

/// Mean per-graph cross-entropy over `graphs`.
pub fn mean_local_loss(scorers: &ScorerGraph, data: &Datastore, graphs: &[FactorGraph]) -> Result<f64, LearnError> {
    let gold = golds(graphs)?;
    let losses: Vec<f64> = graphs
        .par_iter()
        .zip(&gold)
        .map(|(g, y)| {
            let mut fwd = Forward::new(scorers, data);
            let n = local_loss(&mut fwd, g, y)?;
            Ok(fwd.tape.scalar(n))
        })
        .collect::<Result<_, LearnError>>()?;
    Ok(losses.iter().sum::<f64>() / graphs.len().max(1) as f64)
}

/// Per-rule cross-entropy training with early stopping on dev loss.
pub fn train_local(
    scorers: &mut ScorerGraph,
    data: &Datastore,
    train: &[FactorGraph],
    dev: &[FactorGraph],
    config: &TrainConfig,
) -> Result<TrainReport, LearnError> {
    golds(dev)?;
    let step = |s: &ScorerGraph, g: &FactorGraph, y: &[bool]| {
        let mut fwd = Forward::new(s, data);
        let n = local_loss(&mut fwd, g, y)?;
        backward(&fwd, n)
    };
    let dev_score = |s: &ScorerGraph| Ok(-mean_local_loss(s, data, dev)?);
    run_epochs(scorers, train, !dev.is_empty(), config, &step, &dev_score, false)
}

fn structured_accuracy(
    scorers: &ScorerGraph,
    data: &Datastore,
    graphs: &[FactorGraph],
    solver: Solver,
) -> Result<f64, LearnError> {
    let pred = predict_global(scorers, data, graphs, solver)?;
    let gold = golds(graphs)?;
    let (mut right, mut total) = (0usize, 0usize);
    for (p, y) in pred.iter().zip(&gold) {
        right += p.values.iter().zip(y).filter(|(a, b)| a == b).count();
        total += y.len();
    }
    Ok(if total == 0 { 1.0 } else { right as f64 / total as f64 })
}

/// Structured hinge training, one graph per step, with early stopping on
/// dev accuracy.
pub fn train_global_hinge(
    scorers: &mut ScorerGraph,
    data: &Datastore,
    train: &[FactorGraph],
    dev: &[FactorGraph],
    config: &TrainConfig,
) -> Result<TrainReport, LearnError> {
    let solver = config.solver;
    let step = |s: &ScorerGraph, g: &FactorGraph, y: &[bool]| {
        let mut fwd = Forward::new(s, data);
        match hinge_loss(&mut fwd, g, y, solver)? {
            (_, Some(n)) => backward(&fwd, n),
            (v, None) => Ok((v, None)),
        }
    };
    let dev_score = |s: &ScorerGraph| structured_accuracy(s, data, dev, solver);
    run_epochs(scorers, train, !dev.is_empty(), config, &step, &dev_score, config.freeze_encoders)
}

/// Pooled CRF training with a gold-inclusive pool of `config.pool`
/// assignments per graph.
pub fn train_global_crf(
    scorers: &mut ScorerGraph,
    data: &Datastore,
    train: &[FactorGraph],
    dev: &[FactorGraph],
    config: &TrainConfig,
) -> Result<TrainReport, LearnError> {
    let beta = config.pool.ok_or_else(|| LearnError::Config("global-crf needs a pool size".into()))?;
    let cap = config.cap();
    let solver = config.solver;
    let step = |s: &ScorerGraph, g: &FactorGraph, y: &[bool]| {
        let mut fwd = Forward::new(s, data);
        let (_, n) = crf_loss(&mut fwd, g, y, beta, cap)?;
        backward(&fwd, n)
    };
    let dev_score = |s: &ScorerGraph| structured_accuracy(s, data, dev, solver);
    run_epochs(scorers, train, !dev.is_empty(), config, &step, &dev_score, config.freeze_encoders)
}

/// Trains in `config.mode`. Global modes load the warm-start checkpoint
/// when one is configured and otherwise train locally first; both reports
/// are returned in that case.
pub fn train(
    scorers: &mut ScorerGraph,
    data: &Datastore,
    train: &[FactorGraph],
    dev: &[FactorGraph],
    config: &TrainConfig,
) -> Result<Vec<TrainReport>, LearnError> {
    config.validate()?;
    let mut reports = Vec::new();
    if config.mode.is_global() {
        match &config.warm_start {
            Some(path) => {
                let store = read_checkpoint(path)?;
                scorers.load_params(&store)?;
            }
            None => {
                let local = TrainConfig { mode: Mode::Local, pool: None, ..config.clone() };
                reports.push(train_local(scorers, data, train, dev, &local)?);
            }
        }
    }
    reports.push(match config.mode {
        Mode::Local | Mode::Joint => train_local(scorers, data, train, dev, config)?,
        Mode::GlobalHinge => train_global_hinge(scorers, data, train, dev, config)?,
        Mode::GlobalCrf => train_global_crf(scorers, data, train, dev, config)?,
    });
    Ok(reports)
}

fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

/// Log-softmax of every score table.
pub fn normalize(tables: &[ScoreTable]) -> Vec<ScoreTable> {
    tables.iter().map(|t| log_softmax(t)).collect()
}

/// MAP inference over locally normalized scores.
pub fn predict_joint(
    scorers: &ScorerGraph,
    data: &Datastore,
    graphs: &[FactorGraph],
    solver: Solver,
) -> Result<Vec<Assignment>, LearnError> {
    graphs
        .par_iter()
        .map(|g| {
            let scores = normalize(&score_graph(scorers, g, data)?);
            Ok(Objective::new(g, &scores)?.solve(solver)?)
        })
        .collect()
}

/// MAP inference over raw scores.
pub fn predict_global(
    scorers: &ScorerGraph,
    data: &Datastore,
    graphs: &[FactorGraph],
    solver: Solver,
) -> Result<Vec<Assignment>, LearnError> {
    graphs
        .par_iter()
        .map(|g| Ok(Objective::new(g, &score_graph(scorers, g, data)?)?.solve(solver)?))
        .collect()
}

/// Each decision from the factors whose head it is, ignoring bodies and
/// hard constraints. Binary atoms sum the log-odds of every factor that
/// heads them; multiclass groups sum log-probabilities per class. Atoms
/// that head no factor are predicted false. The result may be infeasible.
pub fn local_argmax(graph: &FactorGraph, scores: &[ScoreTable]) -> Vec<bool> {
    let mut odds = vec![0.0; graph.num_vars()];
    let mut groups: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for (rule, table) in graph.potentials.iter().zip(scores) {
        let lp = log_softmax(table);
        match &rule.head {
            Head::Binary(v) => odds[*v] += lp[1] - lp[0],
            Head::Multiclass(hs) => {
                let key: Vec<usize> = hs.iter().map(|h| h.0).collect();
                let acc = groups.entry(key).or_insert_with(|| vec![0.0; hs.len()]);
                for (a, l) in acc.iter_mut().zip(&lp) {
                    *a += l;
                }
            }
        }
    }
    let mut values: Vec<bool> = odds.iter().map(|o| *o > 0.0).collect();
    for (vars, acc) in groups {
        let mut best = 0;
        for k in 1..acc.len() {
            if acc[k] > acc[best] {
                best = k;
            }
        }
        for (k, v) in vars.iter().enumerate() {
            values[*v] = k == best;
        }
    }
    values
}

/// Independent per-factor predictions. See [`local_argmax`].
pub fn predict_local(scorers: &ScorerGraph, data: &Datastore, graphs: &[FactorGraph]) -> Result<Vec<Assignment>, LearnError> {
    graphs
        .par_iter()
        .map(|g| {
            let scores = normalize(&score_graph(scorers, g, data)?);
            let values = local_argmax(g, &scores);
            let score = Objective::new(g, &scores)?.evaluate(&values);
            Ok(Assignment { values, score })
        })
        .collect()
}

/// Constrained predictions for a model trained in `mode`.
pub fn predict(
    mode: Mode,
    scorers: &ScorerGraph,
    data: &Datastore,
    graphs: &[FactorGraph],
    solver: Solver,
) -> Result<Vec<Assignment>, LearnError> {
    match mode {
        Mode::Local | Mode::Joint => predict_joint(scorers, data, graphs, solver),
        Mode::GlobalHinge | Mode::GlobalCrf => predict_global(scorers, data, graphs, solver),
    }
}
