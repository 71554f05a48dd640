use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use relgraph::autodiff::OptimizerConfig;
use relgraph::grounder::FactorGraph;
use relgraph::learning::{
    evaluate, golds, multiclass_positions, predict, splits, train, Metrics, Mode, TrainConfig, TrainReport,
};
use relgraph::relnets::build_scorers;
use relgraph::seeds::SeedStream;

use crate::manifest::RunManifest;
use crate::pipeline::{checkpoint_text, load, manifest, net_config, write_file, Inputs, Loaded, NetArgs, SolverArgs};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// local, joint, global-hinge or global-crf
    #[arg(long, default_value_t = Mode::Joint)]
    pub mode: Mode,
    /// Solution pool size for global-crf
    #[arg(long)]
    pub pool: Option<usize>,
    /// Cross-validation folds; 1 holds out a fifth of the instances
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    /// Fraction of each fold's training instances used for early stopping
    #[arg(long, default_value_t = 0.2)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Epochs without dev improvement before stopping
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Instances per optimizer step
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Global modes: keep encoder parameters fixed after local training
    #[arg(long)]
    pub freeze_encoders: bool,
    /// Global modes: start from this checkpoint instead of training locally first
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Directory for checkpoints, the network config and metrics
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
    /// Metrics file [default: <out-dir>/metrics.json]
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FoldResult {
    fold: usize,
    train: usize,
    dev: usize,
    test: usize,
    checkpoint: PathBuf,
    training: Vec<TrainReport>,
    metrics: Option<Metrics>,
}

#[derive(Serialize, Default)]
struct Summary {
    accuracy: f64,
    macro_f1: f64,
    positive_f1: Option<f64>,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    manifest: &'a RunManifest,
    mode: Mode,
    folds: Vec<FoldResult>,
    average: Summary,
    relations: BTreeMap<String, Summary>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

fn average(metrics: &[&Metrics]) -> (Summary, BTreeMap<String, Summary>) {
    let overall = Summary {
        accuracy: mean(&metrics.iter().map(|m| m.accuracy).collect::<Vec<_>>()),
        macro_f1: mean(&metrics.iter().map(|m| m.macro_f1).collect::<Vec<_>>()),
        positive_f1: mean_opt(metrics.iter().map(|m| m.positive_f1)),
    };
    let mut by_rel: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for m in metrics {
        for r in &m.relations {
            by_rel.entry(r.relation.clone()).or_default().push(r);
        }
    }
    let relations = by_rel
        .into_iter()
        .map(|(name, rs)| {
            let s = Summary {
                accuracy: mean(&rs.iter().map(|r| r.accuracy).collect::<Vec<_>>()),
                macro_f1: mean(&rs.iter().map(|r| r.macro_f1).collect::<Vec<_>>()),
                positive_f1: mean_opt(rs.iter().map(|r| r.positive_f1)),
            };
            (name, s)
        })
        .collect();
    (overall, relations)
}

fn pick(graphs: &[FactorGraph], idx: &[usize]) -> Vec<FactorGraph> {
    idx.iter().map(|&i| graphs[i].clone()).collect()
}

fn run_fold(
    args: &TrainArgs,
    loaded: &Loaded,
    config: &relgraph::relnets::NetConfig,
    m: &RunManifest,
    k: usize,
    split: &relgraph::learning::Split,
) -> Result<FoldResult> {
    let seeds = SeedStream::new(args.seed).child(&format!("fold{}", k));
    let (train_g, dev, test) = (pick(&loaded.graphs, &split.train), pick(&loaded.graphs, &split.dev), pick(&loaded.graphs, &split.test));
    let mut s = build_scorers(&loaded.program, config, &loaded.data, seeds.seed("init"))?;
    let tc = TrainConfig {
        mode: args.mode,
        epochs: args.epochs,
        patience: args.patience,
        pool: args.pool,
        optimizer: OptimizerConfig { lr: args.lr, weight_decay: args.weight_decay, ..Default::default() },
        seed: seeds.seed("train"),
        solver: args.solver.solver(seeds.seed("restarts")),
        batch: args.batch,
        freeze_encoders: args.freeze_encoders,
        warm_start: args.warm_start.clone(),
    };
    let training = train(&mut s, &loaded.data, &train_g, &dev, &tc).with_context(|| format!("fold {}", k))?;
    let checkpoint = args.out_dir.join(format!("fold{}.ckpt", k));
    write_file(&checkpoint, &checkpoint_text(&s.store, m))?;

    let metrics = if test.is_empty() {
        log::warn!("fold {} has no test instances", k);
        None
    } else {
        let pred: Vec<Vec<bool>> = predict(args.mode, &s, &loaded.data, &test, tc.solver)?.into_iter().map(|a| a.values).collect();
        Some(evaluate(&test, &pred, &golds(&test)?, &multiclass_positions(&loaded.program))?)
    };
    Ok(FoldResult { fold: k, train: train_g.len(), dev: dev.len(), test: test.len(), checkpoint, training, metrics })
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut m = manifest("train", args.seed, &args.inputs)?
        .with_net_config(args.net.net_config.as_deref())?
        .with_checkpoint(args.warm_start.as_deref())?;
    m.mode = Some(args.mode.to_string());
    m.solver = Some(args.solver.name());
    m.pool = args.pool;
    m.folds = Some(args.folds);
    m.output = Some(args.out_dir.clone());

    let loaded = load(&args.inputs)?;
    let config = net_config(&args.net, &loaded)?;
    write_file(&args.out_dir.join("net.toml"), &(m.comment("#") + &config.to_toml_string()))?;

    let folds = splits(loaded.graphs.len(), args.folds, args.dev_fraction, &SeedStream::new(args.seed));
    let results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(k, split)| run_fold(args, &loaded, &config, &m, k, split))
        .collect::<Result<_>>()?;

    let scored: Vec<&Metrics> = results.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let (average, relations) = average(&scored);
    for r in &results {
        match &r.metrics {
            Some(x) => println!("fold {}: accuracy {:.4}  macro-F1 {:.4}  ({} test instances)", r.fold, x.accuracy, x.macro_f1, r.test),
            None => println!("fold {}: no test instances", r.fold),
        }
    }
    println!("average: accuracy {:.4}  macro-F1 {:.4}", average.accuracy, average.macro_f1);

    let file = MetricsFile { manifest: &m, mode: args.mode, folds: results, average, relations };
    let path = args.metrics_out.clone().unwrap_or_else(|| args.out_dir.join("metrics.json"));
    write_file(&path, &(serde_json::to_string_pretty(&file)? + "\n"))?;
    println!("metrics written to {}", path.display());
    Ok(())
}
