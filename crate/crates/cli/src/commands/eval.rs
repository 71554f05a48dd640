use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use relgraph::learning::{evaluate, golds, multiclass_positions, Metrics};

use crate::manifest::RunManifest;
use crate::pipeline::{load, manifest, read_assignments, write_file, Inputs};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Directory of assignment files written by `infer`
    #[arg(long)]
    pub predictions: PathBuf,
    /// Also write the metric table as JSON
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// Recorded in the manifest
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct EvalFile<'a> {
    manifest: &'a RunManifest,
    metrics: &'a Metrics,
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.4}", v))
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let mut m = manifest("eval", args.seed, &args.inputs)?;
    m.output = args.metrics_out.clone();
    let loaded = load(&args.inputs)?;
    let pred = read_assignments(&loaded, &args.predictions)?;
    let gold = golds(&loaded.graphs)?;
    let metrics = evaluate(&loaded.graphs, &pred, &gold, &multiclass_positions(&loaded.program))?;

    println!("{:<20}{:>9}{:>10}{:>10}{:>8}", "relation", "support", "accuracy", "macro-F1", "F1(+)");
    for r in &metrics.relations {
        println!(
            "{:<20}{:>9}{:>10.4}{:>10.4}{:>8}",
            r.relation,
            r.support,
            r.accuracy,
            r.macro_f1,
            cell(r.positive_f1)
        );
    }
    println!("{:<20}{:>9}{:>10.4}{:>10.4}{:>8}", "overall", "", metrics.accuracy, metrics.macro_f1, cell(metrics.positive_f1));

    if let Some(path) = &args.metrics_out {
        let file = EvalFile { manifest: &m, metrics: &metrics };
        write_file(path, &(serde_json::to_string_pretty(&file)? + "\n"))?;
    }
    Ok(())
}
