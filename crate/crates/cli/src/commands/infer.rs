use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rayon::prelude::*;

use relgraph::inference::{dump_lp, Objective};
use relgraph::learning::{normalize, predict, Mode};
use relgraph::relnets::score_graph;
use relgraph::seeds::SeedStream;

use crate::pipeline::{assignment_files, load, manifest, net_config, scorers, write_file, Inputs, NetArgs, SolverArgs};

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Trained parameters
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Mode the checkpoint was trained in; local and joint decode
    /// log-softmax scores, the global modes raw scores
    #[arg(long, default_value_t = Mode::Joint)]
    pub mode: Mode,
    /// Also write the top-k assignments of every instance to pool.tsv
    #[arg(long, default_value_t = 1)]
    pub pool: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the assignment files
    #[arg(long)]
    pub out: PathBuf,
    /// Write the linear program of every instance into this directory
    #[arg(long)]
    pub dump_lp: Option<PathBuf>,
}

pub fn run(args: &InferArgs) -> Result<()> {
    if args.pool == 0 {
        bail!("--pool must be at least 1");
    }
    let mut m = manifest("infer", args.seed, &args.inputs)?
        .with_net_config(args.net.net_config.as_deref())?
        .with_checkpoint(args.checkpoint.as_deref())?;
    m.mode = Some(args.mode.to_string());
    m.solver = Some(args.solver.name());
    m.pool = Some(args.pool);
    m.output = Some(args.out.clone());

    let loaded = load(&args.inputs)?;
    let config = net_config(&args.net, &loaded)?;
    let seeds = SeedStream::new(args.seed);
    let s = scorers(&config, &loaded, seeds.seed("init"), args.checkpoint.as_deref())?;
    let solver = args.solver.solver(seeds.seed("restarts"));

    let objectives: Vec<Objective> = loaded
        .graphs
        .par_iter()
        .map(|g| {
            let raw = score_graph(&s, g, &loaded.data)?;
            let scores = if args.mode.is_global() { raw } else { normalize(&raw) };
            Ok(Objective::new(g, &scores)?)
        })
        .collect::<Result<_>>()?;

    if let Some(dir) = &args.dump_lp {
        for (g, obj) in loaded.graphs.iter().zip(&objectives) {
            let text = m.comment("\\") + &dump_lp(obj, &[]);
            write_file(&dir.join(format!("instance{}.lp", g.instance_id)), &text)?;
        }
    }

    let assignments = predict(args.mode, &s, &loaded.data, &loaded.graphs, solver)?;
    let values: Vec<Vec<bool>> = assignments.iter().map(|a| a.values.clone()).collect();
    for (name, body) in assignment_files(&loaded, &values) {
        write_file(&args.out.join(name), &(m.comment("#") + &body))?;
    }

    if args.pool > 1 {
        let pools: Vec<_> = objectives.par_iter().map(|o| o.k_best(args.pool, args.solver.cap)).collect::<Result<_, _>>()?;
        let mut text = m.comment("#");
        text.push_str("# instance\trank\tscore\ttrue atoms\n");
        for (g, pool) in loaded.graphs.iter().zip(pools) {
            for (rank, a) in pool.iter().enumerate() {
                let atoms: Vec<String> = g
                    .variables
                    .iter()
                    .zip(&a.values)
                    .filter(|(_, v)| **v)
                    .map(|(var, _)| var.atom.display(&loaded.data))
                    .collect();
                let _ = writeln!(text, "{}\t{}\t{:.6}\t{}", g.instance_id, rank, a.score, atoms.join(" "));
            }
        }
        write_file(&args.out.join("pool.tsv"), &text)?;
    }
    let total: usize = values.iter().map(Vec::len).sum();
    let positive: usize = values.iter().flatten().filter(|v| **v).count();
    println!(
        "{} instances, {} decisions ({} true) written to {}",
        loaded.graphs.len(),
        total,
        positive,
        args.out.display()
    );
    Ok(())
}
