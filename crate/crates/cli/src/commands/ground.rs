use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use relgraph::grounder::dump_graphs;

use crate::pipeline::{load, manifest, write_file, Inputs};

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Emit the factor graphs in the text dump format instead of statistics
    #[arg(long)]
    pub dump: bool,
    /// Write the output here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in the manifest; grounding itself is deterministic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &GroundArgs) -> Result<()> {
    let mut m = manifest("ground", args.seed, &args.inputs)?;
    m.output = args.out.clone();
    let loaded = load(&args.inputs)?;
    let mut text = m.comment("#");
    if args.dump {
        text.push_str(&dump_graphs(&loaded.graphs, &loaded.data));
    } else {
        text.push_str(&format!("{:<10}{:>11}{:>12}{:>13}\n", "instance", "variables", "potentials", "constraints"));
        let mut total = [0usize; 3];
        for g in &loaded.graphs {
            let row = [g.variables.len(), g.potentials.len(), g.constraints.len()];
            text.push_str(&format!("{:<10}{:>11}{:>12}{:>13}\n", g.instance_id, row[0], row[1], row[2]));
            for (t, r) in total.iter_mut().zip(row) {
                *t += r;
            }
        }
        text.push_str(&format!("{:<10}{:>11}{:>12}{:>13}\n", "total", total[0], total[1], total[2]));
    }
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}
