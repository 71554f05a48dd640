use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use relgraph::grounder::dump_graphs;
use relgraph::synth::PROGRAM_FILE;

use crate::pipeline::{load, Inputs};

const GOLDEN_FILE: &str = "golden.dump";

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Directory whose subdirectories each hold a program and its data
    pub dir: PathBuf,
    /// Overwrite the golden dumps instead of comparing against them
    #[arg(long)]
    pub bless: bool,
}

/// Compiles and grounds every fixture, printing its counts and checking
/// its dump against the golden file.
pub fn run(args: &FixturesArgs) -> Result<()> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(&args.dir)
        .with_context(|| format!("reading {}", args.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(PROGRAM_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no fixtures under {}", args.dir.display());
    }
    let mut mismatched = Vec::new();
    for dir in &dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let loaded = load(&Inputs { program: dir.join(PROGRAM_FILE), data_dir: Some(dir.clone()) })
            .with_context(|| format!("fixture {}", name))?;
        let weighted = loaded.program.templates.iter().filter(|t| t.weighted).count();
        let constraints = loaded.program.templates.len() - weighted + loaded.program.constraints.len();
        let count = |f: fn(&relgraph::grounder::FactorGraph) -> usize| loaded.graphs.iter().map(f).sum::<usize>();
        let dump = dump_graphs(&loaded.graphs, &loaded.data);
        let golden = dir.join(GOLDEN_FILE);
        let status = if args.bless {
            fs::write(&golden, &dump).with_context(|| format!("writing {}", golden.display()))?;
            "blessed"
        } else {
            match fs::read_to_string(&golden) {
                Ok(g) if g == dump => "ok",
                Ok(_) => {
                    mismatched.push(name.clone());
                    "MISMATCH"
                }
                Err(_) => "no golden file",
            }
        };
        println!(
            "{:<20} templates {:>2}  constraints {:>2}  graphs {:>3}  variables {:>4}  potentials {:>4}  rows {:>4}  {}",
            name,
            weighted,
            constraints,
            loaded.graphs.len(),
            count(|g| g.variables.len()),
            count(|g| g.potentials.len()),
            count(|g| g.constraints.len()),
            status
        );
    }
    if !mismatched.is_empty() {
        bail!("grounding differs from the golden dump for {}", mismatched.join(", "));
    }
    Ok(())
}
