use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Subcommand};

use relgraph::seeds::SeedStream;
use relgraph::synth::{debate_corpus, two_task_corpus, Corpus, DebateConfig, TwoTaskConfig, PROGRAM_FILE};

use crate::manifest::RunManifest;
use crate::pipeline::write_file;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub corpus: CorpusKind,
    /// Output directory
    #[arg(long, global = true, default_value = "corpus")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum CorpusKind {
    /// Two-party debate threads with author and reply constraints
    Debate {
        #[arg(long, default_value_t = DebateConfig::default().threads)]
        threads: usize,
        /// Posts by each of the two debaters in a thread
        #[arg(long, default_value_t = DebateConfig::default().posts_per_user)]
        posts_per_user: usize,
        /// Standard deviation of the feature noise
        #[arg(long, default_value_t = DebateConfig::default().noise)]
        noise: f64,
    },
    /// Two binary tasks over the same users driven by one latent trait
    TwoTask {
        #[arg(long, default_value_t = TwoTaskConfig::default().users)]
        users: usize,
        #[arg(long, default_value_t = TwoTaskConfig::default().dim)]
        dim: usize,
    },
}

fn write(corpus: &Corpus, m: &RunManifest, out: &Path) -> Result<()> {
    write_file(&out.join(PROGRAM_FILE), &(m.comment("//") + &corpus.program))?;
    for (name, body) in &corpus.files {
        write_file(&out.join(name), &(m.comment("#") + body))?;
    }
    Ok(())
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let seeds = SeedStream::new(args.seed);
    let mut rng = seeds.rng("corpus");
    let (name, corpus) = match args.corpus {
        CorpusKind::Debate { threads, posts_per_user, noise } => {
            let cfg = DebateConfig { threads, posts_per_user, noise, ..Default::default() };
            ("synth debate", debate_corpus(&mut rng, &cfg))
        }
        CorpusKind::TwoTask { users, dim } => {
            let cfg = TwoTaskConfig { users, dim, ..Default::default() };
            ("synth two-task", two_task_corpus(&mut rng, &cfg))
        }
    };
    let mut m = RunManifest::new(name, args.seed);
    m.output = Some(args.out.clone());
    write(&corpus, &m, &args.out)?;
    println!("wrote {} files to {}", corpus.files.len() + 1, args.out.display());
    Ok(())
}
