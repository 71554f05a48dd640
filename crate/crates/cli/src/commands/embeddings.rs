use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use crate::pipeline::{load, manifest, net_config, scorers, Inputs, NetArgs};

#[derive(Debug, Args)]
pub struct EmbeddingsArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub net: NetArgs,
    /// Trained parameters
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Prints `table<TAB>symbol<TAB>values` for every symbolic-entity
/// embedding row.
pub fn run(args: &EmbeddingsArgs) -> Result<()> {
    let m = manifest("embeddings", args.seed, &args.inputs)?
        .with_net_config(args.net.net_config.as_deref())?
        .with_checkpoint(args.checkpoint.as_deref())?;
    let loaded = load(&args.inputs)?;
    let config = net_config(&args.net, &loaded)?;
    let s = scorers(&config, &loaded, relgraph::seeds::SeedStream::new(args.seed).seed("init"), args.checkpoint.as_deref())?;
    print!("{}", m.comment("#"));
    for (name, table) in s.embedding_tables() {
        let entity = name.rsplit('/').next().unwrap_or(name);
        let Some(vocab) = loaded.data.vocab(entity) else { continue };
        let width = table.shape().get(1).copied().unwrap_or(0);
        for (row, sym) in vocab.items.iter().enumerate() {
            let values: Vec<String> = table.data()[row * width..(row + 1) * width].iter().map(|v| format!("{:.6}", v)).collect();
            println!("{}\t{}\t{}", name, loaded.data.name(*sym), values.join(" "));
        }
    }
    Ok(())
}
