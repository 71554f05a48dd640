//! Synthetic workloads: random scored factor graphs and generated corpora.

mod corpora;
mod graphs;

pub use corpora::{
    debate_corpus, two_task_corpus, Corpus, DebateConfig, TwoTaskConfig, DEBATE_PROGRAM, PROGRAM_FILE, TWO_TASK_PROGRAM,
};
pub use graphs::{random_factor_graph, RandomGraphConfig};
