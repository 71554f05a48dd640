//! Shared setup for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relgraph::datastore::Datastore;
use relgraph::dsl::{compile, CheckedProgram};
use relgraph::grounder::{ground, FactorGraph};
use relgraph::inference::ScoreTable;
use relgraph::synth::{debate_corpus, random_factor_graph, DebateConfig, RandomGraphConfig};

pub struct Workload {
    pub program: CheckedProgram,
    pub data: Datastore,
    pub graphs: Vec<FactorGraph>,
}

/// A debate corpus of `threads` threads, compiled, loaded and grounded.
pub fn debate(threads: usize, seed: u64) -> Workload {
    let corpus = debate_corpus(&mut ChaCha8Rng::seed_from_u64(seed), &DebateConfig { threads, ..Default::default() });
    let dir = tempfile::tempdir().expect("temp dir");
    corpus.write_to(dir.path()).expect("write corpus");
    let program = compile(&corpus.program).expect("debate program compiles");
    let data = Datastore::load(dir.path(), &program).expect("debate data loads");
    let graphs = ground(&program, &data).expect("debate corpus grounds");
    Workload { program, data, graphs }
}

/// Feasible random factor graphs with exactly `vars` variables.
pub fn random_graphs(count: usize, vars: usize, seed: u64) -> Vec<(FactorGraph, Vec<ScoreTable>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RandomGraphConfig { max_vars: vars, wild_constraints: 0.0, ..Default::default() };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (g, s) = random_factor_graph(&mut rng, &cfg);
        if g.num_vars() == vars {
            out.push((g, s));
        }
    }
    out
}
