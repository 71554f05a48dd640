//! Relational programs with neural potentials.
//!
//! A program declares entity types, closed (observed) and open (predicted)
//! predicates, weighted rule templates and hard constraints. [`dsl`] parses
//! and checks it, [`datastore`] loads the data it names, and [`grounder`]
//! instantiates it into independent [`grounder::FactorGraph`]s. Each
//! weighted grounding is scored by a small network from [`relnets`];
//! [`inference`] finds the best assignment under the hard constraints and
//! [`learning`] trains the networks locally or through inference.
//!
//! ```no_run
//! use relgraph::datastore::Datastore;
//! use relgraph::dsl::compile;
//! use relgraph::grounder::ground;
//! use relgraph::inference::Solver;
//! use relgraph::learning::{predict, train, Mode, TrainConfig};
//! use relgraph::relnets::{build_scorers, NetConfig};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let program = compile(&std::fs::read_to_string("corpus/program.dr")?)?;
//! let data = Datastore::load("corpus".as_ref(), &program)?;
//! let graphs = ground(&program, &data)?;
//! let net = NetConfig::default_for(&program, &data, 16, 8);
//! let mut scorers = build_scorers(&program, &net, &data, 0)?;
//! let config = TrainConfig { mode: Mode::GlobalHinge, ..Default::default() };
//! train(&mut scorers, &data, &graphs, &[], &config)?;
//! let assignments = predict(config.mode, &scorers, &data, &graphs, Solver::default())?;
//! # Ok(())
//! # }
//! ```

pub mod autodiff;
pub mod datastore;
pub mod dsl;
pub mod grounder;
pub mod inference;
pub mod learning;
pub mod relnets;
pub mod seeds;
pub mod synth;
