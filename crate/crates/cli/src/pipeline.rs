use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use relgraph::autodiff::{read_checkpoint, save_checkpoint, ParamStore};
use relgraph::datastore::Datastore;
use relgraph::dsl::{compile, CheckedProgram};
use relgraph::grounder::{ground, FactorGraph};
use relgraph::inference::{Solver, DEFAULT_EXACT_CAP, DEFAULT_RESTARTS};
use relgraph::relnets::{build_scorers, NetConfig, ScorerGraph};

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Program file
    #[arg(long)]
    pub program: PathBuf,
    /// Directory holding the data files [default: the program's directory]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

impl Inputs {
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.program.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Network config (TOML); without it every encoder gets one hidden layer
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    /// Hidden width of the generated network config
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Embedding width of symbolic entities in the generated config
    #[arg(long, default_value_t = 8)]
    pub embed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// MAP solver
    #[arg(long, value_enum, default_value_t = SolverKind::Exact)]
    pub solver: SolverKind,
    /// Largest number of free variables the exact solver accepts
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    pub cap: usize,
    /// Random restarts of the approximate solver
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
}

impl SolverArgs {
    pub fn solver(&self, seed: u64) -> Solver {
        match self.solver {
            SolverKind::Exact => Solver::Exact { cap: self.cap },
            SolverKind::Approx => Solver::Approx { restarts: self.restarts, seed },
        }
    }

    pub fn name(&self) -> String {
        match self.solver {
            SolverKind::Exact => "exact".into(),
            SolverKind::Approx => "approx".into(),
        }
    }
}

pub fn load_program(path: &Path) -> Result<CheckedProgram> {
    let source = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    compile(&source).with_context(|| format!("compiling {}", path.display()))
}

pub struct Loaded {
    pub program: CheckedProgram,
    pub data: Datastore,
    pub graphs: Vec<FactorGraph>,
}

pub fn load(inputs: &Inputs) -> Result<Loaded> {
    let program = load_program(&inputs.program)?;
    let dir = inputs.data_dir();
    let data = Datastore::load(&dir, &program).with_context(|| format!("loading data from {}", dir.display()))?;
    let graphs = ground(&program, &data).context("grounding")?;
    log::info!("grounded {} factor graphs", graphs.len());
    Ok(Loaded { program, data, graphs })
}

pub fn manifest(command: &str, seed: u64, inputs: &Inputs) -> Result<RunManifest> {
    RunManifest::new(command, seed).with_program(&inputs.program)?.with_data(&inputs.data_dir())
}

pub fn net_config(args: &NetArgs, loaded: &Loaded) -> Result<NetConfig> {
    match &args.net_config {
        Some(path) => Ok(NetConfig::from_path(path)?),
        None => Ok(NetConfig::default_for(&loaded.program, &loaded.data, args.hidden, args.embed)),
    }
}

pub fn scorers(config: &NetConfig, loaded: &Loaded, seed: u64, checkpoint: Option<&Path>) -> Result<ScorerGraph> {
    let mut s = build_scorers(&loaded.program, config, &loaded.data, seed)?;
    match checkpoint {
        Some(path) => s.load_params(&read_checkpoint(path)?)?,
        None => log::warn!("no checkpoint given; scoring with freshly initialized networks"),
    }
    Ok(s)
}

/// One line per decision variable, `args<TAB>0|1`, grouped by predicate.
pub fn assignment_files(loaded: &Loaded, values: &[Vec<bool>]) -> BTreeMap<String, String> {
    let mut rows: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (g, vals) in loaded.graphs.iter().zip(values) {
        for (v, val) in g.variables.iter().zip(vals) {
            let args: Vec<&str> = v.atom.args.iter().map(|s| loaded.data.name(*s)).collect();
            rows.entry(v.atom.predicate.clone()).or_default().push(format!("{}\t{}", args.join("\t"), *val as u8));
        }
    }
    rows.into_iter()
        .map(|(p, mut lines)| {
            lines.sort();
            (format!("{}.tsv", p), lines.join("\n") + "\n")
        })
        .collect()
}

/// Reads assignment files written by `infer` and aligns them with the
/// decision variables of `loaded`.
pub fn read_assignments(loaded: &Loaded, dir: &Path) -> Result<Vec<Vec<bool>>> {
    let mut predicted: BTreeMap<(String, Vec<String>), bool> = BTreeMap::new();
    let open: Vec<&str> = loaded.program.open_predicates().map(|p| p.predicate.as_str()).collect();
    for pred in open {
        let path = dir.join(format!("{}.tsv", pred));
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols: Vec<String> = line.split('\t').map(str::to_string).collect();
            let value = match cols.pop().as_deref() {
                Some("1") => true,
                Some("0") => false,
                other => bail!("{}:{}: expected a trailing 0/1 column, found {:?}", path.display(), i + 1, other),
            };
            predicted.insert((pred.to_string(), cols), value);
        }
    }
    loaded
        .graphs
        .iter()
        .map(|g| {
            g.variables
                .iter()
                .map(|v| {
                    let args: Vec<String> = v.atom.args.iter().map(|s| loaded.data.name(*s).to_string()).collect();
                    let key = (v.atom.predicate.clone(), args);
                    predicted
                        .get(&key)
                        .copied()
                        .with_context(|| format!("no prediction for {}", v.atom.display(&loaded.data)))
                })
                .collect()
        })
        .collect()
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Checkpoint text with the manifest as a comment after the count line.
pub fn checkpoint_text(store: &ParamStore, m: &RunManifest) -> String {
    let text = save_checkpoint(store);
    let mut parts = text.splitn(3, '\n');
    let (header, count, rest) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    format!("{}\n{}\n{}{}", header, count, m.comment("#"), rest)
}
