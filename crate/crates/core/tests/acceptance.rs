//! Acceptance criteria, one line each. Runs without the libtest harness so
//! that every PASS/FAIL line lands in the `cargo test` output. Set
//! `RELGRAPH_BLESS=1` to rewrite the golden grounding dumps and
//! `RELGRAPH_CRITERIA=2,5` to run a subset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use relgraph::autodiff::{NodeId, Tape, Tensor};
use relgraph::datastore::Datastore;
use relgraph::dsl::{compile, to_disjunctive_form, Atom, CheckedProgram, Literal, RuleDecl, RuleKind, Span};
use relgraph::grounder::{dump_graphs, ground, rule_to_inequality, FactorGraph};
use relgraph::inference::{
    brute_force, enumerate_feasible, Assignment, InferenceError, Objective, Solver, DEFAULT_EXACT_CAP,
};
use relgraph::learning::{
    crf_at, evaluate, golds, hinge_at, local_loss, partition_estimate, predict, predict_global, predict_joint,
    predict_local, splits, train, train_global_hinge, train_local, Mode, TrainConfig,
};
use relgraph::relnets::{build_scorers, Activation, Forward, NetConfig, ScorerGraph, Sharing};
use relgraph::seeds::SeedStream;
use relgraph::synth::{
    debate_corpus, random_factor_graph, two_task_corpus, Corpus, DebateConfig, RandomGraphConfig, TwoTaskConfig,
};

const C1_CLAUSES: usize = 1000;
const C1_MAX_LITERALS: usize = 6;
const C1_BUDGET: Duration = Duration::from_secs(5);

const C2_GRAPHS: usize = 500;
const C2_MAX_VARS: usize = 20;
const C2_BUDGET: Duration = Duration::from_secs(60);

const C3_CONFIGS: usize = 60;
const C3_STEP: f64 = 1e-4;
const C3_REL_TOL: f64 = 1e-3;
/// Floor on the denominator of the relative error, so that gradients that
/// are zero up to rounding compare absolutely.
const C3_ABS_FLOOR: f64 = 1e-2;

const C4_FIXTURES: usize = 200;
const C4_MAX_VARS: usize = 15;
/// A full pool costs one exact solve per feasible assignment, each against
/// a growing set of cuts, so fixtures with larger feasible sets are skipped.
const C4_MAX_FEASIBLE: usize = 512;
const C4_TOL: f64 = 1e-9;

const C6_SEEDS: u64 = 5;
const C6_FOLDS: usize = 2;
const C6_MARGIN: f64 = 0.02;
const C6_BUDGET: Duration = Duration::from_secs(600);
const C6_HIDDEN: usize = 8;
const C6_EPOCHS: usize = 30;

const C7_SEEDS: u64 = 5;
const C7_TEST_USERS: usize = 200;
/// Task-B supervision as a fraction of the training users; task A is
/// labelled for all of them.
const C7_B_FRACTION: f64 = 0.1;
const C7_MARGIN: f64 = 0.02;
const C7_HIDDEN: usize = 4;
const C7_EPOCHS: usize = 30;

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn load(corpus: &Corpus) -> (CheckedProgram, Datastore, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to(dir.path()).unwrap();
    let prog = compile(&corpus.program).unwrap();
    let data = Datastore::load(dir.path(), &prog).unwrap();
    (prog, data, dir)
}

fn pick(graphs: &[FactorGraph], idx: &[usize]) -> Vec<FactorGraph> {
    idx.iter().map(|&i| graphs[i].clone()).collect()
}

fn accuracy(graphs: &[FactorGraph], pred: Vec<Assignment>) -> f64 {
    let gold = golds(graphs).unwrap();
    let values: Vec<Vec<bool>> = pred.into_iter().map(|a| a.values).collect();
    evaluate(graphs, &values, &gold, &BTreeMap::new()).unwrap().accuracy
}

// 1 ------------------------------------------------------------------------

fn literal(var: usize, negated: bool) -> Literal {
    let atom = Atom { predicate: format!("Y{}", var), args: Vec::new(), open_mark: true, span: Span::default() };
    Literal::Atom { atom, negated }
}

fn literal_parts(l: &Literal) -> (usize, bool) {
    match l {
        Literal::Atom { atom, negated } => (atom.predicate[1..].parse().unwrap(), *negated),
        Literal::Guard { .. } => unreachable!(),
    }
}

fn holds(l: &Literal, values: &[bool]) -> bool {
    let (v, negated) = literal_parts(l);
    values[v] != negated
}

fn logic_to_ilp() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for _ in 0..C1_CLAUSES {
        let len = r.random_range(1..=C1_MAX_LITERALS);
        let n = r.random_range(1..=len);
        let lits: Vec<Literal> = (0..len).map(|_| literal(r.random_range(0..n), r.random_bool(0.5))).collect();
        let rule = RuleDecl {
            kind: RuleKind::Hard,
            body: lits[..len - 1].to_vec(),
            head: lits[len - 1].clone(),
            span: Span::default(),
        };
        let clause = to_disjunctive_form(&rule);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for l in &clause {
            let (v, negated) = literal_parts(l);
            if negated {
                neg.push(v);
            } else {
                pos.push(v);
            }
        }
        let row = rule_to_inequality(&pos, &neg, "c");
        for mask in 0u32..(1 << n) {
            let values: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let implication = !rule.body.iter().all(|l| holds(l, &values)) || holds(&rule.head, &values);
            let disjunction = clause.iter().any(|l| holds(l, &values));
            if implication != disjunction || disjunction != row.is_satisfied(&values) {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < C1_BUDGET,
        format!("{} clauses, {} assignments, {} mismatches", C1_CLAUSES, checked, mismatches),
    )
}

// 2 ------------------------------------------------------------------------

fn exact_map_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = RandomGraphConfig { max_vars: C2_MAX_VARS, ..Default::default() };
    let cases: Vec<_> = {
        let mut r = rng(2);
        (0..C2_GRAPHS).map(|_| random_factor_graph(&mut r, &cfg)).collect()
    };
    let results: Vec<(bool, bool)> = cases
        .par_iter()
        .map(|(g, scores)| {
            let obj = Objective::new(g, scores).unwrap();
            match (obj.solve_exact(DEFAULT_EXACT_CAP), brute_force(&obj)) {
                (Ok(a), Some(b)) => (a.values == b.values && a.score == b.score, true),
                (Err(InferenceError::Infeasible), None) => (true, false),
                _ => (false, false),
            }
        })
        .collect();
    let elapsed = start.elapsed();
    let agree = results.iter().filter(|r| r.0).count();
    let feasible = results.iter().filter(|r| r.1).count();
    outcome(
        agree == C2_GRAPHS && elapsed < C2_BUDGET,
        format!("{}/{} agree ({} feasible)", agree, C2_GRAPHS, feasible),
    )
}

// 3 ------------------------------------------------------------------------

const GRAD_PROGRAM: &str = "\
entity User features=3
entity Claim features=2
entity Ideology vocab
predicate Agree(User, Claim)?
predicate VoteFor(User, User)?
predicate HasIdeology(User, Ideology)?
predicate Leans(User, Ideology)
rule: Agree(X, C) & VoteFor(Y, X) => Agree(Y, C)
rule: Agree(X, C) & Agree(Y, C) => VoteFor(X, Y)
rule: Agree(U, C) & Leans(U, J) => HasIdeology(U, I)
arith: HasIdeology(U, +I) = 1
hardconstraint: VoteFor(X, Y) => VoteFor(Y, X)
";

fn grad_corpus() -> Corpus {
    let files = [
        ("User.feat", "u1 0.5 -1 0.3\nu2 1 0.25 -0.7\nu3 -0.4 0.8 0.1\n"),
        ("Claim.feat", "c1 1 -0.5\n"),
        ("Ideology.vocab", "con\nlib\nmod\n"),
        ("Agree.tsv", "u1\tc1\t1\nu2\tc1\t1\nu3\tc1\t0\n"),
        ("VoteFor.tsv", "u1\tu2\t1\nu2\tu1\t1\nu2\tu3\t0\nu3\tu2\t0\n"),
        ("Leans.tsv", "u1\tcon\nu2\tlib\nu3\tmod\n"),
        (
            "HasIdeology.tsv",
            "u1\tcon\t1\nu1\tlib\t0\nu1\tmod\t0\nu2\tcon\t0\nu2\tlib\t1\nu2\tmod\t0\nu3\tcon\t0\nu3\tlib\t0\nu3\tmod\t1\n",
        ),
    ];
    Corpus {
        program: GRAD_PROGRAM.to_string(),
        files: files.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
    }
}

fn random_net(r: &mut ChaCha8Rng, prog: &CheckedProgram, data: &Datastore) -> NetConfig {
    let acts = [Activation::Relu, Activation::Tanh, Activation::Identity];
    let mut cfg = NetConfig::default_for(prog, data, r.random_range(2..=5), r.random_range(0..=3));
    cfg.sharing = if r.random_bool(0.5) { Sharing::Relnets } else { Sharing::Independent };
    for spec in cfg.entity.values_mut().chain(cfg.rule.values_mut()) {
        spec.activation = *acts.choose(r).unwrap();
    }
    let widths: BTreeMap<String, usize> = prog
        .entities
        .keys()
        .map(|e| {
            let spec = &cfg.entity[e];
            let w = spec.embed_dim.or_else(|| spec.layers.as_ref().and_then(|l| l.last().copied())).unwrap_or(0);
            (e.clone(), w)
        })
        .collect();
    for (name, spec) in cfg.relation.iter_mut() {
        if r.random_bool(0.5) {
            let w: usize = prog.predicates[name].arg_types.iter().map(|t| widths[t]).sum();
            if w > 0 {
                spec.layers = Some(vec![w, w]);
                spec.activation = *acts.choose(r).unwrap();
            }
        }
    }
    cfg
}

fn scored<'a>(s: &'a ScorerGraph, data: &'a Datastore, g: &FactorGraph) -> (Forward<'a>, Vec<NodeId>) {
    let mut f = Forward::new(s, data);
    let n = f.score_graph(g).unwrap();
    (f, n)
}

#[derive(Clone, Copy, Debug)]
enum GradLoss {
    Local,
    Hinge,
    Crf,
}

fn loss_node(
    kind: GradLoss,
    f: &mut Forward<'_>,
    g: &FactorGraph,
    nodes: &[NodeId],
    gold: &[bool],
    yhat: &[bool],
    pool: &[Vec<bool>],
) -> NodeId {
    match kind {
        GradLoss::Local => local_loss(f, g, gold).unwrap(),
        GradLoss::Hinge => hinge_at(&mut f.tape, g, nodes, gold, yhat).unwrap(),
        GradLoss::Crf => crf_at(&mut f.tape, g, nodes, gold, pool).unwrap(),
    }
}

/// Largest relative error over all parameters of one configuration.
fn gradient_error(case: usize, corpus: &(CheckedProgram, Datastore, tempfile::TempDir), g: &FactorGraph) -> f64 {
    let (prog, data, _) = corpus;
    let mut r = rng(3000 + case as u64);
    let net = random_net(&mut r, prog, data);
    let scorers = build_scorers(prog, &net, data, r.random()).unwrap();
    let kind = [GradLoss::Local, GradLoss::Hinge, GradLoss::Crf][case % 3];
    let gold = g.gold().unwrap();

    let (mut f, nodes) = scored(&scorers, data, g);
    let obj = Objective::new(g, &f.values(&nodes)).unwrap();
    let feasible = enumerate_feasible(&obj);
    let yhat = feasible.choose(&mut r).unwrap().values.clone();
    let pool: Vec<Vec<bool>> = partition_estimate(&obj, &gold, 5, DEFAULT_EXACT_CAP)
        .unwrap()
        .pool
        .into_iter()
        .map(|a| a.values)
        .collect();

    let root = loss_node(kind, &mut f, g, &nodes, &gold, &yhat, &pool);
    let grads = f.tape.backward(root).unwrap();
    let value = |s: &ScorerGraph| {
        let (mut f, nodes) = scored(s, data, g);
        let n = loss_node(kind, &mut f, g, &nodes, &gold, &yhat, &pool);
        f.tape.scalar(n)
    };
    let mut worst: f64 = 0.0;
    for (id, p) in scorers.store.iter() {
        for j in 0..p.value.len() {
            let mut plus = scorers.clone();
            plus.store.get_mut(id).value.data_mut()[j] += C3_STEP;
            let mut minus = scorers.clone();
            minus.store.get_mut(id).value.data_mut()[j] -= C3_STEP;
            let fd = (value(&plus) - value(&minus)) / (2.0 * C3_STEP);
            let an = grads.get(id).map_or(0.0, |t| t.data()[j]);
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(C3_ABS_FLOOR));
        }
    }
    worst
}

fn gradient_fidelity() -> Outcome {
    let corpus = load(&grad_corpus());
    let graphs = ground(&corpus.0, &corpus.1).unwrap();
    let g = graphs.iter().max_by_key(|g| g.num_vars()).unwrap().clone();
    let errors: Vec<f64> = (0..C3_CONFIGS).into_par_iter().map(|c| gradient_error(c, &corpus, &g)).collect();
    let passing = errors.iter().filter(|e| **e < C3_REL_TOL).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    outcome(
        passing == C3_CONFIGS,
        format!("{}/{} configurations, worst relative error {:.2e}", passing, C3_CONFIGS, worst),
    )
}

// 4 ------------------------------------------------------------------------

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn crf_pool_limit() -> Outcome {
    let cfg = RandomGraphConfig { max_vars: C4_MAX_VARS, max_potentials: 20, wild_constraints: 0.0, ..Default::default() };
    let mut r = rng(4);
    let (mut exact_ok, mut monotone_ok, mut fixtures, mut skipped) = (0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    while fixtures < C4_FIXTURES {
        let (g, scores) = random_factor_graph(&mut r, &cfg);
        let obj = Objective::new(&g, &scores).unwrap();
        let feasible = enumerate_feasible(&obj);
        let Some(gold) = feasible.choose(&mut r).map(|a| a.values.clone()) else { continue };
        if feasible.len() > C4_MAX_FEASIBLE {
            skipped += 1;
            continue;
        }
        fixtures += 1;

        let all: Vec<f64> = feasible.iter().map(|a| a.score).collect();
        let nll = logsumexp(&all) - obj.evaluate(&gold);
        let est = partition_estimate(&obj, &gold, feasible.len(), DEFAULT_EXACT_CAP).unwrap();
        let pool: Vec<Vec<bool>> = est.pool.iter().map(|a| a.values.clone()).collect();
        let mut tape = Tape::new();
        let nodes: Vec<NodeId> = scores.iter().map(|s| tape.constant(Tensor::vector(s.clone()))).collect();
        let loss = crf_at(&mut tape, &g, &nodes, &gold, &pool).unwrap();
        let err = (tape.scalar(loss) - nll).abs();
        worst = worst.max(err);
        exact_ok += (err <= C4_TOL && pool.len() == feasible.len()) as usize;

        let mut last = f64::NEG_INFINITY;
        let mut monotone = true;
        for beta in 1..=feasible.len().min(32) {
            let lz = partition_estimate(&obj, &gold, beta, DEFAULT_EXACT_CAP).unwrap().log_z;
            monotone &= lz >= last;
            last = lz;
        }
        monotone_ok += monotone as usize;
    }
    outcome(
        exact_ok == C4_FIXTURES && monotone_ok == C4_FIXTURES,
        format!(
            "{}/{} exact (worst {:.1e}), {}/{} monotone in beta, {} oversized skipped",
            exact_ok, C4_FIXTURES, worst, monotone_ok, C4_FIXTURES, skipped
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn constraint_satisfaction() -> Outcome {
    let corpus = debate_corpus(&mut rng(5), &DebateConfig { threads: 24, posts_per_user: 3, ..Default::default() });
    let (prog, data, _dir) = load(&corpus);
    let graphs = ground(&prog, &data).unwrap();
    let net = NetConfig::default_for(&prog, &data, 4, 0);
    let solvers = [Solver::default(), Solver::Approx { restarts: 4, seed: 5 }];
    let (mut emitted, mut violations) = (0usize, 0usize);
    for mode in [Mode::Local, Mode::Joint, Mode::GlobalHinge, Mode::GlobalCrf] {
        let mut scorers = build_scorers(&prog, &net, &data, 5).unwrap();
        let cfg = TrainConfig { mode, epochs: 3, pool: (mode == Mode::GlobalCrf).then_some(4), ..Default::default() };
        train(&mut scorers, &data, &graphs[..16], &graphs[16..20], &cfg).unwrap();
        for solver in solvers {
            for (g, a) in graphs.iter().zip(predict(mode, &scorers, &data, &graphs, solver).unwrap()) {
                emitted += 1;
                violations += !g.is_feasible(&a.values) as usize;
            }
        }
    }
    let mut r = rng(55);
    let cfg = RandomGraphConfig { wild_constraints: 0.0, ..Default::default() };
    for _ in 0..200 {
        let (g, scores) = random_factor_graph(&mut r, &cfg);
        let obj = Objective::new(&g, &scores).unwrap();
        for solver in solvers {
            if let Ok(a) = obj.solve(solver) {
                emitted += 1;
                violations += !g.is_feasible(&a.values) as usize;
            }
        }
    }
    outcome(violations == 0, format!("{} assignments, {} violate a hard constraint", emitted, violations))
}

// 6 ------------------------------------------------------------------------

fn debate_seed(seed: u64) -> [f64; 3] {
    let seeds = SeedStream::new(seed);
    let corpus = debate_corpus(&mut seeds.rng("corpus"), &DebateConfig::default());
    let (prog, data, _dir) = load(&corpus);
    let graphs = ground(&prog, &data).unwrap();
    let net = NetConfig::default_for(&prog, &data, C6_HIDDEN, 0);
    let mut acc = [0.0; 3];
    for (k, split) in splits(graphs.len(), C6_FOLDS, 0.2, &seeds).iter().enumerate() {
        let (train_g, dev, test) = (pick(&graphs, &split.train), pick(&graphs, &split.dev), pick(&graphs, &split.test));
        let fold = seeds.child(&format!("fold{}", k));
        let mut scorers = build_scorers(&prog, &net, &data, fold.seed("init")).unwrap();
        let local = TrainConfig { epochs: C6_EPOCHS, patience: 5, seed: fold.seed("train"), ..Default::default() };
        train_local(&mut scorers, &data, &train_g, &dev, &local).unwrap();
        acc[0] += accuracy(&test, predict_local(&scorers, &data, &test).unwrap());
        acc[1] += accuracy(&test, predict_joint(&scorers, &data, &test, Solver::default()).unwrap());
        let hinge = TrainConfig { mode: Mode::GlobalHinge, ..local };
        train_global_hinge(&mut scorers, &data, &train_g, &dev, &hinge).unwrap();
        acc[2] += accuracy(&test, predict_global(&scorers, &data, &test, Solver::default()).unwrap());
    }
    acc.map(|a| a / C6_FOLDS as f64)
}

fn global_beats_local() -> Outcome {
    let start = Instant::now();
    let per_seed: Vec<[f64; 3]> = (0..C6_SEEDS).map(debate_seed).collect();
    let mean = |i: usize| per_seed.iter().map(|a| a[i]).sum::<f64>() / C6_SEEDS as f64;
    let (local, joint, hinge) = (mean(0), mean(1), mean(2));
    let elapsed = start.elapsed();
    outcome(
        joint - local >= C6_MARGIN && hinge - joint >= C6_MARGIN && elapsed < C6_BUDGET,
        format!("local {:.3}, joint {:.3}, global-hinge {:.3} over {} seeds", local, joint, hinge, C6_SEEDS),
    )
}

// 7 ------------------------------------------------------------------------

fn two_task_seed(seed: u64) -> [f64; 2] {
    let seeds = SeedStream::new(seed);
    let corpus = two_task_corpus(&mut seeds.rng("corpus"), &TwoTaskConfig::default());
    let (prog, data, _dir) = load(&corpus);
    let graphs = ground(&prog, &data).unwrap();
    let user = |g: &FactorGraph| data.name(g.variables[0].atom.args[0]).to_string();
    let mut users: Vec<String> = graphs.iter().map(user).collect();
    users.sort();
    users.dedup();
    users.shuffle(&mut seeds.rng("users"));
    let n_b = ((users.len() - C7_TEST_USERS) as f64 * C7_B_FRACTION).round() as usize;
    let test_users = &users[..C7_TEST_USERS];
    let b_users = &users[C7_TEST_USERS..C7_TEST_USERS + n_b];

    let (mut train_g, mut test) = (Vec::new(), Vec::new());
    for g in &graphs {
        let (u, is_b) = (user(g), g.variables[0].atom.predicate == "TaskB");
        if test_users.contains(&u) {
            if is_b {
                test.push(g.clone());
            }
        } else if !is_b || b_users.contains(&u) {
            train_g.push(g.clone());
        }
    }
    [Sharing::Relnets, Sharing::Independent].map(|sharing| {
        let mut net = NetConfig::default_for(&prog, &data, C7_HIDDEN, 0);
        net.sharing = sharing;
        let mut scorers = build_scorers(&prog, &net, &data, seeds.seed("init")).unwrap();
        let cfg = TrainConfig { epochs: C7_EPOCHS, seed: seeds.seed("train"), ..Default::default() };
        train_local(&mut scorers, &data, &train_g, &[], &cfg).unwrap();
        accuracy(&test, predict_joint(&scorers, &data, &test, Solver::default()).unwrap())
    })
}

fn relnets_sharing() -> Outcome {
    let per_seed: Vec<[f64; 2]> = (0..C7_SEEDS).map(two_task_seed).collect();
    let mean = |i: usize| per_seed.iter().map(|a| a[i]).sum::<f64>() / C7_SEEDS as f64;
    let (shared, independent) = (mean(0), mean(1));
    outcome(
        shared - independent >= C7_MARGIN,
        format!("task B: relnets {:.3}, independent {:.3} over {} seeds", shared, independent, C7_SEEDS),
    )
}

// 8 ------------------------------------------------------------------------

struct Fixture {
    name: &'static str,
    weighted: usize,
    constraints: usize,
    variables: usize,
    potentials: usize,
    rows: usize,
}

const FIXTURES: [Fixture; 3] = [
    Fixture { name: "open_domain", weighted: 8, constraints: 8, variables: 21, potentials: 26, rows: 18 },
    Fixture { name: "issue_specific", weighted: 2, constraints: 6, variables: 5, potentials: 5, rows: 12 },
    Fixture { name: "argument_mining", weighted: 5, constraints: 10, variables: 42, potentials: 27, rows: 57 },
];

fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn check_fixture(f: &Fixture) -> Result<(), String> {
    let dir = fixture_dir(f.name);
    let source = fs::read_to_string(dir.join("program.dr")).map_err(|e| e.to_string())?;
    let prog = compile(&source).map_err(|e| format!("{}: {}", f.name, e))?;
    let weighted = prog.templates.iter().filter(|t| t.weighted).count();
    let constraints = prog.templates.len() - weighted + prog.constraints.len();
    if (weighted, constraints) != (f.weighted, f.constraints) {
        return Err(format!("{}: {} weighted, {} constraints", f.name, weighted, constraints));
    }
    let data = Datastore::load(&dir, &prog).map_err(|e| format!("{}: {}", f.name, e))?;
    let graphs = ground(&prog, &data).map_err(|e| format!("{}: {}", f.name, e))?;
    let count = |k: fn(&FactorGraph) -> usize| graphs.iter().map(k).sum::<usize>();
    let counts = (count(|g| g.variables.len()), count(|g| g.potentials.len()), count(|g| g.constraints.len()));
    if counts != (f.variables, f.potentials, f.rows) {
        return Err(format!("{}: grounded counts {:?}", f.name, counts));
    }
    let dump = dump_graphs(&graphs, &data);
    let golden = dir.join("golden.dump");
    if std::env::var_os("RELGRAPH_BLESS").is_some() {
        fs::write(&golden, &dump).map_err(|e| e.to_string())?;
    }
    let expected = fs::read_to_string(&golden).map_err(|e| format!("{}: {}", golden.display(), e))?;
    if dump != expected {
        return Err(format!("{}: dump differs from golden file", f.name));
    }
    Ok(())
}

fn fixture_corpus() -> Outcome {
    let errors: Vec<String> = FIXTURES.iter().filter_map(|f| check_fixture(f).err()).collect();
    let names: Vec<&str> = FIXTURES.iter().map(|f| f.name).collect();
    if errors.is_empty() {
        outcome(true, format!("{} match golden dumps", names.join(", ")))
    } else {
        outcome(false, errors.join("; "))
    }
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, Criterion); 8] = [
        ("logic-to-ILP equivalence", logic_to_ilp),
        ("exact MAP oracle", exact_map_oracle),
        ("gradient fidelity", gradient_fidelity),
        ("CRF pool limit", crf_pool_limit),
        ("constraint satisfaction", constraint_satisfaction),
        ("global >= joint >= local", global_beats_local),
        ("relnets sharing effect", relnets_sharing),
        ("fixture corpus", fixture_corpus),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("RELGRAPH_CRITERIA").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += !o.pass as usize;
        println!(
            "criterion {} {:<26} {}  {} [{:.1}s]",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", failed);
        ExitCode::FAILURE
    }
}
