use std::collections::BTreeMap;
use std::fs;

use num_rational::Rational64;
use proptest::prelude::*;

use super::*;
use crate::autodiff::{OptimizerKind, ParamId, Tape, Tensor};
use crate::dsl::{compile, Comparator};
use crate::grounder::{ground, GroundRule, LinearConstraint};
use crate::inference::{brute_force, enumerate_feasible};
use crate::relnets::{build_scorers, NetConfig};

const TOY: &str = "\
entity E features=2
predicate Q(E)
predicate A(E)?
predicate B(E)?
rule: Q(X) => A(X)
rule: Q(X) => B(X)
hardconstraint: A(X) => B(X)
";

const POINTS: [(f64, f64); 8] =
    [(1.0, 0.2), (0.8, -0.5), (-0.7, 0.9), (-1.0, -0.8), (0.3, 0.6), (-0.4, -0.3), (0.9, 0.9), (-0.6, 0.4)];

struct Toy {
    graphs: Vec<FactorGraph>,
    data: Datastore,
    scorers: ScorerGraph,
    _dir: tempfile::TempDir,
}

fn toy(seed: u64) -> Toy {
    let prog = compile(TOY).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (mut feat, mut q, mut a, mut b) = (String::new(), String::new(), String::new(), String::new());
    for (i, (x, y)) in POINTS.iter().enumerate() {
        feat += &format!("e{} {} {}\n", i, x, y);
        q += &format!("e{}\n", i);
        let ga = *x > 0.0;
        a += &format!("e{}\t{}\n", i, ga as u8);
        b += &format!("e{}\t{}\n", i, (ga || *y > 0.0) as u8);
    }
    for (n, t) in [("E.feat", feat), ("Q.tsv", q), ("A.tsv", a), ("B.tsv", b)] {
        fs::write(dir.path().join(n), t).unwrap();
    }
    let data = Datastore::load(dir.path(), &prog).unwrap();
    let graphs = ground(&prog, &data).unwrap();
    let cfg = NetConfig::default_for(&prog, &data, 4, 2);
    let scorers = build_scorers(&prog, &cfg, &data, seed).unwrap();
    Toy { graphs, data, scorers, _dir: dir }
}

fn zero_params(s: &mut ScorerGraph) {
    let ids: Vec<ParamId> = s.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        s.store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

fn sgd(lr: f64) -> OptimizerConfig {
    OptimizerConfig { kind: OptimizerKind::Sgd, lr, ..Default::default() }
}

#[test]
fn uniform_scores_cost_log_two_per_rule() {
    let mut t = toy(0);
    zero_params(&mut t.scorers);
    let g = &t.graphs[0];
    let gold = g.gold().unwrap();
    let mut fwd = Forward::new(&t.scorers, &t.data);
    let n = local_loss(&mut fwd, g, &gold).unwrap();
    let expected = g.potentials.len() as f64 * 2f64.ln();
    assert!((fwd.tape.scalar(n) - expected).abs() < 1e-12);
}

#[test]
fn local_training_converges_monotonically() {
    let mut t = toy(3);
    let cfg = TrainConfig { epochs: 60, patience: 100, optimizer: sgd(0.05), batch: t.graphs.len(), ..Default::default() };
    let report = train_local(&mut t.scorers, &t.data, &t.graphs, &[], &cfg).unwrap();
    let losses: Vec<f64> = report.history.iter().map(|e| e.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", losses);
    assert!(losses.last().unwrap() < &(losses[0] * 0.5));
    let pred = predict_joint(&t.scorers, &t.data, &t.graphs, Solver::default()).unwrap();
    let gold = golds(&t.graphs).unwrap();
    let right = pred.iter().zip(&gold).filter(|(p, g)| &p.values == *g).count();
    assert!(right >= 6, "{} of 8", right);
}

#[test]
fn missing_gold_is_reported() {
    let mut t = toy(0);
    t.graphs[1].variables[0].gold = None;
    let err = train_local(&mut t.scorers, &t.data, &t.graphs, &[], &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, LearnError::MissingGold { .. }));
}

fn finite_difference_check(scorers: &ScorerGraph, loss: impl Fn(&ScorerGraph) -> f64, grads: &Gradients) {
    let h = 1e-4;
    for (id, p) in scorers.store.iter() {
        for j in 0..p.value.len() {
            let mut plus = scorers.clone();
            plus.store.get_mut(id).value.data_mut()[j] += h;
            let mut minus = scorers.clone();
            minus.store.get_mut(id).value.data_mut()[j] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = grads.get(id).map_or(0.0, |g| g.data()[j]);
            let denom = fd.abs().max(an.abs()).max(1e-2);
            assert!((fd - an).abs() / denom < 1e-3, "{}[{}]: fd {} vs {}", p.name, j, fd, an);
        }
    }
}

#[test]
fn local_gradient_matches_finite_differences() {
    let t = toy(11);
    let g = &t.graphs[2];
    let gold = g.gold().unwrap();
    let loss = |s: &ScorerGraph| {
        let mut f = Forward::new(s, &t.data);
        let n = local_loss(&mut f, g, &gold).unwrap();
        f.tape.scalar(n)
    };
    let mut f = Forward::new(&t.scorers, &t.data);
    let n = local_loss(&mut f, g, &gold).unwrap();
    let grads = f.tape.backward(n).unwrap();
    finite_difference_check(&t.scorers, loss, &grads);
}

/// Two variables, one potential each, with an implication `y0 → y1`.
fn two_var_graph() -> FactorGraph {
    let p0 = GroundRule::bare(0, vec![], vec![], Head::Binary(0));
    let p1 = GroundRule::bare(1, vec![], vec![], Head::Binary(1));
    let c = LinearConstraint {
        coeffs: BTreeMap::from([(0, Rational64::from(1)), (1, Rational64::from(-1))]),
        comparator: Comparator::Le,
        rhs: Rational64::from(0),
        origin: "c0".into(),
    };
    FactorGraph::bare(2, vec![p0, p1], vec![c])
}

fn constants(tape: &mut Tape, tables: &[ScoreTable]) -> Vec<crate::autodiff::NodeId> {
    tables.iter().map(|t| tape.constant(Tensor::vector(t.clone()))).collect()
}

#[test]
fn hinge_at_gold_is_zero() {
    let g = two_var_graph();
    let gold = [true, true];
    let mut tape = Tape::new();
    let nodes = constants(&mut tape, &[vec![0.0, 1.0], vec![0.0, 2.0]]);
    let n = hinge_at(&mut tape, &g, &nodes, &gold, &gold).unwrap();
    assert_eq!(tape.scalar(n), 0.0);
}

#[test]
fn hinge_matches_enumeration() {
    let g = two_var_graph();
    let tables = vec![vec![0.3, -0.2], vec![1.0, 0.1]];
    let obj = Objective::new(&g, &tables).unwrap();
    for gold in [[false, false], [false, true], [true, true]] {
        let gold_score = obj.evaluate(&gold);
        let brute = enumerate_feasible(&obj)
            .iter()
            .map(|a| a.score + a.values.iter().zip(&gold).filter(|(x, y)| x != y).count() as f64 - gold_score)
            .fold(f64::NEG_INFINITY, f64::max);
        let yhat = obj.clone().with_hamming(&gold).solve_exact(40).unwrap();
        let mut tape = Tape::new();
        let nodes = constants(&mut tape, &tables);
        let n = hinge_at(&mut tape, &g, &nodes, &gold, &yhat.values).unwrap();
        assert!((tape.scalar(n) - brute).abs() < 1e-12, "gold {:?}", gold);
    }
}

#[test]
fn hinge_vanishes_with_a_large_margin() {
    let mut t = toy(5);
    let g = t.graphs[0].clone();
    let gold = g.gold().unwrap();
    let mut cfg = TrainConfig { mode: Mode::GlobalHinge, epochs: 200, patience: 1000, ..Default::default() };
    cfg.optimizer.lr = 0.05;
    train_global_hinge(&mut t.scorers, &t.data, std::slice::from_ref(&g), &[], &cfg).unwrap();
    let mut fwd = Forward::new(&t.scorers, &t.data);
    let (value, node) = hinge_loss(&mut fwd, &g, &gold, Solver::default()).unwrap();
    assert_eq!(value, 0.0);
    assert!(node.is_none());
}

#[test]
fn hinge_step_decreases_hinge() {
    let t = toy(7);
    let solver = Solver::default();
    for g in &t.graphs {
        let gold = g.gold().unwrap();
        let mut fwd = Forward::new(&t.scorers, &t.data);
        let (before, node) = hinge_loss(&mut fwd, g, &gold, solver).unwrap();
        let Some(node) = node else { continue };
        let mut s = t.scorers.clone();
        fwd.tape.backward(node).unwrap().accumulate_into(&mut s.store);
        Optimizer::new(sgd(1e-3)).step(&mut s.store);
        let mut fwd = Forward::new(&s, &t.data);
        let (after, _) = hinge_loss(&mut fwd, g, &gold, solver).unwrap();
        assert!(after < before, "{} -> {}", before, after);
        return;
    }
    panic!("no margin violation in the toy set");
}

fn scored<'a>(s: &'a ScorerGraph, data: &'a Datastore, g: &FactorGraph) -> (Forward<'a>, Vec<crate::autodiff::NodeId>) {
    let mut f = Forward::new(s, data);
    let n = f.score_graph(g).unwrap();
    (f, n)
}

#[test]
fn hinge_and_crf_gradients_match_finite_differences() {
    let t = toy(13);
    let g = &t.graphs[4];
    let gold = g.gold().unwrap();
    let (mut f, nodes) = scored(&t.scorers, &t.data, g);
    let wrong: Vec<bool> = gold.iter().map(|v| !v).collect();
    let yhat = if g.is_feasible(&wrong) { wrong } else { vec![false; gold.len()] };
    let pool = vec![gold.clone(), yhat.clone(), vec![false; gold.len()]];

    let h = hinge_at(&mut f.tape, g, &nodes, &gold, &yhat).unwrap();
    let grads = f.tape.backward(h).unwrap();
    let hinge = |s: &ScorerGraph| {
        let (mut f, n) = scored(s, &t.data, g);
        let r = hinge_at(&mut f.tape, g, &n, &gold, &yhat).unwrap();
        f.tape.scalar(r)
    };
    finite_difference_check(&t.scorers, hinge, &grads);

    let c = crf_at(&mut f.tape, g, &nodes, &gold, &pool).unwrap();
    let grads = f.tape.backward(c).unwrap();
    let crf = |s: &ScorerGraph| {
        let (mut f, n) = scored(s, &t.data, g);
        let r = crf_at(&mut f.tape, g, &n, &gold, &pool).unwrap();
        f.tape.scalar(r)
    };
    finite_difference_check(&t.scorers, crf, &grads);
}

fn exact_nll(obj: &Objective, gold: &[bool]) -> f64 {
    let scores: Vec<f64> = enumerate_feasible(obj).iter().map(|a| a.score).collect();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln() - obj.evaluate(gold)
}

#[test]
fn full_pool_gives_exact_likelihood() {
    let t = toy(2);
    for g in &t.graphs {
        let gold = g.gold().unwrap();
        let mut fwd = Forward::new(&t.scorers, &t.data);
        let (est, node) = crf_loss(&mut fwd, g, &gold, 1 << g.num_vars(), 40).unwrap();
        let obj = Objective::new(g, &score_graph(&t.scorers, g, &t.data).unwrap()).unwrap();
        assert_eq!(est.pool.len(), enumerate_feasible(&obj).len());
        assert!((fwd.tape.scalar(node) - exact_nll(&obj, &gold)).abs() < 1e-9);
    }
}

#[test]
fn gold_only_pool_is_zero_and_losses_are_nonnegative() {
    let g = two_var_graph();
    let tables = vec![vec![0.3, -0.2], vec![1.0, 0.1]];
    let gold = vec![false, true];
    let mut tape = Tape::new();
    let nodes = constants(&mut tape, &tables);
    let n = crf_at(&mut tape, &g, &nodes, &gold, std::slice::from_ref(&gold)).unwrap();
    assert_eq!(tape.scalar(n), 0.0);
    let obj = Objective::new(&g, &tables).unwrap();
    let mut last = f64::NEG_INFINITY;
    for beta in 1..=4 {
        let est = partition_estimate(&obj, &gold, beta, 40).unwrap();
        assert!(est.pool.iter().any(|a| a.values == gold));
        assert!(est.log_z >= obj.evaluate(&gold));
        assert!(est.log_z >= last);
        last = est.log_z;
    }
}

#[test]
fn crf_training_lowers_the_likelihood_loss() {
    let mut t = toy(9);
    let total = |s: &ScorerGraph| -> f64 {
        t.graphs
            .iter()
            .map(|g| {
                let obj = Objective::new(g, &score_graph(s, g, &t.data).unwrap()).unwrap();
                exact_nll(&obj, &g.gold().unwrap())
            })
            .sum()
    };
    let before = total(&t.scorers);
    let cfg = TrainConfig { mode: Mode::GlobalCrf, pool: Some(3), epochs: 10, ..Default::default() };
    train_global_crf(&mut t.scorers, &t.data, &t.graphs, &[], &cfg).unwrap();
    assert!(total(&t.scorers) < before);
}

#[test]
fn frozen_encoders_stay_put() {
    let mut t = toy(4);
    let before = t.scorers.store.clone();
    let cfg =
        TrainConfig { mode: Mode::GlobalCrf, pool: Some(2), epochs: 3, freeze_encoders: true, ..Default::default() };
    train_global_crf(&mut t.scorers, &t.data, &t.graphs, &[], &cfg).unwrap();
    let enc = t.scorers.encoder_params().clone();
    assert!(!enc.is_empty());
    let mut moved = false;
    for (id, p) in t.scorers.store.iter() {
        if enc.contains(&id) {
            assert_eq!(p.value, before.get(id).value, "{}", p.name);
        } else {
            moved |= p.value != before.get(id).value;
        }
    }
    assert!(moved);
}

#[test]
fn every_mode_and_solver_emits_feasible_assignments() {
    for mode in [Mode::Local, Mode::Joint, Mode::GlobalHinge, Mode::GlobalCrf] {
        let mut t = toy(6);
        let cfg = TrainConfig {
            mode,
            epochs: 3,
            pool: (mode == Mode::GlobalCrf).then_some(2),
            ..Default::default()
        };
        let reports = train(&mut t.scorers, &t.data, &t.graphs, &t.graphs[..2], &cfg).unwrap();
        assert_eq!(reports.len(), if mode.is_global() { 2 } else { 1 });
        for solver in [Solver::default(), Solver::Approx { restarts: 3, seed: 1 }] {
            for (g, a) in t.graphs.iter().zip(predict(mode, &t.scorers, &t.data, &t.graphs, solver).unwrap()) {
                assert!(g.is_feasible(&a.values), "{} {:?}", mode, solver);
            }
        }
    }
}

#[test]
fn joint_without_constraints_is_local_argmax() {
    let mut t = toy(8);
    for g in &mut t.graphs {
        g.constraints.clear();
    }
    let joint = predict_joint(&t.scorers, &t.data, &t.graphs, Solver::default()).unwrap();
    let local = predict_local(&t.scorers, &t.data, &t.graphs).unwrap();
    for (j, l) in joint.iter().zip(&local) {
        assert_eq!(j.values, l.values);
    }
}

#[test]
fn joint_flips_the_cheapest_decision() {
    // Local argmaxes are (1, 0), which the implication forbids; flipping
    // y1 on costs less than flipping y0 off.
    let g = two_var_graph();
    let tables = normalize(&[vec![0.0, 3.0], vec![0.5, 0.0]]);
    assert_eq!(local_argmax(&g, &tables), vec![true, false]);
    let obj = Objective::new(&g, &tables).unwrap();
    let a = obj.solve_exact(40).unwrap();
    assert_eq!(a.values, vec![true, true]);
    assert_eq!(Some(a), brute_force(&obj));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut t = toy(1);
        let cfg = TrainConfig { epochs: 4, batch: 3, ..Default::default() };
        train_local(&mut t.scorers, &t.data, &t.graphs, &t.graphs[..2], &cfg).unwrap();
        t.scorers.store
    };
    assert_eq!(run(), run());
}

#[test]
fn config_validation() {
    let crf = TrainConfig { mode: Mode::GlobalCrf, ..Default::default() };
    assert!(crf.validate().is_err());
    assert!(TrainConfig { pool: Some(0), ..crf.clone() }.validate().is_err());
    assert!(TrainConfig { pool: Some(5), ..crf }.validate().is_ok());
    assert!(TrainConfig { pool: Some(5), ..Default::default() }.validate().is_err());
    assert_eq!("global-hinge".parse::<Mode>().unwrap(), Mode::GlobalHinge);
    assert!("hinge".parse::<Mode>().is_err());
}

#[test]
fn splits_partition_the_graphs() {
    let seeds = SeedStream::new(3);
    for folds in [1, 3, 5] {
        let all = splits(23, folds, 0.1, &seeds);
        assert_eq!(all.len(), folds);
        let mut tests: Vec<usize> = Vec::new();
        for s in &all {
            let mut every: Vec<usize> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
            every.sort_unstable();
            assert_eq!(every, (0..23).collect::<Vec<_>>());
            assert!(!s.dev.is_empty());
            tests.extend(&s.test);
        }
        if folds > 1 {
            tests.sort_unstable();
            assert_eq!(tests, (0..23).collect::<Vec<_>>());
        }
    }
    assert_eq!(splits(23, 3, 0.1, &seeds), splits(23, 3, 0.1, &seeds));
}

#[test]
fn perfect_and_all_positive_metrics() {
    let t = toy(0);
    let gold = golds(&t.graphs).unwrap();
    let m = evaluate(&t.graphs, &gold, &gold, &BTreeMap::new()).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!(m.macro_f1, 1.0);
    assert_eq!(m.relations.len(), 2);

    let a_only: Vec<FactorGraph> = t
        .graphs
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.variables.retain(|v| v.atom.predicate == "A");
            g
        })
        .collect();
    let gold: Vec<Vec<bool>> = a_only.iter().map(|g| g.variables.iter().map(|v| v.gold.unwrap()).collect()).collect();
    assert_eq!(gold.iter().flatten().filter(|v| **v).count(), 4);
    let all_pos: Vec<Vec<bool>> = gold.iter().map(|g| vec![true; g.len()]).collect();
    let m = evaluate(&a_only, &all_pos, &gold, &BTreeMap::new()).unwrap();
    assert_eq!(m.relations[0].accuracy, 0.5);
    assert!((m.relations[0].positive_f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);

    assert!(matches!(evaluate(&t.graphs, &gold[..1], &gold[..1], &BTreeMap::new()), Err(LearnError::Alignment(_))));
}

#[test]
fn three_class_macro_f1_by_hand() {
    // gold a a a b b c, pred a a b b c c
    //   a: tp 2 fp 0 fn 1 -> 0.8
    //   b: tp 1 fp 1 fn 1 -> 0.5
    //   c: tp 1 fp 1 fn 0 -> 2/3
    let pairs = [('a', 'a'), ('a', 'a'), ('b', 'a'), ('b', 'b'), ('c', 'b'), ('c', 'c')];
    let (acc, f1) = classification_scores(&pairs);
    assert!((acc - 4.0 / 6.0).abs() < 1e-12);
    assert!((f1 - (0.8 + 0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
}

#[test]
fn multiclass_relations_score_by_group() {
    let prog = compile(
        "entity E features=1\nentity C vocab\npredicate Q(E)\npredicate T(E, C)?\n\
         rule: Q(X) => T(X, Y)\narith: T(X, +Y) = 1\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("E.feat"), "e1 1\ne2 2\n").unwrap();
    fs::write(dir.path().join("C.vocab"), "x\ny\nz\n").unwrap();
    fs::write(dir.path().join("Q.tsv"), "e1\ne2\n").unwrap();
    fs::write(dir.path().join("T.tsv"), "e1\tx\t1\ne1\ty\t0\ne1\tz\t0\ne2\tx\t0\ne2\ty\t0\ne2\tz\t1\n").unwrap();
    let data = Datastore::load(dir.path(), &prog).unwrap();
    let graphs = ground(&prog, &data).unwrap();
    let mc = multiclass_positions(&prog);
    assert_eq!(mc.get("T"), Some(&1));
    let gold = golds(&graphs).unwrap();
    let mut pred = gold.clone();
    // Move e2 from z to y.
    let g = graphs.iter().position(|g| g.variables.iter().any(|v| data.name(v.atom.args[0]) == "e2")).unwrap();
    for v in &graphs[g].variables {
        if data.name(v.atom.args[0]) == "e2" {
            pred[g][v.id] = data.name(v.atom.args[1]) == "y";
        }
    }
    let m = evaluate(&graphs, &pred, &gold, &mc).unwrap();
    assert_eq!(m.relations[0].support, 2);
    assert_eq!(m.relations[0].accuracy, 0.5);
    assert_eq!(m.relations[0].positive_f1, None);
    // classes x (1.0), y (0.0), z (0.0)
    assert!((m.relations[0].macro_f1 - 1.0 / 3.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifting_one_table_leaves_joint_unchanged(
        raw in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), 2),
        which in 0usize..2,
        shift in -10.0f64..10.0,
    ) {
        let g = two_var_graph();
        let base = Objective::new(&g, &normalize(&raw)).unwrap().solve_exact(40).unwrap();
        let mut moved = raw.clone();
        moved[which].iter_mut().for_each(|v| *v += shift);
        let shifted = Objective::new(&g, &normalize(&moved)).unwrap().solve_exact(40).unwrap();
        prop_assert_eq!(base.values, shifted.values);
    }
}
