use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relgraph")).args(args).env("RELGRAPH_LOG", "error").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = relgraph(args);
    assert!(out.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn fixture_program(name: &str) -> String {
    fixtures().join(name).join("program.dr").to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small debate corpus in a fresh directory.
fn debate(dir: &Path) -> String {
    let out = dir.join("corpus");
    ok(&["synth", "--out", s(&out), "--seed", "3", "debate", "--threads", "8", "--posts-per-user", "2"]);
    s(&out.join("program.dr")).to_string()
}

#[test]
fn help_matches_golden_text() {
    let help = ok(&["--help"]);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/help.txt");
    if std::env::var_os("RELGRAPH_BLESS").is_some() {
        fs::write(&golden, &help).unwrap();
    }
    assert_eq!(help, fs::read_to_string(golden).unwrap());
}

#[test]
fn compile_reports_open_domain_counts() {
    let out = ok(&["compile", "--program", &fixture_program("open_domain")]);
    assert!(out.contains("8 weighted templates"), "{}", out);
    assert!(out.contains("8 constraints"), "{}", out);

    let json: serde_json::Value =
        serde_json::from_str(&ok(&["compile", "--program", &fixture_program("open_domain"), "--json"])).unwrap();
    assert_eq!(json["weighted_templates"].as_array().unwrap().len(), 8);
    assert_eq!(json["constraints"].as_array().unwrap().len(), 8);
}

#[test]
fn ground_dump_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let program = fixture_program("argument_mining");
    let out = dir.path().join("graphs.dump");
    let mut runs = Vec::new();
    for _ in 0..2 {
        ok(&["ground", "--program", &program, "--dump", "--seed", "7", "--out", s(&out)]);
        runs.push(fs::read(&out).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs.pop().unwrap()).unwrap();
    assert!(text.starts_with("# manifest {"));
    assert!(text.contains("\"seed\":7"));
    assert!(text.contains("variables 42"));

    let stdout = ["ground", "--program", &program, "--dump", "--seed", "7"];
    assert_eq!(ok(&stdout), ok(&stdout));
}

#[test]
fn ground_statistics_list_each_instance() {
    let out = ok(&["ground", "--program", &fixture_program("issue_specific")]);
    let total = out.lines().find(|l| l.starts_with("total")).unwrap();
    let counts: Vec<&str> = total.split_whitespace().skip(1).collect();
    assert_eq!(counts, ["5", "5", "12"]);
}

#[test]
fn train_global_crf_writes_per_fold_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let program = debate(dir.path());
    let run = dir.path().join("run");
    let metrics = dir.path().join("metrics.json");
    ok(&[
        "train", "--program", &program, "--mode", "global-crf", "--pool", "5", "--folds", "2", "--epochs", "2",
        "--hidden", "4", "--seed", "11", "--out-dir", s(&run), "--metrics-out", s(&metrics), "--jobs", "2",
    ]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["manifest"]["seed"], 11);
    assert_eq!(m["mode"], "global-crf");
    let folds = m["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 2);
    for f in folds {
        let acc = f["metrics"]["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(f["metrics"]["relations"].as_array().unwrap().iter().any(|r| r["relation"] == "Stance"));
        // local warm-up then the global phase
        assert_eq!(f["training"].as_array().unwrap().len(), 2);
        let ckpt = fs::read_to_string(f["checkpoint"].as_str().unwrap()).unwrap();
        assert!(ckpt.lines().nth(2).unwrap().starts_with("# manifest"));
    }
    assert!(m["relations"]["Pro"]["accuracy"].is_number());
}

#[test]
fn infer_then_eval_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let program = debate(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--program", &program, "--mode", "joint", "--epochs", "2", "--hidden", "4", "--out-dir", s(&run)]);
    let pred = dir.path().join("pred");
    let lp = dir.path().join("lp");
    ok(&[
        "infer", "--program", &program, "--checkpoint", s(&run.join("fold0.ckpt")), "--net-config",
        s(&run.join("net.toml")), "--out", s(&pred), "--pool", "3", "--dump-lp", s(&lp),
    ]);
    for f in ["Pro.tsv", "Stance.tsv", "pool.tsv"] {
        assert!(fs::read_to_string(pred.join(f)).unwrap().starts_with("# manifest"), "{}", f);
    }
    let lp0 = fs::read_to_string(lp.join("instance0.lp")).unwrap();
    assert!(lp0.contains("Maximize") && lp0.contains("Subject To") && lp0.trim_end().ends_with("End"));

    let metrics = dir.path().join("eval.json");
    let table = ok(&["eval", "--program", &program, "--predictions", s(&pred), "--metrics-out", s(&metrics)]);
    assert!(table.lines().any(|l| l.starts_with("overall")));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(metrics).unwrap()).unwrap();
    assert!(m["metrics"]["accuracy"].as_f64().unwrap() > 0.0);

    // Gold files are valid prediction files and score perfectly.
    let perfect = ok(&["eval", "--program", &program, "--predictions", s(&dir.path().join("corpus"))]);
    let overall = perfect.lines().find(|l| l.starts_with("overall")).unwrap();
    assert!(overall.contains("1.0000"), "{}", overall);
}

#[test]
fn approx_solver_and_embeddings_run_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred");
    let program = fixture_program("open_domain");
    ok(&["infer", "--program", &program, "--solver", "approx", "--mode", "global-hinge", "--out", s(&out)]);
    assert!(out.join("HasIdeology.tsv").exists());
    let emb = ok(&["embeddings", "--program", &program, "--embed", "3"]);
    let rows: Vec<&str> = emb.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows.iter().any(|r| r.contains("\tlib\t") || r.contains("\tcon\t")), "{}", emb);
    assert!(rows.iter().all(|r| r.split('\t').nth(2).unwrap().split(' ').count() == 3));
}

#[test]
fn fixtures_command_checks_golden_dumps() {
    let out = ok(&["fixtures", s(&fixtures())]);
    assert_eq!(out.lines().filter(|l| l.ends_with(" ok")).count(), 3, "{}", out);
}

#[test]
fn compile_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dr");
    fs::write(&bad, "entity X\npredicate P(X)?\nrule: Q(Y) => P(Y)\n").unwrap();
    let out = relgraph(&["compile", "--program", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "compile");
    assert_eq!(err["line"], 3);
    assert!(err["message"].as_str().unwrap().contains("`Q`"));
}

#[test]
fn missing_inputs_fail_before_running() {
    let out = relgraph(&["ground", "--program", "/nonexistent/program.dr"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("does not exist"));

    let bad_mode = relgraph(&["train", "--program", &fixture_program("open_domain"), "--mode", "fancy"]);
    assert_eq!(bad_mode.status.code(), Some(2));
}
