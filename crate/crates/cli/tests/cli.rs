use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = wfp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CONFIG: &str = r#"
folds = 3
classifiers = ["Bi-XCor", "Wa-kNN", "Ha-kFP"]
forest_trees = 40
distance_kinds = ["Bi-XCor"]
ensemble = ["Bi-XCor", "Wa-kNN", "Ha-kFP"]
m_match = "0:1:0.1"
too_far_m = "0.5:2:0.25"
m_ensemble = "0:3:0.5"
"#;

#[test]
fn pipeline_from_synth_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let cfg = d.join("cfg.toml");
    fs::write(&cfg, CONFIG).unwrap();

    ok(&["synth", "--spec", "4x6+30", "--out", p(&data), "--seed", "3"]);
    assert!(data.join("index.tsv").exists());

    let split = ok(&["split", "--data", p(&data), "--folds", "3", "--out", p(&d.join("folds")), "--seed", "1"]);
    assert_eq!(split.lines().count(), 3);

    let model = d.join("m.bin");
    let train_dir = d.join("folds/fold-0/train");
    ok(&["train", "--data", p(&train_dir), "--classifier", "Wa-kNN", "--out", p(&model), "--seed", "2"]);
    let scores = d.join("scores.csv");
    let test_dir = d.join("folds/fold-0/test");
    let summary = ok(&[
        "score", "--model", p(&model), "--data", p(&test_dir), "--out", p(&scores), "--m-match", "0.8", "--seed", "0",
    ]);
    assert!(summary.starts_with("N_P=8 N_N=10"));
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 19);

    let results = d.join("res.csv");
    ok(&["sweep", "--config", p(&cfg), "--data", p(&data), "--out", p(&results), "--seed", "5"]);
    let t7 = d.join("t7.csv");
    ok(&["report", "--kind", "t7", "--in", p(&results), "--out", p(&t7), "--seed", "0"]);
    let table = fs::read_to_string(&t7).unwrap();
    assert_eq!(table.lines().count(), 1 + 7);
    ok(&["report", "--kind", "t7", "--in", p(&results), "--out", p(&t7)]);
    assert_eq!(fs::read_to_string(&t7).unwrap(), table);

    let f3 = d.join("f3.dat");
    ok(&["report", "--kind", "f3", "--in", p(&results), "--out", p(&f3), "--classifier", "Wa-kNN"]);
    assert!(fs::read_to_string(&f3).unwrap().lines().all(|l| l.split(' ').count() == 2));
    assert!(d.join("f3.gp").exists());

    let curve = d.join("curve.csv");
    ok(&["curve", "--config", p(&cfg), "--data", p(&data), "--classifier", "Bi-XCor", "--n", "0,5,15", "--out", p(&curve), "--seed", "5"]);
    let f2 = d.join("f2.dat");
    ok(&["report", "--kind", "f2", "--in", p(&curve), "--out", p(&f2)]);
    assert_eq!(fs::read_to_string(&f2).unwrap().lines().count(), 3);
}

#[test]
fn sweep_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let mut bodies = Vec::new();
    for w in ["1", "2"] {
        let out = d.join(format!("r{w}.csv"));
        ok(&["sweep", "--config", p(&cfg), "--synth", "3x6+20", "--workers", w, "--out", p(&out), "--seed", "9"]);
        bodies.push(fs::read(&out).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn scenarios_defenses_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let cfg = d.join("cfg.toml");
    fs::write(&cfg, CONFIG).unwrap();
    ok(&["synth", "--spec", "4x6+30", "--out", p(&data), "--seed", "3"]);

    let sel = ok(&["select", "--config", p(&cfg), "--data", p(&data), "--classifier", "Wa-kNN", "--s", "1,5", "--trials", "300", "--seed", "4"]);
    let first: Vec<&str> = sel.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[..2], ["1", "1"]);

    let id = ok(&[
        "identify", "--config", p(&cfg), "--data", p(&data), "--classifier", "Wa-kNN", "--b", "0.2", "--n-obs", "20",
        "--m-identify", "20", "--trials", "300", "--seed", "4",
    ]);
    assert_eq!(id.lines().nth(1).unwrap(), "20,0,0");

    let def_cfg = d.join("def.toml");
    fs::write(&def_cfg, "kind = \"constant_rate\"\nrho_out = 0.02\nrho_in = 0.005\nblock = 50\n").unwrap();
    let defended = d.join("def");
    ok(&["defend", "--in", p(&data), "--out", p(&defended), "--config", p(&def_cfg), "--seed", "1"]);
    let ingested = ok(&["ingest", "--in", p(&defended), "--out", p(&d.join("ing")), "--subset", "2x3+5", "--seed", "1"]);
    assert!(ingested.contains("2x3+5"));
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let empty = d.join("empty.csv");
    fs::write(&empty, "# wfprecision-results v1\n").unwrap();
    let out = wfp(&["report", "--kind", "t4", "--in", p(&empty), "--out", p(&d.join("t4.csv"))]);
    assert!(!out.status.success());
    assert!(!d.join("t4.csv").exists());
    assert!(!wfp(&["synth", "--spec", "nonsense", "--out", p(d)]).status.success());
    assert!(!wfp(&["train", "--data", p(d), "--classifier", "Nope", "--out", p(&d.join("m"))]).status.success());
}
