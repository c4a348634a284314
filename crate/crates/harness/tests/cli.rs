use std::path::Path;
use std::process::{Command, Output};

fn cape(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cape"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cape(&["--help"], dir.path())), 0);
}

#[test]
fn bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cape(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&cape(&["gen", "--prevalence", "1.5,0.2"], dir.path())), 1);
    std::fs::write(dir.path().join("bad.toml"), "iterations = \"many\"\n").unwrap();
    assert_eq!(code(&cape(&["--config", "bad.toml", "sweep"], dir.path())), 1);
    std::fs::write(dir.path().join("unknown.toml"), "colour = 3\n").unwrap();
    assert_eq!(code(&cape(&["--config", "unknown.toml", "sweep"], dir.path())), 1);
}

#[test]
fn missing_or_malformed_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cape(&["train", "--data", "nope.csv"], dir.path())), 2);
    std::fs::write(dir.path().join("broken.csv"), "x0,group,label\n0.1,0,1\nabc,1,0\n").unwrap();
    let o = cape(&["train", "--data", "broken.csv"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let o = cape(args, d);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(&["--seed", "1", "gen", "--prevalence", "0.5,0.5", "--size", "2000", "--out", "train.csv"]);
    ok(&["--seed", "2", "gen", "--prevalence", "0.2,0.7", "--size", "600", "--out", "test.csv"]);
    ok(&["--seed", "3", "train", "--data", "train.csv", "--out", "model.json", "--baseline", "max.json"]);
    ok(&["predict", "--model", "model.json", "--data", "test.csv", "--out", "cape.csv", "--trace", "trace.json"]);
    ok(&["predict", "--model", "max.json", "--data", "test.csv", "--out", "max.csv"]);
    let trace: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("trace.json")).unwrap()).unwrap();
    assert!(trace.is_object() || trace.is_array());

    let stdout = ok(&["evaluate", "--data", "test.csv", "--predictions", "cape.csv"]).stdout;
    let text = String::from_utf8(stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("dataset,algorithm,fpr_z0"), "{text}");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let pd_z1: f64 = row[header.split(',').position(|c| c == "pd_z1").unwrap()].parse().unwrap();
    assert!(pd_z1 < 0.1, "{text}");

    ok(&["evaluate", "--data", "test.csv", "--predictions", "max.csv", "--out", "eval"]);
    assert!(d.join("eval/metrics.csv").is_file());
    assert!(d.join("eval/metrics.json").is_file());
}

#[test]
fn predict_accepts_unlabeled_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(cape(&["gen", "--size", "1000", "--out", "train.csv"], d).status.success());
    assert!(cape(&["--fast", "train", "--data", "train.csv", "--out", "m.json"], d).status.success());
    std::fs::write(d.join("x.csv"), "x0,x1,group\n14.0,-9.0,0\n-9.0,14.0,1\n").unwrap();
    let o = cape(&["predict", "--model", "m.json", "--data", "x.csv", "--out", "p.csv"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(p.lines().count(), 3);
}

#[test]
fn fast_sweep_reports_to_out() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "mode = \"synthetic_cells\"\niterations = 1\n[synthetic]\ntrain_size = 1500\ntest_size = 500\ncells = [[0.4, 0.6]]\n",
    )
    .unwrap();
    let o = cape(&["--config", "cfg.toml", "--out", "res", "sweep"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["table1.csv", "table3.csv", "bounds.csv", "manifest.json"] {
        assert!(dir.path().join("res").join(f).is_file(), "{f}");
    }
}
