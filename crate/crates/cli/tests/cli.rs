use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonneg-factory"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_shows_every_shipped_experiment() {
    let out = bin(&["list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in nonneg_factory::registry::names() {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn describe_known_and_unknown() {
    let out = bin(&["describe", "poisson-unbiasedness"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("Poisson estimator"));

    let out = bin(&["describe", "poisson-unbiasednes"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did you mean `poisson-unbiasedness`"), "{err}");
}

#[test]
fn run_writes_summary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = bin(&["run", "poisson-point-mass", "--out", out_dir, "--reps", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("poisson-point-mass.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["estimate"], 1.0);
    assert_eq!(summary["reps"], 100);
    assert_eq!(summary["pass"], true);

    let csv = fs::read_to_string(dir.path().join("poisson-point-mass.samples.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rep,value,inputs_consumed,n_drawn"));
    assert_eq!(lines.count(), 100);
}

#[test]
fn run_from_file_with_seed_override_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"name": "tiny", "kind": "unbiasedness", "reps": 2000, "seed": 1,
            "factory": {"factory": "inverse", "stream": {"dist": "uniform", "a": 1, "b": 2},
                        "trunc": {"trunc": "geometric", "rho": 0.5}}}"#,
    )
    .unwrap();
    let spec = spec.to_str().unwrap();
    let read = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = bin(&["run", spec, "--out", out_dir.to_str().unwrap(), "--seed", "77"]);
        assert!(out.status.success());
        fs::read(out_dir.join("tiny.samples.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn tolerance_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("wrong.json");
    fs::write(
        &spec,
        r#"{"name": "wrong", "kind": "unbiasedness", "reps": 1000, "seed": 1, "target": 3.0,
            "factory": {"factory": "constant", "gamma": 2}}"#,
    )
    .unwrap();
    let out = bin(&["run", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(
        &spec,
        r#"{"name": "bad", "kind": "unbiasedness", "reps": 10, "seed": 1,
            "factory": {"factory": "poisson", "stream": {"dist": "gaussian", "mean": 0},
                        "trunc": {"trunc": "geometric", "rho": 0.5}}}"#,
    )
    .unwrap();
    let out = bin(&["run", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("factory.stream.sd"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let read = |threads: &str| {
        let out_dir = dir.path().join(threads);
        let out = Command::new(env!("CARGO_BIN_EXE_nonneg-factory"))
            .args(["run", "negativity-gaussian", "--reps", "20000", "--out", out_dir.to_str().unwrap()])
            .env("NONNEG_FACTORY_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read(out_dir.join("negativity-gaussian.samples.csv")).unwrap()
    };
    assert_eq!(read("1"), read("3"));
}
