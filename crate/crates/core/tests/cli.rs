use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpgp"))
        .args(args)
        .env_remove("JUMPGP_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn generate_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = run(&["generate", "--case", "b", "--n", "50", "--sigma2", "1", "--seed", "2", "--out", &s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train = std::fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(train.lines().count(), 51);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "generate");
}

#[test]
fn negative_noise_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--case", "a", "--n", "50", "--sigma2", "-1", "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn malformed_row_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    std::fs::write(&train, "x1,x2,y\n0.1,0.2,1.0\n0.3,abc,2.0\n").unwrap();
    let test = dir.path().join("test.csv");
    std::fs::write(&test, "x1,x2\n0,0\n").unwrap();
    let o = run(&["predict", "--train", &s(&train), "--test", &s(&test), "--out", &s(&dir.path().join("p"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn manifest_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = run(&["generate", "--case", "a", "--n", "30", "--out", &s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = out.join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    m["config"]["bogus"] = serde_json::json!(1);
    std::fs::write(&path, m.to_string()).unwrap();
    let o = run(&["generate", "--from-manifest", &s(&path), "--out", &s(&dir.path().join("g2"))]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn predict_writes_one_row_per_test_point() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    assert!(run(&["generate", "--case", "a", "--n", "80", "--seed", "4", "--out", &s(&g)]).status.success());
    let test = dir.path().join("test.csv");
    std::fs::write(&test, "x1,x2\n0.2,0.2\n-0.3,0.1\n0.0,-0.4\n").unwrap();
    let p = dir.path().join("p");
    let o = run(&[
        "predict", "--train", &s(&g.join("train.csv")), "--test", &s(&test), "--k", "15", "--method", "both",
        "--out", &s(&p),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = std::fs::read_to_string(p.join("predictions.csv")).unwrap();
    let mut lines = body.lines();
    assert!(lines.next().unwrap().starts_with("x1,x2,method,mean,sd"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(methods, ["local-gp", "jump-gp"].repeat(3));
}
