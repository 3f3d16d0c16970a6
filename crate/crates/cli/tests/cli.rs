use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CANDIDATE: &str = "\
# cube of a -> b, b -> c, c -> ab
a -> a b
b -> b c
c -> c a b
inverse:
a -> a c A B
b -> b a C
c -> c A
";

const LINEAR: &str = "\
a -> a
b -> a b
c -> c
inverse:
a -> a
b -> A b
c -> c
";

const FIBONACCI: &str = "a -> a b\nb -> a\n";

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_currdyn"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CURRDYN_BUDGET")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn scan_finds_fixed_generator() {
    let dir = TempDir::new().unwrap();
    write(&dir, "linear.txt", LINEAR);
    let out = run(&["scan", "linear.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out);
    assert_eq!(r["result"]["witness"], "a");
    assert_eq!(r["verdict"], "fails");
    assert_eq!(r["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn self_pair_does_not_flare() {
    let dir = TempDir::new().unwrap();
    write(&dir, "phi.txt", CANDIDATE);
    let out = run(&["flare", "phi.txt", "phi.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out);
    assert_eq!(r["result"]["independence"]["independent"], false);
    assert!(r["result"]["witness"].is_string());
}

#[test]
fn candidate_converges_with_monotone_tails() {
    let dir = TempDir::new().unwrap();
    write(&dir, "phi.txt", CANDIDATE);
    let out = run(
        &["ns", "phi.txt", "--samples", "20", "--seed", "5", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/ns.json")).unwrap()).unwrap();
    assert_eq!(r["config"]["seed"], 5);
    assert!(r["power"].as_u64().unwrap() >= 1);
    for w in r["result"]["words"].as_array().unwrap() {
        assert_eq!(w["status"], "converged");
        let tail: Vec<f64> = w["tail"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert!(tail.windows(2).all(|p| p[1] <= p[0]));
        assert!(*tail.last().unwrap() < 1e-3);
    }
    let csv = fs::read_to_string(dir.path().join("res/ns.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# currdyn ns csv schema v1"));
    assert!(lines.next().unwrap().starts_with("sample,word,n,forward_length"));
    assert!(lines.count() >= 20);
}

#[test]
fn analyze_reports_strata() {
    let dir = TempDir::new().unwrap();
    write(&dir, "fib.txt", FIBONACCI);
    write(&dir, "id.txt", "a -> a\nb -> b\n");
    let out = run(&["analyze", "fib.txt"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let strata = json(&out)["result"]["strata"].clone();
    assert_eq!(strata.as_array().unwrap().len(), 1);
    assert_eq!(strata[0]["kind"], "Eg");
    assert!((strata[0]["eigenvalue"].as_f64().unwrap() - 1.618034).abs() < 1e-6);

    let out = run(&["analyze", "id.txt"], dir.path());
    let r = json(&out)["result"].clone();
    assert_eq!(r["bcc"], 0);
    assert!(r["strata"].as_array().unwrap().iter().all(|s| s["kind"] == "Neg"));
}

#[test]
fn parse_errors_carry_position() {
    let dir = TempDir::new().unwrap();
    write(&dir, "bad.txt", "a -> b\nb -> \n");
    let out = run(&["analyze", "bad.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn simplex_without_inverse_warns() {
    let dir = TempDir::new().unwrap();
    write(&dir, "fib.txt", FIBONACCI);
    let out = run(&["simplex", "fib.txt", "--order", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let r = json(&out)["result"].clone();
    assert!(r["repelling"].is_null());
    let points = r["attracting"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0]["order"], 2);
}

#[test]
fn orbit_needs_inverse() {
    let dir = TempDir::new().unwrap();
    write(&dir, "fib.txt", FIBONACCI);
    let out = run(&["orbit", "fib.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inverse"));
}

#[test]
fn outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    write(&dir, "phi.txt", CANDIDATE);
    let args = ["orbit", "phi.txt", "--samples", "8", "--nmax", "6", "--seed", "3"];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn budget_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    write(&dir, "linear.txt", LINEAR);
    let out = Command::new(env!("CARGO_BIN_EXE_currdyn"))
        .args(["scan", "linear.txt"])
        .current_dir(dir.path())
        .env("CURRDYN_BUDGET", "4321")
        .output()
        .unwrap();
    assert_eq!(json(&out)["config"]["budget"], 4321);
}
