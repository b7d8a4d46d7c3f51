use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use onesided::fixtures;
use onesided::io::{load_spec, spec_to_json};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn onesided(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onesided"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn solve(spec: &str, dir: &TempDir, mesh: &str) -> String {
    let solution = path(dir, "solution.json");
    let out = onesided(&["solve", "--spec", spec, "--solution", &solution, "--mesh", mesh, "--out", &path(dir, "values.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    solution
}

#[test]
fn shipped_documents_match_the_fixtures() {
    for (name, spec) in [
        ("constant_cost.json", fixtures::constant_cost(0.7)),
        ("desk_one_state.json", fixtures::desk_one_state()),
        ("desk_two_state.json", fixtures::desk_two_state()),
        ("revealing.json", fixtures::revealing()),
    ] {
        assert_eq!(load_spec(&fixture(name)).unwrap(), spec, "{name}");
    }
}

#[test]
fn validate_prints_a_certificate() {
    let out = onesided(&["validate", "--spec", fixture("constant_cost.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["valid"], true);
    let beta = v["certificate"]["beta"].as_f64().unwrap();
    assert!(beta > 0.0 && beta < 1.0);
}

#[test]
fn invalid_documents_exit_with_validation_status() {
    let dir = TempDir::new().unwrap();
    let mut spec = fixtures::desk_one_state();
    spec.branches_mut(0, 0, 0)[0].prob = 0.5;
    let broken = path(&dir, "broken.json");
    std::fs::write(&broken, spec_to_json(&spec)).unwrap();
    let out = onesided(&["validate", "--spec", &broken]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());

    std::fs::write(&broken, "{\"types\": [").unwrap();
    assert_eq!(code(&onesided(&["validate", "--spec", &broken])), 2);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&onesided(&["validate"])), 1);
    assert_eq!(code(&onesided(&["validate", "--spec", "/nonexistent.json"])), 1);
    let spec = fixture("desk_one_state.json");
    let spec = spec.to_str().unwrap();
    assert_eq!(code(&onesided(&["oracle", "--spec", spec, "--belief", "0.5,0.6"])), 1);
    assert_eq!(code(&onesided(&["oracle", "--spec", spec, "--state", "nowhere"])), 1);
    assert_eq!(code(&onesided(&["--help"])), 0);
}

#[test]
fn oracle_refuses_large_enumerations() {
    let out = onesided(&["oracle", "--spec", fixture("desk_two_state.json").to_str().unwrap(), "--n", "2"]);
    assert_eq!(code(&out), 4);
    assert!(out.stdout.is_empty());
}

#[test]
fn oracle_reports_the_finite_horizon_value() {
    let spec = fixture("desk_one_state.json");
    let out = onesided(&["oracle", "--spec", spec.to_str().unwrap(), "--belief", "0.3,0.7", "--n", "1"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let spec = load_spec(&spec).unwrap();
    let agg = onesided::discounted_aggregates(&spec);
    let p = onesided::Belief::new(vec![0.3, 0.7]);
    let expected = onesided::oracle::brute_value(&p, 0, 1, &spec, &agg, 1e5).unwrap().value;
    assert!((v["value"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn solve_then_exploit_both_players() {
    let dir = TempDir::new().unwrap();
    let spec = fixture("desk_two_state.json");
    let spec = spec.to_str().unwrap();
    let solution = solve(spec, &dir, "20");
    for player in ["1", "2"] {
        let out = onesided(&["exploit", "--spec", spec, "--solution", &solution, "--player", player, "--horizon", "6"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out);
        assert_eq!(v["holds"], true);
        assert!(v["lo"].as_f64().unwrap() <= v["hi"].as_f64().unwrap());
    }
}

#[test]
fn solve_is_reproducible_and_writes_only_declared_files() {
    let spec = fixture("desk_one_state.json");
    let spec = spec.to_str().unwrap();
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let out = onesided(&[
            "solve",
            "--spec",
            spec,
            "--solution",
            &path(dir, "solution.json"),
            "--mesh",
            "10",
            "--format",
            "csv",
            "--out",
            &path(dir, "values.csv"),
        ]);
        assert_eq!(code(&out), 0);
        assert!(out.stdout.is_empty());
    }
    for name in ["solution.json", "values.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["solution.json", "values.csv"]);
    let csv = std::fs::read_to_string(a.path().join("values.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("belief,state,value"));
    assert_eq!(csv.lines().count(), 1 + 11);
}

#[test]
fn iteration_cap_is_a_budget_failure() {
    let dir = TempDir::new().unwrap();
    let out = onesided(&[
        "solve",
        "--spec",
        fixture("desk_one_state.json").to_str().unwrap(),
        "--solution",
        &path(&dir, "solution.json"),
        "--max-iterations",
        "2",
    ]);
    assert_eq!(code(&out), 4);
    assert!(!dir.path().join("solution.json").exists());
}

#[test]
fn solutions_are_tied_to_their_spec() {
    let dir = TempDir::new().unwrap();
    let solution = solve(fixture("desk_one_state.json").to_str().unwrap(), &dir, "10");
    let out = onesided(&[
        "conjugate",
        "--spec",
        fixture("constant_cost.json").to_str().unwrap(),
        "--solution",
        &solution,
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn conjugate_tabulates_the_dual_box() {
    let dir = TempDir::new().unwrap();
    let spec = fixture("desk_one_state.json");
    let spec = spec.to_str().unwrap();
    let solution = solve(spec, &dir, "10");
    let out = onesided(&["conjugate", "--spec", spec, "--solution", &solution, "--points", "5", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("z,state,value"));
    assert_eq!(text.lines().count(), 1 + 25);

    let out = onesided(&["conjugate", "--spec", spec, "--solution", &solution, "--points", "3"]);
    let v = json(&out);
    assert!(v["round_trip"]["max_error"].as_f64().unwrap() < 1e-3);
    // U(0, i) is the largest value; U decreases along every coordinate.
    let values: Vec<f64> = v["values"].as_array().unwrap().iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert!(values.windows(2).take(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn simulate_is_seeded() {
    let dir = TempDir::new().unwrap();
    let spec = fixture("desk_one_state.json");
    let spec = spec.to_str().unwrap();
    let solution = solve(spec, &dir, "10");
    let run = |seed: &str| {
        let out = onesided(&["simulate", "--spec", spec, "--solution", &solution, "--episodes", "200", "--seed", seed]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        json(&out)
    };
    let (a, b, c) = (run("3"), run("3"), run("4"));
    assert_eq!(a, b);
    assert_ne!(a["mean"], c["mean"]);
    let forced = onesided(&[
        "simulate", "--spec", spec, "--solution", &solution, "--episodes", "50", "--type", "k2", "--format", "csv",
    ]);
    assert_eq!(code(&forced), 0);
    let text = String::from_utf8(forced.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("k2")));
    assert_eq!(text.lines().count(), 51);
}
