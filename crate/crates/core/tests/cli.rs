mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use polywave::fixed_point::iterate;
use polywave::runner::read_solution;
use serde_json::Value;

const DESK: &str = "
[model]
n = 2
l = 1
sigma = 1.0
amplitude = 0.0316
cosine = 1.0

[numerics]
gate = isolated
series_order = 24
quadrature_nodes = 256

[run]
t = 0.5423638067150449, 0.1566074012856089
j = 9, 3
";

fn polywave(cmd: &str, config: &str, dir: &Path) -> i32 {
    let cfg = dir.join(format!("{cmd}.cfg"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_polywave"))
        .args([cmd, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(cmd))
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_key_exits_with_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let code = polywave("linear-eig", "[model]\nn = 2\nl = 1\nwidth = 3\n", tmp.path());
    assert_eq!(code, 2);
}

#[test]
fn resonant_point_exits_with_numerical_status() {
    let tmp = tempfile::tempdir().unwrap();
    // (3, 0) and (−4, 0) are degenerate at t = (1/2, 0).
    let cfg = "[model]\nn = 2\nl = 1\ncosine = 1.0\n[run]\nt = 0.5, 0.0\nj = 3, 0\n";
    assert_eq!(polywave("linear-eig", cfg, tmp.path()), 3);
    let manifest = json(&tmp.path().join("linear-eig/manifest.json"));
    assert_eq!(manifest["exit_code"], 3);
}

#[test]
fn iteration_cap_exits_with_nonconvergence_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = DESK.replace("[run]", "max_iterations = 1\n[run]");
    assert_eq!(polywave("fixed-point", &cfg, tmp.path()), 4);
    let trace = std::fs::read_to_string(tmp.path().join("fixed-point/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn zero_samples_give_header_only_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[model]\nn = 2\nl = 3\ncosine = 1.0\n[run]\nks = 10\nsamples = 0\n";
    assert_eq!(polywave("nonres-scan", cfg, tmp.path()), 0);
    let csv = std::fs::read_to_string(tmp.path().join("nonres-scan/nonres.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("k,draw_index,"));
}

#[test]
fn zero_potential_converges_in_one_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = DESK.replace("cosine = 1.0\n", "");
    assert_eq!(polywave("fixed-point", &cfg, tmp.path()), 0);
    let checks = json(&tmp.path().join("fixed-point/checks.json"));
    assert_eq!(checks["converged"], true);
    assert_eq!(checks["iterations"], 1);
}

#[test]
fn solution_json_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(polywave("fixed-point", DESK, tmp.path()), 0);
    let read = read_solution(&tmp.path().join("fixed-point/solution.json")).unwrap();

    let (t, j) = point(GP_K10_T, GP_K10_J);
    let (sol, _) = iterate(&t, &j, &gp_context(0.0316 * 0.0316)).unwrap();
    assert_eq!(read.j, sol.j);
    assert!((read.lambda - sol.lambda).abs() <= 1e-15 * sol.lambda.abs());
    assert!(read.psi.sub(&sol.psi).star_norm() <= 1e-15);
    assert!(read.w_fixed.sub(&sol.w_fixed).star_norm() <= 1e-15);
}

#[test]
fn verify_agrees_with_stored_solution() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(polywave("fixed-point", DESK, tmp.path()), 0);
    let stored = tmp.path().join("fixed-point/solution.json");
    let cfg = format!("{DESK}solution = {}\n", stored.display());
    assert_eq!(polywave("verify", &cfg, tmp.path()), 0);

    let v = json(&tmp.path().join("verify/verify.json"));
    let psi = v["comparison"]["psi_distance"].as_f64().unwrap();
    let lambda = v["comparison"]["lambda_distance"].as_f64().unwrap();
    assert!(psi < 1e-9, "psi distance {psi:e}");
    assert!(lambda < 1e-9, "lambda distance {lambda:e}");
}

#[test]
fn seed_flag_changes_only_the_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[model]\nn = 2\nl = 3\ncosine = 1.0\n[run]\nks = 10\nsamples = 20\n";
    let path = tmp.path().join("scan.cfg");
    std::fs::write(&path, cfg).unwrap();
    let run = |seed: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_polywave"))
            .args(["nonres-scan", "--seed", seed, "--config"])
            .arg(&path)
            .arg("--out")
            .arg(tmp.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(tmp.path().join(out).join("nonres.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}
