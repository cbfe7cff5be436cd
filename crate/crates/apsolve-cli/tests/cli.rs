//! End-to-end runs of the compiled binary: exit codes, the stdout line
//! contract, report files, and the bench/gen/verify surfaces.

use std::path::PathBuf;
use std::process::{Command, Output};

fn apsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("apsolve_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn solve_tridiag_sap_prints_the_contract_line() {
    let out = apsolve(&[
        "solve",
        "--problem",
        "tridiag:n=100",
        "--solver",
        "sap",
        "--block-size",
        "20",
        "--tol",
        "1e-5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out);
    assert!(line.starts_with("solver=sap sweeps="), "got: {line}");
    assert!(line.contains(" residual="), "got: {line}");
}

#[test]
fn solve_without_problem_is_a_usage_error() {
    let out = apsolve(&["solve", "--solver", "sap"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flags_are_rejected() {
    let out = apsolve(&[
        "solve",
        "--problem",
        "tridiag:n=10",
        "--solver",
        "sap",
        "--frobnicate",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_gmres_hits_the_requested_tolerance() {
    let out = apsolve(&[
        "solve",
        "--problem",
        "tridiag:n=100",
        "--solver",
        "gmres",
        "--restart",
        "5",
        "--tol",
        "1e-8",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    let residual: f64 = line
        .split("residual=")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(residual <= 1e-8, "residual {residual} above tolerance");
}

#[test]
fn non_convergence_exits_two_and_still_reports() {
    let dir = temp_dir("ncv");
    let report = dir.join("report.json");
    let out = apsolve(&[
        "solve",
        "--problem",
        "tridiag:n=100",
        "--solver",
        "sap",
        "--max-sweeps",
        "3",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["converged"], false);
    assert_eq!(json["sweeps"], 3);
    assert!(json["residual_history"].as_array().unwrap().len() == 4);
}

#[test]
fn report_json_carries_solution_and_histories() {
    let dir = temp_dir("rep");
    let report = dir.join("msap2.json");
    let out = apsolve(&[
        "solve",
        "--problem",
        "tridiag:n=60",
        "--solver",
        "msap2",
        "--block-size",
        "15",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["solver"], "msap2");
    assert_eq!(json["solution"].as_array().unwrap().len(), 60);
    assert!(json["pnorm_history"].as_array().unwrap().len() >= 2);
    assert!(json["invariant_log"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn bench_t2_emits_csv_with_reference_column() {
    let dir = temp_dir("bench");
    let out = apsolve(&["bench", "--table", "t2", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("t2.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 9, "header + 8 rows, got {}", lines.len());
    assert!(lines[0].contains("reference_sweeps"));
    assert!(lines[1].contains("11404"), "published count rides along: {}", lines[1]);
    assert!(dir.join("t2.json").exists());
}

#[test]
fn bench_rejects_unknown_table() {
    let dir = temp_dir("badtable");
    let out = apsolve(&["bench", "--table", "t9", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_overlap_knob_produces_separate_runs() {
    // Loose-tolerance table keeps both runs quick; counts at different
    // overlaps are recorded independently.
    let dir0 = temp_dir("ov0");
    let out = apsolve(&[
        "bench", "--table", "t4", "--out", dir0.to_str().unwrap(), "--overlap", "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let dir5 = temp_dir("ov5");
    let out = apsolve(&[
        "bench", "--table", "t4", "--out", dir5.to_str().unwrap(), "--overlap", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv0 = std::fs::read_to_string(dir0.join("t4.csv")).unwrap();
    let csv5 = std::fs::read_to_string(dir5.join("t4.csv")).unwrap();
    assert_ne!(csv0, csv5);
}

#[test]
fn gen_then_solve_from_matrix_market() {
    let dir = temp_dir("gen");
    let mtx = dir.join("tri.mtx");
    let out = apsolve(&[
        "gen",
        "--problem",
        "tridiag:n=40",
        "--out",
        mtx.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("tri_rhs.mtx").exists());
    let out = apsolve(&[
        "solve",
        "--matrix",
        mtx.to_str().unwrap(),
        "--solver",
        "msap1",
        "--block-size",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("solver=msap1"));
}

#[test]
fn verify_runs_the_requested_size_tiers() {
    let out = apsolve(&["verify", "--sizes", "5,10,20", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "stdout: {}", stdout(&out));
    let text = stdout(&out);
    for name in [
        "master-bookkeeping",
        "step-orthogonality",
        "pythagorean-growth",
        "telescoping",
        "naive-fast-equivalence",
        "two-vector-maximality",
        "step-reconstruction",
    ] {
        assert!(text.contains(&format!("PASS {name}")), "missing {name} in: {text}");
    }
}
