//! Browser demo bindings: run the projection solvers on built-in problems
//! and return convergence histories as JSON for plotting, plus the
//! two-vector gain curve behind the per-step optimality argument.
//!
//! Every export is a plain function over strings and numbers so the same
//! code paths are testable natively; wasm-bindgen only adds the JS glue.

use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use apsolve::baselines::{solve_gmres, BaselineError, GmresConfig};
use apsolve::problems::{assemble_fem_bvp, gen_tridiag, BvpSpec, LinearProblem};
use apsolve::projection::optimal_two_vector;
use apsolve::solvers::{solve_msap1, solve_msap2, solve_sap, SolveReport, SolverConfig, SolverError};

/// Sweep cap for interactive runs; a capped run is reported, not an error.
const DEMO_MAX_SWEEPS: usize = 4_000;
const DEMO_MAX_N: usize = 400;

fn build_problem(problem: &str, n: usize) -> Result<LinearProblem, String> {
    let n = n.clamp(4, DEMO_MAX_N);
    match problem {
        "tridiag" => Ok(gen_tridiag(n)),
        "fem" => assemble_fem_bvp(&BvpSpec::reference(n)).map_err(|e| e.to_string()),
        other => Err(format!("unknown problem '{other}' (expected tridiag|fem)")),
    }
}

fn run_one(
    problem: &LinearProblem,
    solver: &str,
    block_size: usize,
    overlap: f64,
    tol: f64,
    window: usize,
) -> Result<SolveReport, String> {
    let n = problem.a.rows();
    let block_size = block_size.clamp(2, n);
    let overlap = overlap.clamp(0.0, 0.9);
    let tol = tol.clamp(1e-14, 0.5);
    let window = window.clamp(2, 16);
    match solver {
        "gmres" => {
            // Pair the Krylov dimension with the block size the same way the
            // head-to-head table does: restart ~ block_size^2 / n.
            let restart = ((block_size * block_size) as f64 / n as f64).round() as usize;
            let config = GmresConfig {
                restart: restart.clamp(1, n),
                tol,
                max_outer: DEMO_MAX_SWEEPS,
                x0: None,
            };
            match solve_gmres(&problem.a, &problem.b, &config) {
                Ok(r) => Ok(r),
                Err(BaselineError::NotConverged(r)) => Ok(*r),
                Err(e) => Err(e.to_string()),
            }
        }
        name => {
            let config = SolverConfig {
                block_size,
                overlap,
                tol,
                max_sweeps: DEMO_MAX_SWEEPS,
                window,
                ..SolverConfig::default()
            };
            let run = match name {
                "sap" => solve_sap,
                "msap1" => solve_msap1,
                "msap2" => solve_msap2,
                other => return Err(format!("unknown solver '{other}'")),
            };
            match run(&problem.a, &problem.b, &config) {
                Ok(r) => Ok(r),
                Err(SolverError::NotConverged(r)) => Ok(*r),
                Err(e) => Err(e.to_string()),
            }
        }
    }
}

fn report_json(problem: &LinearProblem, report: &SolveReport) -> serde_json::Value {
    let rel_error = problem
        .x_exact
        .as_ref()
        .map(|x| report.solution.sub(x).norm() / x.norm());
    json!({
        "solver": report.solver,
        "converged": report.converged,
        "sweeps": report.sweeps,
        "block_steps": report.block_steps,
        "residual_history": report.residual_history,
        "pnorm_history": report.pnorm_history,
        "rel_error": rel_error,
        "violations": report.invariant_log.violations.len(),
    })
}

/// Solve one problem with one solver; returns the convergence history as a
/// JSON object (or {"error": ...}).
#[wasm_bindgen]
pub fn solve_curve(
    problem: &str,
    n: usize,
    solver: &str,
    block_size: usize,
    overlap: f64,
    tol: f64,
    window: usize,
) -> String {
    let result = build_problem(problem, n).and_then(|p| {
        run_one(&p, solver, block_size, overlap, tol, window).map(|r| report_json(&p, &r))
    });
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Run the three projection solvers plus the Krylov baseline on the same
/// problem; returns a JSON array of history objects.
#[wasm_bindgen]
pub fn compare_solvers(
    problem: &str,
    n: usize,
    block_size: usize,
    overlap: f64,
    tol: f64,
    window: usize,
) -> String {
    let built = match build_problem(problem, n) {
        Ok(p) => p,
        Err(e) => return json!({ "error": e }).to_string(),
    };
    let mut curves = Vec::new();
    for solver in ["sap", "msap1", "msap2", "gmres"] {
        match run_one(&built, solver, block_size, overlap, tol, window) {
            Ok(r) => curves.push(report_json(&built, &r)),
            Err(e) => curves.push(json!({ "solver": solver, "error": e })),
        }
    }
    json!({ "n": built.a.rows(), "curves": curves }).to_string()
}

/// Samples the normalized projection length f(t) = |b1 + t b2| / ||v1 + t v2||
/// for unit directions with inner products b1, b2 against the unknown and
/// angle cosine alpha, together with the closed-form optimum.
#[wasm_bindgen]
pub fn projection_gain_curve(b1: f64, b2: f64, alpha: f64, t_min: f64, t_max: f64, samples: usize) -> String {
    let alpha = alpha.clamp(-0.999, 0.999);
    let samples = samples.clamp(2, 4096);
    let (lo, hi) = if t_min < t_max { (t_min, t_max) } else { (-4.0, 4.0) };
    let step = (hi - lo) / (samples - 1) as f64;
    let mut ts = Vec::with_capacity(samples);
    let mut fs = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = lo + step * i as f64;
        ts.push(t);
        fs.push((b1 + t * b2).abs() / (1.0 + 2.0 * alpha * t + t * t).sqrt());
    }
    let optimum = optimal_two_vector(b1, b2, alpha).ok();
    json!({
        "t": ts,
        "f": fs,
        "s_opt": optimum.map(|o| o.s),
        "f_opt": optimum.map(|o| o.fs),
        "floor": b1.abs().max(b2.abs()),
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_curve_returns_history_json() {
        let out = solve_curve("tridiag", 60, "msap2", 15, 0.5, 1e-5, 5);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["converged"], true);
        assert!(v["residual_history"].as_array().unwrap().len() >= 2);
        assert!(v["rel_error"].as_f64().unwrap() < 1e-3);
    }

    #[test]
    fn compare_returns_four_curves() {
        let out = compare_solvers("tridiag", 50, 10, 0.5, 1e-4, 5);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let curves = v["curves"].as_array().unwrap();
        assert_eq!(curves.len(), 4);
        for c in curves {
            assert!(c.get("error").is_none(), "curve failed: {c}");
        }
    }

    #[test]
    fn gain_curve_peaks_at_the_closed_form_optimum() {
        let out = projection_gain_curve(1.0, 0.8, 0.5, -4.0, 4.0, 801);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let fs: Vec<f64> = v["f"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let f_opt = v["f_opt"].as_f64().unwrap();
        assert!((f_opt - 1.12f64.sqrt()).abs() < 1e-12);
        for f in fs {
            assert!(f <= f_opt + 1e-9);
        }
    }

    #[test]
    fn unknown_inputs_become_error_objects() {
        let v: serde_json::Value =
            serde_json::from_str(&solve_curve("bogus", 50, "sap", 10, 0.5, 1e-5, 5)).unwrap();
        assert!(v.get("error").is_some());
        let v: serde_json::Value =
            serde_json::from_str(&solve_curve("tridiag", 50, "bogus", 10, 0.5, 1e-5, 5)).unwrap();
        assert!(v.get("error").is_some());
    }
}
