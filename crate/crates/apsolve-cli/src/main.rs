//! Command-line surface: solve single systems, reproduce the experiment
//! tables, generate test problems, and run the invariant suite.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 non-convergence or
//! invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use apsolve::baselines::{solve_block_jacobi, solve_gmres, BaselineError, GmresConfig, JacobiConfig};
use apsolve::bench::{emit_report, run_table, KnobGrid, ReportFormat, TableId};
use apsolve::problems::{
    assemble_fem_bvp, companion_rhs_path, gen_random_consistent, gen_tridiag, read_matrix_market,
    vector_market_string, write_matrix_market, BvpSpec, LinearProblem,
};
use apsolve::solvers::{solve_msap1, solve_msap2, solve_sap, SolveReport, SolverConfig, SolverError};
use apsolve::verify::{run_suite, suite_passed, VerifyOptions};

#[derive(Parser)]
#[command(name = "apsolve", version, about = "Accumulated-projection linear solvers", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one linear system and print a convergence line.
    Solve(SolveArgs),
    /// Run an experiment table over a knob grid and emit CSV/JSON reports.
    Bench(BenchArgs),
    /// Generate a test problem as a Matrix Market file (plus companion rhs).
    Gen(GenArgs),
    /// Run the invariant suite on seeded instances.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Sap,
    Msap1,
    Msap2,
    Gmres,
    Jacobi,
}

impl SolverKind {
    fn name(&self) -> &'static str {
        match self {
            SolverKind::Sap => "sap",
            SolverKind::Msap1 => "msap1",
            SolverKind::Msap2 => "msap2",
            SolverKind::Gmres => "gmres",
            SolverKind::Jacobi => "jacobi",
        }
    }
}

#[derive(Args)]
struct ProblemSource {
    /// Matrix Market file; a companion <stem>_rhs.mtx supplies b when present.
    #[arg(long, conflicts_with = "problem")]
    matrix: Option<PathBuf>,
    /// Built-in problem: tridiag:n=<N> | fem:n=<N> | random:rows=<R>,cols=<C>.
    #[arg(long)]
    problem: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: ProblemSource,
    #[arg(long, value_enum)]
    solver: SolverKind,
    /// Rows per block for the projection solvers; block size for jacobi.
    #[arg(long, default_value_t = 20)]
    block_size: usize,
    /// Fraction of rows shared between adjacent blocks.
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// Relative-residual stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_sweeps: usize,
    /// Sliding-window length (msap2).
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Condition gate for the full window (msap2).
    #[arg(long, default_value_t = 1e8)]
    cond_threshold: f64,
    /// Krylov dimension between restarts (gmres).
    #[arg(long, default_value_t = 30)]
    restart: usize,
    /// Seed for random:* problems.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the full solve report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Which table to run: t1|t2|t3|t4|t5|t7.
    #[arg(long)]
    table: String,
    /// Output directory for <table>.csv and <table>.json.
    #[arg(long)]
    out: PathBuf,
    /// Restrict the overlap grid to one value.
    #[arg(long)]
    overlap: Option<f64>,
    /// Restrict the window grid to one value.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    cond_threshold: Option<f64>,
    /// Concurrent worker budget for grid points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct GenArgs {
    /// Built-in problem: tridiag:n=<N> | fem:n=<N> | random:rows=<R>,cols=<C>.
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output .mtx path; the right-hand side lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Comma-separated square sizes for the random instances.
    #[arg(long, value_delimiter = ',', default_value = "10,30,60")]
    sizes: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are success, everything else is a
            // usage error (exit 1).
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn load_problem(source: &ProblemSource, seed: u64) -> Result<LinearProblem, String> {
    match (&source.matrix, &source.problem) {
        (Some(path), None) => read_matrix_market(path).map_err(|e| e.to_string()),
        (None, Some(spec)) => parse_problem(spec, seed),
        (None, None) => Err("exactly one of --matrix or --problem is required".into()),
        (Some(_), Some(_)) => Err("--matrix and --problem are mutually exclusive".into()),
    }
}

fn parse_problem(spec: &str, seed: u64) -> Result<LinearProblem, String> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| format!("malformed problem '{spec}' (expected kind:key=value,...)"))?;
    let mut params = std::collections::BTreeMap::new();
    for pair in rest.split(',') {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("malformed problem parameter '{pair}'"))?;
        let value: usize = v
            .parse()
            .map_err(|_| format!("problem parameter '{k}' must be an integer, got '{v}'"))?;
        params.insert(k.to_string(), value);
    }
    let get = |key: &str| {
        params
            .get(key)
            .copied()
            .ok_or_else(|| format!("problem '{kind}' needs parameter '{key}'"))
    };
    match kind {
        "tridiag" => {
            let n = get("n")?;
            if n < 2 {
                return Err("tridiag needs n >= 2".into());
            }
            Ok(gen_tridiag(n))
        }
        "fem" => {
            let n = get("n")?;
            if n < 2 {
                return Err("fem needs n >= 2".into());
            }
            assemble_fem_bvp(&BvpSpec::reference(n)).map_err(|e| e.to_string())
        }
        "random" => {
            let rows = get("rows")?;
            let cols = get("cols")?;
            if rows == 0 || rows > cols {
                return Err("random needs 1 <= rows <= cols".into());
            }
            Ok(gen_random_consistent(rows, cols, seed))
        }
        other => Err(format!("unknown problem kind '{other}' (expected tridiag|fem|random)")),
    }
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    let problem = match load_problem(&args.source, args.seed) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };

    let outcome: Result<SolveReport, ExitOrReport> = match args.solver {
        SolverKind::Gmres => {
            let config = GmresConfig {
                restart: args.restart,
                tol: args.tol,
                max_outer: args.max_sweeps,
                x0: None,
            };
            solve_gmres(&problem.a, &problem.b, &config).map_err(|e| match e {
                BaselineError::NotConverged(r) => ExitOrReport::NotConverged(r),
                other => ExitOrReport::Fatal(other.to_string()),
            })
        }
        SolverKind::Jacobi => {
            let config = JacobiConfig {
                block_size: args.block_size,
                tol: args.tol,
                max_iters: args.max_sweeps,
            };
            solve_block_jacobi(&problem.a, &problem.b, &config).map_err(|e| match e {
                BaselineError::NotConverged(r) => ExitOrReport::NotConverged(r),
                other => ExitOrReport::Fatal(other.to_string()),
            })
        }
        projection => {
            let config = SolverConfig {
                block_size: args.block_size,
                overlap: args.overlap,
                tol: args.tol,
                max_sweeps: args.max_sweeps,
                window: args.window,
                cond_threshold: args.cond_threshold,
                ..SolverConfig::default()
            };
            let run = match projection {
                SolverKind::Sap => solve_sap,
                SolverKind::Msap1 => solve_msap1,
                SolverKind::Msap2 => solve_msap2,
                _ => unreachable!(),
            };
            run(&problem.a, &problem.b, &config).map_err(|e| match e {
                SolverError::NotConverged(r) => ExitOrReport::NotConverged(r),
                other => ExitOrReport::Fatal(other.to_string()),
            })
        }
    };

    let (report, exit) = match outcome {
        Ok(report) => (report, ExitCode::SUCCESS),
        Err(ExitOrReport::NotConverged(report)) => (*report, ExitCode::from(2)),
        Err(ExitOrReport::Fatal(msg)) => return fail(msg),
    };

    println!(
        "solver={} sweeps={} residual={:.6e}",
        args.solver.name(),
        report.sweeps,
        report.final_residual()
    );
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(path, json) {
            return fail(format!("writing report {}: {e}", path.display()));
        }
    }
    exit
}

enum ExitOrReport {
    NotConverged(Box<SolveReport>),
    Fatal(String),
}

fn cmd_bench(args: BenchArgs) -> ExitCode {
    let table: TableId = match args.table.parse() {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let mut grid = KnobGrid::default();
    if let Some(overlap) = args.overlap {
        if !(0.0..1.0).contains(&overlap) {
            return fail("overlap must lie in [0, 1)");
        }
        grid.overlaps = vec![overlap];
    }
    if let Some(window) = args.window {
        if window < 2 {
            return fail("window must be at least 2");
        }
        grid.windows = vec![window];
    }
    if let Some(kappa) = args.cond_threshold {
        grid.cond_threshold = kappa;
    }
    grid.jobs = args.jobs.max(1);

    let result = run_table(table, &grid);
    for format in [ReportFormat::Csv, ReportFormat::Json] {
        if let Err(e) = emit_report(&result, &args.out, format) {
            return fail(e);
        }
    }
    // Per-row diff against the embedded reference counts.
    for row in &result.rows {
        let sweeps = row
            .sweeps
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into());
        let diff = match (row.sweeps, row.reference_sweeps) {
            (Some(s), Some(r)) => format!("{:+}", s as i64 - r as i64),
            _ => "-".into(),
        };
        println!(
            "{} {} solver={} sweeps={} reference={} diff={} status={}",
            row.table,
            row.case,
            row.solver,
            sweeps,
            row.reference_sweeps
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".into()),
            diff,
            row.status
        );
    }
    ExitCode::SUCCESS
}

fn cmd_gen(args: GenArgs) -> ExitCode {
    let problem = match parse_problem(&args.problem, args.seed) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_matrix_market(&args.out, &problem.a) {
        return fail(e);
    }
    let rhs_path = companion_rhs_path(&args.out);
    if let Err(e) = std::fs::write(&rhs_path, vector_market_string(&problem.b)) {
        return fail(format!("writing rhs {}: {e}", rhs_path.display()));
    }
    println!(
        "wrote {} ({}x{}) and {}",
        args.out.display(),
        problem.a.rows(),
        problem.a.cols(),
        rhs_path.display()
    );
    ExitCode::SUCCESS
}

fn cmd_verify(args: VerifyArgs) -> ExitCode {
    if args.sizes.is_empty() || args.sizes.iter().any(|&n| n < 2) {
        return fail("--sizes needs comma-separated integers >= 2");
    }
    let opts = VerifyOptions {
        seed: args.seed,
        sizes: args.sizes,
        ..VerifyOptions::default()
    };
    let reports = run_suite(&opts);
    for r in &reports {
        if r.passed {
            println!(
                "PASS {} checks={} worst={:.3e} bound={:.1e}",
                r.name, r.checks, r.worst, r.bound
            );
        } else {
            println!(
                "FAIL {} checks={} worst={:.3e} bound={:.1e} counterexample: {}",
                r.name,
                r.checks,
                r.worst,
                r.bound,
                r.counterexample.as_deref().unwrap_or("-")
            );
        }
    }
    if suite_passed(&reports) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
