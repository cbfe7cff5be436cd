//! Solver drivers around the accumulated-projection sweep: the plain
//! stationary iteration and its two accelerated variants, with stopping
//! control, history recording and invariant logging.
//!
//! Known limitation: convergence degrades once the row division produces
//! more than about 20 blocks. Prefer block sizes with
//! rows / stride <= 20; an inner-loop remedy exists but is out of scope
//! here.

use std::fmt;

use serde::Serialize;

use crate::clock::Stopwatch;
use crate::linalg::{condition_estimate, relative_residual, DenseMatrix, DenseVector};
use crate::partition::{build_partition, BlockSpec, PartitionError};
use crate::projection::{
    ap_sweep_observed, init_state, window_project, Kernel, ProjectionError, ProjectionState,
    MASTER_TOL,
};

/// Iterates closer than this (in angle) are treated as parallel and skip the
/// two-vector acceleration for that sweep.
const PARALLEL_TOL: f64 = 1e-13;

/// Logged (not fatal) slack for the monotone projection-norm check.
const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug)]
pub enum SolverError {
    /// The sweep budget ran out; the full report rides along.
    NotConverged(Box<SolveReport>),
    Partition(PartitionError),
    Projection(ProjectionError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::NotConverged(r) => write!(
                f,
                "did not converge within {} sweeps (residual {:.3e})",
                r.sweeps,
                r.residual_history.last().copied().unwrap_or(f64::NAN)
            ),
            SolverError::Partition(e) => write!(f, "{e}"),
            SolverError::Projection(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SolverError {}

impl From<PartitionError> for SolverError {
    fn from(e: PartitionError) -> Self {
        SolverError::Partition(e)
    }
}

impl From<ProjectionError> for SolverError {
    fn from(e: ProjectionError) -> Self {
        SolverError::Projection(e)
    }
}

/// Which pair of iterates the per-sweep acceleration projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccelPairing {
    /// span{sweep output, latest iterate} - uses the newest information.
    Newest,
    /// span{latest iterate, previous iterate} - discards the sweep output.
    Previous,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub block_size: usize,
    pub overlap: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sliding-window length for the varying-subspace acceleration.
    pub window: usize,
    /// Condition-number gate for using the full window.
    pub cond_threshold: f64,
    pub kernel: Kernel,
    pub pairing: AccelPairing,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            block_size: 20,
            overlap: 0.5,
            tol: 1e-5,
            max_sweeps: 100_000,
            window: 5,
            cond_threshold: 1e8,
            kernel: Kernel::Fast,
            pairing: AccelPairing::Newest,
        }
    }
}

impl SolverConfig {
    pub fn block_spec(&self) -> BlockSpec {
        BlockSpec::new(self.block_size, self.overlap)
    }

    fn validate(&self) {
        assert!(self.tol > 0.0, "tolerance must be positive");
        assert!(self.max_sweeps >= 1, "max_sweeps must be at least 1");
        assert!(self.window >= 2, "window must be at least 2");
        assert!(self.window <= 64, "window capped at 64");
        assert!(self.cond_threshold > 1.0, "condition threshold must exceed 1");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantKind {
    /// |c - p'p| outgrew its scaled bound.
    MasterBookkeeping,
    /// A sweep shrank the projection norm before convergence.
    MonotoneNorm,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantViolation {
    pub sweep: usize,
    pub block: Option<usize>,
    pub kind: InvariantKind,
    pub defect: f64,
    pub bound: f64,
}

/// Running tally of self-checks performed during a solve.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InvariantLog {
    pub step_checks: u64,
    pub violations: Vec<InvariantViolation>,
}

impl InvariantLog {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solver: String,
    pub solution: DenseVector,
    pub converged: bool,
    /// Outer iterations: full passes over all blocks (or restart cycles for
    /// the Krylov baseline).
    pub sweeps: usize,
    /// Total block-level steps, for transparency alongside sweep counts.
    pub block_steps: usize,
    /// Relative residual before any sweep and after each one.
    pub residual_history: Vec<f64>,
    /// Projection-vector norm at the same instants.
    pub pnorm_history: Vec<f64>,
    pub invariant_log: InvariantLog,
    pub wall_time: f64,
    /// Inner-step count at exit for the restarted Krylov baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_inner: Option<usize>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Stationary accumulated projection: repeat full sweeps from the initial
/// projection until the relative residual drops below the tolerance.
///
/// Works on any full-row-rank system with rows <= cols; for consistent
/// underdetermined systems the limit is the minimum-norm solution.
pub fn solve_sap(
    a: &DenseMatrix,
    b: &DenseVector,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    drive("sap", a, b, config, |_sweep, _prev, swept, _log| swept)
}

/// Accumulated projection with a per-sweep two-vector acceleration: each
/// sweep output is replaced by the projection of x onto the span of a pair
/// of iterates (see [`AccelPairing`]). Skipped on the first sweep and
/// whenever the pair is numerically parallel.
pub fn solve_msap1(
    a: &DenseMatrix,
    b: &DenseVector,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let pairing = config.pairing;
    let mut before_prev: Option<ProjectionState> = None;
    drive("msap1", a, b, config, move |sweep, prev, swept, _log| {
        let out = if sweep == 0 {
            swept
        } else {
            let accelerated = match pairing {
                AccelPairing::Newest => project_pair(&swept, prev),
                AccelPairing::Previous => {
                    let older = before_prev.as_ref().expect("previous iterate recorded");
                    project_pair(prev, older)
                }
            };
            accelerated.unwrap_or(swept)
        };
        before_prev = Some(prev.clone());
        out
    })
}

/// Accumulated projection with a varying-subspace acceleration: keep a
/// sliding window of recent sweep outputs; once the window is full, project
/// onto its span when it is well-conditioned, otherwise fall back to the
/// two-vector step and shrink the window to its first row.
pub fn solve_msap2(
    a: &DenseMatrix,
    b: &DenseVector,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let window = config.window;
    let kappa = config.cond_threshold;
    let mut h_rows: Vec<DenseVector> = Vec::new();
    let mut l_vals: Vec<f64> = Vec::new();
    drive("msap2", a, b, config, move |_sweep, prev, swept, _log| {
        h_rows.push(swept.p.clone());
        l_vals.push(swept.c);
        if h_rows.len() == window {
            let h = DenseMatrix::from_columns(&h_rows).transpose();
            let cond = condition_estimate(&h).unwrap_or(f64::INFINITY);
            if cond <= kappa {
                if let Ok(st) = window_project(&h_rows, &l_vals) {
                    h_rows.remove(0);
                    l_vals.remove(0);
                    return st;
                }
            }
            // Ill-conditioned window: two-vector step, then keep only the
            // window's first row.
            let st = project_pair(&swept, prev).unwrap_or_else(|| swept.clone());
            h_rows.truncate(1);
            l_vals.truncate(1);
            st
        } else {
            project_pair(&swept, prev).unwrap_or(swept)
        }
    })
}

/// Projection of x onto span of two iterates, from their bookkeeping scalars
/// alone. None when the pair is numerically parallel or dependent.
fn project_pair(first: &ProjectionState, second: &ProjectionState) -> Option<ProjectionState> {
    let n1 = first.norm();
    let n2 = second.norm();
    if n1 == 0.0 || n2 == 0.0 {
        return None;
    }
    let cosine = first.p.dot(&second.p).abs() / (n1 * n2);
    if cosine > 1.0 - PARALLEL_TOL {
        return None;
    }
    window_project(
        &[first.p.clone(), second.p.clone()],
        &[first.c, second.c],
    )
    .ok()
}

fn drive<A>(
    name: &str,
    a: &DenseMatrix,
    b: &DenseVector,
    config: &SolverConfig,
    mut accelerate: A,
) -> Result<SolveReport, SolverError>
where
    A: FnMut(usize, &ProjectionState, ProjectionState, &mut InvariantLog) -> ProjectionState,
{
    config.validate();
    let stopwatch = Stopwatch::start();
    let partition = build_partition(a, b, &config.block_spec())?;
    let mut state = init_state(a, b)?;

    let mut log = InvariantLog::default();
    let mut residual_history = vec![relative_residual(a, &state.p, b)];
    let mut pnorm_history = vec![state.norm()];
    let mut block_steps = 0usize;
    let mut sweeps = 0usize;

    while residual_history[sweeps] > config.tol && sweeps < config.max_sweeps {
        let swept = ap_sweep_observed(&state, &partition, config.kernel, |i, _before, after| {
            block_steps += 1;
            log.step_checks += 1;
            let defect = after.master_defect();
            if defect > MASTER_TOL {
                log.violations.push(InvariantViolation {
                    sweep: sweeps,
                    block: Some(i),
                    kind: InvariantKind::MasterBookkeeping,
                    defect,
                    bound: MASTER_TOL,
                });
            }
        });
        state = accelerate(sweeps, &state, swept, &mut log);
        sweeps += 1;
        residual_history.push(relative_residual(a, &state.p, b));
        let norm = state.norm();
        let prev_norm = pnorm_history[sweeps - 1];
        if residual_history[sweeps] > config.tol && norm < prev_norm - MONOTONE_SLACK * prev_norm {
            log.violations.push(InvariantViolation {
                sweep: sweeps,
                block: None,
                kind: InvariantKind::MonotoneNorm,
                defect: (prev_norm - norm) / prev_norm.max(1e-300),
                bound: MONOTONE_SLACK,
            });
        }
        pnorm_history.push(norm);
    }

    let converged = residual_history[sweeps] <= config.tol;
    let report = SolveReport {
        solver: name.to_string(),
        solution: state.p,
        converged,
        sweeps,
        block_steps,
        residual_history,
        pnorm_history,
        invariant_log: log,
        wall_time: stopwatch.seconds(),
        final_inner: None,
    };
    if converged {
        Ok(report)
    } else {
        Err(SolverError::NotConverged(Box::new(report)))
    }
}
