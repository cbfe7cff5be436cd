//! Reference solvers the projection methods are compared against: restarted
//! GMRES, block Jacobi, and a dense partial-pivot direct solve used as the
//! ground-truth oracle in tests.
//!
//! All baselines report through [`SolveReport`] and use the same
//! relative-residual definition as the projection solvers, so cross-method
//! tables compare like with like.

use std::fmt;

use crate::clock::Stopwatch;
use crate::linalg::{relative_residual, DenseMatrix, DenseVector};
use crate::solvers::{InvariantLog, SolveReport};

#[derive(Debug)]
pub enum BaselineError {
    NotConverged(Box<SolveReport>),
    /// Residual grew past 1e12 times its initial value.
    Diverged(Box<SolveReport>),
    SingularBlock(usize),
    Singular,
}

impl fmt::Display for BaselineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineError::NotConverged(r) => write!(
                f,
                "did not converge within {} outer iterations (residual {:.3e})",
                r.sweeps,
                r.final_residual()
            ),
            BaselineError::Diverged(r) => {
                write!(f, "diverged after {} iterations", r.sweeps)
            }
            BaselineError::SingularBlock(i) => write!(f, "diagonal block {i} is singular"),
            BaselineError::Singular => write!(f, "matrix is singular"),
        }
    }
}

impl std::error::Error for BaselineError {}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GmresConfig {
    /// Krylov dimension between restarts.
    pub restart: usize,
    pub tol: f64,
    pub max_outer: usize,
    /// Initial guess; zero vector when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<DenseVector>,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 30,
            tol: 1e-5,
            max_outer: 2_000,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct JacobiConfig {
    pub block_size: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        Self {
            block_size: 20,
            tol: 1e-5,
            max_iters: 200_000,
        }
    }
}

// ---------------------------------------------------------------------------
// GMRES(m) with Householder-reflector Arnoldi
// ---------------------------------------------------------------------------

/// Restarted GMRES. Orthogonalization uses Householder reflectors rather
/// than Gram-Schmidt, so the Arnoldi basis stays orthonormal to rounding
/// regardless of conditioning. Reports outer cycles in `sweeps`, total inner
/// steps in `block_steps`, and the last cycle's inner count in `final_inner`.
pub fn solve_gmres(
    a: &DenseMatrix,
    b: &DenseVector,
    config: &GmresConfig,
) -> Result<SolveReport, BaselineError> {
    assert_eq!(a.rows(), a.cols(), "gmres expects a square system");
    assert!(config.restart >= 1, "restart must be at least 1");
    let stopwatch = Stopwatch::start();
    let n = a.rows();
    let mut x = config
        .x0
        .clone()
        .unwrap_or_else(|| DenseVector::zeros(n));
    assert_eq!(x.len(), n, "initial guess length mismatch");

    let mut residual_history = vec![relative_residual(a, &x, b)];
    let mut pnorm_history = vec![x.norm()];
    let mut total_inner = 0usize;
    let mut final_inner = 0usize;
    let mut outer = 0usize;

    while residual_history[outer] > config.tol && outer < config.max_outer {
        let cycle = gmres_cycle(a, b, &x, config.restart, config.tol);
        x = cycle.x;
        total_inner += cycle.inner;
        final_inner = cycle.inner;
        outer += 1;
        residual_history.push(relative_residual(a, &x, b));
        pnorm_history.push(x.norm());
    }

    let converged = residual_history[outer] <= config.tol;
    let report = SolveReport {
        solver: "gmres".to_string(),
        solution: x,
        converged,
        sweeps: outer,
        block_steps: total_inner,
        residual_history,
        pnorm_history,
        invariant_log: InvariantLog::default(),
        wall_time: stopwatch.seconds(),
        final_inner: Some(final_inner),
    };
    if converged {
        Ok(report)
    } else {
        Err(BaselineError::NotConverged(Box::new(report)))
    }
}

struct GmresCycle {
    x: DenseVector,
    inner: usize,
    /// Residual-norm estimates after each inner step, from the rotated
    /// right-hand side of the least-squares system. Read by the cycle tests.
    #[allow(dead_code)]
    estimates: Vec<f64>,
}

/// One restart cycle from iterate `x0`; the least-squares residual estimate
/// decides early exit inside the cycle.
fn gmres_cycle(a: &DenseMatrix, b: &DenseVector, x0: &DenseVector, m: usize, tol: f64) -> GmresCycle {
    let n = a.rows();
    let m = m.min(n);
    let bnorm = b.norm();
    let r0 = b.sub(&a.matvec(x0));

    // Reflectors w_k define P_k = I - 2 w_k w_k'; w_k is zero above index k.
    let mut reflectors: Vec<DenseVector> = Vec::with_capacity(m + 1);
    let w0 = householder_direction(&r0, 0);
    let g0 = reflect(&w0, &r0);
    reflectors.push(w0);

    // Rotated least-squares right-hand side, g = beta * e_0 initially.
    let mut g = vec![0.0; m + 1];
    g[0] = g0[0];

    let mut basis: Vec<DenseVector> = Vec::with_capacity(m);
    let mut tri_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rotations: Vec<(f64, f64)> = Vec::with_capacity(m);
    let mut estimates = Vec::with_capacity(m);
    let mut inner = 0usize;

    for j in 0..m {
        // v_j = P_0 ... P_j e_j
        let mut v = DenseVector::zeros(n);
        v[j] = 1.0;
        for k in (0..=j).rev() {
            v = reflect(&reflectors[k], &v);
        }
        let mut z = a.matvec(&v);
        for w in reflectors.iter().take(j + 1) {
            z = reflect(w, &z);
        }
        basis.push(v);

        let w_next = householder_direction(&z, j + 1);
        let hz = reflect(&w_next, &z);
        reflectors.push(w_next);

        // Hessenberg column j lives in hz[0..=j+1]; the subdiagonal entry
        // does not exist once the inner dimension reaches n.
        let mut col: Vec<f64> = (0..=j).map(|i| hz[i]).collect();
        col.push(if j + 1 < n { hz[j + 1] } else { 0.0 });
        for (k, (c, s)) in rotations.iter().enumerate() {
            let t = c * col[k] + s * col[k + 1];
            col[k + 1] = -s * col[k] + c * col[k + 1];
            col[k] = t;
        }
        let (c, s) = plane_rotation(col[j], col[j + 1]);
        let t = c * col[j] + s * col[j + 1];
        col[j] = t;
        col.truncate(j + 1);
        rotations.push((c, s));
        tri_cols.push(col);

        let gj = g[j];
        g[j] = c * gj + s * g[j + 1];
        g[j + 1] = -s * gj + c * g[j + 1];

        inner = j + 1;
        let estimate = g[j + 1].abs() / bnorm;
        estimates.push(estimate);
        if estimate <= tol {
            break;
        }
    }

    // Back substitution on the triangularized Hessenberg.
    let mut y = vec![0.0; inner];
    for i in (0..inner).rev() {
        let mut s = g[i];
        for j in i + 1..inner {
            s -= tri_cols[j][i] * y[j];
        }
        let d = tri_cols[i][i];
        if d.abs() > 1e-300 {
            y[i] = s / d;
        }
    }

    let mut x = x0.clone();
    for (vj, &yj) in basis.iter().zip(&y) {
        x = x.add_scaled(yj, vj);
    }
    GmresCycle { x, inner, estimates }
}

/// Householder direction w (unit, zero above index k) with
/// (I - 2ww') z = [z_0..z_{k-1}, -sign(z_k) ||z_{k..}||, 0, ...].
fn householder_direction(z: &DenseVector, k: usize) -> DenseVector {
    let n = z.len();
    let mut w = DenseVector::zeros(n);
    if k >= n {
        return w;
    }
    let tail_norm: f64 = (k..n).map(|i| z[i] * z[i]).sum::<f64>().sqrt();
    if tail_norm == 0.0 {
        return w;
    }
    let alpha = if z[k] >= 0.0 { tail_norm } else { -tail_norm };
    w[k] = z[k] + alpha;
    for i in k + 1..n {
        w[i] = z[i];
    }
    let wnorm = w.norm();
    if wnorm > 0.0 {
        w = w.scaled(1.0 / wnorm);
    }
    w
}

fn reflect(w: &DenseVector, z: &DenseVector) -> DenseVector {
    let coeff = 2.0 * w.dot(z);
    if coeff == 0.0 {
        return z.clone();
    }
    z.add_scaled(-coeff, w)
}

fn plane_rotation(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0);
    }
    let r = a.hypot(b);
    (a / r, b / r)
}

// ---------------------------------------------------------------------------
// Block Jacobi
// ---------------------------------------------------------------------------

/// Block Jacobi iteration x <- x + D_B^{-1}(b - Ax) with D_B the
/// block-diagonal part over disjoint contiguous blocks (final remainder
/// block allowed).
pub fn solve_block_jacobi(
    a: &DenseMatrix,
    b: &DenseVector,
    config: &JacobiConfig,
) -> Result<SolveReport, BaselineError> {
    assert_eq!(a.rows(), a.cols(), "block jacobi expects a square system");
    assert!(config.block_size >= 1, "block size must be at least 1");
    let stopwatch = Stopwatch::start();
    let n = a.rows();

    // Factor each diagonal block once.
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < n {
        let size = config.block_size.min(n - start);
        let mut d = DenseMatrix::zeros(size, size);
        for i in 0..size {
            for j in 0..size {
                d[(i, j)] = a[(start + i, start + j)];
            }
        }
        let lu = LuFactors::new(&d).map_err(|_| BaselineError::SingularBlock(blocks.len()))?;
        blocks.push((start, size, lu));
        start += size;
    }

    let mut x = DenseVector::zeros(n);
    let mut residual_history = vec![relative_residual(a, &x, b)];
    let mut pnorm_history = vec![0.0];
    let initial_abs = b.norm();
    let mut iters = 0usize;

    while residual_history[iters] > config.tol && iters < config.max_iters {
        let r = b.sub(&a.matvec(&x));
        for (start, size, lu) in &blocks {
            let ri = DenseVector::from_vec((0..*size).map(|i| r[start + i]).collect());
            let yi = lu.solve(&ri);
            for i in 0..*size {
                x[start + i] += yi[i];
            }
        }
        iters += 1;
        residual_history.push(relative_residual(a, &x, b));
        pnorm_history.push(x.norm());
        if residual_history[iters] * b.norm() > 1e12 * initial_abs {
            let report = jacobi_report(x, false, iters, residual_history, pnorm_history, &stopwatch);
            return Err(BaselineError::Diverged(Box::new(report)));
        }
    }

    let converged = residual_history[iters] <= config.tol;
    let report = jacobi_report(x, converged, iters, residual_history, pnorm_history, &stopwatch);
    if converged {
        Ok(report)
    } else {
        Err(BaselineError::NotConverged(Box::new(report)))
    }
}

fn jacobi_report(
    x: DenseVector,
    converged: bool,
    iters: usize,
    residual_history: Vec<f64>,
    pnorm_history: Vec<f64>,
    stopwatch: &Stopwatch,
) -> SolveReport {
    SolveReport {
        solver: "jacobi".to_string(),
        solution: x,
        converged,
        sweeps: iters,
        block_steps: iters,
        residual_history,
        pnorm_history,
        invariant_log: InvariantLog::default(),
        wall_time: stopwatch.seconds(),
        final_inner: None,
    }
}

// ---------------------------------------------------------------------------
// Direct solve
// ---------------------------------------------------------------------------

struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    fn new(a: &DenseMatrix) -> Result<Self, BaselineError> {
        let n = a.rows();
        assert_eq!(a.cols(), n);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let (pivot_row, pivot_val) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if pivot_val <= 1e-13 * scale.max(1e-300) {
                return Err(BaselineError::Singular);
            }
            if pivot_row != k {
                perm.swap(k, pivot_row);
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = t;
                }
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        Ok(Self { lu, perm })
    }

    fn solve(&self, b: &DenseVector) -> DenseVector {
        let n = self.lu.rows();
        let mut y = DenseVector::from_vec(self.perm.iter().map(|&i| b[i]).collect());
        for i in 1..n {
            for j in 0..i {
                let f = self.lu[(i, j)] * y[j];
                y[i] -= f;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let f = self.lu[(i, j)] * y[j];
                y[i] -= f;
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }
}

/// Dense partial-pivot elimination; the ground-truth oracle for tests.
pub fn solve_direct(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, BaselineError> {
    Ok(LuFactors::new(a)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_random_consistent, gen_tridiag};
    use crate::rng::SplitMix64;

    fn well_conditioned_random(n: usize, seed: u64) -> DenseMatrix {
        // Diagonally dominated random matrix.
        let mut rng = SplitMix64::new(seed);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.next_signed();
            }
            a[(i, i)] += n as f64;
        }
        a
    }

    #[test]
    fn direct_solves_identity_and_diagonal() {
        let b = DenseVector::from_vec(vec![5.0, -2.0]);
        let x = solve_direct(&DenseMatrix::identity(2), &b).unwrap();
        assert_eq!(x.as_slice(), b.as_slice());

        let d = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = solve_direct(&d, &DenseVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!((x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn direct_residual_is_small_on_random_systems() {
        let a = well_conditioned_random(50, 9);
        let mut rng = SplitMix64::new(10);
        let b = DenseVector::from_vec((0..50).map(|_| rng.next_signed()).collect());
        let x = solve_direct(&a, &b).unwrap();
        assert!(relative_residual(&a, &x, &b) <= 1e-9);
    }

    #[test]
    fn direct_rejects_singular_matrix() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(
            solve_direct(&a, &DenseVector::from_vec(vec![1.0, 2.0])),
            Err(BaselineError::Singular)
        ));
    }

    #[test]
    fn gmres_identity_converges_in_one_inner_step() {
        let b = DenseVector::from_vec(vec![1.0, 2.0, 3.0]);
        let report = solve_gmres(&DenseMatrix::identity(3), &b, &GmresConfig::default()).unwrap();
        assert_eq!(report.sweeps, 1);
        assert_eq!(report.final_inner, Some(1));
        assert!(report.solution.sub(&b).norm() < 1e-12);
    }

    #[test]
    fn gmres_matches_direct_solve() {
        let a = well_conditioned_random(100, 4);
        let mut rng = SplitMix64::new(5);
        let b = DenseVector::from_vec((0..100).map(|_| rng.next_signed()).collect());
        let config = GmresConfig {
            restart: 30,
            tol: 1e-10,
            ..GmresConfig::default()
        };
        let report = solve_gmres(&a, &b, &config).unwrap();
        let exact = solve_direct(&a, &b).unwrap();
        let rel = report.solution.sub(&exact).norm() / exact.norm();
        assert!(rel <= 1e-8, "gmres vs direct deviation {rel:.3e}");
    }

    #[test]
    fn gmres_inner_estimates_never_increase() {
        let a = well_conditioned_random(40, 21);
        let mut rng = SplitMix64::new(22);
        let b = DenseVector::from_vec((0..40).map(|_| rng.next_signed()).collect());
        let x0 = DenseVector::zeros(40);
        let cycle = gmres_cycle(&a, &b, &x0, 40, 1e-14);
        for w in cycle.estimates.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn gmres_respects_restart_budget() {
        let p = gen_tridiag(50);
        let config = GmresConfig {
            restart: 5,
            tol: 1e-8,
            max_outer: 3,
            x0: None,
        };
        match solve_gmres(&p.a, &p.b, &config) {
            Err(BaselineError::NotConverged(report)) => {
                assert_eq!(report.sweeps, 3);
                assert_eq!(report.block_steps, 15);
            }
            Ok(report) => panic!("unexpected convergence in {} outers", report.sweeps),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn jacobi_diagonal_system_converges_immediately() {
        let d = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 5.0]]);
        let b = DenseVector::from_vec(vec![3.0, 10.0]);
        let config = JacobiConfig {
            block_size: 1,
            ..JacobiConfig::default()
        };
        let report = solve_block_jacobi(&d, &b, &config).unwrap();
        assert_eq!(report.sweeps, 1);
        assert!((report.solution[0] - 1.0).abs() < 1e-14);
        assert!((report.solution[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_with_whole_matrix_block_equals_direct() {
        let p = gen_tridiag(30);
        let config = JacobiConfig {
            block_size: 30,
            tol: 1e-12,
            ..JacobiConfig::default()
        };
        let report = solve_block_jacobi(&p.a, &p.b, &config).unwrap();
        assert_eq!(report.sweeps, 1);
        let exact = solve_direct(&p.a, &p.b).unwrap();
        assert!(report.solution.sub(&exact).norm() <= 1e-10 * exact.norm());
    }

    #[test]
    fn jacobi_iterates_match_hand_recurrence() {
        // For [[2,-1],[-1,2]] with b = (1,1), point Jacobi gives
        // x_k = (1 - 2^{-k}) * ones.
        let a = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        let b = DenseVector::from_vec(vec![1.0, 1.0]);
        let config = JacobiConfig {
            block_size: 1,
            tol: 1e-3,
            ..JacobiConfig::default()
        };
        let report = solve_block_jacobi(&a, &b, &config).unwrap();
        for (k, norm) in report.pnorm_history.iter().enumerate() {
            let expect = (1.0 - 0.5f64.powi(k as i32)) * 2.0f64.sqrt();
            assert!((norm - expect).abs() < 1e-12, "iterate {k}");
        }
    }

    #[test]
    fn jacobi_reports_singular_block() {
        let a = DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 2.0],
            vec![1.0, 2.0, 3.0],
        ]);
        let b = DenseVector::from_vec(vec![1.0, 1.0, 1.0]);
        let config = JacobiConfig {
            block_size: 2,
            ..JacobiConfig::default()
        };
        assert!(matches!(
            solve_block_jacobi(&a, &b, &config),
            Err(BaselineError::SingularBlock(0))
        ));
    }

    #[test]
    fn baselines_share_the_residual_definition() {
        let p = gen_random_consistent(20, 20, 55);
        let config = GmresConfig {
            tol: 1e-9,
            ..GmresConfig::default()
        };
        let report = solve_gmres(&p.a, &p.b, &config).unwrap();
        let recomputed = relative_residual(&p.a, &report.solution, &p.b);
        assert!((report.final_residual() - recomputed).abs() <= 1e-15);
    }
}
