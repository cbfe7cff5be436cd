//! The accumulated-projection kernels.
//!
//! Every step here maintains the pair (p, c): p is the orthogonal projection
//! of the unknown solution x onto a known subspace, and c tracks x'p using
//! system data only. Because p is an orthogonal projection, x'p = p'p, so
//! |c - p'p| is a self-check computable without ever knowing x.

use std::fmt;

use crate::linalg::{solve_gram, DenseMatrix, DenseVector, LinalgError};
use crate::partition::{Block, BlockPartition};

/// Relative threshold below which the carried direction is treated as lying
/// inside the block's row span.
pub const DEGENERATE_REL: f64 = 1e-12;

/// Slack for the master bookkeeping check |c - p'p| <= MASTER_TOL * max(1, p'p).
pub const MASTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionError {
    /// A'b vanished: the right-hand side carries no usable direction.
    OrthogonalRhs,
    /// The two-vector combination is undefined (parallel directions or
    /// b1 - alpha*b2 cancels).
    DegenerateDirection,
    /// The spanning set handed to a projection is numerically dependent.
    RankDeficient,
}

impl fmt::Display for ProjectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionError::OrthogonalRhs => {
                write!(f, "A'b is numerically zero; cannot form an initial projection")
            }
            ProjectionError::DegenerateDirection => {
                write!(f, "degenerate two-vector combination")
            }
            ProjectionError::RankDeficient => write!(f, "projection basis is rank deficient"),
        }
    }
}

impl std::error::Error for ProjectionError {}

/// Which step formulation a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Gram-system form: assembles [p, A_i'] and solves through its QR.
    Naive,
    /// Cached form: reuses the block's stored Q_i and b_tilde.
    Fast,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Naive => write!(f, "naive"),
            Kernel::Fast => write!(f, "fast"),
        }
    }
}

/// The pair threaded through every accumulated-projection step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    /// Current projection of the unknown solution.
    pub p: DenseVector,
    /// Maintained value of x'p.
    pub c: f64,
}

impl ProjectionState {
    pub fn norm(&self) -> f64 {
        self.p.norm()
    }

    /// |c - p'p| scaled by max(1, p'p); zero for an exact projection pair.
    pub fn master_defect(&self) -> f64 {
        let pp = self.p.dot(&self.p);
        (self.c - pp).abs() / pp.max(1.0)
    }
}

/// Optimal coefficient and maximized projection length for combining two
/// unit directions with known inner products against x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoVectorResult {
    pub s: f64,
    pub fs: f64,
}

/// Initial state p = alpha * A'b with alpha = ||b||^2 / ||A'b||^2, the
/// projection of x onto the direction A'b. Satisfies c = p'p exactly.
pub fn init_state(a: &DenseMatrix, b: &DenseVector) -> Result<ProjectionState, ProjectionError> {
    let atb = a.matvec_transpose(b);
    let atb_norm2 = atb.dot(&atb);
    if atb_norm2.sqrt() < 1e-300 {
        return Err(ProjectionError::OrthogonalRhs);
    }
    let alpha = b.dot(b) / atb_norm2;
    Ok(ProjectionState {
        p: atb.scaled(alpha),
        c: alpha * b.dot(b),
    })
}

/// Closed-form optimum of |x'(v1 + t v2)| / ||v1 + t v2|| for unit vectors
/// v1, v2 with x'v1 = b1, x'v2 = b2 and v1'v2 = alpha:
///
///   s  = (b2 - alpha b1) / (b1 - alpha b2)
///   fs = |b1| sqrt(1 + (r - alpha)^2 / (1 - alpha^2)),  r = b2/b1.
pub fn optimal_two_vector(b1: f64, b2: f64, alpha: f64) -> Result<TwoVectorResult, ProjectionError> {
    let scale = b1.abs().max(b2.abs());
    if alpha.abs() >= 1.0 - 1e-14 || (b1 - alpha * b2).abs() < 1e-14 * scale {
        return Err(ProjectionError::DegenerateDirection);
    }
    let s = (b2 - alpha * b1) / (b1 - alpha * b2);
    let fs = if b1 != 0.0 {
        let r = b2 / b1;
        b1.abs() * (1.0 + (r - alpha) * (r - alpha) / (1.0 - alpha * alpha)).sqrt()
    } else {
        // Direct evaluation at t = s; only reachable when b1 == 0 exactly.
        (b1 + s * b2).abs() / (1.0 + 2.0 * alpha * s + s * s).sqrt()
    };
    Ok(TwoVectorResult { s, fs })
}

/// One accumulated-projection step against block i using the cached factors:
/// project p into the block's row span, keep its orthogonal remainder as an
/// extra direction, and recombine.
pub fn ap_step_fast(
    state: &ProjectionState,
    partition: &BlockPartition,
    block_index: usize,
) -> ProjectionState {
    step_fast_on_block(state, partition.block(block_index))
}

fn step_fast_on_block(state: &ProjectionState, block: &Block) -> ProjectionState {
    let qtp = block.q.matvec_transpose(&state.p); // Q'p
    let p_inside = block.q.matvec(&qtp); // Q(Q'p)
    let p_bar = state.p.sub(&p_inside);
    let x_block = block.q.matvec(&block.b_tilde); // projection of x on the block span
    let bb = block.b_tilde.dot(&block.b_tilde);
    let gamma = state.c - block.b_tilde.dot(&qtp); // x'p_bar via bookkeeping
    let p_bar_norm2 = p_bar.dot(&p_bar);
    if p_bar_norm2.sqrt() > DEGENERATE_REL * state.p.norm() {
        let beta = gamma / p_bar_norm2;
        ProjectionState {
            p: x_block.add_scaled(beta, &p_bar),
            c: bb + beta * gamma,
        }
    } else {
        // p already lies in the block's row span; the combined subspace
        // degenerates to the span itself.
        ProjectionState { p: x_block, c: bb }
    }
}

/// Same step through the Gram system of W = [p, A_i']: y = (W'W)^{-1} l with
/// l = [c, b_i'], then p_new = W y and c_new = l'y.
pub fn ap_step_naive(
    state: &ProjectionState,
    partition: &BlockPartition,
    block_index: usize,
) -> Result<ProjectionState, ProjectionError> {
    let block = partition.block(block_index);
    let n = state.p.len();
    let m = block.rows.len();
    // W = [p, A_i'], assembled from the raw block rows so this route shares
    // nothing with the cached factors the fast kernel uses.
    let mut w = DenseMatrix::zeros(n, m + 1);
    for i in 0..n {
        w[(i, 0)] = state.p[i];
        for j in 0..m {
            w[(i, j + 1)] = block.rows_t[(i, j)];
        }
    }
    let mut l = DenseVector::zeros(m + 1);
    l[0] = state.c;
    for j in 0..m {
        l[j + 1] = block.b_raw[j];
    }
    let y = solve_gram(&w, &l).map_err(|e| match e {
        LinalgError::RankDeficient { .. } | LinalgError::ZeroMatrix => {
            ProjectionError::RankDeficient
        }
    })?;
    Ok(ProjectionState {
        p: w.matvec(&y),
        c: l.dot(&y),
    })
}

/// Applies the step for every block in order, returning the final state.
pub fn ap_sweep(
    state: &ProjectionState,
    partition: &BlockPartition,
    kernel: Kernel,
) -> ProjectionState {
    ap_sweep_observed(state, partition, kernel, |_, _, _| {})
}

/// Sweep variant that reports (block index, state before, state after) for
/// every step, for invariant checking and trace capture.
pub fn ap_sweep_observed<F>(
    state: &ProjectionState,
    partition: &BlockPartition,
    kernel: Kernel,
    mut observe: F,
) -> ProjectionState
where
    F: FnMut(usize, &ProjectionState, &ProjectionState),
{
    let mut current = state.clone();
    for i in 0..partition.block_count() {
        let next = match kernel {
            Kernel::Fast => ap_step_fast(&current, partition, i),
            Kernel::Naive => match ap_step_naive(&current, partition, i) {
                Ok(s) => s,
                // p (numerically) inside the block span: fall back to the
                // plain block projection, as the fast kernel does.
                Err(ProjectionError::RankDeficient) => {
                    let block = partition.block(i);
                    let x_block = block.q.matvec(&block.b_tilde);
                    ProjectionState {
                        p: x_block,
                        c: block.b_tilde.dot(&block.b_tilde),
                    }
                }
                Err(e) => unreachable!("naive step cannot raise {e}"),
            },
        };
        observe(i, &current, &next);
        current = next;
    }
    current
}

/// Projection of x onto the span of the given vectors, from their inner
/// products against x alone: p = V (V'V)^{-1} L and c = L'(V'V)^{-1} L,
/// computed through the QR of V.
pub fn window_project(
    vectors: &[DenseVector],
    inner_products: &[f64],
) -> Result<ProjectionState, ProjectionError> {
    assert_eq!(
        vectors.len(),
        inner_products.len(),
        "window_project: one inner product per vector"
    );
    assert!(!vectors.is_empty(), "window_project: empty basis");
    let v = DenseMatrix::from_columns(vectors);
    let qr = crate::linalg::householder_qr(&v).map_err(|e| match e {
        LinalgError::RankDeficient { .. } | LinalgError::ZeroMatrix => {
            ProjectionError::RankDeficient
        }
    })?;
    // With V = QR: p = Q (R')^{-1} L and c = ||(R')^{-1} L||^2.
    let l = DenseVector::from_slice(inner_products);
    let l_tilde = crate::linalg::solve_upper_transpose(&qr.r, &l);
    Ok(ProjectionState {
        p: qr.q.matvec(&l_tilde),
        c: l_tilde.dot(&l_tilde),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::partition::{build_partition, BlockPartition, BlockSpec};
    use crate::problems::{gen_random_consistent, gen_tridiag};
    use crate::rng::SplitMix64;

    fn one_block_partition(a: &DenseMatrix, b: &DenseVector) -> BlockPartition {
        let rows: Vec<usize> = (0..a.rows()).collect();
        BlockPartition::from_row_groups(a, b, &[rows]).unwrap()
    }

    #[test]
    fn init_on_identity_reproduces_rhs() {
        let a = DenseMatrix::identity(2);
        let b = DenseVector::from_vec(vec![3.0, 4.0]);
        let st = init_state(&a, &b).unwrap();
        assert!((st.p[0] - 3.0).abs() < 1e-15);
        assert!((st.p[1] - 4.0).abs() < 1e-15);
        assert!((st.c - 25.0).abs() < 1e-12);
    }

    #[test]
    fn init_on_scaled_identity() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 0)] = 2.0;
        a[(1, 1)] = 2.0;
        let b = DenseVector::from_vec(vec![1.0, 0.0]);
        let st = init_state(&a, &b).unwrap();
        assert!((st.p[0] - 0.5).abs() < 1e-15);
        assert!(st.p[1].abs() < 1e-15);
        assert!((st.c - 0.25).abs() < 1e-15);
    }

    #[test]
    fn init_master_invariant_is_exact_scale() {
        let p = gen_tridiag(100);
        let st = init_state(&p.a, &p.b).unwrap();
        assert!(st.master_defect() <= 1e-14);
    }

    #[test]
    fn init_rejects_orthogonal_rhs() {
        // A with zero column space against b: A = 0 matrix.
        let a = DenseMatrix::zeros(2, 2);
        let b = DenseVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(init_state(&a, &b).unwrap_err(), ProjectionError::OrthogonalRhs);
    }

    #[test]
    fn two_vector_trivial_cases() {
        let r = optimal_two_vector(1.0, 0.0, 0.0).unwrap();
        assert_eq!(r.s, 0.0);
        assert!((r.fs - 1.0).abs() < 1e-15);

        let r = optimal_two_vector(1.0, 1.0, 0.0).unwrap();
        assert!((r.s - 1.0).abs() < 1e-15);
        assert!((r.fs - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_vector_closed_form_matches_grid_search() {
        let r = optimal_two_vector(1.0, 0.8, 0.5).unwrap();
        assert!((r.s - 0.5).abs() < 1e-12);
        assert!((r.fs - 1.12f64.sqrt()).abs() < 1e-12);

        // Grid search over t confirms both the location and the value.
        let f = |t: f64| (1.0 + t * 0.8).abs() / (1.0 + 2.0 * 0.5 * t + t * t).sqrt();
        let mut best = (0.0, f64::MIN);
        for i in 0..200_000 {
            let t = -100.0 + i as f64 * 1e-3;
            let v = f(t);
            if v > best.1 {
                best = (t, v);
            }
        }
        assert!(best.1 <= r.fs + 1e-9);
        assert!((best.0 - r.s).abs() < 1e-2);
    }

    #[test]
    fn two_vector_dominates_both_inputs() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..200 {
            let b1 = rng.next_signed() * 3.0;
            let b2 = rng.next_signed() * 3.0;
            let alpha = rng.next_signed() * 0.99;
            if let Ok(r) = optimal_two_vector(b1, b2, alpha) {
                assert!(r.fs >= b1.abs().max(b2.abs()) - 1e-12);
            }
        }
    }

    #[test]
    fn two_vector_degenerate_inputs_are_rejected() {
        assert_eq!(
            optimal_two_vector(1.0, 1.0, 1.0).unwrap_err(),
            ProjectionError::DegenerateDirection
        );
        // b1 = alpha * b2 exactly
        assert_eq!(
            optimal_two_vector(0.5, 1.0, 0.5).unwrap_err(),
            ProjectionError::DegenerateDirection
        );
    }

    #[test]
    fn identity_two_blocks_recovers_solution_in_one_sweep() {
        let a = DenseMatrix::identity(2);
        let b = DenseVector::from_vec(vec![3.0, 4.0]);
        let part = BlockPartition::from_row_groups(&a, &b, &[vec![0], vec![1]]).unwrap();
        let st = init_state(&a, &b).unwrap();
        let out = ap_sweep(&st, &part, Kernel::Fast);
        assert!((out.p[0] - 3.0).abs() < 1e-12);
        assert!((out.p[1] - 4.0).abs() < 1e-12);
        let out = ap_sweep(&st, &part, Kernel::Naive);
        assert!((out.p[0] - 3.0).abs() < 1e-12);
        assert!((out.p[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn step_at_solution_is_a_fixed_point() {
        // When A_i p = b_i for all blocks, the step leaves (p, c) unchanged.
        let prob = gen_tridiag(30);
        let part = build_partition(&prob.a, &prob.b, &BlockSpec::new(10, 0.5)).unwrap();
        let x = prob.x_exact.clone().unwrap();
        let state = ProjectionState {
            c: x.dot(&x),
            p: x,
        };
        let out = ap_sweep(&state, &part, Kernel::Fast);
        assert!(out.p.sub(&state.p).norm() <= 1e-10 * state.p.norm());
        assert!((out.c - state.c).abs() <= 1e-10 * state.c.abs());
    }

    #[test]
    fn one_block_square_system_projects_to_solution() {
        let prob = gen_random_consistent(12, 12, 31);
        let part = one_block_partition(&prob.a, &prob.b);
        let st = init_state(&prob.a, &prob.b).unwrap();
        let out = ap_sweep(&st, &part, Kernel::Fast);
        let x = prob.x_exact.unwrap();
        assert!(out.p.sub(&x).norm() <= 1e-9 * x.norm());
    }

    #[test]
    fn naive_rank_deficiency_when_p_inside_block_span() {
        // One block that spans the whole space: after one step, p is inside
        // the span, so [p, A'] is dependent and the naive form must report it.
        let prob = gen_random_consistent(8, 8, 17);
        let part = one_block_partition(&prob.a, &prob.b);
        let st = init_state(&prob.a, &prob.b).unwrap();
        let inside = ap_step_fast(&st, &part, 0);
        assert_eq!(
            ap_step_naive(&inside, &part, 0).unwrap_err(),
            ProjectionError::RankDeficient
        );
    }

    #[test]
    fn naive_and_fast_sweeps_agree() {
        for seed in [1u64, 2, 3] {
            let prob = gen_random_consistent(30, 30, seed);
            let part = build_partition(&prob.a, &prob.b, &BlockSpec::new(6, 0.5)).unwrap();
            let st = init_state(&prob.a, &prob.b).unwrap();
            let fast = ap_sweep(&st, &part, Kernel::Fast);
            let naive = ap_sweep(&st, &part, Kernel::Naive);
            let scale = fast.p.norm();
            assert!(fast.p.sub(&naive.p).norm() <= 1e-10 * scale);
            assert!((fast.c - naive.c).abs() <= 1e-10 * fast.c.abs());
        }
    }

    #[test]
    fn sweep_norms_never_decrease() {
        let prob = gen_tridiag(100);
        let part = build_partition(&prob.a, &prob.b, &BlockSpec::new(20, 0.5)).unwrap();
        let st = init_state(&prob.a, &prob.b).unwrap();
        let mut norms = vec![st.norm()];
        ap_sweep_observed(&st, &part, Kernel::Fast, |_, _, after| {
            norms.push(after.norm());
        });
        for w in norms.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0]);
        }
    }

    #[test]
    fn sweep_telescopes_norm_growth() {
        let prob = gen_tridiag(100);
        let part = build_partition(&prob.a, &prob.b, &BlockSpec::new(20, 0.5)).unwrap();
        let st = init_state(&prob.a, &prob.b).unwrap();
        let mut gap_sum = 0.0;
        let out = ap_sweep_observed(&st, &part, Kernel::Fast, |_, before, after| {
            let d = after.p.sub(&before.p);
            gap_sum += d.dot(&d);
        });
        let lhs = out.p.dot(&out.p);
        let rhs = st.p.dot(&st.p) + gap_sum;
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
    }

    #[test]
    fn window_project_single_vector() {
        let v = DenseVector::from_vec(vec![0.0, 2.0, 0.0]);
        // x'v = 6 for, e.g., x = (1, 3, 5): p = (6/4) v.
        let st = window_project(std::slice::from_ref(&v), &[6.0]).unwrap();
        assert!((st.p[1] - 3.0).abs() < 1e-14);
        assert!(st.p[0].abs() < 1e-14);
        assert!((st.c - 9.0).abs() < 1e-12);
    }

    #[test]
    fn window_project_orthogonal_pair_is_pythagorean() {
        let v1 = DenseVector::from_vec(vec![1.0, 0.0, 0.0]);
        let v2 = DenseVector::from_vec(vec![0.0, 1.0, 0.0]);
        let st = window_project(&[v1, v2], &[3.0, 4.0]).unwrap();
        assert!((st.norm() - 5.0).abs() < 1e-12);
        assert!((st.c - 25.0).abs() < 1e-12);
    }

    #[test]
    fn window_project_matches_least_squares_oracle() {
        let mut rng = SplitMix64::new(23);
        let x = DenseVector::from_vec((0..20).map(|_| rng.next_signed()).collect());
        let vectors: Vec<DenseVector> = (0..5)
            .map(|_| DenseVector::from_vec((0..20).map(|_| rng.next_signed()).collect()))
            .collect();
        let products: Vec<f64> = vectors.iter().map(|v| x.dot(v)).collect();
        let st = window_project(&vectors, &products).unwrap();

        // Oracle: p = V y with (V'V) y = V'x solved directly via solve_gram.
        let v = DenseMatrix::from_columns(&vectors);
        let vtx = v.matvec_transpose(&x);
        let y = solve_gram(&v, &vtx).unwrap();
        let oracle = v.matvec(&y);
        assert!(st.p.sub(&oracle).norm() <= 1e-10 * oracle.norm());

        // Maximality over the basis directions.
        for (vec, &prod) in vectors.iter().zip(&products) {
            assert!(st.norm() >= prod.abs() / vec.norm() - 1e-10);
        }
    }

    #[test]
    fn window_project_rejects_dependent_basis() {
        let v1 = DenseVector::from_vec(vec![1.0, 1.0]);
        let v2 = DenseVector::from_vec(vec![2.0, 2.0]);
        assert_eq!(
            window_project(&[v1, v2], &[1.0, 2.0]).unwrap_err(),
            ProjectionError::RankDeficient
        );
    }

    #[test]
    fn master_defect_stays_small_across_sweeps() {
        let prob = gen_tridiag(100);
        let part = build_partition(&prob.a, &prob.b, &BlockSpec::new(20, 0.5)).unwrap();
        let mut st = init_state(&prob.a, &prob.b).unwrap();
        for _ in 0..50 {
            st = ap_sweep_observed(&st, &part, Kernel::Fast, |_, _, after| {
                assert!(after.master_defect() <= MASTER_TOL);
            });
        }
    }
}
