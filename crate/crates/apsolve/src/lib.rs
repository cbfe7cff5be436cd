//! Accumulated-projection linear solvers.
//!
//! The core object is the pair (p, c): p is an orthogonal projection of the
//! unknown solution x of Ax = b onto a growing family of subspaces built
//! from blocks of coefficient rows, and c tracks x'p using system data only.
//! Each block step grows ||p||, and repeated sweeps converge to the
//! projection of x onto the row space of A - the solution itself for square
//! nonsingular systems, the minimum-norm solution for consistent
//! underdetermined ones.
//!
//! Modules:
//! - [`linalg`]: dense vectors/matrices, Householder QR, Gram solves,
//!   small-matrix condition numbers.
//! - [`partition`]: overlapped row grouping with cached per-block factors.
//! - [`projection`]: the accumulated-projection kernels and the window
//!   projection used by the accelerated drivers.
//! - [`solvers`]: the stationary driver and its two accelerations.
//! - [`baselines`]: restarted GMRES, block Jacobi, dense direct solve.
//! - [`problems`]: stencil and finite-element test problems, Matrix Market
//!   ingestion, seeded random systems.
//! - [`bench`]: the experiment tables as machine-readable reports.
//! - [`verify`]: the runnable invariant suite.

pub mod baselines;
pub mod bench;
pub mod linalg;
pub mod partition;
pub mod problems;
pub mod projection;
pub mod rng;
pub mod solvers;
pub mod verify;

pub use linalg::{DenseMatrix, DenseVector};
pub use problems::LinearProblem;
pub use projection::{Kernel, ProjectionState};
pub use solvers::{SolveReport, SolverConfig};

/// Wall-clock shim: a real monotonic clock natively, a zero clock on
/// wasm32 where std::time::Instant is unavailable.
pub(crate) mod clock {
    #[cfg(not(target_arch = "wasm32"))]
    pub struct Stopwatch(std::time::Instant);

    #[cfg(not(target_arch = "wasm32"))]
    impl Stopwatch {
        pub fn start() -> Self {
            Self(std::time::Instant::now())
        }

        pub fn seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }

    #[cfg(target_arch = "wasm32")]
    pub struct Stopwatch;

    #[cfg(target_arch = "wasm32")]
    impl Stopwatch {
        pub fn start() -> Self {
            Stopwatch
        }

        pub fn seconds(&self) -> f64 {
            0.0
        }
    }
}
