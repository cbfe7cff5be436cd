//! Test-problem construction: stencil generators, 1-D finite-element
//! assembly for a two-point boundary-value problem, seeded random consistent
//! systems, and Matrix Market file ingestion.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use crate::baselines::solve_direct;
use crate::linalg::{householder_qr, DenseMatrix, DenseVector};
use crate::rng::SplitMix64;

#[derive(Debug)]
pub enum ProblemError {
    Parse { line: usize, message: String },
    UnsupportedField(String),
    QuadratureFailure,
    Io(io::Error),
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemError::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            ProblemError::UnsupportedField(what) => write!(f, "unsupported matrix market qualifier: {what}"),
            ProblemError::QuadratureFailure => write!(f, "non-finite coefficient evaluation during assembly"),
            ProblemError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for ProblemError {}

impl From<io::Error> for ProblemError {
    fn from(e: io::Error) -> Self {
        ProblemError::Io(e)
    }
}

/// A linear system together with its exact solution when one is known by
/// construction.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub a: DenseMatrix,
    pub b: DenseVector,
    pub x_exact: Option<DenseVector>,
}

impl LinearProblem {
    /// ||A x_exact - b|| / ||b||, when x_exact is present.
    pub fn consistency_defect(&self) -> Option<f64> {
        self.x_exact
            .as_ref()
            .map(|x| self.a.matvec(x).sub(&self.b).norm() / self.b.norm().max(1e-300))
    }
}

/// Tridiagonal stencil system: 2 on the diagonal, -1 off-diagonal, with
/// b = A * x_exact (all-ones by default).
pub fn gen_tridiag(n: usize) -> LinearProblem {
    gen_tridiag_with(n, DenseVector::from_vec(vec![1.0; n]))
}

pub fn gen_tridiag_with(n: usize, x_exact: DenseVector) -> LinearProblem {
    assert!(n >= 2, "gen_tridiag: n must be at least 2");
    assert_eq!(x_exact.len(), n);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 2.0;
        if i > 0 {
            a[(i, i - 1)] = -1.0;
        }
        if i + 1 < n {
            a[(i, i + 1)] = -1.0;
        }
    }
    let b = a.matvec(&x_exact);
    LinearProblem {
        a,
        b,
        x_exact: Some(x_exact),
    }
}

/// Two-point boundary-value problem (a(t) u'(t))' + b(t) u(t) = f(t) on
/// (0, 1) with u(0) = u(1) = 0, where f is derived analytically from the
/// chosen exact solution: f = a'u' + a u'' + b u.
#[derive(Clone, Copy)]
pub struct BvpSpec {
    /// Number of interior grid points (the unknown count).
    pub n: usize,
    pub a: fn(f64) -> f64,
    pub a_prime: fn(f64) -> f64,
    pub b: fn(f64) -> f64,
    pub u: fn(f64) -> f64,
    pub u_prime: fn(f64) -> f64,
    pub u_second: fn(f64) -> f64,
}

impl fmt::Debug for BvpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BvpSpec").field("n", &self.n).finish()
    }
}

impl BvpSpec {
    /// The variable-coefficient problem used throughout the experiment
    /// tables: a(t) = 1 + t, b(t) = t, exact solution u(t) = t(1-t)e^{2+t}.
    pub fn reference(n: usize) -> Self {
        Self {
            n,
            a: |t| 1.0 + t,
            a_prime: |_| 1.0,
            b: |t| t,
            u: |t| t * (1.0 - t) * (2.0 + t).exp(),
            u_prime: |t| (1.0 - t - t * t) * (2.0 + t).exp(),
            u_second: |t| -t * (3.0 + t) * (2.0 + t).exp(),
        }
    }

    /// Constant-coefficient limit a = 1, b = 0 with a quadratic solution;
    /// the assembled matrix is proportional to the three-point Laplacian.
    pub fn laplacian(n: usize) -> Self {
        Self {
            n,
            a: |_| 1.0,
            a_prime: |_| 0.0,
            b: |_| 0.0,
            u: |t| t * (1.0 - t),
            u_prime: |t| 1.0 - 2.0 * t,
            u_second: |_| -2.0,
        }
    }

    fn forcing(&self, t: f64) -> f64 {
        (self.a_prime)(t) * (self.u_prime)(t)
            + (self.a)(t) * (self.u_second)(t)
            + (self.b)(t) * (self.u)(t)
    }

    /// Exact solution sampled at the interior nodes.
    pub fn nodal_interpolant(&self) -> DenseVector {
        let h = 1.0 / (self.n + 1) as f64;
        DenseVector::from_vec((1..=self.n).map(|i| (self.u)(i as f64 * h)).collect())
    }
}

// 3-point Gauss-Legendre rule on [-1, 1].
const GAUSS_PTS: [f64; 3] = [-0.7745966692414834, 0.0, 0.7745966692414834];
const GAUSS_WTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Piecewise-linear Galerkin assembly of the boundary-value problem on a
/// uniform grid of n+1 subintervals. Weak form per test function v:
/// integral of (-a u'v' + b u v) = integral of f v. Element integrals use
/// 3-point Gauss quadrature. The returned x_exact is the solved discrete
/// system (direct elimination), so the consistency invariant holds; compare
/// against `BvpSpec::nodal_interpolant` for discretization error.
pub fn assemble_fem_bvp(spec: &BvpSpec) -> Result<LinearProblem, ProblemError> {
    let n = spec.n;
    assert!(n >= 2, "assemble_fem_bvp: need at least two interior nodes");
    let h = 1.0 / (n + 1) as f64;
    let mut k = DenseMatrix::zeros(n, n);
    let mut f = DenseVector::zeros(n);

    // Elements span [t_e, t_{e+1}] for e = 0..=n; global node g is interior
    // when 1 <= g <= n, mapping to unknown g-1.
    for e in 0..=n {
        let t_left = e as f64 * h;
        let mid = t_left + 0.5 * h;
        // Local basis: phi_left = (t_right - t)/h, phi_right = (t - t_left)/h.
        let local_nodes = [e, e + 1];
        let local_grad = [-1.0 / h, 1.0 / h];
        let mut ke = [[0.0; 2]; 2];
        let mut fe = [0.0; 2];
        for g in 0..3 {
            let t = mid + 0.5 * h * GAUSS_PTS[g];
            let w = 0.5 * h * GAUSS_WTS[g];
            let (av, bv, fv) = ((spec.a)(t), (spec.b)(t), spec.forcing(t));
            if !(av.is_finite() && bv.is_finite() && fv.is_finite()) {
                return Err(ProblemError::QuadratureFailure);
            }
            let phi = [(t_left + h - t) / h, (t - t_left) / h];
            for i in 0..2 {
                for j in 0..2 {
                    ke[i][j] += w * (-av * local_grad[i] * local_grad[j] + bv * phi[i] * phi[j]);
                }
                fe[i] += w * fv * phi[i];
            }
        }
        for i in 0..2 {
            let gi = local_nodes[i];
            if gi == 0 || gi == n + 1 {
                continue;
            }
            for j in 0..2 {
                let gj = local_nodes[j];
                if gj == 0 || gj == n + 1 {
                    continue;
                }
                k[(gi - 1, gj - 1)] += ke[i][j];
            }
            f[gi - 1] += fe[i];
        }
    }

    let x_exact = solve_direct(&k, &f).expect("assembled system is nonsingular");
    Ok(LinearProblem {
        a: k,
        b: f,
        x_exact: Some(x_exact),
    })
}

/// Seeded full-row-rank system with a drawn exact solution and b = A x_exact.
/// Rank deficiency (never observed for random draws) retries with fresh
/// entries from the same stream.
pub fn gen_random_consistent(rows: usize, cols: usize, seed: u64) -> LinearProblem {
    assert!(rows <= cols, "gen_random_consistent: rows must not exceed cols");
    let mut rng = SplitMix64::new(seed);
    for _attempt in 0..8 {
        let mut a = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                a[(i, j)] = rng.next_signed();
            }
        }
        if householder_qr(&a.transpose()).is_err() {
            continue;
        }
        let x_exact = DenseVector::from_vec((0..cols).map(|_| rng.next_signed()).collect());
        let b = a.matvec(&x_exact);
        return LinearProblem {
            a,
            b,
            x_exact: Some(x_exact),
        };
    }
    unreachable!("random matrix stayed rank deficient across retries")
}

// ---------------------------------------------------------------------------
// Matrix Market
// ---------------------------------------------------------------------------

/// Reads a real Matrix Market file (coordinate or array, general or
/// symmetric) into a dense system. The right-hand side comes from a
/// companion `<stem>_rhs.mtx` file when present; otherwise b = A * ones with
/// x_exact = ones.
pub fn read_matrix_market(path: &Path) -> Result<LinearProblem, ProblemError> {
    let content = fs::read_to_string(path)?;
    let a = parse_matrix_market(&content)?;
    let rhs_path = companion_rhs_path(path);
    if rhs_path.exists() {
        let rhs_mat = parse_matrix_market(&fs::read_to_string(&rhs_path)?)?;
        if rhs_mat.cols() != 1 || rhs_mat.rows() != a.rows() {
            return Err(ProblemError::Parse {
                line: 0,
                message: format!(
                    "companion rhs must be {} x 1, got {} x {}",
                    a.rows(),
                    rhs_mat.rows(),
                    rhs_mat.cols()
                ),
            });
        }
        let b = rhs_mat.column(0);
        Ok(LinearProblem { a, b, x_exact: None })
    } else {
        let ones = DenseVector::from_vec(vec![1.0; a.cols()]);
        let b = a.matvec(&ones);
        Ok(LinearProblem {
            a,
            b,
            x_exact: Some(ones),
        })
    }
}

/// `foo.mtx` -> `foo_rhs.mtx` (or `foo_rhs` when there is no extension).
pub fn companion_rhs_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_rhs.{}", ext.to_string_lossy()),
        None => format!("{stem}_rhs"),
    };
    path.with_file_name(name)
}

/// Parses Matrix Market text into a dense matrix.
pub fn parse_matrix_market(content: &str) -> Result<DenseMatrix, ProblemError> {
    let mut lines = content.lines().enumerate();

    let (line_no, banner) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let banner_tokens: Vec<String> = banner.split_whitespace().map(|t| t.to_lowercase()).collect();
    if banner_tokens.len() != 5 || banner_tokens[0] != "%%matrixmarket" {
        return Err(parse_err(line_no + 1, "banner must be '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    if banner_tokens[1] != "matrix" {
        return Err(parse_err(line_no + 1, "only the 'matrix' object is supported"));
    }
    let format = banner_tokens[2].as_str();
    if format != "coordinate" && format != "array" {
        return Err(parse_err(line_no + 1, "format must be 'coordinate' or 'array'"));
    }
    match banner_tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(ProblemError::UnsupportedField(other.to_string())),
    }
    let symmetric = match banner_tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(ProblemError::UnsupportedField(other.to_string())),
    };

    // Skip comment lines, find the size line.
    let mut size_line = None;
    for (no, line) in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some((no, trimmed.to_string()));
        break;
    }
    let (size_no, size_text) = size_line.ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<&str> = size_text.split_whitespace().collect();

    match format {
        "coordinate" => {
            if dims.len() != 3 {
                return Err(parse_err(size_no + 1, "coordinate size line needs 'rows cols nnz'"));
            }
            let rows = parse_usize(dims[0], size_no)?;
            let cols = parse_usize(dims[1], size_no)?;
            let nnz = parse_usize(dims[2], size_no)?;
            let mut m = DenseMatrix::zeros(rows, cols);
            let mut seen = 0usize;
            for (no, line) in lines {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('%') {
                    continue;
                }
                let parts: Vec<&str> = trimmed.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(parse_err(no + 1, "coordinate entry needs 'i j value'"));
                }
                let i = parse_usize(parts[0], no)?;
                let j = parse_usize(parts[1], no)?;
                let v = parse_f64(parts[2], no)?;
                if i < 1 || i > rows || j < 1 || j > cols {
                    return Err(parse_err(no + 1, "index out of range"));
                }
                if symmetric && j > i {
                    return Err(parse_err(no + 1, "symmetric entries must lie on or below the diagonal"));
                }
                m[(i - 1, j - 1)] += v;
                if symmetric && i != j {
                    m[(j - 1, i - 1)] += v;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(size_no + 1, &format!("expected {nnz} entries, found {seen}")));
            }
            Ok(m)
        }
        _ => {
            if dims.len() != 2 {
                return Err(parse_err(size_no + 1, "array size line needs 'rows cols'"));
            }
            let rows = parse_usize(dims[0], size_no)?;
            let cols = parse_usize(dims[1], size_no)?;
            let mut values = Vec::new();
            let mut last_no = size_no;
            for (no, line) in lines {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('%') {
                    continue;
                }
                for tok in trimmed.split_whitespace() {
                    values.push(parse_f64(tok, no)?);
                }
                last_no = no;
            }
            let expected = if symmetric {
                // Lower triangle (including diagonal) packed by columns.
                cols * (cols + 1) / 2
            } else {
                rows * cols
            };
            if symmetric && rows != cols {
                return Err(parse_err(size_no + 1, "symmetric array matrix must be square"));
            }
            if values.len() != expected {
                return Err(parse_err(last_no + 1, &format!("expected {expected} array values, found {}", values.len())));
            }
            let mut m = DenseMatrix::zeros(rows, cols);
            let mut it = values.into_iter();
            if symmetric {
                for j in 0..cols {
                    for i in j..rows {
                        let v = it.next().unwrap();
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            } else {
                for j in 0..cols {
                    for i in 0..rows {
                        m[(i, j)] = it.next().unwrap();
                    }
                }
            }
            Ok(m)
        }
    }
}

fn parse_err(line: usize, message: &str) -> ProblemError {
    ProblemError::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_usize(tok: &str, line_idx: usize) -> Result<usize, ProblemError> {
    tok.parse().map_err(|_| parse_err(line_idx + 1, &format!("expected integer, got '{tok}'")))
}

fn parse_f64(tok: &str, line_idx: usize) -> Result<f64, ProblemError> {
    tok.parse().map_err(|_| parse_err(line_idx + 1, &format!("expected number, got '{tok}'")))
}

/// Serializes a dense matrix as Matrix Market coordinate/real/general text.
/// Values print in shortest round-trip form, so write-then-read is
/// bit-identical.
pub fn matrix_market_string(a: &DenseMatrix) -> String {
    let mut entries = Vec::new();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if a[(i, j)] != 0.0 {
                entries.push((i + 1, j + 1, a[(i, j)]));
            }
        }
    }
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", a.rows(), a.cols(), entries.len()));
    for (i, j, v) in entries {
        out.push_str(&format!("{i} {j} {v}\n"));
    }
    out
}

pub fn write_matrix_market(path: &Path, a: &DenseMatrix) -> Result<(), ProblemError> {
    fs::write(path, matrix_market_string(a))?;
    Ok(())
}

/// Column vector in array format, used for companion right-hand sides.
pub fn vector_market_string(v: &DenseVector) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} 1\n", v.len()));
    for i in 0..v.len() {
        out.push_str(&format!("{}\n", v[i]));
    }
    out
}
