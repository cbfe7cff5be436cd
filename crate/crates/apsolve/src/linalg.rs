//! Dense numerical kernels: vectors, row-major matrices, Householder QR,
//! Gram-system solves and small-matrix condition numbers.
//!
//! Everything here is plain `f64` storage with no aliasing tricks; values are
//! immutable after construction and safe to share across threads.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::Serialize;

/// Relative drop tolerance for detecting a numerically dependent column set.
pub const RANK_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// A triangular factor has a diagonal entry below the drop tolerance.
    RankDeficient { column: usize },
    /// Every entry of the input is (sub)denormal zero.
    ZeroMatrix,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::RankDeficient { column } => {
                write!(f, "rank deficient: negligible pivot at column {column}")
            }
            LinalgError::ZeroMatrix => write!(f, "matrix is numerically zero"),
        }
    }
}

impl std::error::Error for LinalgError {}

/// Fixed-length column vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(n: usize) -> Self {
        Self { data: vec![0.0; n] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Self { data: data.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// self + alpha * other, as a new vector.
    pub fn add_scaled(&self, alpha: f64, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "add_scaled: length mismatch");
        DenseVector::from_vec(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + alpha * b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        DenseVector::from_vec(self.data.iter().map(|a| a * alpha).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from a list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "from_rows: ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    /// Builds from a list of equal-length columns.
    pub fn from_columns(cols: &[DenseVector]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), r, "from_columns: ragged columns");
            for i in 0..r {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> DenseVector {
        DenseVector::from_slice(self.row(i))
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// A * x
    pub fn matvec(&self, x: &DenseVector) -> DenseVector {
        assert_eq!(x.len(), self.cols, "matvec: dimension mismatch");
        DenseVector::from_vec(
            (0..self.rows)
                .map(|i| {
                    self.row(i)
                        .iter()
                        .zip(x.iter())
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
        )
    }

    /// A' * y
    pub fn matvec_transpose(&self, y: &DenseVector) -> DenseVector {
        assert_eq!(y.len(), self.rows, "matvec_transpose: dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let yi = y[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += yi * a;
            }
        }
        DenseVector::from_vec(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul: dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    /// New matrix whose rows are the given rows of self, in order.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(indices.len(), self.cols);
        for (k, &i) in indices.iter().enumerate() {
            m.data[k * self.cols..(k + 1) * self.cols].copy_from_slice(self.row(i));
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Thin QR factor of a tall matrix: `q` has orthonormal columns, `r` is upper
/// triangular with nonnegative diagonal.
#[derive(Debug, Clone)]
pub struct QRFactor {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

impl QRFactor {
    /// Max-norm departure of q'q from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.q.cols();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in i..m {
                let d: f64 = (0..self.q.rows())
                    .map(|k| self.q[(k, i)] * self.q[(k, j)])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

/// Thin Householder QR of a tall matrix (rows >= cols, full column rank).
///
/// The diagonal of `r` is forced nonnegative so factors are deterministic.
pub fn householder_qr(tall: &DenseMatrix) -> Result<QRFactor, LinalgError> {
    let n = tall.rows();
    let m = tall.cols();
    assert!(n >= m, "householder_qr: matrix must be tall (rows >= cols)");

    let scale = tall.max_abs();
    let mut a = tall.clone();
    // Householder vectors, v[k] has length n - k.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(m);

    for k in 0..m {
        // Reflector annihilating a[k+1.., k].
        let mut v: Vec<f64> = (k..n).map(|i| a[(i, k)]).collect();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = if v[0] > 0.0 { -alpha } else { alpha };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            // Apply I - 2vv'/v'v to the trailing columns.
            for j in k..m {
                let s: f64 = (k..n).map(|i| v[i - k] * a[(i, j)]).sum();
                let f = 2.0 * s / vnorm2;
                for i in k..n {
                    a[(i, j)] -= f * v[i - k];
                }
            }
        }
        vs.push(v);

        if a[(k, k)].abs() <= RANK_TOL * scale {
            return Err(LinalgError::RankDeficient { column: k });
        }
    }

    let mut r = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            r[(i, j)] = a[(i, j)];
        }
    }

    // Accumulate the thin Q by applying the reflectors to I(:, 0..m),
    // last reflector first.
    let mut q = DenseMatrix::zeros(n, m);
    for j in 0..m {
        q[(j, j)] = 1.0;
    }
    for k in (0..m).rev() {
        let v = &vs[k];
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..m {
            let s: f64 = (k..n).map(|i| v[i - k] * q[(i, j)]).sum();
            let f = 2.0 * s / vnorm2;
            for i in k..n {
                q[(i, j)] -= f * v[i - k];
            }
        }
    }

    // Fix the sign convention: nonnegative diagonal of R.
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for jj in j..m {
                r[(j, jj)] = -r[(j, jj)];
            }
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }

    Ok(QRFactor { q, r })
}

/// Solves R y = b for upper-triangular R (back substitution).
pub fn solve_upper(r: &DenseMatrix, b: &DenseVector) -> DenseVector {
    let m = r.rows();
    assert_eq!(r.cols(), m);
    assert_eq!(b.len(), m);
    let mut y = DenseVector::zeros(m);
    for i in (0..m).rev() {
        let mut s = b[i];
        for j in i + 1..m {
            s -= r[(i, j)] * y[j];
        }
        y[i] = s / r[(i, i)];
    }
    y
}

/// Solves R' z = b for upper-triangular R (forward substitution on the
/// implicit lower-triangular transpose).
pub fn solve_upper_transpose(r: &DenseMatrix, b: &DenseVector) -> DenseVector {
    let m = r.rows();
    assert_eq!(r.cols(), m);
    assert_eq!(b.len(), m);
    let mut z = DenseVector::zeros(m);
    for i in 0..m {
        let mut s = b[i];
        for j in 0..i {
            s -= r[(j, i)] * z[j];
        }
        z[i] = s / r[(i, i)];
    }
    z
}

/// Returns y with (W'W) y = rhs, solved through the QR of W rather than by
/// forming the Gram matrix: W = QR gives W'W = R'R.
pub fn solve_gram(w: &DenseMatrix, rhs: &DenseVector) -> Result<DenseVector, LinalgError> {
    assert_eq!(rhs.len(), w.cols(), "solve_gram: rhs length must match cols");
    if w.cols() > w.rows() {
        // More columns than rows: the Gram matrix cannot be invertible.
        return Err(LinalgError::RankDeficient { column: w.rows() });
    }
    let qr = householder_qr(w)?;
    let z = solve_upper_transpose(&qr.r, rhs);
    Ok(solve_upper(&qr.r, &z))
}

/// Exact 2-norm condition number of `mat'` (a few rows, any column count),
/// from the eigenvalues of the small Gram matrix mat * mat'.
///
/// Returns `f64::INFINITY` when the smallest singular value underflows.
pub fn condition_estimate(mat: &DenseMatrix) -> Result<f64, LinalgError> {
    let s = mat.rows();
    assert!(s <= 64, "condition_estimate: designed for small row counts");
    if mat.max_abs() < 1e-300 {
        return Err(LinalgError::ZeroMatrix);
    }
    // Scale rows into a sane range so the Gram entries do not overflow.
    let scale = mat.max_abs();
    let mut gram = DenseMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let d: f64 = mat
                .row(i)
                .iter()
                .zip(mat.row(j))
                .map(|(a, b)| (a / scale) * (b / scale))
                .sum();
            gram[(i, j)] = d;
            gram[(j, i)] = d;
        }
    }
    let eig = symmetric_eigenvalues(&gram);
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((max / min).sqrt())
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        let diag_scale = (0..n).fold(0.0f64, |s, i| s.max(m[(i, i)].abs())).max(1e-300);
        if off <= 1e-15 * diag_scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Relative residual ||b - A x|| / ||b||, the stopping quantity shared by
/// every solver and baseline in this crate.
pub fn relative_residual(a: &DenseMatrix, x: &DenseVector, b: &DenseVector) -> f64 {
    let r = b.sub(&a.matvec(x));
    r.norm() / b.norm()
}
