//! Overlapped row-group division of the coefficient matrix, with each group's
//! orthonormal factor and transformed right-hand side cached once up front.
//!
//! Groups of `block_size` rows are taken at a fixed stride; a block that runs
//! past the last row wraps cyclically to the first rows, so every block has
//! exactly `block_size` rows and every row of the matrix is covered.

use std::fmt;

use crate::linalg::{
    householder_qr, solve_upper_transpose, DenseMatrix, DenseVector, LinalgError,
};

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionError {
    InvalidSpec(String),
    /// Block i has numerically dependent rows; change the block size or
    /// permute the rows.
    RankDeficientBlock(usize),
}

impl fmt::Display for PartitionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionError::InvalidSpec(msg) => write!(f, "invalid block spec: {msg}"),
            PartitionError::RankDeficientBlock(i) => {
                write!(f, "block {i} is rank deficient; change block size or row order")
            }
        }
    }
}

impl std::error::Error for PartitionError {}

#[derive(Debug, Clone, PartialEq)]
pub enum RowOrder {
    Natural,
    Permutation(Vec<usize>),
}

/// How to divide the rows: block size, fraction of rows shared between
/// adjacent blocks, and the row ordering to group over.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub block_size: usize,
    pub overlap: f64,
    pub row_order: RowOrder,
}

impl BlockSpec {
    pub fn new(block_size: usize, overlap: f64) -> Self {
        Self {
            block_size,
            overlap,
            row_order: RowOrder::Natural,
        }
    }

    /// Distance between the starts of consecutive blocks.
    pub fn stride(&self) -> usize {
        (self.block_size as f64 * (1.0 - self.overlap)).round() as usize
    }

    fn validate(&self, n_rows: usize) -> Result<(), PartitionError> {
        if self.block_size < 2 {
            return Err(PartitionError::InvalidSpec(format!(
                "block size must be at least 2, got {}",
                self.block_size
            )));
        }
        if self.block_size > n_rows {
            return Err(PartitionError::InvalidSpec(format!(
                "block size {} exceeds row count {}",
                self.block_size, n_rows
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(PartitionError::InvalidSpec(format!(
                "overlap fraction must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        if self.stride() < 1 {
            return Err(PartitionError::InvalidSpec(
                "overlap leaves a stride below 1".into(),
            ));
        }
        if let RowOrder::Permutation(p) = &self.row_order {
            let mut seen = vec![false; n_rows];
            if p.len() != n_rows || p.iter().any(|&i| i >= n_rows || std::mem::replace(&mut seen[i], true)) {
                return Err(PartitionError::InvalidSpec(
                    "row permutation is not a permutation of the row indices".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One row group with its cached factors: the transposed row submatrix
/// `rows_t` (n x m), its QR (`q` n x m with orthonormal columns, `r` m x m
/// upper triangular) and the transformed right-hand side `b_tilde` with
/// R' b_tilde = b_raw.
#[derive(Debug, Clone)]
pub struct Block {
    pub rows: Vec<usize>,
    pub rows_t: DenseMatrix,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub b_tilde: DenseVector,
    pub b_raw: DenseVector,
}

#[derive(Debug, Clone)]
pub struct BlockPartition {
    blocks: Vec<Block>,
    n_rows: usize,
    n_cols: usize,
}

impl BlockPartition {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Builds a partition from explicit row groups, computing and caching the
    /// per-block factors. Every row index must appear in at least one group.
    pub fn from_row_groups(
        a: &DenseMatrix,
        b: &DenseVector,
        groups: &[Vec<usize>],
    ) -> Result<Self, PartitionError> {
        assert_eq!(a.rows(), b.len(), "rhs length must match row count");
        let mut covered = vec![false; a.rows()];
        let mut blocks = Vec::with_capacity(groups.len());
        for (i, group) in groups.iter().enumerate() {
            let rows_t = a.select_rows(group).transpose();
            let qr = householder_qr(&rows_t).map_err(|e| match e {
                LinalgError::RankDeficient { .. } | LinalgError::ZeroMatrix => {
                    PartitionError::RankDeficientBlock(i)
                }
            })?;
            let b_raw = DenseVector::from_vec(group.iter().map(|&r| b[r]).collect());
            let b_tilde = solve_upper_transpose(&qr.r, &b_raw);
            for &r in group {
                covered[r] = true;
            }
            blocks.push(Block {
                rows: group.clone(),
                rows_t,
                q: qr.q,
                r: qr.r,
                b_tilde,
                b_raw,
            });
        }
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err(PartitionError::InvalidSpec(format!(
                "row {missing} is not covered by any block"
            )));
        }
        Ok(Self {
            blocks,
            n_rows: a.rows(),
            n_cols: a.cols(),
        })
    }
}

/// Row-index groups for the given spec, without factoring anything.
pub fn plan_groups(n_rows: usize, spec: &BlockSpec) -> Result<Vec<Vec<usize>>, PartitionError> {
    spec.validate(n_rows)?;
    let m = spec.block_size;
    let stride = spec.stride();
    let k = n_rows.div_ceil(stride);
    let order: Vec<usize> = match &spec.row_order {
        RowOrder::Natural => (0..n_rows).collect(),
        RowOrder::Permutation(p) => p.clone(),
    };
    Ok((0..k)
        .map(|i| (0..m).map(|j| order[(i * stride + j) % n_rows]).collect())
        .collect())
}

/// Divides the rows of `a` into overlapped groups and caches each block's QR
/// factor and transformed right-hand side.
pub fn build_partition(
    a: &DenseMatrix,
    b: &DenseVector,
    spec: &BlockSpec,
) -> Result<BlockPartition, PartitionError> {
    let groups = plan_groups(a.rows(), spec)?;
    BlockPartition::from_row_groups(a, b, &groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::gen_tridiag;

    #[test]
    fn half_overlap_strides_by_half_block() {
        let groups = plan_groups(100, &BlockSpec::new(20, 0.5)).unwrap();
        assert_eq!(groups.len(), 10);
        assert_eq!(groups[0], (0..20).collect::<Vec<_>>());
        assert_eq!(groups[1], (10..30).collect::<Vec<_>>());
        // Last block wraps to the first rows.
        assert_eq!(groups[9][..10], (90..100).collect::<Vec<_>>()[..]);
        assert_eq!(groups[9][10..], (0..10).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn zero_overlap_gives_disjoint_blocks() {
        let groups = plan_groups(100, &BlockSpec::new(20, 0.0)).unwrap();
        assert_eq!(groups.len(), 5);
        for (i, g) in groups.iter().enumerate() {
            assert_eq!(*g, (i * 20..(i + 1) * 20).collect::<Vec<_>>());
        }
    }

    #[test]
    fn block_count_follows_ceil_rule() {
        assert_eq!(plan_groups(100, &BlockSpec::new(20, 0.5)).unwrap().len(), 10);
        assert_eq!(plan_groups(100, &BlockSpec::new(20, 0.0)).unwrap().len(), 5);
        assert_eq!(plan_groups(200, &BlockSpec::new(50, 0.5)).unwrap().len(), 8);
    }

    #[test]
    fn tridiag_partition_covers_and_factors() {
        let p = gen_tridiag(100);
        let part = build_partition(&p.a, &p.b, &BlockSpec::new(20, 0.5)).unwrap();
        assert_eq!(part.block_count(), 10);
        let mut covered = [false; 100];
        for blk in part.blocks() {
            for &r in &blk.rows {
                covered[r] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn cached_factors_reconstruct_block_transpose() {
        let p = gen_tridiag(60);
        let part = build_partition(&p.a, &p.b, &BlockSpec::new(15, 0.5)).unwrap();
        for blk in part.blocks() {
            let tall = p.a.select_rows(&blk.rows).transpose();
            let back = blk.q.matmul(&blk.r);
            let scale = tall.max_abs();
            for i in 0..tall.rows() {
                for j in 0..tall.cols() {
                    assert!((back[(i, j)] - tall[(i, j)]).abs() <= 1e-12 * scale);
                }
            }
            // R' b_tilde = b_raw
            let rtb = blk.r.matvec_transpose(&blk.b_tilde);
            assert!(rtb.sub(&blk.b_raw).norm() <= 1e-10 * blk.b_raw.norm().max(1e-300));
        }
    }

    #[test]
    fn identical_inputs_give_identical_partitions() {
        let p = gen_tridiag(50);
        let spec = BlockSpec::new(12, 0.5);
        let a = build_partition(&p.a, &p.b, &spec).unwrap();
        let b = build_partition(&p.a, &p.b, &spec).unwrap();
        assert_eq!(a.block_count(), b.block_count());
        for (x, y) in a.blocks().iter().zip(b.blocks()) {
            assert_eq!(x.rows, y.rows);
            assert_eq!(x.q, y.q);
            assert_eq!(x.r, y.r);
            assert_eq!(x.b_tilde.as_slice(), y.b_tilde.as_slice());
        }
    }

    #[test]
    fn rank_deficient_block_is_reported_with_index() {
        // Duplicate adjacent rows: the first block cannot be factored.
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let b = DenseVector::from_vec(vec![1.0, 1.0, 1.0]);
        let err = build_partition(&a, &b, &BlockSpec::new(2, 0.0)).unwrap_err();
        assert_eq!(err, PartitionError::RankDeficientBlock(0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(
            plan_groups(10, &BlockSpec::new(1, 0.0)),
            Err(PartitionError::InvalidSpec(_))
        ));
        assert!(matches!(
            plan_groups(10, &BlockSpec::new(20, 0.0)),
            Err(PartitionError::InvalidSpec(_))
        ));
        assert!(matches!(
            plan_groups(10, &BlockSpec::new(4, 1.0)),
            Err(PartitionError::InvalidSpec(_))
        ));
        // overlap so high the stride rounds to zero
        assert!(matches!(
            plan_groups(10, &BlockSpec::new(4, 0.95)),
            Err(PartitionError::InvalidSpec(_))
        ));
    }

    #[test]
    fn permuted_row_order_regroups_rows() {
        let p = gen_tridiag(6);
        let perm = vec![5, 4, 3, 2, 1, 0];
        let spec = BlockSpec {
            block_size: 3,
            overlap: 0.0,
            row_order: RowOrder::Permutation(perm),
        };
        let groups = plan_groups(6, &spec).unwrap();
        assert_eq!(groups[0], vec![5, 4, 3]);
        assert_eq!(groups[1], vec![2, 1, 0]);
        let part = build_partition(&p.a, &p.b, &spec).unwrap();
        assert_eq!(part.block_count(), 2);
    }
}
