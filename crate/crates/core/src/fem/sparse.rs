use std::sync::{Once, OnceLock};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("matrix is not square ({rows} x {cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row {0} is structurally zero")]
    ZeroRow(usize),
    #[error("matrix is singular (pivot {0})")]
    Singular(usize),
    #[error("solve produced non-finite values")]
    NonFinite,
    #[error("factorization failed: {0}")]
    Backend(String),
}

/// Compressed sparse row matrix with an optional cached LU factorization.
///
/// The factorization is computed on the first solve and reused afterwards;
/// clones start without a cached factorization.
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    factor: OnceLock<Result<Lu<usize, f64>, SolverError>>,
}

impl std::fmt::Debug for SparseMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseMatrix")
            .field("nrows", &self.nrows)
            .field("ncols", &self.ncols)
            .field("nnz", &self.values.len())
            .field("factorized", &self.factor.get().is_some())
            .finish()
    }
}

impl Clone for SparseMatrix {
    fn clone(&self) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.clone(),
            factor: OnceLock::new(),
        }
    }
}

static SEQUENTIAL: Once = Once::new();

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    /// Panics on out-of-range indices.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range for {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            order.clear();
            order.extend(counts[r]..counts[r + 1]);
            order.sort_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cols[k] == last {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last = cols[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values, factor: OnceLock::new() }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored entries (explicit zeros included).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    /// Bilinear form `x^T A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.mul_vec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= s;
        }
        out
    }

    /// `sum_k c_k A_k` over matrices of equal shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let (nrows, ncols) = terms.first().map_or((0, 0), |(_, m)| (m.nrows, m.ncols));
        let mut t = Vec::with_capacity(terms.iter().map(|(_, m)| m.nnz()).sum());
        for (c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch in linear combination");
            if *c != 0.0 {
                t.extend(m.triplets().into_iter().map(|(r, col, v)| (r, col, c * v)));
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    /// Largest entry of `|A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        Self::linear_combination(&[(1.0, self), (-1.0, &t)]).max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    /// Replaces constrained rows and columns by those of the identity.
    pub fn eliminate_dirichlet(&self, constrained: &[bool]) -> Self {
        assert_eq!(constrained.len(), self.nrows);
        let mut t: Vec<_> = self
            .triplets()
            .into_iter()
            .filter(|&(r, c, _)| !constrained[r] && !constrained[c])
            .collect();
        t.extend(constrained.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (i, i, 1.0)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    fn factorization(&self) -> Result<&Lu<usize, f64>, SolverError> {
        self.factor
            .get_or_init(|| self.compute_factorization())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_factorization(&self) -> Result<Lu<usize, f64>, SolverError> {
        if self.nrows != self.ncols {
            return Err(SolverError::NotSquare { rows: self.nrows, cols: self.ncols });
        }
        if let Some(r) = (0..self.nrows).find(|&r| self.row(r).all(|(_, v)| v == 0.0)) {
            return Err(SolverError::ZeroRow(r));
        }
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
        csc.sp_lu().map_err(|e| match e {
            LuError::SymbolicSingular { index } => SolverError::Singular(index),
            other => SolverError::Backend(format!("{other:?}")),
        })
    }

    /// Computes and caches the factorization without solving.
    pub fn factorize(&self) -> Result<(), SolverError> {
        self.factorization().map(|_| ())
    }

    pub fn is_factorized(&self) -> bool {
        matches!(self.factor.get(), Some(Ok(_)))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.solve_impl(b, false)
    }

    /// Solves `A^T x = b` with the same cached factorization.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.solve_impl(b, true)
    }

    fn solve_impl(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>, SolverError> {
        if b.len() != self.nrows {
            return Err(SolverError::DimensionMismatch { expected: self.nrows, got: b.len() });
        }
        let lu = self.factorization()?;
        let mut x = b.to_vec();
        let col = faer::ColMut::from_slice_mut(&mut x);
        if transpose {
            lu.solve_transpose_in_place(col.as_mat_mut());
        } else {
            lu.solve_in_place(col.as_mat_mut());
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(if b.iter().all(|v| v.is_finite()) { SolverError::Singular(i) } else { SolverError::NonFinite });
        }
        Ok(x)
    }
}
