//! Symmetric sparse matrices in compressed sparse row form.
//!
//! Assembled operators store the full symmetric pattern (both triangles) so
//! matrix-vector products are a single row sweep. Element contributions are
//! accumulated through [`CooBuilder`], which sums duplicates in insertion
//! order; the paired (i,j)/(j,i) contributions see identical values in the
//! same order, so assembled matrices are bitwise symmetric.

use crate::error::{Result, SloshError};

/// Symmetric sparse matrix, CSR storage, full pattern.
#[derive(Debug, Clone)]
pub struct SymSparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymSparseMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as parallel (column, value) slices.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// x^T A y
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            let mut row_acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                row_acc += v * y[j];
            }
            acc += xi * row_acc;
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// max |A_ij - A_ji|, for symmetry checks.
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Iterate stored entries of the lower triangle (i >= j) row by row.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .filter(move |(&j, _)| j <= i)
                .map(move |(&j, &v)| (i, j, v))
        })
    }
}

/// Triplet accumulator for finite element assembly.
#[derive(Debug)]
pub struct CooBuilder {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(dim: usize) -> Self {
        CooBuilder {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.entries.push((i, j, v));
    }

    /// Sort, merge duplicates (insertion order preserved within a key) and
    /// compress to CSR.
    pub fn build(mut self) -> Result<SymSparseMatrix> {
        if self.dim == 0 {
            return Err(SloshError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        // stable sort keeps duplicate accumulation order deterministic
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut it = self.entries.into_iter().peekable();
        while let Some((i, j, v)) = it.next() {
            let mut acc = v;
            while let Some(&(ni, nj, nv)) = it.peek() {
                if ni == i && nj == j {
                    acc += nv;
                    it.next();
                } else {
                    break;
                }
            }
            col_idx.push(j);
            values.push(acc);
            row_ptr[i + 1] = col_idx.len();
        }
        // fill gaps for empty rows
        for r in 1..=self.dim {
            if row_ptr[r] < row_ptr[r - 1] {
                row_ptr[r] = row_ptr[r - 1];
            }
        }
        Ok(SymSparseMatrix {
            dim: self.dim,
            row_ptr,
            col_idx,
            values,
        })
    }
}
