//! Compressed sparse row matrices with cached squared row norms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vector;

/// Relative tolerance for cached row norms against a recomputation.
pub const ROW_NORM_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_norms_sq: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw CSR arrays. Column indices within a row must be
    /// strictly increasing.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(Error::param("row_ptr", "must have rows + 1 entries starting at 0"));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != values.len() {
            return Err(Error::param("values", "length disagrees with row_ptr"));
        }
        for r in 0..rows {
            let (s, e) = (row_ptr[r], row_ptr[r + 1]);
            if s > e {
                return Err(Error::param("row_ptr", "must be nondecreasing"));
            }
            let cols_r = &col_idx[s..e];
            if cols_r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("col_idx", format!("row {r} not strictly increasing")));
            }
            if cols_r.last().is_some_and(|&c| c >= cols) {
                return Err(Error::param("col_idx", format!("row {r} has a column >= {cols}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "entries must be finite"));
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            row_norms_sq: Vec::new(),
        };
        m.refresh_row_norms();
        Ok(m)
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::param(
                "triplets",
                format!("entry ({r}, {c}) outside a {rows}x{cols} matrix"),
            ));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_of.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((c, v), r) in col_idx.into_iter().zip(values).zip(row_of) {
            if v != 0.0 {
                keep_cols.push(c);
                keep_vals.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::from_csr(rows, cols, row_ptr, keep_cols, keep_vals)
    }

    /// Dense row-major input (test fixtures and tiny systems).
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Error::check_dim(rows * cols, data.len())?;
        let mut t = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = data[r * cols + c];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(rows, cols, t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column indices, values)` of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    /// Cached `‖a^r‖²`.
    pub fn row_norm_sq(&self, r: usize) -> f64 {
        self.row_norms_sq[r]
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    fn refresh_row_norms(&mut self) {
        self.row_norms_sq = (0..self.rows)
            .map(|r| vector::norm_sq(self.row(r).1))
            .collect();
    }

    /// Rows whose cached norm disagrees with a recomputation beyond
    /// [`ROW_NORM_TOL`] (relative).
    pub fn stale_row_norms(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|&r| {
                let fresh = vector::norm_sq(self.row(r).1);
                let cached = self.row_norms_sq[r];
                (fresh - cached).abs() > ROW_NORM_TOL * fresh.abs().max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    /// Rescales row `r` without refreshing the cached norm. Exists so audits
    /// can be exercised against a deliberately stale cache.
    #[doc(hidden)]
    pub fn scale_row_keep_stale_norm(&mut self, r: usize, factor: f64) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        for v in &mut self.values[s..e] {
            *v *= factor;
        }
    }

    /// `<a^r, x>`
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (c, v) = self.row(r);
        c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row_dot(r, x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.cols, x.len())?;
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// `y += A^T u`
    pub fn mul_transpose_acc(&self, u: &[f64], y: &mut [f64]) {
        debug_assert_eq!(u.len(), self.rows);
        for (r, &ur) in u.iter().enumerate() {
            if ur == 0.0 {
                continue;
            }
            let (c, v) = self.row(r);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * ur;
            }
        }
    }

    /// `‖A x - b‖`
    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> Result<f64> {
        Error::check_dim(self.cols, x.len())?;
        Error::check_dim(self.rows, b.len())?;
        let s: f64 = (0..self.rows)
            .map(|r| {
                let d = self.row_dot(r, x) - b[r];
                d * d
            })
            .sum();
        Ok(libm::sqrt(s))
    }

    /// Number of nonzeros in each column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts
    }

    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|&r| self.row_ptr[r] == self.row_ptr[r + 1])
            .collect()
    }

    pub fn empty_cols(&self) -> Vec<usize> {
        self.column_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(c, _)| c)
            .collect()
    }

    /// Submatrix made of the listed rows (in that order), all columns.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            if r >= self.rows {
                return Err(Error::param("rows", format!("row {r} >= {}", self.rows)));
            }
            let (c, v) = self.row(r);
            col_idx.extend_from_slice(c);
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        let norms = rows.iter().map(|&r| self.row_norms_sq[r]).collect();
        Ok(Self {
            rows: rows.len(),
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
            row_norms_sq: norms,
        })
    }

    /// Removes empty rows and columns. Returns the pruned matrix together
    /// with the original indices of the kept rows and columns.
    pub fn prune_empty(&self) -> (Self, Vec<usize>, Vec<usize>) {
        let counts = self.column_counts();
        let kept_cols: Vec<usize> = (0..self.cols).filter(|&c| counts[c] > 0).collect();
        let mut new_col = vec![usize::MAX; self.cols];
        for (n, &c) in kept_cols.iter().enumerate() {
            new_col[c] = n;
        }
        let kept_rows: Vec<usize> = (0..self.rows)
            .filter(|&r| self.row_ptr[r] < self.row_ptr[r + 1])
            .collect();
        let mut row_ptr = Vec::with_capacity(kept_rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for &r in &kept_rows {
            let (c, v) = self.row(r);
            col_idx.extend(c.iter().map(|&j| new_col[j]));
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        let norms = kept_rows.iter().map(|&r| self.row_norms_sq[r]).collect();
        let m = Self {
            rows: kept_rows.len(),
            cols: kept_cols.len(),
            row_ptr,
            col_idx,
            values,
            row_norms_sq: norms,
        };
        (m, kept_rows, kept_cols)
    }

    /// Row-major dense copy. Only for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            for (&j, &a) in c.iter().zip(v) {
                d[r * self.cols + j] = a;
            }
        }
        d
    }
}
