//! Diagonally relaxed orthogonal projection (DROP) block operators.
//!
//! For a row block `A_t` with right-hand side `b_t`, row weights
//! `W_t = diag(1/‖a^i‖²)` and column weights `D_t = diag(1/s_j)` (`s_j` the
//! number of nonzeros in column `j`), the iteration runs in x-space as
//!
//! ```text
//! x ← x - λ D_t A_t^T W_t (A_t x - b_t)
//! ```
//!
//! and the matching y-space operator is `U_t(y) = y - Ā_t^T W_t (Ā_t y - b_t)`
//! with `Ā_t = A_t D_t^{1/2}`. Columns the block never touches get
//! `D_t = 0` so those coordinates are left alone.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linear::blocks::BlockPartition;
use crate::linear::spectral::{power_iteration, SpectralCertificate, SpectralOptions};
use crate::operator::{FixedPointOperator, SparseVec};
use crate::sparse::{CsrMatrix, ROW_NORM_TOL};

/// How the column counts `s_j` behind `D_t` are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ColumnScope {
    /// Nonzeros of column `j` inside the block.
    #[default]
    Block,
    /// Nonzeros of column `j` in the whole matrix.
    Global,
}

#[derive(Debug, Clone)]
pub struct DropBlockOperator {
    a_t: CsrMatrix,
    b_t: Vec<f64>,
    weights: Vec<f64>,
    col_scale: Vec<f64>,
    support: Vec<usize>,
    // Position in `support` of every stored entry of `a_t`.
    local_cols: Vec<usize>,
    rows: Vec<usize>,
}

impl DropBlockOperator {
    /// Block of `a` made of `rows`, with weights from the cached row norms.
    pub fn new(a: &CsrMatrix, b: &[f64], rows: &[usize], scope: ColumnScope) -> Result<Self> {
        Error::check_dim(a.rows(), b.len())?;
        if rows.is_empty() {
            return Err(Error::param("rows", "block is empty"));
        }
        let a_t = a.select_rows(rows)?;
        let b_t = rows.iter().map(|&r| b[r]).collect();
        let counts = match scope {
            ColumnScope::Block => a_t.column_counts(),
            ColumnScope::Global => a.column_counts(),
        };
        Self::assemble(a_t, b_t, rows.to_vec(), &counts)
    }

    /// A standalone block with per-block column counts.
    pub fn from_block(a_t: CsrMatrix, b_t: Vec<f64>) -> Result<Self> {
        Error::check_dim(a_t.rows(), b_t.len())?;
        let counts = a_t.column_counts();
        let rows = (0..a_t.rows()).collect();
        Self::assemble(a_t, b_t, rows, &counts)
    }

    fn assemble(a_t: CsrMatrix, b_t: Vec<f64>, rows: Vec<usize>, counts: &[usize]) -> Result<Self> {
        let mut weights = Vec::with_capacity(a_t.rows());
        for r in 0..a_t.rows() {
            let n = a_t.row_norm_sq(r);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidOperator(format!(
                    "block row {r} (matrix row {}) is zero",
                    rows[r]
                )));
            }
            weights.push(1.0 / n);
        }
        let block_counts = a_t.column_counts();
        let mut col_scale = vec![0.0; a_t.cols()];
        let mut support = Vec::new();
        let mut position = vec![usize::MAX; a_t.cols()];
        for j in 0..a_t.cols() {
            if block_counts[j] > 0 {
                col_scale[j] = 1.0 / counts[j] as f64;
                position[j] = support.len();
                support.push(j);
            }
        }
        let local_cols = a_t.col_indices().iter().map(|&j| position[j]).collect();
        Ok(Self {
            a_t,
            b_t,
            weights,
            col_scale,
            support,
            local_cols,
            rows,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a_t
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b_t
    }

    /// Diagonal of `W_t`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Diagonal of `D_t`.
    pub fn column_scale(&self) -> &[f64] {
        &self.col_scale
    }

    /// Columns with at least one nonzero in the block.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Rows of the parent matrix that make up this block.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Columns of the block that are entirely zero (`D_t = 0` there).
    pub fn zero_columns(&self) -> usize {
        self.a_t.cols() - self.support.len()
    }

    /// Accumulates `A_t^T W_t (A_t v - c·b_t)` on the support, where `v` is
    /// read through the per-column factor `pre` (`None` for identity).
    fn gradient_on_support(&self, v: &[f64], pre: Option<&[f64]>, c: f64, acc: &mut [f64]) {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let ptr = self.a_t.row_ptr();
        let cols = self.a_t.col_indices();
        let vals = self.a_t.values();
        for r in 0..self.a_t.rows() {
            let (s, e) = (ptr[r], ptr[r + 1]);
            let mut dot = 0.0;
            for p in s..e {
                let j = cols[p];
                let vj = match pre {
                    Some(f) => f[j] * v[j],
                    None => v[j],
                };
                dot += vals[p] * vj;
            }
            let u = self.weights[r] * (dot - c * self.b_t[r]);
            if u == 0.0 {
                continue;
            }
            for p in s..e {
                acc[self.local_cols[p]] += vals[p] * u;
            }
        }
    }

    /// `x - λ D_t A_t^T W_t (A_t x - b_t)`.
    pub fn residual_update(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>> {
        Error::check_dim(self.a_t.cols(), x.len())?;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::param("lambda", "step size must lie in (0, 1]"));
        }
        let mut s = SparseVec::new();
        self.residual_into(x, &mut s);
        let mut out = x.to_vec();
        for (j, v) in s.iter() {
            out[j] -= lambda * v;
        }
        Ok(out)
    }

    /// `U_t(y) = y - Ā_t^T W_t (Ā_t y - b_t)`.
    pub fn drop_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.a_t.cols(), y.len())?;
        let mut out = vec![0.0; y.len()];
        self.y_space().apply_into(y, &mut out);
        Ok(out)
    }

    /// The y-space operator `U_t`, for probing and certificates.
    pub fn y_space(&self) -> YSpace<'_> {
        let sqrt_d = self.col_scale.iter().map(|&d| libm::sqrt(d)).collect();
        YSpace { op: self, sqrt_d }
    }

    /// Power-iteration estimate of `ρ(D_t A_t^T W_t A_t)` computed on the
    /// similar symmetric matrix `D^{1/2} A^T W A D^{1/2}`.
    pub fn spectral_certificate(&self, options: SpectralOptions) -> SpectralCertificate {
        let sqrt_d: Vec<f64> = self.support.iter().map(|&j| libm::sqrt(self.col_scale[j])).collect();
        let n = self.a_t.cols();
        let mut full = vec![0.0; n];
        let mut acc = vec![0.0; self.support.len()];
        power_iteration(self.support.len(), options, |v, out| {
            for (l, &j) in self.support.iter().enumerate() {
                full[j] = sqrt_d[l] * v[l];
            }
            self.gradient_on_support(&full, None, 0.0, &mut acc);
            for l in 0..out.len() {
                out[l] = sqrt_d[l] * acc[l];
            }
        })
    }

    /// Rows whose stored weight disagrees with `1/‖a^i‖²` recomputed from
    /// the block's entries.
    pub fn stale_weights(&self) -> Vec<usize> {
        (0..self.a_t.rows())
            .filter(|&r| {
                let fresh = 1.0 / crate::vector::norm_sq(self.a_t.row(r).1);
                (self.weights[r] - fresh).abs() > ROW_NORM_TOL * fresh
            })
            .collect()
    }

    /// `‖A_t x - b_t‖`
    pub fn block_residual_norm(&self, x: &[f64]) -> Result<f64> {
        self.a_t.residual_norm(x, &self.b_t)
    }
}

impl FixedPointOperator for DropBlockOperator {
    fn dim(&self) -> usize {
        self.a_t.cols()
    }

    /// `V_t(x) = x - D_t A_t^T W_t (A_t x - b_t)`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        let mut acc = vec![0.0; self.support.len()];
        self.gradient_on_support(x, None, 1.0, &mut acc);
        for (l, &j) in self.support.iter().enumerate() {
            out[j] -= self.col_scale[j] * acc[l];
        }
    }

    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        let mut acc = vec![0.0; self.support.len()];
        self.gradient_on_support(x, None, 1.0, &mut acc);
        out.clear();
        for (l, &j) in self.support.iter().enumerate() {
            out.push(j, self.col_scale[j] * acc[l]);
        }
    }
}

/// `U_t` acting on y-space vectors.
#[derive(Debug, Clone)]
pub struct YSpace<'a> {
    op: &'a DropBlockOperator,
    sqrt_d: Vec<f64>,
}

impl FixedPointOperator for YSpace<'_> {
    fn dim(&self) -> usize {
        self.op.a_t.cols()
    }

    fn apply_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        let mut acc = vec![0.0; self.op.support.len()];
        self.op.gradient_on_support(y, Some(&self.sqrt_d), 1.0, &mut acc);
        for (l, &j) in self.op.support.iter().enumerate() {
            out[j] -= self.sqrt_d[j] * acc[l];
        }
    }
}

/// One DROP operator per block of `partition`.
pub fn drop_operators(
    a: &CsrMatrix,
    b: &[f64],
    partition: &BlockPartition,
    scope: ColumnScope,
) -> Result<Vec<DropBlockOperator>> {
    Error::check_dim(a.rows(), partition.rows())?;
    partition
        .blocks()
        .iter()
        .map(|rows| DropBlockOperator::new(a, b, rows, scope))
        .collect()
}

/// Full-matrix, single-block DROP step written componentwise:
///
/// ```text
/// x_j - (1/s_j) Σ_i ((<a^i, x> - b_i) / ‖a^i‖²) a^i_j
/// ```
///
/// Columns with `s_j = 0` are returned unchanged.
pub fn drop_componentwise_reference(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(a.rows(), b.len())?;
    Error::check_dim(a.cols(), x.len())?;
    let n = a.cols();
    let mut count = vec![0usize; n];
    let mut sum = vec![0.0; n];
    for i in 0..a.rows() {
        let (cols, vals) = a.row(i);
        let mut dot = 0.0;
        let mut nrm = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            dot += v * x[j];
            nrm += v * v;
        }
        if nrm == 0.0 {
            return Err(Error::InvalidOperator(format!("row {i} is zero")));
        }
        let coef = (dot - b[i]) / nrm;
        for (&j, &v) in cols.iter().zip(vals) {
            sum[j] += coef * v;
            count[j] += 1;
        }
    }
    Ok((0..n)
        .map(|j| {
            if count[j] == 0 {
                x[j]
            } else {
                x[j] - sum[j] / count[j] as f64
            }
        })
        .collect())
}
