use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::operator::{FixedPointOperator, SparseVec};
use crate::sparse::CsrMatrix;
use crate::vector;

/// The hyperplane `{x : <a, x> = b}` for a sparse nonzero row `a`, used as
/// the projection operator `P(x) = x + ((b - <a, x>) / ‖a‖²) a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
    b: f64,
    norm_sq: f64,
}

impl Hyperplane {
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>, b: f64) -> Result<Self> {
        Error::check_dim(indices.len(), values.len())?;
        if let Some(&j) = indices.iter().find(|&&j| j >= dim) {
            return Err(Error::param("indices", format!("index {j} >= dimension {dim}")));
        }
        if !b.is_finite() || !vector::is_finite(&values) {
            return Err(Error::InvalidOperator("non-finite hyperplane data".into()));
        }
        let norm_sq = vector::norm_sq(&values);
        if !(norm_sq > 0.0) {
            return Err(Error::InvalidOperator("zero row: hyperplane normal vanishes".into()));
        }
        Ok(Self {
            dim,
            indices,
            values,
            b,
            norm_sq,
        })
    }

    pub fn from_dense(a: &[f64], b: f64) -> Result<Self> {
        let sv = SparseVec::from_dense(a);
        let (indices, values): (Vec<usize>, Vec<f64>) =
            sv.iter().filter(|&(_, v)| v != 0.0).unzip();
        Self::new(a.len(), indices, values, b)
    }

    /// Row `r` of `a` with right-hand side `b`.
    pub fn from_row(a: &CsrMatrix, r: usize, b: f64) -> Result<Self> {
        let (c, v) = a.row(r);
        Self::new(a.cols(), c.to_vec(), v.to_vec(), b)
            .map_err(|e| match e {
                Error::InvalidOperator(_) => Error::InvalidOperator(format!("row {r} is zero")),
                other => other,
            })
    }

    pub fn normal(&self) -> (&[usize], &[f64]) {
        (&self.indices, &self.values)
    }

    pub fn rhs(&self) -> f64 {
        self.b
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&j, &a)| a * x[j]).sum()
    }

    /// `(b - <a, x>) / ‖a‖²`
    fn coefficient(&self, x: &[f64]) -> f64 {
        (self.b - self.dot(x)) / self.norm_sq
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim, x.len())?;
        let mut out = x.to_vec();
        let c = self.coefficient(x);
        for (&j, &a) in self.indices.iter().zip(&self.values) {
            out[j] += c * a;
        }
        Ok(out)
    }

    /// Row residual `((<a, x> - b) / ‖a‖²) a = x - P(x)`, dense.
    pub fn kaczmarz_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim, x.len())?;
        let mut s = SparseVec::new();
        self.residual_into(x, &mut s);
        Ok(s.to_dense(self.dim))
    }

    /// `|<a, x> - b|`
    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.dot(x) - self.b).abs()
    }
}

impl FixedPointOperator for Hyperplane {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        let c = self.coefficient(x);
        for (&j, &a) in self.indices.iter().zip(&self.values) {
            out[j] += c * a;
        }
    }

    // Written as x_j - P(x)_j on the support so that S = Id - P holds
    // exactly in floating point, not only up to rounding.
    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        out.clear();
        let c = self.coefficient(x);
        for (&j, &a) in self.indices.iter().zip(&self.values) {
            out.push(j, x[j] - (x[j] + c * a));
        }
    }
}

/// One hyperplane per row of `a`.
pub fn art_operators(a: &CsrMatrix, b: &[f64]) -> Result<Vec<Hyperplane>> {
    Error::check_dim(a.rows(), b.len())?;
    (0..a.rows()).map(|r| Hyperplane::from_row(a, r, b[r])).collect()
}
