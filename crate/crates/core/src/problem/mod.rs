//! Test problems: random consistent sparse systems and a phantom
//! tomography system.

pub mod phantom;
pub mod projector;
pub mod random;

use alloc::vec::Vec;

pub use phantom::{make_phantom, Ellipse, PhantomImage, MODIFIED_SHEPP_LOGAN};
pub use projector::{make_projector, projection_matrix, Geometry};
pub use random::{make_random_system, RandomSystemSpec};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A consistent system `A x_true = b`. `row_map` and `col_map` give the
/// original row and column of each kept row and column when empty ones were
/// pruned (identity otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct TomographySystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
    pub geometry: Option<Geometry>,
    pub row_map: Vec<usize>,
    pub col_map: Vec<usize>,
}

impl TomographySystem {
    /// Wraps a loaded matrix and solution; `b` is recomputed as `A x_true`.
    pub fn from_solution(a: CsrMatrix, x_true: Vec<f64>) -> Result<Self> {
        let b = a.mul_vec(&x_true)?;
        let (rows, cols) = (a.rows(), a.cols());
        Ok(Self {
            a,
            b,
            x_true,
            geometry: None,
            row_map: (0..rows).collect(),
            col_map: (0..cols).collect(),
        })
    }

    /// Wraps `(A, b)` with a claimed solution, without recomputing `b`.
    pub fn from_parts(a: CsrMatrix, b: Vec<f64>, x_true: Vec<f64>) -> Result<Self> {
        Error::check_dim(a.rows(), b.len())?;
        Error::check_dim(a.cols(), x_true.len())?;
        let (rows, cols) = (a.rows(), a.cols());
        Ok(Self {
            a,
            b,
            x_true,
            geometry: None,
            row_map: (0..rows).collect(),
            col_map: (0..cols).collect(),
        })
    }

    /// `‖A x_true - b‖`
    pub fn consistency_defect(&self) -> f64 {
        self.a
            .residual_norm(&self.x_true, &self.b)
            .unwrap_or(f64::INFINITY)
    }

    /// Scatters a solution vector back onto the unpruned column space,
    /// leaving pruned columns at zero.
    pub fn embed(&self, x: &[f64], full_cols: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; full_cols];
        for (&c, &v) in self.col_map.iter().zip(x) {
            out[c] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_phantom_system_is_consistent_and_pruned() {
        let img = make_phantom(64, &MODIFIED_SHEPP_LOGAN).unwrap();
        let sys = make_projector(&img, &Geometry::desk_default()).unwrap();
        assert!(sys.a.empty_rows().is_empty());
        assert!(sys.a.empty_cols().is_empty());
        assert_eq!(sys.consistency_defect(), 0.0);
        assert_eq!(sys.a.cols(), 64 * 64);
        assert!(sys.a.rows() > 7000 && sys.a.rows() <= 90 * 95);
        assert!(sys.a.stale_row_norms().is_empty());
    }
}
