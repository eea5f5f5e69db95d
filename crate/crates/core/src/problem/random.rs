use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::TomographySystem;
use crate::sparse::CsrMatrix;

/// Attempts (seed, seed + 1, ...) before giving up on a sparsity pattern
/// that leaves some column empty.
pub const RETRY_CAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RandomSystemSpec {
    pub rows: usize,
    pub cols: usize,
    pub nnz_per_row: usize,
    pub seed: u64,
}

/// A sparse consistent system: `k` distinct random columns per row with
/// values of magnitude in `[0.1, 1]` and random sign, `x*` uniform on
/// `[-1, 1]^N`, and `b = A x*`.
pub fn make_random_system(spec: RandomSystemSpec) -> Result<TomographySystem> {
    let RandomSystemSpec {
        rows,
        cols,
        nnz_per_row,
        seed,
    } = spec;
    if rows == 0 || cols == 0 {
        return Err(Error::param("shape", "system must have at least one row and column"));
    }
    if nnz_per_row == 0 || nnz_per_row > cols {
        return Err(Error::param(
            "nnz_per_row",
            format!("need 1 <= nnz_per_row <= {cols}, got {nnz_per_row}"),
        ));
    }
    for attempt in 0..RETRY_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut triplets = Vec::with_capacity(rows * nnz_per_row);
        for r in 0..rows {
            for c in index::sample(&mut rng, cols, nnz_per_row).into_iter() {
                let mag = rng.random_range(0.1..=1.0);
                let v = if rng.random_bool(0.5) { mag } else { -mag };
                triplets.push((r, c, v));
            }
        }
        let a = CsrMatrix::from_triplets(rows, cols, triplets)?;
        if !a.empty_cols().is_empty() {
            continue;
        }
        let x_true: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let b = a.mul_vec(&x_true)?;
        return Ok(TomographySystem {
            a,
            b,
            x_true,
            geometry: None,
            row_map: (0..rows).collect(),
            col_map: (0..cols).collect(),
        });
    }
    Err(Error::GenerationFailed {
        attempts: RETRY_CAP,
        reason: format!("some column stayed empty for {rows}x{cols} with {nnz_per_row} per row"),
    })
}
