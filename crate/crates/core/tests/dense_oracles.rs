//! DROP and hyperplane kernels checked against dense nalgebra formulas.

use asi_core::linear::{
    drop_componentwise_reference, ColumnScope, DropBlockOperator, Hyperplane, SpectralOptions,
};
use asi_core::{residual, CsrMatrix, FixedPointOperator};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_block(rows: usize, cols: usize, density: f64, seed: u64) -> (CsrMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::new();
    for r in 0..rows {
        // Every row gets at least one entry.
        let forced = rng.random_range(0..cols);
        for c in 0..cols {
            if c == forced || rng.random_bool(density) {
                trip.push((r, c, rng.random_range(-2.0..2.0)));
            }
        }
    }
    let a = CsrMatrix::from_triplets(rows, cols, trip).unwrap();
    let b = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    (a, b)
}

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), &a.to_dense())
}

/// `W = diag(1/‖a_i‖²)` and `D = diag(1/s_j)` (0 on empty columns), built
/// from the dense matrix.
fn weights(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let w = DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|r| 1.0 / r.norm_squared()),
    );
    let d = DVector::from_iterator(
        a.ncols(),
        a.column_iter().map(|c| {
            let s = c.iter().filter(|v| **v != 0.0).count();
            if s == 0 {
                0.0
            } else {
                1.0 / s as f64
            }
        }),
    );
    (DMatrix::from_diagonal(&w), DMatrix::from_diagonal(&d))
}

fn rel_err(a: &[f64], b: &DVector<f64>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    diff.sqrt() / b.norm().max(1.0)
}

#[test]
fn drop_apply_matches_dense_y_space_operator() {
    let (a, b) = random_block(50, 30, 0.2, 11);
    let op = DropBlockOperator::from_block(a.clone(), b.clone()).unwrap();
    let ad = dense(&a);
    let (w, d) = weights(&ad);
    let a_bar = &ad * d.map(f64::sqrt);
    let bv = DVector::from_vec(b);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
        let yv = DVector::from_vec(y.clone());
        let expect = &yv - a_bar.transpose() * &w * (&a_bar * &yv - &bv);
        let got = op.drop_apply(&y).unwrap();
        assert!(rel_err(&got, &expect) < 1e-11, "{}", rel_err(&got, &expect));
    }
}

#[test]
fn residual_update_matches_dense_x_space_step() {
    let (a, b) = random_block(40, 25, 0.15, 21);
    let op = DropBlockOperator::from_block(a.clone(), b.clone()).unwrap();
    let ad = dense(&a);
    let (w, d) = weights(&ad);
    let bv = DVector::from_vec(b);
    let x: Vec<f64> = (0..25).map(|j| (j as f64 * 0.37).sin()).collect();
    let xv = DVector::from_vec(x.clone());
    let expect = &xv - 0.3 * &d * ad.transpose() * &w * (&ad * &xv - &bv);
    let got = op.residual_update(&x, 0.3).unwrap();
    assert!(rel_err(&got, &expect) < 1e-12);
}

#[test]
fn whole_matrix_block_matches_componentwise_reference() {
    let (a, b) = random_block(20, 10, 0.3, 5);
    let rows: Vec<usize> = (0..20).collect();
    let op = DropBlockOperator::new(&a, &b, &rows, ColumnScope::Block).unwrap();
    let x: Vec<f64> = (0..10).map(|j| 1.0 - 0.2 * j as f64).collect();
    let reference = drop_componentwise_reference(&a, &b, &x).unwrap();
    let got = op.residual_update(&x, 1.0).unwrap();
    for (g, r) in got.iter().zip(&reference) {
        assert!((g - r).abs() <= 1e-12 * (1.0 + r.abs()));
    }
}

#[test]
fn spectral_certificate_matches_symmetric_eigensolver() {
    for seed in 0..20 {
        let rows = 5 + (seed as usize * 7) % 56;
        let cols = 4 + (seed as usize * 13) % 57;
        let (a, b) = random_block(rows, cols, 0.25, 100 + seed);
        let op = DropBlockOperator::from_block(a.clone(), b).unwrap();
        let ad = dense(&a);
        let (w, d) = weights(&ad);
        let a_bar = &ad * d.map(f64::sqrt);
        let m = a_bar.transpose() * &w * &a_bar;
        let top = SymmetricEigen::new(m).eigenvalues.max();
        let cert = op.spectral_certificate(SpectralOptions::default());
        assert!(cert.converged, "seed {seed}");
        assert!((cert.estimate - top).abs() <= 1e-8, "seed {seed}: {} vs {top}", cert.estimate);
        assert!(cert.certifies_unit_bound(1e-8));
    }
}

#[test]
fn orthogonal_rows_have_unit_radius() {
    // Disjoint row supports: D = I and the operator is a projection.
    let trip = vec![(0, 0, 2.0), (0, 1, -1.0), (1, 2, 0.5), (2, 3, 3.0), (2, 4, 4.0)];
    let a = CsrMatrix::from_triplets(3, 5, trip).unwrap();
    let op = DropBlockOperator::from_block(a, vec![1.0, 2.0, 3.0]).unwrap();
    let cert = op.spectral_certificate(SpectralOptions::default());
    assert!((cert.estimate - 1.0).abs() < 1e-12);
}

#[test]
fn hyperplane_projection_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let a: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = Hyperplane::from_dense(&a, 0.7).unwrap();
    let av = DVector::from_vec(a);
    let x: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
    let xv = DVector::from_vec(x.clone());
    let expect = &xv + (0.7 - av.dot(&xv)) / av.norm_squared() * &av;
    let mut out = vec![0.0; 100];
    h.apply_into(&x, &mut out);
    assert!(rel_err(&out, &expect) < 1e-12);
    let s = residual(&h, &x).unwrap();
    let expect_s = &xv - &expect;
    assert!(rel_err(&s, &expect_s) < 1e-12);
}
