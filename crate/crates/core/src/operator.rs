//! Fixed-point operators `T: R^n -> R^n`, their residuals `S = Id - T`,
//! α-relaxations and randomized Lipschitz probes.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vector;

/// Relative slack allowed above a Lipschitz ratio of one.
pub const NONEXPANSIVE_TOL: f64 = 1e-10;

/// A sparse vector of `(index, value)` pairs, used for residual outputs.
///
/// Row-action operators only touch the support of one row, so their
/// residuals are emitted in this form and applied without a dense pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            indices: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
        }
    }

    pub fn clear(&mut self) {
        self.indices.clear();
        self.values.clear();
    }

    pub fn push(&mut self, index: usize, value: f64) {
        self.indices.push(index);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm_sq(&self) -> f64 {
        vector::norm_sq(&self.values)
    }

    /// Scatter into a dense vector of length `n`; entries not present are zero.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Build from a dense vector, keeping every coordinate.
    pub fn from_dense(v: &[f64]) -> Self {
        Self {
            indices: (0..v.len()).collect(),
            values: v.to_vec(),
        }
    }
}

/// A map `T` on `R^n`. Implementors registered as nonexpansive must satisfy
/// `‖T(x) - T(y)‖ <= ‖x - y‖`.
///
/// `apply_into` is the only required method. Operators with sparse structure
/// should override `residual_into` so that the residual `S(x) = x - T(x)` is
/// produced only on the coordinates it can change.
pub trait FixedPointOperator {
    fn dim(&self) -> usize;

    /// Writes `T(x)` into `out`. Both slices have length `dim()`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `S(x) = x - T(x)` into `out` (cleared first). Coordinates that
    /// are left out are zero.
    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        let mut tx = vec![0.0; self.dim()];
        self.apply_into(x, &mut tx);
        out.clear();
        for (j, (xj, tj)) in x.iter().zip(&tx).enumerate() {
            out.push(j, xj - tj);
        }
    }
}

impl<O: FixedPointOperator + ?Sized> FixedPointOperator for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        (**self).residual_into(x, out)
    }
}

impl<O: FixedPointOperator + ?Sized> FixedPointOperator for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        (**self).residual_into(x, out)
    }
}

impl<O: FixedPointOperator + ?Sized> FixedPointOperator for Arc<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        (**self).residual_into(x, out)
    }
}

/// `T(x)` as a fresh vector.
pub fn apply<O: FixedPointOperator + ?Sized>(op: &O, x: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(op.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    op.apply_into(x, &mut out);
    Ok(out)
}

/// `S(x) = x - T(x)` as a dense vector; zero exactly at fixed points of `T`.
pub fn residual<O: FixedPointOperator + ?Sized>(op: &O, x: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(op.dim(), x.len())?;
    let mut s = SparseVec::new();
    op.residual_into(x, &mut s);
    Ok(s.to_dense(x.len()))
}

/// The identity map on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity(pub usize);

impl FixedPointOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn residual_into(&self, _x: &[f64], out: &mut SparseVec) {
        out.clear();
    }
}

/// The α-relaxation `(1 - α) Id + α T` of a base operator.
#[derive(Debug, Clone)]
pub struct Relaxed<O> {
    base: O,
    alpha: f64,
}

/// Builds the α-relaxation of `base`; `alpha` must lie in `[0, 2]`.
pub fn relax<O: FixedPointOperator>(base: O, alpha: f64) -> Result<Relaxed<O>> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(Error::param("alpha", "relaxation must lie in [0, 2]"));
    }
    Ok(Relaxed { base, alpha })
}

impl<O> Relaxed<O> {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn base(&self) -> &O {
        &self.base
    }

    /// Averaged operators are relaxations with `alpha` strictly inside `(0, 1)`.
    pub fn is_averaged(&self) -> bool {
        self.alpha > 0.0 && self.alpha < 1.0
    }
}

impl<O: FixedPointOperator> FixedPointOperator for Relaxed<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.apply_into(x, out);
        let a = self.alpha;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (1.0 - a) * xi + a * *o;
        }
    }

    // S_α = α S, so the base operator's sparsity carries over.
    fn residual_into(&self, x: &[f64], out: &mut SparseVec) {
        self.base.residual_into(x, out);
        for v in &mut out.values {
            *v *= self.alpha;
        }
    }
}

/// Outcome of [`nonexpansive_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub trials: usize,
    /// Largest observed `‖T(x) - T(y)‖ / ‖x - y‖`.
    pub max_ratio: f64,
    /// True when `max_ratio > 1 + NONEXPANSIVE_TOL`.
    pub violation: bool,
}

fn sample_pair(rng: &mut ChaCha8Rng, n: usize, scale: f64, x: &mut [f64], y: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi = rng.random_range(-scale..scale);
    }
    // Alternate far pairs with nearby pairs to probe local behaviour too.
    let local = rng.random_bool(0.5);
    for j in 0..n {
        y[j] = if local {
            x[j] + rng.random_range(-1e-3..1e-3) * scale
        } else {
            rng.random_range(-scale..scale)
        };
    }
}

/// Samples `trials` random pairs in a box of half-width `scale` and reports
/// the largest Lipschitz ratio seen.
pub fn nonexpansive_probe_scaled<O: FixedPointOperator + ?Sized>(
    op: &O,
    trials: usize,
    seed: u64,
    scale: f64,
) -> ProbeReport {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let (mut tx, mut ty) = (vec![0.0; n], vec![0.0; n]);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials.max(1) {
        sample_pair(&mut rng, n, scale, &mut x, &mut y);
        let d = vector::dist(&x, &y);
        if d == 0.0 {
            continue;
        }
        op.apply_into(&x, &mut tx);
        op.apply_into(&y, &mut ty);
        max_ratio = max_ratio.max(vector::dist(&tx, &ty) / d);
    }
    ProbeReport {
        trials: trials.max(1),
        max_ratio,
        violation: !(max_ratio <= 1.0 + NONEXPANSIVE_TOL),
    }
}

/// [`nonexpansive_probe_scaled`] over the box `[-10, 10]^n`.
pub fn nonexpansive_probe<O: FixedPointOperator + ?Sized>(
    op: &O,
    trials: usize,
    seed: u64,
) -> ProbeReport {
    nonexpansive_probe_scaled(op, trials, seed, 10.0)
}

/// Outcome of [`firm_nonexpansive_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmProbeReport {
    pub trials: usize,
    /// Largest `‖G(x) - G(y)‖² - <x - y, G(x) - G(y)>` with `G = S/2`.
    pub max_excess: f64,
    pub violation: bool,
}

/// Checks that `S/2 = (Id - T)/2` is firmly nonexpansive on sampled pairs,
/// with an absolute slack of `1e-10`.
pub fn firm_nonexpansive_probe<O: FixedPointOperator + ?Sized>(
    op: &O,
    trials: usize,
    seed: u64,
) -> FirmProbeReport {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let (mut sx, mut sy) = (SparseVec::new(), SparseVec::new());
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..trials.max(1) {
        sample_pair(&mut rng, n, 10.0, &mut x, &mut y);
        op.residual_into(&x, &mut sx);
        op.residual_into(&y, &mut sy);
        let gx = sx.to_dense(n);
        let gy = sy.to_dense(n);
        let mut sq = 0.0;
        let mut inner = 0.0;
        for j in 0..n {
            let dg = 0.5 * (gx[j] - gy[j]);
            sq += dg * dg;
            inner += (x[j] - y[j]) * dg;
        }
        max_excess = max_excess.max(sq - inner);
    }
    FirmProbeReport {
        trials: trials.max(1),
        max_excess,
        violation: !(max_excess <= 1e-10),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scale(usize, f64);

    impl FixedPointOperator for Scale {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply_into(&self, x: &[f64], out: &mut [f64]) {
            for (o, v) in out.iter_mut().zip(x) {
                *o = self.1 * v;
            }
        }
    }

    /// Projection onto `{x : <a, x> = b}` written densely.
    struct Hyper {
        a: Vec<f64>,
        b: f64,
    }

    impl FixedPointOperator for Hyper {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn apply_into(&self, x: &[f64], out: &mut [f64]) {
            let c = (self.b - vector::dot(&self.a, x)) / vector::norm_sq(&self.a);
            for j in 0..x.len() {
                out[j] = x[j] + c * self.a[j];
            }
        }
    }

    #[test]
    fn identity_residual_is_zero() {
        assert_eq!(residual(&Identity(2), &[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hyperplane_residual() {
        let h = Hyper { a: vec![1.0, 0.0], b: 2.0 };
        assert_eq!(residual(&h, &[0.0, 0.0]).unwrap(), vec![-2.0, 0.0]);
    }

    #[test]
    fn residual_rejects_wrong_dimension() {
        assert!(matches!(
            residual(&Identity(3), &[1.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn residual_matches_direct_reevaluation() {
        // An averaged map: half-relaxed contraction plus shift.
        struct Affine {
            m: [[f64; 5]; 5],
            c: [f64; 5],
        }
        impl FixedPointOperator for Affine {
            fn dim(&self) -> usize {
                5
            }
            fn apply_into(&self, x: &[f64], out: &mut [f64]) {
                for i in 0..5 {
                    out[i] = self.c[i] + (0..5).map(|j| self.m[i][j] * x[j]).sum::<f64>();
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = [[0.0; 5]; 5];
        for row in &mut m {
            for v in row.iter_mut() {
                *v = rng.random_range(-0.08..0.08);
            }
        }
        let c: [f64; 5] = core::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let op = relax(Affine { m, c }, 0.5).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = residual(&op, &x).unwrap();
        for i in 0..5 {
            let t_i = c[i] + (0..5).map(|j| m[i][j] * x[j]).sum::<f64>();
            let relaxed = 0.5 * x[i] + 0.5 * t_i;
            assert!((got[i] - (x[i] - relaxed)).abs() < 1e-14);
        }
    }

    #[test]
    fn relax_endpoints_and_midpoint() {
        let h = Hyper { a: vec![1.0, 0.0], b: 2.0 };
        let zero = relax(&h, 0.0).unwrap();
        assert_eq!(apply(&zero, &[4.0, -5.0]).unwrap(), vec![4.0, -5.0]);
        let one = relax(&h, 1.0).unwrap();
        assert_eq!(apply(&one, &[4.0, -5.0]).unwrap(), apply(&h, &[4.0, -5.0]).unwrap());
        let half = relax(&h, 0.5).unwrap();
        assert_eq!(apply(&half, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(half.is_averaged());
    }

    #[test]
    fn relax_rejects_out_of_range() {
        assert!(relax(Identity(1), -0.1).is_err());
        assert!(relax(Identity(1), 2.5).is_err());
        assert!(relax(Identity(1), 2.0).is_ok());
    }

    #[test]
    fn probes() {
        let id = nonexpansive_probe(&Identity(4), 200, 1);
        assert!((id.max_ratio - 1.0).abs() < 1e-12 && !id.violation);

        let h = Hyper { a: vec![1.0, -2.0, 0.5], b: 0.3 };
        let r = nonexpansive_probe(&h, 500, 2);
        assert!(r.max_ratio <= 1.0 + NONEXPANSIVE_TOL && !r.violation);
        assert!(!firm_nonexpansive_probe(&h, 500, 3).violation);

        let r = nonexpansive_probe(&Scale(3, 2.0), 50, 4);
        assert!(r.violation);
        assert!((r.max_ratio - 2.0).abs() < 1e-9);
    }
}
