//! The ASI update and the iterate history it reads from.
//!
//! One step with operator index `i`, step `λ` and delayed iterate
//! `x̂ = x^{k-d}` is
//!
//! ```text
//! ASI:  x^{k+1} = x^k - λ S_i(x̂)
//!               = [(1-λ) x^k + λ T_i(x̂)] + λ (x^k - x̂)
//!                  convex part              inertial part
//! EKN:  x^{k+1} = (1-λ) x^k + λ T_i(x̂)      (convex part only)
//! ```
//!
//! The state keeps a ring of the most recent iterates so that any delay up
//! to the cap `τ` can be served, and holds the iterate fixed for `k <= τ`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::operator::{FixedPointOperator, SparseVec};
use crate::vector;

/// Slack, in units of machine epsilon times the operand magnitudes, allowed
/// when checking the convex/inertial decomposition in floating point.
pub const DECOMPOSITION_ULPS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    /// Full update including the inertial term.
    #[default]
    Asi,
    /// Convex-combination part only, without the inertial term.
    Ekn,
}

/// The two parts of one update together with the resulting iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBreakdown {
    pub mode: Mode,
    /// `(1-λ) x^k + λ T(x̂)`
    pub convex_part: Vec<f64>,
    /// `λ (x^k - x̂)`; identically zero when `x̂ = x^k`.
    pub inertial_part: Vec<f64>,
    /// The iterate the engine produced.
    pub next: Vec<f64>,
    scale: Vec<f64>,
}

impl StepBreakdown {
    /// Largest per-coordinate mismatch in the decomposition, measured in
    /// units of `f64::EPSILON` times the magnitude of the operands. For ASI
    /// the identity is `next = convex + inertial`, for EKN `next = convex`.
    pub fn decomposition_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.next.len() {
            let expected = match self.mode {
                Mode::Asi => self.convex_part[j] + self.inertial_part[j],
                Mode::Ekn => self.convex_part[j],
            };
            let err = (self.next[j] - expected).abs();
            if err == 0.0 {
                continue;
            }
            let unit = f64::EPSILON * self.scale[j];
            worst = worst.max(if unit > 0.0 { err / unit } else { f64::INFINITY });
        }
        worst
    }

    pub fn decomposition_holds(&self) -> bool {
        self.decomposition_defect() <= DECOMPOSITION_ULPS
    }

    pub fn inertial_is_zero(&self) -> bool {
        self.inertial_part.iter().all(|&v| v == 0.0)
    }
}

/// Pure dense form of one step.
///
/// `residual_at_hat` is `S_i(x̂)` as a dense vector. The returned `next`
/// is computed exactly as [`AsiState`] computes it, so the two agree
/// bitwise.
pub fn asi_step(
    x: &[f64],
    x_hat: &[f64],
    residual_at_hat: &[f64],
    lambda: f64,
    mode: Mode,
) -> Result<StepBreakdown> {
    let n = x.len();
    Error::check_dim(n, x_hat.len())?;
    Error::check_dim(n, residual_at_hat.len())?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param("lambda", "step size must lie in (0, 1)"));
    }
    let mut convex_part = vec![0.0; n];
    let mut inertial_part = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for j in 0..n {
        let s = residual_at_hat[j];
        let t = x_hat[j] - s;
        convex_part[j] = (1.0 - lambda) * x[j] + lambda * t;
        inertial_part[j] = lambda * (x[j] - x_hat[j]);
        let asi = x[j] - lambda * s;
        next[j] = match mode {
            Mode::Asi => asi,
            Mode::Ekn => asi - inertial_part[j],
        };
        scale[j] = x[j].abs() + x_hat[j].abs() + s.abs();
    }
    Ok(StepBreakdown {
        mode,
        convex_part,
        inertial_part,
        next,
        scale,
    })
}

/// Outcome of [`AsiState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Warm-up step: `x^{k+1} = x^k`.
    Held,
    Applied {
        /// `‖S_i(x̂)‖²`
        residual_norm_sq: f64,
        /// `‖x^{k+1} - x^k‖²`
        step_norm_sq: f64,
    },
}

/// Current iterate, iteration counter and a ring of recent iterates.
#[derive(Debug, Clone)]
pub struct AsiState {
    tau: usize,
    mode: Mode,
    ring: Vec<Vec<f64>>,
    head: usize,
    k: usize,
    warmup: usize,
    residual: SparseVec,
}

impl AsiState {
    /// Starts at `x^1 = x0` with delay cap `tau`. The first `tau` steps
    /// are warm-up steps that leave the iterate unchanged.
    pub fn new(x0: Vec<f64>, tau: usize, mode: Mode) -> Self {
        // With τ = 0 the delayed iterate is always the current one and the
        // update can be done in place. Otherwise keep τ + 2 slots so the
        // slot being written never aliases x^k, ..., x^{k-τ}.
        let slots = if tau == 0 { 1 } else { tau + 2 };
        let ring = vec![x0; slots];
        Self {
            tau,
            mode,
            ring,
            head: 0,
            k: 1,
            warmup: tau,
            residual: SparseVec::new(),
        }
    }

    /// Overrides the number of warm-up steps (default `tau`). Drivers whose
    /// delays are realized from real read versions never reference a
    /// pre-initial iterate and can use zero.
    pub fn with_warmup(mut self, steps: usize) -> Self {
        self.warmup = steps;
        self
    }

    pub fn dim(&self) -> usize {
        self.ring[0].len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Index of the current iterate `x^k`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn in_warmup(&self) -> bool {
        self.k <= self.warmup
    }

    pub fn x(&self) -> &[f64] {
        &self.ring[self.head]
    }

    fn slot(&self, depth: usize) -> usize {
        let n = self.ring.len();
        (self.head + n - depth % n) % n
    }

    /// `x^{k-depth}`; iterates before `x^1` read as `x^1`.
    pub fn iterate(&self, depth: usize) -> Result<&[f64]> {
        if depth > self.tau {
            return Err(Error::InsufficientHistory {
                needed: depth + 1,
                available: self.tau + 1,
            });
        }
        Ok(&self.ring[self.slot(depth)])
    }

    /// `x^k, x^{k-1}, ..., x^{k-τ}`, newest first.
    pub fn history(&self) -> Vec<&[f64]> {
        (0..=self.tau).map(|d| &self.ring[self.slot(d)][..]).collect()
    }

    /// `‖x^{k+1-l} - x^{k-l}‖²` for `l = 1..=τ`.
    pub fn difference_norms_sq(&self) -> Vec<f64> {
        (1..=self.tau)
            .map(|l| vector::dist_sq(&self.ring[self.slot(l - 1)], &self.ring[self.slot(l)]))
            .collect()
    }

    fn check_delay(&self, delay: usize) -> Result<()> {
        if delay > self.tau {
            Err(Error::StalenessViolation {
                delay,
                tau: self.tau,
            })
        } else {
            Ok(())
        }
    }

    /// `S_i(x^{k-delay})` into `out`.
    pub fn residual_at<O: FixedPointOperator + ?Sized>(
        &self,
        op: &O,
        delay: usize,
        out: &mut SparseVec,
    ) -> Result<()> {
        self.check_delay(delay)?;
        Error::check_dim(self.dim(), op.dim())?;
        op.residual_into(&self.ring[self.slot(delay)], out);
        Ok(())
    }

    /// One iteration with operator `op`, step `lambda` and delay `delay`.
    pub fn step<O: FixedPointOperator + ?Sized>(
        &mut self,
        op: &O,
        lambda: f64,
        delay: usize,
    ) -> Result<StepOutcome> {
        self.check_delay(delay)?;
        Error::check_dim(self.dim(), op.dim())?;
        if self.in_warmup() {
            self.hold();
            return Ok(StepOutcome::Held);
        }
        let mut res = core::mem::take(&mut self.residual);
        op.residual_into(&self.ring[self.slot(delay)], &mut res);
        let out = self.advance(&res, lambda, delay);
        self.residual = res;
        Ok(out)
    }

    /// Like [`step`](Self::step) but also returns the dense decomposition of
    /// the update. The breakdown's `next` is the iterate actually stored.
    pub fn step_audited<O: FixedPointOperator + ?Sized>(
        &mut self,
        op: &O,
        lambda: f64,
        delay: usize,
    ) -> Result<(StepOutcome, Option<StepBreakdown>)> {
        self.check_delay(delay)?;
        Error::check_dim(self.dim(), op.dim())?;
        if self.in_warmup() {
            self.hold();
            return Ok((StepOutcome::Held, None));
        }
        let n = self.dim();
        let slot = self.slot(delay);
        let mut res = core::mem::take(&mut self.residual);
        op.residual_into(&self.ring[slot], &mut res);
        let s_dense = res.to_dense(n);
        let mut breakdown = asi_step(self.x(), &self.ring[slot], &s_dense, lambda, self.mode)?;
        let out = self.advance(&res, lambda, delay);
        self.residual = res;
        breakdown.next.copy_from_slice(self.x());
        Ok((out, Some(breakdown)))
    }

    /// Applies a residual `S_i(x^{k-delay})` computed elsewhere (e.g. by a
    /// worker thread).
    pub fn apply_residual(
        &mut self,
        residual: &SparseVec,
        lambda: f64,
        delay: usize,
    ) -> Result<StepOutcome> {
        self.check_delay(delay)?;
        if let Some(&j) = residual.indices.iter().find(|&&j| j >= self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: j + 1,
            });
        }
        if self.in_warmup() {
            self.hold();
            return Ok(StepOutcome::Held);
        }
        Ok(self.advance(residual, lambda, delay))
    }

    /// Warm-up iteration: `x^{k+1} = x^k`.
    pub fn hold(&mut self) {
        if self.ring.len() > 1 {
            let new = (self.head + 1) % self.ring.len();
            let mut buf = core::mem::take(&mut self.ring[new]);
            buf.copy_from_slice(&self.ring[self.head]);
            self.ring[new] = buf;
            self.head = new;
        }
        self.k += 1;
    }

    fn advance(&mut self, res: &SparseVec, lambda: f64, delay: usize) -> StepOutcome {
        let residual_norm_sq = res.norm_sq();
        let mut step_norm_sq = 0.0;
        if self.ring.len() == 1 {
            // τ = 0: x̂ = x^k, so both modes reduce to x - λ S(x).
            let x = &mut self.ring[0];
            for (j, v) in res.iter() {
                let old = x[j];
                x[j] -= lambda * v;
                step_norm_sq += (x[j] - old) * (x[j] - old);
            }
        } else {
            let slots = self.ring.len();
            let new = (self.head + 1) % slots;
            let hat = self.slot(delay);
            let mut buf = core::mem::take(&mut self.ring[new]);
            let x = &self.ring[self.head];
            buf.copy_from_slice(x);
            for (j, v) in res.iter() {
                buf[j] -= lambda * v;
            }
            if self.mode == Mode::Ekn && delay > 0 {
                let x_hat = &self.ring[hat];
                for j in 0..buf.len() {
                    buf[j] -= lambda * (x[j] - x_hat[j]);
                }
                step_norm_sq = vector::dist_sq(&buf, x);
            } else {
                for &j in &res.indices {
                    step_norm_sq += (buf[j] - x[j]) * (buf[j] - x[j]);
                }
            }
            self.ring[new] = buf;
            self.head = new;
        }
        self.k += 1;
        StepOutcome::Applied {
            residual_norm_sq,
            step_norm_sq,
        }
    }

    /// Both sides of `‖x^k - x^{k-d}‖ <= Σ_{j=1..τ} ‖x^{k+1-j} - x^{k-j}‖`.
    pub fn staleness_gap(&self, delay: usize) -> Result<(f64, f64)> {
        self.check_delay(delay)?;
        if self.tau == 0 {
            return Ok((0.0, 0.0));
        }
        let lhs = vector::dist(self.x(), &self.ring[self.slot(delay)]);
        let rhs = self
            .difference_norms_sq()
            .into_iter()
            .map(libm::sqrt)
            .sum();
        Ok((lhs, rhs))
    }

    /// `‖x^{k+1-τ} - x^{k-τ}‖²`, the oldest difference tracked by the ξ
    /// monitor (zero when `τ = 0`).
    pub fn oldest_difference_sq(&self) -> f64 {
        if self.tau == 0 {
            return 0.0;
        }
        vector::dist_sq(
            &self.ring[self.slot(self.tau - 1)],
            &self.ring[self.slot(self.tau)],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Identity;

    /// Projection onto `{x : <a, x> = b}`, dense.
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
    fn direct_formula() {
        let b = asi_step(&[0.0, 0.0], &[0.0, 0.0], &[-2.0, 0.0], 0.5, Mode::Asi).unwrap();
        assert_eq!(b.next, vec![1.0, 0.0]);
        assert!(b.inertial_is_zero());
        assert!(b.decomposition_holds());
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(asi_step(&[0.0], &[0.0], &[0.0], 1.0, Mode::Asi).is_err());
        assert!(asi_step(&[0.0], &[0.0], &[0.0], 0.0, Mode::Asi).is_err());
    }

    #[test]
    fn warmup_holds_iterate() {
        let h = Hyper { a: vec![1.0, 1.0], b: 3.0 };
        let mut st = AsiState::new(vec![0.0, 0.0], 3, Mode::Asi);
        for _ in 0..3 {
            assert_eq!(st.step(&h, 0.1, 0).unwrap(), StepOutcome::Held);
            assert_eq!(st.x(), &[0.0, 0.0]);
        }
        assert!(matches!(st.step(&h, 0.1, 3).unwrap(), StepOutcome::Applied { .. }));
        assert_ne!(st.x(), &[0.0, 0.0]);
        assert_eq!(st.k(), 5);
    }

    #[test]
    fn delay_beyond_cap_is_a_staleness_violation() {
        let mut st = AsiState::new(vec![0.0], 2, Mode::Asi);
        assert_eq!(
            st.step(&Identity(1), 0.5, 3),
            Err(Error::StalenessViolation { delay: 3, tau: 2 })
        );
    }

    #[test]
    fn history_is_newest_first_and_padded() {
        let h = Hyper { a: vec![1.0], b: 1.0 };
        let mut st = AsiState::new(vec![0.0], 2, Mode::Asi).with_warmup(0);
        st.step(&h, 0.5, 0).unwrap();
        let hist = st.history();
        assert_eq!(hist, vec![vec![0.5], vec![0.0], vec![0.0]]);
        assert_eq!(st.difference_norms_sq(), vec![0.25, 0.0]);
        assert_eq!(st.x(), &[0.5]);
    }

    #[test]
    fn stateful_step_matches_pure_step_bitwise() {
        let h = Hyper { a: vec![0.3, -1.7, 2.2], b: 0.9 };
        for mode in [Mode::Asi, Mode::Ekn] {
            let mut st = AsiState::new(vec![1.0, 2.0, -3.0], 2, mode).with_warmup(0);
            for k in 0..12 {
                let d = k % 3;
                let x = st.x().to_vec();
                let xh = st.iterate(d).unwrap();
                let s = crate::operator::residual(&h, &xh).unwrap();
                let pure = asi_step(&x, &xh, &s, 0.3, mode).unwrap();
                let (_, audited) = st.step_audited(&h, 0.3, d).unwrap();
                let audited = audited.unwrap();
                assert_eq!(pure.next, st.x());
                assert_eq!(audited.next, pure.next);
                assert!(audited.decomposition_holds());
            }
        }
    }

    #[test]
    fn ring_reproduces_full_history() {
        use crate::linear::Hyperplane;
        let ops = [
            Hyperplane::new(6, vec![0, 2], vec![1.0, -0.5], 0.7).unwrap(),
            Hyperplane::new(6, vec![1, 2, 5], vec![0.3, 0.9, 1.1], -0.2).unwrap(),
            Hyperplane::new(6, vec![3], vec![2.0], 1.0).unwrap(),
            Hyperplane::new(6, vec![4, 0], vec![1.0, 1.0], 0.0).unwrap(),
        ];
        for mode in [Mode::Asi, Mode::Ekn] {
            let tau = 3;
            let mut st = AsiState::new(vec![0.1, -0.4, 0.0, 2.0, 1.0, -1.0], tau, mode);
            let mut all = vec![st.x().to_vec()];
            for k in 0..40 {
                let d = (k * 7 + 3) % (tau + 1);
                let x = st.x().to_vec();
                let back = all.len().saturating_sub(1 + d);
                let xh = if st.in_warmup() { x.clone() } else { all[back].clone() };
                assert_eq!(st.iterate(d).unwrap(), xh);
                let warm = st.in_warmup();
                let op = &ops[k % ops.len()];
                st.step(op, 0.2, d).unwrap();
                if !warm {
                    let s = crate::operator::residual(op, &xh).unwrap();
                    let pure = asi_step(&x, &xh, &s, 0.2, mode).unwrap();
                    assert_eq!(pure.next, st.x());
                }
                all.push(st.x().to_vec());
            }
        }
    }
}
