//! Step-size bounds and schedules.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default margin `ε` used by safe-mode schedules.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// `1 / (2τ + 1 + ε)`: the largest constant step covered by the
/// convergence guarantee for delays bounded by `tau`.
pub fn max_step_size(tau: usize, epsilon: f64) -> f64 {
    1.0 / (2.0 * tau as f64 + 1.0 + epsilon)
}

/// `1 / (1 + τ(1/μ + μ) + ε)`: the bound under which the ξ sequence with
/// weight `mu` is nonincreasing. Equals [`max_step_size`] at `mu = 1`.
pub fn xi_step_bound(tau: usize, mu: f64, epsilon: f64) -> f64 {
    1.0 / (1.0 + tau as f64 * (1.0 / mu + mu) + epsilon)
}

/// `1 / (1 + 2τ/√m)`: the larger bound available when updates are drawn
/// uniformly at random independently of the delays.
pub fn randomized_step_bound(tau: usize, m: usize) -> f64 {
    1.0 / (1.0 + 2.0 * tau as f64 / libm::sqrt(m as f64))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StepKind {
    Constant(f64),
    /// `λ_k` for `k = 1, 2, ...`; the last value repeats.
    Sequence(Vec<f64>),
}

/// Step sizes `λ_k`. In safe mode every emitted value is clamped into
/// `[ε, max_step_size(τ, ε)]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSchedule {
    kind: StepKind,
    epsilon: f64,
    tau: usize,
    safe: bool,
}

impl StepSchedule {
    /// Constant step `max_step_size(tau, DEFAULT_EPSILON)`.
    pub fn auto(tau: usize) -> Self {
        Self {
            kind: StepKind::Constant(max_step_size(tau, DEFAULT_EPSILON)),
            epsilon: DEFAULT_EPSILON,
            tau,
            safe: true,
        }
    }

    /// Constant step, clamped to the safe bound for `tau`.
    pub fn constant(lambda: f64, tau: usize) -> Result<Self> {
        Self::new(StepKind::Constant(lambda), tau, DEFAULT_EPSILON, true)
    }

    /// Constant step used as given, even beyond the proven bound.
    pub fn unsafe_constant(lambda: f64) -> Result<Self> {
        Self::new(StepKind::Constant(lambda), 0, DEFAULT_EPSILON, false)
    }

    pub fn new(kind: StepKind, tau: usize, epsilon: f64, safe: bool) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::param("epsilon", "margin must lie in (0, 1)"));
        }
        let values: &[f64] = match &kind {
            StepKind::Constant(v) => core::slice::from_ref(v),
            StepKind::Sequence(v) if v.is_empty() => {
                return Err(Error::param("lambda", "empty step sequence"))
            }
            StepKind::Sequence(v) => v,
        };
        if values.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::param("lambda", "step sizes must lie in (0, 1)"));
        }
        Ok(Self {
            kind,
            epsilon,
            tau,
            safe,
        })
    }

    pub fn is_safe(&self) -> bool {
        self.safe
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    /// Upper clamp applied in safe mode.
    pub fn upper_bound(&self) -> f64 {
        max_step_size(self.tau, self.epsilon)
    }

    /// `λ_k` for iteration `k >= 1`.
    pub fn lambda(&self, k: usize) -> f64 {
        let raw = match &self.kind {
            StepKind::Constant(v) => *v,
            StepKind::Sequence(v) => v[(k.max(1) - 1).min(v.len() - 1)],
        };
        if self.safe {
            raw.clamp(self.epsilon, self.upper_bound())
        } else {
            raw
        }
    }
}
