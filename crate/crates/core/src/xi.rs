//! The Lyapunov-style sequence
//!
//! ```text
//! ξ_k = ‖x^k - z‖² + Σ_{ℓ=1..τ} c_ℓ ‖x^{k+1-ℓ} - x^{k-ℓ}‖²,   c_j = (τ+1-j) μ + ε
//! ```
//!
//! which is nonincreasing along ASI runs whose steps respect
//! [`xi_step_bound`](crate::step::xi_step_bound). The reference point `z`
//! must be a common fixed point, so this is a test and audit tool for
//! problems with a known solution.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vector;

/// Absolute slack for monotonicity checks on ξ.
pub const XI_MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct XiMonitor {
    tau: usize,
    mu: f64,
    epsilon: f64,
    coefficients: Vec<f64>,
}

impl XiMonitor {
    pub fn new(tau: usize, mu: f64, epsilon: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::param("mu", "weight must be positive"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::param("epsilon", "margin must be positive"));
        }
        let coefficients = (1..=tau + 1)
            .map(|j| (tau + 1 - j) as f64 * mu + epsilon)
            .collect();
        Ok(Self {
            tau,
            mu,
            epsilon,
            coefficients,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `c_j` for `j` in `1..=τ+1`.
    pub fn coefficient(&self, j: usize) -> f64 {
        self.coefficients[j - 1]
    }

    /// ξ for `history = [x^k, x^{k-1}, ..., x^{k-τ}]` (newest first).
    pub fn value(&self, history: &[&[f64]], z: &[f64]) -> Result<f64> {
        if history.len() < self.tau + 1 {
            return Err(Error::InsufficientHistory {
                needed: self.tau + 1,
                available: history.len(),
            });
        }
        let x = history[0];
        Error::check_dim(x.len(), z.len())?;
        let mut xi = vector::dist_sq(x, z);
        for l in 1..=self.tau {
            xi += self.coefficient(l) * vector::dist_sq(history[l - 1], history[l]);
        }
        Ok(xi)
    }

    /// ξ from `‖x^k - z‖²` and the squared differences
    /// `‖x^{k+1-ℓ} - x^{k-ℓ}‖²` for `ℓ = 1..=τ`.
    pub fn value_from_parts(&self, dist_sq_to_z: f64, differences_sq: &[f64]) -> Result<f64> {
        if differences_sq.len() < self.tau {
            return Err(Error::InsufficientHistory {
                needed: self.tau + 1,
                available: differences_sq.len() + 1,
            });
        }
        let mut xi = dist_sq_to_z;
        for l in 1..=self.tau {
            xi += self.coefficient(l) * differences_sq[l - 1];
        }
        Ok(xi)
    }

    /// Right-hand side of the one-step decrease inequality:
    ///
    /// ```text
    /// ξ_{k+1} <= ξ_k - λ‖S(x̂)‖² (1 - λ(1 + τ/μ + c_1)) - c_{τ+1} ‖x^{k+1-τ} - x^{k-τ}‖²
    /// ```
    ///
    /// For `τ = 0` the difference terms cancel before the step bound is used
    /// and the inequality reads `ξ_{k+1} <= ξ_k - λ(1-λ)‖S(x)‖²`.
    pub fn decrease_bound(
        &self,
        xi_k: f64,
        lambda: f64,
        residual_norm_sq: f64,
        oldest_difference_sq: f64,
    ) -> f64 {
        if self.tau == 0 {
            return xi_k - lambda * residual_norm_sq * (1.0 - lambda);
        }
        let factor = 1.0 + self.tau as f64 / self.mu + self.coefficient(1);
        xi_k - lambda * residual_norm_sq * (1.0 - lambda * factor)
            - self.coefficient(self.tau + 1) * oldest_difference_sq
    }
}
