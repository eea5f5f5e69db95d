//! Power iteration for the largest eigenvalue of a symmetric positive
//! semidefinite operator.

use alloc::vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vector;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralOptions {
    pub max_iterations: usize,
    /// Stop once successive Rayleigh quotients differ by at most this much,
    /// relative to the current estimate.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Estimate of a spectral radius. When `converged` is false the estimate is
/// the last Rayleigh quotient and should not be used as a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralCertificate {
    pub estimate: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SpectralCertificate {
    /// Converged and at most `1 + slack`.
    pub fn certifies_unit_bound(&self, slack: f64) -> bool {
        self.converged && self.estimate <= 1.0 + slack
    }
}

/// Runs power iteration on the `n`-dimensional symmetric PSD operator
/// `matvec(v, out)` from a seeded random start.
pub fn power_iteration<F>(n: usize, options: SpectralOptions, mut matvec: F) -> SpectralCertificate
where
    F: FnMut(&[f64], &mut [f64]),
{
    if n == 0 {
        return SpectralCertificate {
            estimate: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut v: alloc::vec::Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for it in 1..=options.max_iterations.max(1) {
        let nv = vector::norm(&v);
        if nv == 0.0 {
            return SpectralCertificate {
                estimate: 0.0,
                converged: true,
                iterations: it,
            };
        }
        v.iter_mut().for_each(|x| *x /= nv);
        matvec(&v, &mut w);
        let rayleigh = vector::dot(&v, &w);
        let done = it > 1 && (rayleigh - estimate).abs() <= options.tolerance * rayleigh.abs();
        estimate = rayleigh;
        if done {
            return SpectralCertificate {
                estimate,
                converged: true,
                iterations: it,
            };
        }
        core::mem::swap(&mut v, &mut w);
    }
    SpectralCertificate {
        estimate,
        converged: false,
        iterations: options.max_iterations.max(1),
    }
}
