//! Bounded-staleness delay models.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DelayKind {
    Zero,
    /// Repeated periodically: step `k` uses `script[(k - 1) % len]`.
    Scripted(Vec<usize>),
    /// Independent uniform draws on `0..=tau`, derived from `(seed, k, node)`.
    UniformRandom { seed: u64 },
    /// Delays realized by an earlier run, replayed in order; steps past the
    /// end of the log use zero delay.
    Recorded(Vec<usize>),
}

/// Assigns each iteration `k` (starting at 1) the age of the iterate that
/// the update reads, capped by `tau`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DelayModel {
    tau: usize,
    kind: DelayKind,
}

impl DelayModel {
    pub fn zero() -> Self {
        Self {
            tau: 0,
            kind: DelayKind::Zero,
        }
    }

    pub fn scripted(tau: usize, script: Vec<usize>) -> Result<Self> {
        if script.is_empty() {
            return Err(Error::param("script", "delay script is empty"));
        }
        Self::check_cap(tau, &script)?;
        Ok(Self {
            tau,
            kind: DelayKind::Scripted(script),
        })
    }

    /// Every step delayed by exactly `tau` (once enough history exists).
    pub fn constant(tau: usize) -> Self {
        Self {
            tau,
            kind: DelayKind::Scripted(alloc::vec![tau]),
        }
    }

    pub fn uniform_random(tau: usize, seed: u64) -> Self {
        Self {
            tau,
            kind: DelayKind::UniformRandom { seed },
        }
    }

    pub fn recorded(tau: usize, log: Vec<usize>) -> Result<Self> {
        Self::check_cap(tau, &log)?;
        Ok(Self {
            tau,
            kind: DelayKind::Recorded(log),
        })
    }

    fn check_cap(tau: usize, delays: &[usize]) -> Result<()> {
        match delays.iter().find(|&&d| d > tau) {
            Some(&d) => Err(Error::param(
                "delays",
                format!("delay {d} exceeds the cap tau = {tau}"),
            )),
            None => Ok(()),
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn kind(&self) -> &DelayKind {
        &self.kind
    }

    /// Delay used at iteration `k >= 1` by `node`; always `<= tau` and
    /// `<= k - 1`.
    pub fn delay(&self, k: usize, node: usize) -> usize {
        let raw = match &self.kind {
            DelayKind::Zero => 0,
            DelayKind::Scripted(s) => s[(k.max(1) - 1) % s.len()],
            DelayKind::Recorded(log) => log.get(k.max(1) - 1).copied().unwrap_or(0),
            DelayKind::UniformRandom { seed } => {
                let h = splitmix64(
                    seed ^ splitmix64(k as u64) ^ splitmix64((node as u64).wrapping_add(0x5bd1)),
                );
                (h % (self.tau as u64 + 1)) as usize
            }
        };
        raw.min(self.tau).min(k.saturating_sub(1))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn scripted_cycles_and_respects_history() {
        let d = DelayModel::scripted(2, vec![0, 1, 2, 1]).unwrap();
        let got: Vec<usize> = (1..=8).map(|k| d.delay(k, 0)).collect();
        // k = 1, 2 are clipped by k - 1.
        assert_eq!(got, vec![0, 1, 2, 1, 0, 1, 2, 1]);
    }

    #[test]
    fn scripted_over_cap_is_rejected() {
        assert!(DelayModel::scripted(1, vec![0, 2]).is_err());
    }

    #[test]
    fn random_is_bounded_and_deterministic() {
        let d = DelayModel::uniform_random(3, 42);
        let a: Vec<usize> = (1..500).map(|k| d.delay(k, k % 4)).collect();
        let b: Vec<usize> = (1..500).map(|k| d.delay(k, k % 4)).collect();
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, &x)| x <= 3 && x <= i));
        assert!((0..=3).all(|v| a.contains(&v)));
    }
}
