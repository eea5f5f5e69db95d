//! Per-iteration log rows and run summaries.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    Converged,
    MaxEpochs,
    /// Iterate norm above the divergence threshold, or non-finite.
    Diverged,
    /// An update would have used an iterate older than the cap.
    StalenessViolation,
    /// A node was refused or failed more times in a row than allowed.
    RetryCapExceeded,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxEpochs => "max_epochs",
            Termination::Diverged => "diverged",
            Termination::StalenessViolation => "staleness_violation",
            Termination::RetryCapExceeded => "retry_cap_exceeded",
        }
    }
}

/// One log line. Fields that do not apply to a run are `None`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogRow {
    /// Index of the iterate after the update (`x^k`).
    pub k: usize,
    pub epoch: f64,
    pub theta: Option<u64>,
    pub node: Option<usize>,
    pub op_index: Option<usize>,
    pub delay: Option<usize>,
    /// `‖A x^k - b‖`
    pub residual_b: Option<f64>,
    /// `‖x^k - x_true‖`
    pub true_error: Option<f64>,
    pub xi: Option<f64>,
    pub wall_ms: Option<f64>,
}

/// One applied update in an event-driven run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub theta: u64,
    pub node: usize,
    pub op_index: usize,
    /// Iterate index the node read.
    pub read_version: usize,
    /// Iterate index the update was applied to.
    pub applied_version: usize,
}

impl Event {
    pub fn delay(&self) -> usize {
        self.applied_version - self.read_version
    }
}

/// Invariant checks made on audited steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuditStats {
    pub steps_audited: u64,
    /// Worst convex/inertial decomposition mismatch, in ulps of the operands.
    pub max_decomposition_defect: f64,
    pub decomposition_failures: u64,
    /// Steps where `‖x^k - x̂^k‖` exceeded the sum of the last `τ` step
    /// lengths.
    pub staleness_bound_failures: u64,
}

/// Checks on the ξ sequence, made after every applied step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct XiStats {
    pub steps_checked: u64,
    /// Steps with `ξ_{k+1} > ξ_k + tol`.
    pub monotonicity_failures: u64,
    pub max_increase: f64,
    /// Steps where `ξ_{k+1}` exceeded the one-step decrease bound.
    pub bound_failures: u64,
    /// Largest `bound - ξ_k`; nonpositive when the step condition holds.
    pub max_bound_minus_xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    pub termination: Termination,
    /// Final iteration counter `k`.
    pub iterations: usize,
    /// Operator applications (warm-up steps excluded).
    pub applications: u64,
    /// `applications / m`.
    pub epochs: f64,
    pub operators: usize,
    pub realized_tau: usize,
    pub tau_cap: usize,
    /// `delay_histogram[d]` counts applied updates with delay `d`.
    pub delay_histogram: Vec<u64>,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub true_error: Option<f64>,
    /// `max_i ‖x - T_i(x)‖` at the final iterate.
    pub max_operator_residual: f64,
    /// `‖x^{k} - x^{k-1}‖` of the last applied update.
    pub last_step_norm: f64,
    pub refusals: u64,
    pub failures: u64,
    pub almost_cyclicality: Option<usize>,
    pub xi: Option<XiStats>,
    pub audit: Option<AuditStats>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunRecord {
    pub rows: Vec<LogRow>,
    pub summary: RunSummary,
    /// Applied events in order; empty unless requested.
    pub events: Vec<Event>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub x: Vec<f64>,
}

impl RunRecord {
    /// Operator indices in application order (from the event log).
    pub fn op_stream(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.op_index).collect()
    }

    pub fn converged(&self) -> bool {
        self.summary.termination == Termination::Converged
    }
}

/// Largest delay among applied updates.
pub fn realized_tau(record: &RunRecord) -> usize {
    record
        .summary
        .delay_histogram
        .iter()
        .rposition(|&c| c > 0)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn realized_tau_from_histogram() {
        let summary = RunSummary {
            termination: Termination::Converged,
            iterations: 5,
            applications: 4,
            epochs: 4.0,
            operators: 1,
            realized_tau: 2,
            tau_cap: 2,
            delay_histogram: vec![1, 2, 1, 0],
            residual_norm: 0.0,
            relative_residual: 0.0,
            true_error: None,
            max_operator_residual: 0.0,
            last_step_norm: 0.0,
            refusals: 0,
            failures: 0,
            almost_cyclicality: None,
            xi: None,
            audit: None,
            wall_ms: None,
        };
        let mut rec = RunRecord {
            rows: vec![],
            summary,
            events: vec![],
            x: vec![],
        };
        assert_eq!(realized_tau(&rec), 2);
        rec.summary.delay_histogram = vec![7];
        assert_eq!(realized_tau(&rec), 0);
    }
}
