//! Deterministic drivers for ASI/EKN runs.
//!
//! [`Driver`] owns the iterate and does the per-step bookkeeping (logging,
//! epoch checkpoints, stopping, ξ checks, audits). Two single-threaded
//! front ends feed it:
//!
//! * [`simulate_scripted`]: a control sequence and a delay model, one step
//!   per iteration, warm-up for `k <= τ`.
//! * [`simulate_nodes`]: a discrete-event model of a master with `w`
//!   worker nodes. Each node reads the current iterate, computes for an
//!   integer duration drawn from a [`TimingModel`], and reports back; all
//!   reports due at the same time step are applied in node-index order.
//!   Delays are the realized read ages, and a report older than `τ` is
//!   refused and the node recomputes from the current iterate.
//!
//! Both are pure functions of their inputs, so reruns are bit-identical.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asi::{asi_step, AsiState, Mode, StepOutcome};
use crate::control::{validate_assignment, ControlSequence};
use crate::delay::DelayModel;
use crate::error::{Error, Result};
use crate::operator::{FixedPointOperator, SparseVec};
use crate::record::{AuditStats, Event, LogRow, RunRecord, RunSummary, Termination, XiStats};
use crate::sparse::CsrMatrix;
use crate::step::StepSchedule;
use crate::vector;
use crate::xi::{XiMonitor, XI_MONOTONE_TOL};

/// Iterate norm above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Relative slack on the staleness bound `‖x^k - x̂^k‖ <= Σ ‖x^{k+1-j} - x^{k-j}‖`.
pub const STALENESS_BOUND_TOL: f64 = 1e-12;

/// The linear system a run is measured against.
#[derive(Debug, Clone, Copy)]
pub struct SystemView<'a> {
    pub a: &'a CsrMatrix,
    pub b: &'a [f64],
    pub x_true: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopKind {
    /// `‖x^k - x_true‖ < threshold`
    TrueError,
    /// `‖A x^k - b‖ < threshold`
    Residual,
    /// `‖A x^k - b‖ / ‖b‖ < threshold`
    RelativeResidual,
    /// Run until `max_epochs`.
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StoppingRule {
    pub kind: StopKind,
    pub threshold: f64,
    pub max_epochs: f64,
    /// If set, convergence also requires `max_i ‖x - T_i(x)‖` below this.
    pub operator_threshold: Option<f64>,
}

impl StoppingRule {
    pub fn new(kind: StopKind, threshold: f64, max_epochs: f64) -> Self {
        Self {
            kind,
            threshold,
            max_epochs,
            operator_threshold: None,
        }
    }

    pub fn with_operator_threshold(mut self, t: f64) -> Self {
        self.operator_threshold = Some(t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LogPolicy {
    None,
    /// A row at `k = 1` and at every checkpoint.
    #[default]
    Checkpoints,
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct XiSettings {
    pub mu: f64,
    pub epsilon: f64,
}

/// Settings shared by every driver.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunOptions {
    pub mode: Mode,
    pub schedule: StepSchedule,
    pub stop: StoppingRule,
    pub log: LogPolicy,
    /// Track ξ against `x_true` after every step.
    pub xi: Option<XiSettings>,
    /// Check the update decomposition and the staleness bound on logged
    /// steps.
    pub audit: bool,
    pub divergence_threshold: f64,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
    pub record_events: bool,
    /// Applications between checkpoints; one epoch (`m`) when absent.
    pub check_every: Option<usize>,
}

impl RunOptions {
    pub fn new(mode: Mode, schedule: StepSchedule, stop: StoppingRule) -> Self {
        Self {
            mode,
            schedule,
            stop,
            log: LogPolicy::Checkpoints,
            xi: None,
            audit: false,
            divergence_threshold: DIVERGENCE_THRESHOLD,
            x0: None,
            record_events: false,
            check_every: None,
        }
    }
}

/// Whether a driver should keep going.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop(Termination),
}

/// `max_i ‖x - T_i(x)‖`
pub fn max_operator_residual<O: FixedPointOperator>(ops: &[O], x: &[f64]) -> f64 {
    let mut s = SparseVec::new();
    ops.iter()
        .map(|op| {
            op.residual_into(x, &mut s);
            libm::sqrt(s.norm_sq())
        })
        .fold(0.0, f64::max)
}

/// Owner of the iterate and of everything recorded about a run.
pub struct Driver<'a, O> {
    ops: &'a [O],
    sys: SystemView<'a>,
    opts: &'a RunOptions,
    state: AsiState,
    m: usize,
    check_every: u64,
    b_norm: f64,
    applications: u64,
    histogram: Vec<u64>,
    rows: Vec<LogRow>,
    events: Vec<Event>,
    xi: Option<(XiMonitor, f64)>,
    xi_stats: XiStats,
    audit: AuditStats,
    res: SparseVec,
    last_step_norm: f64,
    refusals: u64,
    failures: u64,
}

impl<'a, O: FixedPointOperator> Driver<'a, O> {
    /// `tau` is the delay cap; `warmup` the number of initial held steps.
    pub fn new(
        ops: &'a [O],
        sys: SystemView<'a>,
        opts: &'a RunOptions,
        tau: usize,
        warmup: usize,
    ) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::param("operators", "need at least one operator"));
        }
        let n = sys.a.cols();
        Error::check_dim(sys.a.rows(), sys.b.len())?;
        if let Some((i, op)) = ops.iter().enumerate().find(|(_, op)| op.dim() != n) {
            return Err(Error::param(
                "operators",
                format!("operator {i} has dimension {}, system has {n}", op.dim()),
            ));
        }
        if let Some(z) = sys.x_true {
            Error::check_dim(n, z.len())?;
        }
        if opts.stop.kind == StopKind::TrueError && sys.x_true.is_none() {
            return Err(Error::param("stop", "true-error stopping needs a known solution"));
        }
        if opts.xi.is_some() && sys.x_true.is_none() {
            return Err(Error::param("xi", "the ξ monitor needs a known solution"));
        }
        let x0 = match &opts.x0 {
            Some(x) => {
                Error::check_dim(n, x.len())?;
                x.clone()
            }
            None => vec![0.0; n],
        };
        let state = AsiState::new(x0, tau, opts.mode).with_warmup(warmup);
        let m = ops.len();
        let check_every = opts.check_every.unwrap_or(m).max(1) as u64;
        let xi = match (opts.xi, sys.x_true) {
            (Some(s), Some(z)) => {
                let mon = XiMonitor::new(tau, s.mu, s.epsilon)?;
                let v = mon.value_from_parts(
                    vector::dist_sq(state.x(), z),
                    &state.difference_norms_sq(),
                )?;
                Some((mon, v))
            }
            _ => None,
        };
        let mut d = Self {
            ops,
            sys,
            opts,
            state,
            m,
            check_every,
            b_norm: vector::norm(sys.b),
            applications: 0,
            histogram: vec![0; tau + 1],
            rows: Vec::new(),
            events: Vec::new(),
            xi,
            xi_stats: XiStats::default(),
            audit: AuditStats::default(),
            res: SparseVec::new(),
            last_step_norm: 0.0,
            refusals: 0,
            failures: 0,
        };
        if d.opts.log != LogPolicy::None {
            let row = d.row(None, None, None, None);
            d.rows.push(row);
        }
        Ok(d)
    }

    pub fn k(&self) -> usize {
        self.state.k()
    }

    pub fn state(&self) -> &AsiState {
        &self.state
    }

    pub fn applications(&self) -> u64 {
        self.applications
    }

    pub fn epochs(&self) -> f64 {
        self.applications as f64 / self.m as f64
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    /// Mutable access to the newest log row (e.g. to stamp wall-clock time).
    pub fn last_row_mut(&mut self) -> Option<&mut LogRow> {
        self.rows.last_mut()
    }

    pub fn note_refusal(&mut self) {
        self.refusals += 1;
    }

    pub fn note_failure(&mut self) {
        self.failures += 1;
    }

    fn residual_b(&self) -> f64 {
        self.sys
            .a
            .residual_norm(self.state.x(), self.sys.b)
            .unwrap_or(f64::NAN)
    }

    fn true_error(&self) -> Option<f64> {
        self.sys.x_true.map(|z| vector::dist(self.state.x(), z))
    }

    fn row(
        &self,
        node: Option<usize>,
        op: Option<usize>,
        delay: Option<usize>,
        theta: Option<u64>,
    ) -> LogRow {
        LogRow {
            k: self.state.k(),
            epoch: self.epochs(),
            theta,
            node,
            op_index: op,
            delay,
            residual_b: Some(self.residual_b()),
            true_error: self.true_error(),
            xi: self.xi.as_ref().map(|(_, v)| *v),
            wall_ms: None,
        }
    }

    /// One iteration: apply operator `op` read at age `delay`. When
    /// `provided` is given it is used as `S_op(x^{k-delay})` instead of
    /// evaluating the operator here.
    pub fn step(
        &mut self,
        op: usize,
        delay: usize,
        node: Option<usize>,
        theta: Option<u64>,
        provided: Option<&SparseVec>,
    ) -> Result<Flow> {
        if op >= self.m {
            return Err(Error::param("op_index", format!("operator {op} >= m = {}", self.m)));
        }
        if delay > self.state.tau() {
            return Ok(Flow::Stop(Termination::StalenessViolation));
        }
        if self.state.in_warmup() {
            self.state.hold();
            if let Some((mon, v)) = &mut self.xi {
                *v = mon.value_from_parts(
                    vector::dist_sq(self.state.x(), self.sys.x_true.unwrap()),
                    &self.state.difference_norms_sq(),
                )?;
            }
            return Ok(Flow::Continue);
        }

        let k = self.state.k();
        let lambda = self.opts.schedule.lambda(k);
        let mut res = core::mem::take(&mut self.res);
        match provided {
            Some(r) => res.clone_from(r),
            None => self.state.residual_at(&self.ops[op], delay, &mut res)?,
        }

        let next_app = self.applications + 1;
        let at_checkpoint = next_app % self.check_every == 0;
        let logged = match self.opts.log {
            LogPolicy::EveryStep => true,
            LogPolicy::Checkpoints => at_checkpoint,
            LogPolicy::None => false,
        };

        let mut breakdown = None;
        if self.opts.audit && logged {
            let (lhs, rhs) = self.state.staleness_gap(delay)?;
            if lhs > rhs * (1.0 + STALENESS_BOUND_TOL) {
                self.audit.staleness_bound_failures += 1;
            }
            let s = res.to_dense(self.state.dim());
            let x_hat = self.state.iterate(delay)?;
            breakdown = Some(asi_step(
                self.state.x(),
                &x_hat,
                &s,
                lambda,
                self.opts.mode,
            )?);
        }
        let oldest = if self.xi.is_some() {
            self.state.oldest_difference_sq()
        } else {
            0.0
        };

        let outcome = self.state.apply_residual(&res, lambda, delay);
        self.res = res;
        let (res_sq, step_sq) = match outcome? {
            StepOutcome::Applied {
                residual_norm_sq,
                step_norm_sq,
            } => (residual_norm_sq, step_norm_sq),
            StepOutcome::Held => unreachable!("warm-up handled above"),
        };
        self.last_step_norm = libm::sqrt(step_sq);
        self.applications = next_app;
        self.histogram[delay] += 1;

        if let Some(mut b) = breakdown {
            b.next.copy_from_slice(self.state.x());
            let defect = b.decomposition_defect();
            self.audit.steps_audited += 1;
            self.audit.max_decomposition_defect = self.audit.max_decomposition_defect.max(defect);
            if !b.decomposition_holds() {
                self.audit.decomposition_failures += 1;
            }
        }
        if self.opts.record_events {
            self.events.push(Event {
                theta: theta.unwrap_or(k as u64),
                node: node.unwrap_or(0),
                op_index: op,
                read_version: k - delay,
                applied_version: k,
            });
        }
        if let Some((mon, prev)) = &mut self.xi {
            let now = mon.value_from_parts(
                    vector::dist_sq(self.state.x(), self.sys.x_true.unwrap()),
                    &self.state.difference_norms_sq(),
                )?;
            let bound = mon.decrease_bound(*prev, lambda, res_sq, oldest);
            let st = &mut self.xi_stats;
            st.steps_checked += 1;
            let increase = now - *prev;
            st.max_increase = if st.steps_checked == 1 {
                increase
            } else {
                st.max_increase.max(increase)
            };
            if increase > XI_MONOTONE_TOL {
                st.monotonicity_failures += 1;
            }
            if now > bound + XI_MONOTONE_TOL {
                st.bound_failures += 1;
            }
            let margin = bound - *prev;
            st.max_bound_minus_xi = if st.steps_checked == 1 {
                margin
            } else {
                st.max_bound_minus_xi.max(margin)
            };
            *prev = now;
        }

        if logged {
            let row = self.row(node, Some(op), Some(delay), theta);
            self.rows.push(row);
        }
        if !step_sq.is_finite() {
            return Ok(Flow::Stop(Termination::Diverged));
        }
        if at_checkpoint {
            return Ok(self.checkpoint());
        }
        Ok(Flow::Continue)
    }

    fn checkpoint(&self) -> Flow {
        let xn = vector::norm(self.state.x());
        if !(xn <= self.opts.divergence_threshold) {
            return Flow::Stop(Termination::Diverged);
        }
        let stop = &self.opts.stop;
        let metric = match stop.kind {
            StopKind::TrueError => self.true_error().unwrap_or(f64::INFINITY),
            StopKind::Residual => self.residual_b(),
            StopKind::RelativeResidual => {
                let r = self.residual_b();
                if self.b_norm > 0.0 {
                    r / self.b_norm
                } else {
                    r
                }
            }
            StopKind::MaxEpochs => f64::INFINITY,
        };
        let mut converged = metric < stop.threshold;
        if converged {
            if let Some(t) = stop.operator_threshold {
                converged = max_operator_residual(self.ops, self.state.x()) < t;
            }
        }
        if converged {
            Flow::Stop(Termination::Converged)
        } else if self.epochs() >= stop.max_epochs {
            Flow::Stop(Termination::MaxEpochs)
        } else {
            Flow::Continue
        }
    }

    /// Closes the run. `almost_cyclicality` is the bound the dispatcher
    /// guarantees for its operator stream, when it has one.
    pub fn finish(mut self, termination: Termination, almost_cyclicality: Option<usize>) -> RunRecord {
        // Close the log with the final state unless the last row already is it.
        if self.opts.log != LogPolicy::None && self.rows.last().map(|r| r.k) != Some(self.state.k()) {
            let row = self.row(None, None, None, None);
            self.rows.push(row);
        }
        let residual_norm = self.residual_b();
        let x = self.state.x().to_vec();
        let realized_tau = self.histogram.iter().rposition(|&c| c > 0).unwrap_or(0);
        let summary = RunSummary {
            termination,
            iterations: self.state.k(),
            applications: self.applications,
            epochs: self.epochs(),
            operators: self.m,
            realized_tau,
            tau_cap: self.state.tau(),
            delay_histogram: self.histogram,
            residual_norm,
            relative_residual: if self.b_norm > 0.0 {
                residual_norm / self.b_norm
            } else {
                residual_norm
            },
            true_error: self.sys.x_true.map(|z| vector::dist(&x, z)),
            max_operator_residual: max_operator_residual(self.ops, &x),
            last_step_norm: self.last_step_norm,
            refusals: self.refusals,
            failures: self.failures,
            almost_cyclicality,
            xi: self.xi.map(|_| self.xi_stats),
            audit: self.opts.audit.then_some(self.audit),
            wall_ms: None,
        };
        RunRecord {
            rows: self.rows,
            summary,
            events: self.events,
            x,
        }
    }
}

/// One step per iteration with operator `control.index(k - 1)` and delay
/// `delays.delay(k, 0)`; steps `k <= τ` are warm-up steps.
pub fn simulate_scripted<O: FixedPointOperator>(
    ops: &[O],
    sys: SystemView<'_>,
    control: &ControlSequence,
    delays: &DelayModel,
    opts: &RunOptions,
) -> Result<RunRecord> {
    Error::check_dim(ops.len(), control.m())?;
    let tau = delays.tau();
    let mut d = Driver::new(ops, sys, opts, tau, tau)?;
    loop {
        let k = d.k();
        let flow = d.step(control.index(k - 1), delays.delay(k, 0), None, Some(k as u64), None)?;
        if let Flow::Stop(t) = flow {
            return Ok(d.finish(t, Some(control.almost_cyclicality())));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DispatchPolicy {
    /// Every node cycles through its own subcollection.
    #[default]
    PerNode,
    /// The master hands out `0, 1, ..., m-1, 0, ...` in dispatch order.
    Global,
}

/// `w` worker nodes and the operators each one owns.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodePool {
    m: usize,
    assignment: Vec<Vec<usize>>,
    policy: DispatchPolicy,
}

impl NodePool {
    pub fn new(m: usize, assignment: Vec<Vec<usize>>, policy: DispatchPolicy) -> Result<Self> {
        validate_assignment(m, &assignment)?;
        if assignment.len() > m {
            return Err(Error::param("w", format!("{} nodes for {m} operators", assignment.len())));
        }
        Ok(Self {
            m,
            assignment,
            policy,
        })
    }

    /// Node `l` owns operators `l, l + w, l + 2w, ...`.
    pub fn strided(m: usize, w: usize, policy: DispatchPolicy) -> Result<Self> {
        if w == 0 {
            return Err(Error::param("w", "need at least one node"));
        }
        Self::new(m, (0..w).map(|l| (l..m).step_by(w).collect()).collect(), policy)
    }

    /// Node `l` owns a contiguous run of operators.
    pub fn contiguous(m: usize, w: usize, policy: DispatchPolicy) -> Result<Self> {
        if w == 0 || w > m {
            return Err(Error::param("w", format!("need 1 <= w <= m, got w = {w}, m = {m}")));
        }
        let (base, extra) = (m / w, m % w);
        let mut start = 0;
        let assignment = (0..w)
            .map(|l| {
                let len = base + usize::from(l < extra);
                let run = (start..start + len).collect();
                start += len;
                run
            })
            .collect();
        Self::new(m, assignment, policy)
    }

    pub fn w(&self) -> usize {
        self.assignment.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn assignment(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    pub fn policy(&self) -> DispatchPolicy {
        self.policy
    }

    /// Almost cyclicality constant of the applied operator stream when every
    /// computation takes between `timing.min` and `timing.max` time steps
    /// and no node is refused more than `retry_cap` times in a row.
    ///
    /// A node's consecutive applications are at most `T = (retry_cap + 1)·max`
    /// time apart, and in that span any other node applies at most
    /// `⌊T/min⌋ + 1` updates, so `Q = w(⌊T/min⌋ + 1)` bounds the arrivals in
    /// such a span. Per-node cyclic dispatch then gives
    /// `max_l |N_l| · ((w - 1)(⌊T/min⌋ + 1) + 1)`; global cyclic dispatch,
    /// where the update handed out `g`-th lands within `Q` applications of
    /// position `g - w`, gives `m + Q - 1`.
    pub fn merge_bound(&self, timing: &TimingModel, retry_cap: usize) -> usize {
        let w = self.w();
        let span = (retry_cap as u64 + 1) * timing.max;
        let per_node = (span / timing.min) as usize + 1;
        match self.policy {
            DispatchPolicy::PerNode => {
                let longest = self.assignment.iter().map(Vec::len).max().unwrap_or(0);
                (longest * ((w - 1) * per_node + 1)).max(self.m)
            }
            DispatchPolicy::Global => self.m + w * per_node - 1,
        }
    }
}

/// Hands out operator indices to nodes.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    pool: NodePool,
    cursor: Vec<usize>,
    global: usize,
}

impl Dispatcher {
    pub fn new(pool: &NodePool) -> Self {
        Self {
            cursor: vec![0; pool.w()],
            pool: pool.clone(),
            global: 0,
        }
    }

    /// Next operator for `node` after its previous one was applied.
    pub fn next_op(&mut self, node: usize) -> usize {
        match self.pool.policy {
            DispatchPolicy::PerNode => {
                let ops = &self.pool.assignment[node];
                let i = ops[self.cursor[node] % ops.len()];
                self.cursor[node] += 1;
                i
            }
            DispatchPolicy::Global => {
                let i = self.global % self.pool.m;
                self.global += 1;
                i
            }
        }
    }
}

/// Integer computation times drawn uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimingModel {
    pub min: u64,
    pub max: u64,
    pub seed: u64,
}

impl TimingModel {
    pub fn uniform(min: u64, max: u64, seed: u64) -> Result<Self> {
        if min == 0 || max < min {
            return Err(Error::param("timing", "need 1 <= min <= max"));
        }
        Ok(Self { min, max, seed })
    }

    /// Every computation takes exactly `d` steps.
    pub fn fixed(d: u64) -> Result<Self> {
        Self::uniform(d, d, 0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeSimConfig {
    pub pool: NodePool,
    pub timing: TimingModel,
    pub tau: usize,
    /// Consecutive refusals allowed per node before the run aborts.
    pub retry_cap: usize,
}

struct Pending {
    op: usize,
    read: usize,
    finish: u64,
    refusals: usize,
}

/// Discrete-event master/worker run.
pub fn simulate_nodes<O: FixedPointOperator>(
    ops: &[O],
    sys: SystemView<'_>,
    cfg: &NodeSimConfig,
    opts: &RunOptions,
) -> Result<RunRecord> {
    Error::check_dim(ops.len(), cfg.pool.m())?;
    let w = cfg.pool.w();
    let bound = cfg.pool.merge_bound(&cfg.timing, cfg.retry_cap);
    let mut d = Driver::new(ops, sys, opts, cfg.tau, 0)?;
    let mut dispatcher = Dispatcher::new(&cfg.pool);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.timing.seed);
    let mut pending: Vec<Pending> = (0..w)
        .map(|l| Pending {
            op: dispatcher.next_op(l),
            read: d.k(),
            finish: cfg.timing.sample(&mut rng),
            refusals: 0,
        })
        .collect();
    loop {
        let theta = pending.iter().map(|p| p.finish).min().unwrap();
        for l in 0..w {
            if pending[l].finish != theta {
                continue;
            }
            let delay = d.k() - pending[l].read;
            if delay > cfg.tau {
                d.note_refusal();
                let p = &mut pending[l];
                p.refusals += 1;
                if p.refusals > cfg.retry_cap {
                    return Ok(d.finish(Termination::RetryCapExceeded, Some(bound)));
                }
                p.read = d.k();
                p.finish = theta + cfg.timing.sample(&mut rng);
                continue;
            }
            let flow = d.step(pending[l].op, delay, Some(l), Some(theta), None)?;
            if let Flow::Stop(t) = flow {
                return Ok(d.finish(t, Some(bound)));
            }
            pending[l] = Pending {
                op: dispatcher.next_op(l),
                read: d.k(),
                finish: theta + cfg.timing.sample(&mut rng),
                refusals: 0,
            };
        }
    }
}
