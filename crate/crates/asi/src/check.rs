//! Static and dry-run audits of a problem and its operators.

use std::fmt;

use asi_core::linear::{
    art_operators, drop_operators, BlockPartition, DropBlockOperator, Hyperplane, SpectralOptions,
};
use asi_core::operator::{firm_nonexpansive_probe, nonexpansive_probe};
use asi_core::problem::TomographySystem;
use asi_core::{
    almost_cyclic_check, simulate_nodes, vector, FixedPointOperator, LogPolicy, Mode, NodePool,
    NodeSimConfig, RunOptions, StepSchedule, StopKind, StoppingRule, TimingModel,
};

use crate::config::{view, Family, RunConfig};

/// Slack on the spectral radius bound `ρ ≤ 1`.
pub const SPECTRAL_SLACK: f64 = 1e-8;
/// `‖A x_true - b‖ ≤ CONSISTENCY_TOL·(1 + ‖b‖)`
pub const CONSISTENCY_TOL: f64 = 1e-9;
/// Operators sampled by the nonexpansiveness probes.
pub const PROBE_OPERATORS: usize = 8;
pub const PROBE_TRIALS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.items.push(CheckItem {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            let tag = if i.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {:<14} {}", i.name, i.detail)?;
        }
        Ok(())
    }
}

fn spread(m: usize, count: usize) -> Vec<usize> {
    let count = count.min(m);
    let mut v: Vec<usize> = (0..count).map(|i| i * m / count).collect();
    v.dedup();
    v
}

/// Runs every audit on `sys` with the operators `config` would build.
pub fn run_checks(sys: &TomographySystem, config: &RunConfig) -> CheckReport {
    let mut rep = CheckReport::default();
    let a = &sys.a;

    if sys.x_true.is_empty() {
        rep.push("consistency", true, "skipped: no reference solution");
    } else {
        let defect = sys.consistency_defect();
        let tol = CONSISTENCY_TOL * (1.0 + vector::norm(&sys.b));
        rep.push(
            "consistency",
            defect <= tol,
            format!("|A x_true - b| = {defect:.3e} (tol {tol:.3e})"),
        );
    }

    let stale = a.stale_row_norms();
    let empty = a.empty_rows();
    rep.push(
        "row-norms",
        stale.is_empty() && empty.is_empty(),
        format!("{} rows, {} stale cached norms, {} zero rows", a.rows(), stale.len(), empty.len()),
    );

    let art = art_operators(a, &sys.b);
    let drop = BlockPartition::build(a.rows(), config.r, config.blocks)
        .and_then(|p| drop_operators(a, &sys.b, &p, config.column_scope));

    match &drop {
        Ok(ops) => drop_checks(&mut rep, ops),
        Err(e) => rep.push("drop-build", false, e.to_string()),
    }

    match &art {
        Ok(ops) => {
            let (ne, firm) = probe(ops, |h: &Hyperplane| h.clone());
            rep.push(
                "art-probe",
                !ne.1 && !firm.1,
                format!("max ratio {:.12}, max firm excess {:.3e}", ne.0, firm.0),
            );
        }
        Err(e) => rep.push("art-build", false, e.to_string()),
    }

    let dry = match (config.family, &art, &drop) {
        (Family::Art, Ok(ops), _) => Some(dry_run(sys, ops, config)),
        (Family::Drop, _, Ok(ops)) => Some(dry_run(sys, ops, config)),
        _ => None,
    };
    match dry {
        Some(Ok((ok, detail))) => rep.push("almost-cyclic", ok, detail),
        Some(Err(e)) => rep.push("almost-cyclic", false, e),
        None => rep.push("almost-cyclic", false, "no operators to dispatch"),
    }
    rep
}

fn drop_checks(rep: &mut CheckReport, ops: &[DropBlockOperator]) {
    let stale: usize = ops.iter().map(|o| o.stale_weights().len()).sum();
    rep.push(
        "drop-weights",
        stale == 0,
        format!("{} blocks, {stale} stale row weights", ops.len()),
    );

    let mut worst: f64 = 0.0;
    let mut violated = Vec::new();
    let mut unavailable = Vec::new();
    let mut with_zero_cols = 0;
    let mut zero_cols = 0;
    for (t, op) in ops.iter().enumerate() {
        let cert = op.spectral_certificate(SpectralOptions::default());
        worst = worst.max(cert.estimate);
        if !cert.converged {
            unavailable.push(t);
        } else if !cert.certifies_unit_bound(SPECTRAL_SLACK) {
            violated.push(t);
        }
        if op.zero_columns() > 0 {
            with_zero_cols += 1;
            zero_cols += op.zero_columns();
        }
    }
    let mut detail = format!("max rho = {worst:.12}");
    if !violated.is_empty() {
        detail += &format!(", blocks above 1: {violated:?}");
    }
    if !unavailable.is_empty() {
        // Power iteration hit its cap; not a failure, the probes still apply.
        detail += &format!(", certificate unavailable for blocks {unavailable:?}");
    }
    if with_zero_cols > 0 {
        detail += &format!(
            "; {with_zero_cols} blocks have zero columns ({zero_cols} total, left unchanged by D = 0)"
        );
    }
    rep.push("spectral", violated.is_empty(), detail);

    let (ne, _) = probe(ops, |o: &DropBlockOperator| o.y_space());
    rep.push("drop-probe", !ne.1, format!("y-space max ratio {:.12}", ne.0));
}

/// `((max ratio, violated), (max firm excess, violated))` over a spread of
/// operators.
fn probe<'a, T, P, F>(ops: &'a [T], lift: F) -> ((f64, bool), (f64, bool))
where
    P: FixedPointOperator + 'a,
    F: Fn(&'a T) -> P,
{
    let mut ne = (0.0f64, false);
    let mut firm = (f64::NEG_INFINITY, false);
    for (n, i) in spread(ops.len(), PROBE_OPERATORS).into_iter().enumerate() {
        let op = lift(&ops[i]);
        let r = nonexpansive_probe(&op, PROBE_TRIALS, n as u64);
        ne = (ne.0.max(r.max_ratio), ne.1 || r.violation);
        let f = firm_nonexpansive_probe(&op, PROBE_TRIALS, 1000 + n as u64);
        firm = (firm.0.max(f.max_excess), firm.1 || f.violation);
    }
    (ne, firm)
}

/// Simulates enough node traffic to fill one almost-cyclicality window and
/// checks the applied operator stream against the merge bound.
fn dry_run<O: FixedPointOperator>(
    sys: &TomographySystem,
    ops: &[O],
    config: &RunConfig,
) -> Result<(bool, String), String> {
    let m = ops.len();
    let w = config.w.min(m);
    let pool = NodePool::strided(m, w, config.dispatch).map_err(|e| e.to_string())?;
    let timing = TimingModel::uniform(config.timing_min, config.timing_max, config.seed)
        .map_err(|e| e.to_string())?;
    let bound = pool.merge_bound(&timing, config.retry_cap);
    let epochs = ((bound + m) as f64 / m as f64).ceil() + 1.0;
    let mut opts = RunOptions::new(
        Mode::Asi,
        StepSchedule::auto(config.tau),
        StoppingRule::new(StopKind::MaxEpochs, 0.0, epochs),
    );
    opts.log = LogPolicy::None;
    opts.record_events = true;
    let cfg = NodeSimConfig {
        pool,
        timing,
        tau: config.tau,
        retry_cap: config.retry_cap,
    };
    let rec = simulate_nodes(ops, view(sys), &cfg, &opts).map_err(|e| e.to_string())?;
    let stream = rec.op_stream();
    if stream.len() < bound {
        return Err(format!(
            "run ended ({}) after {} applications, window needs {bound}",
            rec.summary.termination.as_str(),
            stream.len()
        ));
    }
    let ok = almost_cyclic_check(&stream, m, bound).map_err(|e| e.to_string())?;
    Ok((
        ok,
        format!("{} applications on {w} nodes, window M = {bound}", stream.len()),
    ))
}
