//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line and
//! then asserts it. Run with `--nocapture` to see the lines.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use asi::config::{
    load_problem, solve_with, view, Algorithm, ExecMode, Family, LambdaSpec, Operators,
    ProblemSource, RunConfig, SimKind, StopConfig,
};
use asi::threaded::{run_threaded, Fault, FaultKind, ThreadedConfig};
use asi_core::linear::{
    art_operators, drop_operators, BlockPartition, BlockStrategy, ColumnScope, DropBlockOperator,
    Hyperplane, SpectralOptions,
};
use asi_core::operator::nonexpansive_probe;
use asi_core::problem::{make_random_system, RandomSystemSpec, TomographySystem};
use asi_core::sim::XiSettings;
use asi_core::step::DEFAULT_EPSILON;
use asi_core::{
    max_step_size, simulate_scripted, AsiState, ControlSequence, CsrMatrix, DelayModel,
    DispatchPolicy, FixedPointOperator, LogPolicy, Mode, NodePool, RunOptions, RunRecord,
    StepSchedule, StopKind, StoppingRule, Termination,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {tag} {}", detail.as_ref());
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn phantom() -> &'static TomographySystem {
    static SYS: OnceLock<TomographySystem> = OnceLock::new();
    SYS.get_or_init(|| {
        load_problem(&ProblemSource::Phantom {
            n: 64,
            angles: 90,
            detectors: 95,
            table: None,
        })
        .unwrap()
    })
}

fn random(rows: usize, cols: usize, nnz_per_row: usize, seed: u64) -> TomographySystem {
    make_random_system(RandomSystemSpec {
        rows,
        cols,
        nnz_per_row,
        seed,
    })
    .unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn criterion_1_km_reduction() {
    let start = Instant::now();
    let h = Hyperplane::from_dense(&[0.3, -1.2, 2.0, 0.0, 0.7], -0.4).unwrap();
    let mut st = AsiState::new(vec![1.0, 2.0, -3.0, 4.0, 0.5], 0, Mode::Asi);
    let mut km = st.x().to_vec();
    let mut p = vec![0.0; 5];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        st.step(&h, 0.5, 0).unwrap();
        // x ← (1 - λ) x + λ P(x)
        h.apply_into(&km, &mut p);
        for j in 0..5 {
            km[j] = 0.5 * km[j] + 0.5 * p[j];
        }
        let diff: f64 = st.x().iter().zip(&km).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = km.iter().map(|v| v * v).sum();
        worst = worst.max(diff.sqrt() / norm.sqrt().max(f64::MIN_POSITIVE));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-14 && secs < 1.0,
        format!("max relative deviation {worst:.2e} over 1000 iterates, {secs:.3} s"),
    );
}

#[test]
fn criterion_2_xi_monotone() {
    let start = Instant::now();
    let mut runs = 0;
    let mut steps = 0u64;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0u64;
    for seed in 0..50u64 {
        let rows = 40 + (seed as usize * 37) % 161;
        let cols = 10 + (seed as usize * 13) % 41;
        let sys = random(rows, cols, 3 + seed as usize % 3, seed);
        let ops = art_operators(&sys.a, &sys.b).unwrap();
        let control = ControlSequence::cyclic(ops.len()).unwrap();
        for tau in [0usize, 1, 2, 4] {
            let lambda = max_step_size(tau, DEFAULT_EPSILON);
            let mut opts = RunOptions::new(
                Mode::Asi,
                StepSchedule::constant(lambda, tau).unwrap(),
                StoppingRule::new(StopKind::TrueError, 1e-6, 40.0),
            );
            opts.log = LogPolicy::EveryStep;
            opts.xi = Some(XiSettings {
                mu: 1.0,
                epsilon: DEFAULT_EPSILON,
            });
            let delays = DelayModel::uniform_random(tau, 1000 + seed);
            let rec = simulate_scripted(&ops, view(&sys), &control, &delays, &opts).unwrap();
            let xi: Vec<f64> = rec.rows[1..]
                .iter()
                .filter(|r| r.delay.is_some())
                .map(|r| r.xi.unwrap())
                .collect();
            for w in xi.windows(2) {
                let inc = w[1] - w[0];
                worst = worst.max(inc);
                if inc > 1e-12 {
                    failures += 1;
                }
            }
            let stats = rec.summary.xi.unwrap();
            failures += stats.monotonicity_failures;
            worst = worst.max(stats.max_increase);
            steps += stats.steps_checked;
            runs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        failures == 0 && steps > 0 && secs < 30.0,
        format!("{runs} runs, {steps} steps, max increase {worst:.2e}, {failures} violations, {secs:.1} s"),
    );
}

fn criterion_3_config(family: Family) -> RunConfig {
    RunConfig {
        problem: ProblemSource::default(),
        alg: Algorithm::Asi,
        family,
        r: 40,
        blocks: BlockStrategy::Contiguous,
        column_scope: ColumnScope::Block,
        w: 4,
        tau: 4,
        lambda: LambdaSpec::Auto,
        unsafe_step: false,
        stop: StopConfig {
            kind: StopKind::RelativeResidual,
            threshold: 1e-6,
            max_epochs: 5000.0,
            operator_threshold: Some(1e-6),
        },
        mode: ExecMode::Simulate,
        sim: SimKind::Nodes,
        audit: true,
        ..RunConfig::default()
    }
}

struct PhantomRuns {
    art: RunRecord,
    drop: RunRecord,
    secs: f64,
}

/// The two phantom runs shared by criteria 3 and 9.
fn phantom_runs() -> &'static PhantomRuns {
    static RUNS: OnceLock<PhantomRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let sys = phantom();
        let start = Instant::now();
        let run = |family| {
            let cfg = criterion_3_config(family);
            let ops = Operators::build(&cfg, sys).unwrap();
            solve_with(&cfg, sys, &ops, &[]).unwrap()
        };
        let (art, drop) = std::thread::scope(|s| {
            let art = s.spawn(|| run(Family::Art));
            let drop = s.spawn(|| run(Family::Drop));
            (art.join().unwrap(), drop.join().unwrap())
        });
        PhantomRuns {
            art,
            drop,
            secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_3_phantom_convergence() {
    let runs = phantom_runs();
    let ok = |r: &RunRecord| {
        r.summary.relative_residual < 1e-6 && r.summary.max_operator_residual < 1e-6
    };
    let line = |name: &str, r: &RunRecord| {
        format!(
            "{name} {} at {:.0} epochs relres {:.2e} max op residual {:.2e}",
            r.summary.termination.as_str(),
            r.summary.epochs,
            r.summary.relative_residual,
            r.summary.max_operator_residual
        )
    };
    report(
        3,
        ok(&runs.art) && ok(&runs.drop) && runs.secs < 120.0,
        format!("{}; {}; {:.1} s", line("art", &runs.art), line("drop", &runs.drop), runs.secs),
    );
}

fn random_block(rows: usize, cols: usize, seed: u64) -> (CsrMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::new();
    for r in 0..rows {
        let forced = rng.random_range(0..cols);
        for c in 0..cols {
            if c == forced || rng.random_bool(0.2) {
                trip.push((r, c, rng.random_range(-2.0..2.0)));
            }
        }
    }
    let b = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    (CsrMatrix::from_triplets(rows, cols, trip).unwrap(), b)
}

/// Largest eigenvalue of `D^{1/2} A^T W A D^{1/2}` from a dense solver.
fn dense_radius(a: &CsrMatrix) -> f64 {
    let ad = DMatrix::from_row_slice(a.rows(), a.cols(), &a.to_dense());
    let w = DVector::from_iterator(a.rows(), ad.row_iter().map(|r| 1.0 / r.norm_squared()));
    let d = DVector::from_iterator(
        a.cols(),
        ad.column_iter().map(|c| {
            let s = c.iter().filter(|v| **v != 0.0).count();
            if s == 0 {
                0.0
            } else {
                (1.0 / s as f64).sqrt()
            }
        }),
    );
    let a_bar = &ad * DMatrix::from_diagonal(&d);
    let m = a_bar.transpose() * DMatrix::from_diagonal(&w) * &a_bar;
    SymmetricEigen::new(m).eigenvalues.max()
}

#[test]
fn criterion_4_drop_certificates() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut bad = Vec::new();
    for seed in 0..100u64 {
        let rows = 5 + (seed as usize * 7) % 56;
        let cols = 4 + (seed as usize * 13) % 57;
        let (a, b) = random_block(rows, cols, 500 + seed);
        let op = DropBlockOperator::from_block(a.clone(), b).unwrap();
        let cert = op.spectral_certificate(SpectralOptions::default());
        let dense = dense_radius(&a);
        worst = worst.max(cert.estimate);
        worst_gap = worst_gap.max((cert.estimate - dense).abs());
        if !cert.certifies_unit_bound(1e-8) || (cert.estimate - dense).abs() > 1e-8 {
            bad.push(format!("random {seed}"));
        }
    }
    let sys = phantom();
    let part = BlockPartition::build(sys.a.rows(), 40, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&sys.a, &sys.b, &part, ColumnScope::Block).unwrap();
    // Phantom blocks have tightly clustered top eigenvalues, so many of them
    // exhaust the default cap; those get a second, longer run.
    let mut extended = 0;
    let mut most_iterations = 0;
    for (t, op) in ops.iter().enumerate() {
        let mut cert = op.spectral_certificate(SpectralOptions::default());
        if !cert.converged {
            extended += 1;
            cert = op.spectral_certificate(SpectralOptions {
                max_iterations: 20_000,
                ..SpectralOptions::default()
            });
        }
        most_iterations = most_iterations.max(cert.iterations);
        worst = worst.max(cert.estimate);
        if !cert.certifies_unit_bound(1e-8) {
            bad.push(format!("phantom block {t} ({cert:?})"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        bad.is_empty() && secs < 30.0,
        format!(
            "140 blocks, max rho {worst:.12}, max dense gap {worst_gap:.1e}, \
             {extended} phantom blocks past the default cap (at most {most_iterations} iterations), \
             failures {bad:?}, {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_5_nonexpansive_probes() {
    const TRIALS: usize = 10_000;
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let mut probed = 0;
    let mut probe = |op: &dyn FixedPointOperator, seed: u64| {
        let r = nonexpansive_probe(op, TRIALS, seed);
        worst = worst.max(r.max_ratio);
        violations += usize::from(r.max_ratio > 1.0 + 1e-10);
        probed += 1;
    };
    for seed in 0..4u64 {
        let sys = random(60, 20, 4, seed);
        let hs = art_operators(&sys.a, &sys.b).unwrap();
        probe(&hs[seed as usize * 7], seed);
        let rows: Vec<usize> = (0..60).filter(|r| r % 4 == seed as usize).collect();
        let op = DropBlockOperator::new(&sys.a, &sys.b, &rows, ColumnScope::Block).unwrap();
        probe(&op.y_space(), 100 + seed);
    }
    let sys = phantom();
    probe(&Hyperplane::from_row(&sys.a, 1234, sys.b[1234]).unwrap(), 7);
    let part = BlockPartition::build(sys.a.rows(), 40, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&sys.a, &sys.b, &part, ColumnScope::Block).unwrap();
    probe(&ops[0].y_space(), 8);
    probe(&ops[39].y_space(), 9);
    report(
        5,
        violations == 0,
        format!("{probed} operators x {TRIALS} pairs, max ratio {worst:.14}"),
    );
}

#[test]
fn criterion_6_epoch_trend() {
    let start = Instant::now();
    let sys = phantom();
    let base = RunConfig {
        family: Family::Drop,
        r: 40,
        tau: 16,
        lambda: LambdaSpec::Value(0.2),
        unsafe_step: true,
        stop: StopConfig {
            kind: StopKind::TrueError,
            threshold: 2.0,
            max_epochs: 5000.0,
            operator_threshold: None,
        },
        timing_min: 8,
        timing_max: 12,
        dispatch: DispatchPolicy::PerNode,
        log: LogPolicy::None,
        ..RunConfig::default()
    };
    let ops = Operators::build(&base, sys).unwrap();
    let ws = [1usize, 2, 4, 8];
    let mut means = Vec::new();
    for alg in [Algorithm::Asi, Algorithm::Ekn] {
        let mut row = Vec::new();
        for &w in &ws {
            let mut total = 0.0;
            for seed in 0..5 {
                let cfg = RunConfig {
                    alg,
                    w,
                    seed,
                    ..base.clone()
                };
                let rec = solve_with(&cfg, sys, &ops, &[]).unwrap();
                assert_eq!(rec.summary.termination, Termination::Converged);
                total += rec.summary.epochs;
            }
            row.push(total / 5.0);
        }
        means.push(row);
    }
    let (asi, ekn) = (&means[0], &means[1]);
    let lo = asi.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = asi.iter().cloned().fold(0.0, f64::max);
    let asi_spread = (hi - lo) / lo;
    let ekn_growth = ekn[3] / ekn[0] - 1.0;
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        asi_spread < 0.25 && ekn_growth > 0.25 && secs < 300.0,
        format!(
            "asi epochs {asi:?} (spread {:.1}%), ekn epochs {ekn:?} (w=8 vs w=1 {:+.1}%), {secs:.1} s",
            100.0 * asi_spread,
            100.0 * ekn_growth
        ),
    );
}

#[test]
fn criterion_7_threaded_fault_tolerance() {
    let sys = random(1000, 250, 5, 42);
    let part = BlockPartition::build(1000, 20, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&sys.a, &sys.b, &part, ColumnScope::Block).unwrap();
    let tau = 4;
    let stop = StoppingRule::new(StopKind::RelativeResidual, 1e-6, 5000.0).with_operator_threshold(1e-6);
    let mut opts = RunOptions::new(Mode::Asi, StepSchedule::auto(tau), stop);
    opts.record_events = true;
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [FaultKind::Crash, FaultKind::DropOutput] {
        let mut cfg = ThreadedConfig::new(NodePool::strided(20, 4, DispatchPolicy::PerNode).unwrap(), tau);
        // The other nodes' blocks alone determine x, so a lost output must be
        // noticed well before the run would converge without it.
        cfg.task_timeout = Duration::from_millis(10);
        cfg.faults = vec![Fault {
            node: 1,
            after_tasks: 5,
            kind,
        }];
        let rec = run_threaded(&ops, view(&sys), &cfg, &opts).unwrap();
        let s = &rec.summary;
        let max_delay = rec.events.iter().map(|e| e.delay()).max().unwrap_or(0);
        let ok = rec.converged()
            && s.relative_residual < 1e-6
            && s.max_operator_residual < 1e-6
            && s.failures >= 1
            && max_delay <= tau
            && s.realized_tau <= tau;
        pass &= ok;
        lines.push(format!(
            "{kind:?}: {} at {:.0} epochs, relres {:.1e}, failures {}, max delay {max_delay} of {} events, {:.0} ms",
            s.termination.as_str(),
            s.epochs,
            s.relative_residual,
            s.failures,
            rec.events.len(),
            s.wall_ms.unwrap_or(f64::NAN)
        ));
    }
    report(7, pass, lines.join("; "));
}

fn cli_log(dir: &PathBuf, extra: &[&str]) -> Vec<u8> {
    let mut args = vec!["asi", "solve", "--log", "every-step", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let code = asi::cli::run(args);
    assert!(code == 0 || code == 6, "exit {code}");
    std::fs::read(dir.join("log.csv")).unwrap()
}

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 3] = [
        &["--family", "drop", "--r", "40", "--w", "4", "--tau", "4", "--max-epochs", "20"],
        &["--problem", "random", "--family", "art", "--w", "3", "--tau", "3", "--seed", "9"],
        &["--problem", "random", "--sim", "scripted", "--tau", "2", "--seed", "4"],
    ];
    let mut pass = true;
    let mut sizes = Vec::new();
    for (i, extra) in cases.iter().enumerate() {
        let a = cli_log(&tmp.path().join(format!("{i}a")), extra);
        let b = cli_log(&tmp.path().join(format!("{i}b")), extra);
        pass &= a == b && a.len() > 100;
        sizes.push(a.len());
    }
    report(8, pass, format!("3 configurations, identical log bytes ({sizes:?} bytes)"));
}

#[test]
fn criterion_9_inertial_term_audit() {
    let runs = phantom_runs();
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, r) in [("art", &runs.art), ("drop", &runs.drop)] {
        let a = r.summary.audit.unwrap();
        pass &= a.steps_audited > 0 && a.decomposition_failures == 0;
        lines.push(format!(
            "{name} {} audited steps, {} failures, max defect {} ulp",
            a.steps_audited, a.decomposition_failures, a.max_decomposition_defect
        ));
    }

    let sys = phantom();
    let mut cfg = criterion_3_config(Family::Drop);
    cfg.log = LogPolicy::EveryStep;
    cfg.stop.max_epochs = 10.0;
    let ops = Operators::build(&cfg, sys).unwrap();
    let rec = solve_with(&cfg, sys, &ops, &[]).unwrap();
    let a = rec.summary.audit.unwrap();
    pass &= a.steps_audited == rec.summary.applications && a.decomposition_failures == 0;
    lines.push(format!("every-step drop run {} steps audited", a.steps_audited));

    cfg.w = 1;
    cfg.tau = 0;
    let mut out = Vec::new();
    for alg in [Algorithm::Asi, Algorithm::Ekn] {
        cfg.alg = alg;
        out.push(solve_with(&cfg, sys, &ops, &[]).unwrap());
    }
    let same = bits(&out[0].x) == bits(&out[1].x) && out[0].rows == out[1].rows;
    pass &= same;
    lines.push(format!("w=1 tau=0 asi/ekn bitwise equal: {same}"));
    report(9, pass, lines.join("; "));
}
