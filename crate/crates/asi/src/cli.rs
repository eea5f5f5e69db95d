//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use asi_core::linear::{BlockStrategy, ColumnScope};
use asi_core::problem::{make_phantom, make_projector, Geometry};
use asi_core::{DispatchPolicy, LogPolicy, RunRecord, StopKind, Termination};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::check::run_checks;
use crate::config::{
    load_problem, solve_with, write_image, write_run, Algorithm, ExecMode, Family, LambdaSpec,
    Operators, ProblemSource, RunConfig, SimKind, StopConfig,
};
use crate::error::{exit, termination_code, AppError, AppResult};
use crate::io::{self, matrix_market, pgm, table::EllipseTable, vector};
use crate::threaded::{Fault, FaultKind};

pub const OUTPUT_DIR_ENV: &str = "ASI_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "asi-out";

#[derive(Debug, Parser)]
#[command(name = "asi", version, about = "Asynchronous inertial fixed-point solver for sparse linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one system and write log.csv, summary.json and x.txt.
    Solve(SolveArgs),
    /// Sweep node counts for ASI and EKN and tabulate time and speedup.
    Bench(BenchArgs),
    /// Audit a system and its operators without solving.
    Check(CheckArgs),
    /// Write the phantom test problem to disk.
    Phantom(PhantomArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// phantom, random, or load (needs --matrix and --rhs).
    #[arg(long, default_value = "phantom")]
    pub problem: String,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 90)]
    pub angles: usize,
    #[arg(long, default_value_t = 95)]
    pub detectors: usize,
    /// Ellipse table (JSON); the bundled modified Shepp-Logan otherwise.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub rows: usize,
    #[arg(long, default_value_t = 50)]
    pub cols: usize,
    #[arg(long, default_value_t = 5)]
    pub nnz_per_row: usize,
    #[arg(long, default_value_t = 0)]
    pub problem_seed: u64,
    /// Matrix Market file.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Right-hand side (text, or little-endian f64 if the name ends in .bin).
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    #[arg(long)]
    pub x_true: Option<PathBuf>,
}

impl ProblemArgs {
    pub fn source(&self) -> AppResult<ProblemSource> {
        match self.problem.as_str() {
            "phantom" => Ok(ProblemSource::Phantom {
                n: self.n,
                angles: self.angles,
                detectors: self.detectors,
                table: self.table.clone(),
            }),
            "random" => Ok(ProblemSource::Random {
                rows: self.rows,
                cols: self.cols,
                nnz_per_row: self.nnz_per_row,
                seed: self.problem_seed,
            }),
            "load" => match (&self.matrix, &self.rhs) {
                (Some(m), Some(r)) => Ok(ProblemSource::Load {
                    matrix: m.clone(),
                    rhs: r.clone(),
                    x_true: self.x_true.clone(),
                }),
                _ => Err(AppError::config("--problem load needs --matrix and --rhs")),
            },
            other => Err(AppError::config(format!(
                "unknown problem `{other}` (phantom, random, load)"
            ))),
        }
    }
}

fn parse_stop(s: &str) -> Result<StopKind, String> {
    match s {
        "true-error" => Ok(StopKind::TrueError),
        "residual" => Ok(StopKind::Residual),
        "relative-residual" => Ok(StopKind::RelativeResidual),
        "max-epochs" => Ok(StopKind::MaxEpochs),
        _ => Err("expected true-error, residual, relative-residual or max-epochs".into()),
    }
}

fn parse_blocks(s: &str) -> Result<BlockStrategy, String> {
    match s {
        "contiguous" => Ok(BlockStrategy::Contiguous),
        "strided" => Ok(BlockStrategy::Strided),
        _ => match s.strip_prefix("overlapping:") {
            Some(k) => k
                .parse()
                .map(|overlap| BlockStrategy::Overlapping { overlap })
                .map_err(|_| format!("bad overlap in `{s}`")),
            None => Err("expected contiguous, strided or overlapping:<rows>".into()),
        },
    }
}

fn parse_scope(s: &str) -> Result<ColumnScope, String> {
    match s {
        "block" => Ok(ColumnScope::Block),
        "global" => Ok(ColumnScope::Global),
        _ => Err("expected block or global".into()),
    }
}

fn parse_dispatch(s: &str) -> Result<DispatchPolicy, String> {
    match s {
        "per-node" => Ok(DispatchPolicy::PerNode),
        "global" => Ok(DispatchPolicy::Global),
        _ => Err("expected per-node or global".into()),
    }
}

fn parse_log(s: &str) -> Result<LogPolicy, String> {
    match s {
        "none" => Ok(LogPolicy::None),
        "checkpoints" => Ok(LogPolicy::Checkpoints),
        "every-step" => Ok(LogPolicy::EveryStep),
        _ => Err("expected none, checkpoints or every-step".into()),
    }
}

/// `node:after:crash` or `node:after:drop`.
fn parse_fault(s: &str) -> Result<Fault, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [node, after, kind] = parts[..] else {
        return Err("expected node:after:crash|drop".into());
    };
    let kind = match kind {
        "crash" => FaultKind::Crash,
        "drop" => FaultKind::DropOutput,
        _ => return Err(format!("unknown fault kind `{kind}`")),
    };
    Ok(Fault {
        node: node.parse().map_err(|_| format!("bad node `{node}`"))?,
        after_tasks: after.parse().map_err(|_| format!("bad task count `{after}`"))?,
        kind,
    })
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "asi")]
    pub alg: Algorithm,
    #[arg(long, value_enum, default_value = "drop")]
    pub family: Family,
    /// Number of DROP blocks.
    #[arg(long, default_value_t = 40)]
    pub r: usize,
    #[arg(long, value_parser = parse_blocks, default_value = "contiguous")]
    pub blocks: BlockStrategy,
    #[arg(long, value_parser = parse_scope, default_value = "block")]
    pub column_scope: ColumnScope,
    /// Worker nodes.
    #[arg(long, default_value_t = 4)]
    pub w: usize,
    /// Staleness cap.
    #[arg(long, default_value_t = 4)]
    pub tau: usize,
    /// `auto` or a value in (0, 1).
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaSpec,
    /// Use --lambda as given even above the step bound for --tau.
    #[arg(long = "unsafe")]
    pub unsafe_step: bool,
    #[arg(long, default_value_t = asi_core::step::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_parser = parse_stop, default_value = "relative-residual")]
    pub stop: StopKind,
    #[arg(long, default_value_t = 1e-6)]
    pub stop_threshold: f64,
    #[arg(long, default_value_t = 5000.0)]
    pub max_epochs: f64,
    /// Also require max_i |x - T_i x| below this to stop.
    #[arg(long)]
    pub operator_threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "simulate")]
    pub mode: ExecMode,
    #[arg(long, value_enum, default_value = "nodes")]
    pub sim: SimKind,
    #[arg(long, value_parser = parse_dispatch, default_value = "per-node")]
    pub dispatch: DispatchPolicy,
    #[arg(long, default_value_t = 8)]
    pub timing_min: u64,
    #[arg(long, default_value_t = 12)]
    pub timing_max: u64,
    #[arg(long, default_value_t = 100)]
    pub retry_cap: usize,
    #[arg(long, value_parser = parse_log, default_value = "checkpoints")]
    pub log: LogPolicy,
    /// Check the update decomposition and staleness bound on logged steps.
    #[arg(long)]
    pub audit: bool,
    /// Track ξ with this weight.
    #[arg(long)]
    pub xi_mu: Option<f64>,
    /// Injected worker fault in threaded mode, `node:after:crash|drop`.
    #[arg(long = "fault", value_parser = parse_fault)]
    pub faults: Vec<Fault>,
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn config(&self) -> AppResult<RunConfig> {
        let cfg = RunConfig {
            problem: self.problem.source()?,
            alg: self.alg,
            family: self.family,
            r: self.r,
            blocks: self.blocks,
            column_scope: self.column_scope,
            w: self.w,
            tau: self.tau,
            lambda: self.lambda,
            unsafe_step: self.unsafe_step,
            epsilon: self.epsilon,
            stop: StopConfig {
                kind: self.stop,
                threshold: self.stop_threshold,
                max_epochs: self.max_epochs,
                operator_threshold: self.operator_threshold,
            },
            seed: self.seed,
            mode: self.mode,
            sim: self.sim,
            dispatch: self.dispatch,
            timing_min: self.timing_min,
            timing_max: self.timing_max,
            retry_cap: self.retry_cap,
            log: self.log,
            audit: self.audit,
            xi_mu: self.xi_mu,
            out: self.out.clone(),
        };
        cfg.validate()?;
        if !self.faults.is_empty() && cfg.mode != ExecMode::Threaded {
            return Err(AppError::config("--fault only applies to --mode threaded"));
        }
        if let Some(f) = self.faults.iter().find(|f| f.node >= cfg.w) {
            return Err(AppError::config(format!("--fault names node {} of {}", f.node, cfg.w)));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Node counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub ws: Vec<usize>,
    /// Trials per node count; trial t uses seed --seed + t.
    #[arg(long, default_value_t = 5)]
    pub trials: u64,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 90)]
    pub angles: usize,
    #[arg(long, default_value_t = 95)]
    pub detectors: usize,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> AppResult<i32> {
    match cmd {
        Command::Solve(a) => solve_cmd(&a),
        Command::Bench(a) => bench_cmd(&a),
        Command::Check(a) => check_cmd(&a),
        Command::Phantom(a) => phantom_cmd(&a),
    }
}

/// Exit code for a finished run: the termination code, or the audit code
/// when a converged run failed its audit.
pub fn run_exit_code(record: &RunRecord) -> i32 {
    let s = &record.summary;
    let audit_failed = s
        .audit
        .is_some_and(|a| a.decomposition_failures > 0 || a.staleness_bound_failures > 0);
    let xi_failed = s
        .xi
        .is_some_and(|x| x.monotonicity_failures > 0 || x.bound_failures > 0);
    match s.termination {
        Termination::Converged if audit_failed || xi_failed => exit::AUDIT_FAILED,
        t => termination_code(t),
    }
}

fn solve_cmd(a: &SolveArgs) -> AppResult<i32> {
    let cfg = a.run.config()?;
    let sys = load_problem(&cfg.problem)?;
    let ops = Operators::build(&cfg, &sys)?;
    let record = solve_with(&cfg, &sys, &ops, &a.run.faults)?;
    write_run(&cfg.out, &cfg, &record)?;
    write_image(&cfg.out.join("x.pgm"), &sys, &record.x)?;
    let s = &record.summary;
    println!(
        "{} after {:.2} epochs: relres {:.3e}, max op residual {:.3e}{}, realized tau {}",
        s.termination.as_str(),
        s.epochs,
        s.relative_residual,
        s.max_operator_residual,
        s.true_error.map(|e| format!(", error {e:.3e}")).unwrap_or_default(),
        s.realized_tau,
    );
    Ok(run_exit_code(&record))
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    alg: &'static str,
    w: usize,
    trial: u64,
    seed: u64,
    termination: String,
    epochs: f64,
    /// Simulated clock at the end of the run, or wall time in ms when
    /// threaded.
    time: f64,
}

fn run_time(cfg: &RunConfig, record: &RunRecord) -> f64 {
    match cfg.mode {
        ExecMode::Threaded => record.summary.wall_ms.unwrap_or(f64::NAN),
        ExecMode::Simulate => record
            .rows
            .iter()
            .rev()
            .find_map(|r| r.theta)
            .map_or(record.summary.applications as f64, |t| t as f64),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn bench_cmd(a: &BenchArgs) -> AppResult<i32> {
    let base = a.run.config()?;
    if a.ws.is_empty() || a.trials == 0 {
        return Err(AppError::config("--ws and --trials must be nonempty"));
    }
    if base.alg == Algorithm::Km {
        return Err(AppError::config("bench compares asi and ekn; drop --alg km"));
    }
    let sys = load_problem(&base.problem)?;
    let ops = Operators::build(&base, &sys)?;
    let mut rows = Vec::new();
    let mut all_converged = true;
    for alg in [Algorithm::Asi, Algorithm::Ekn] {
        for &w in &a.ws {
            for trial in 0..a.trials {
                let mut cfg = base.clone();
                cfg.alg = alg;
                cfg.w = w;
                cfg.seed = base.seed + trial;
                cfg.log = LogPolicy::Checkpoints;
                let alg_name = if alg == Algorithm::Asi { "asi" } else { "ekn" };
                let row = match solve_with(&cfg, &sys, &ops, &[]) {
                    Ok(rec) => {
                        all_converged &= rec.converged();
                        BenchRow {
                            alg: alg_name,
                            w,
                            trial,
                            seed: cfg.seed,
                            termination: rec.summary.termination.as_str().to_string(),
                            epochs: rec.summary.epochs,
                            time: run_time(&cfg, &rec),
                        }
                    }
                    Err(e) => {
                        eprintln!("{alg_name} w={w} trial {trial}: {e}");
                        all_converged = false;
                        BenchRow {
                            alg: alg_name,
                            w,
                            trial,
                            seed: cfg.seed,
                            termination: format!("error: {e}"),
                            epochs: f64::NAN,
                            time: f64::NAN,
                        }
                    }
                };
                rows.push(row);
            }
        }
    }

    let mut long = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        long.serialize(r)?;
    }
    let bytes = long.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    io::write_bytes(&base.out.join("bench.csv"), &bytes)?;

    let mut table = String::from("row");
    for w in &a.ws {
        let _ = write!(table, ",w{w}");
    }
    table.push('\n');
    for alg in ["asi", "ekn"] {
        let stat = |w: usize, f: fn(&BenchRow) -> f64| {
            let v: Vec<f64> = rows.iter().filter(|r| r.alg == alg && r.w == w).map(f).collect();
            mean(&v)
        };
        let t0 = stat(a.ws[0], |r| r.time);
        let lines: [(&str, Box<dyn Fn(usize) -> f64>); 3] = [
            ("time", Box::new(|w| stat(w, |r| r.time))),
            ("epochs", Box::new(|w| stat(w, |r| r.epochs))),
            ("speedup", Box::new(|w| t0 / stat(w, |r| r.time))),
        ];
        for (name, f) in lines {
            table.push_str(&format!("{alg} {name}"));
            for &w in &a.ws {
                let _ = write!(table, ",{:.4}", f(w));
            }
            table.push('\n');
        }
    }
    io::write_bytes(&base.out.join("table.csv"), table.as_bytes())?;
    print!("{table}");
    Ok(if all_converged { exit::OK } else { exit::NOT_CONVERGED })
}

fn check_cmd(a: &CheckArgs) -> AppResult<i32> {
    let cfg = a.run.config()?;
    let sys = load_problem(&cfg.problem)?;
    let report = run_checks(&sys, &cfg);
    print!("{report}");
    Ok(if report.passed() { exit::OK } else { exit::AUDIT_FAILED })
}

#[derive(Serialize)]
struct GeometryDoc<'a> {
    geometry: &'a Geometry,
    rows: usize,
    cols: usize,
    nnz: usize,
    /// Original ray index of each kept row.
    row_map: &'a [usize],
    /// Original pixel index of each kept column.
    col_map: &'a [usize],
}

/// Writes `phantom.pgm`, `A.mtx`, `b.txt`, `x_true.txt` and
/// `geometry.json` into `out`.
pub fn write_phantom(out: &Path, n: usize, angles: usize, detectors: usize, table: &EllipseTable) -> AppResult<()> {
    let img = make_phantom(n, &table.ellipses)?;
    let sys = make_projector(&img, &Geometry::parallel(n, angles, detectors))?;
    pgm::write(&out.join("phantom.pgm"), n, n, img.values())?;
    matrix_market::write(&out.join("A.mtx"), &sys.a)?;
    vector::write(&out.join("b.txt"), &sys.b)?;
    vector::write(&out.join("x_true.txt"), &sys.x_true)?;
    let doc = GeometryDoc {
        geometry: sys.geometry.as_ref().expect("projector sets geometry"),
        rows: sys.a.rows(),
        cols: sys.a.cols(),
        nnz: sys.a.nnz(),
        row_map: &sys.row_map,
        col_map: &sys.col_map,
    };
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    io::write_bytes(&out.join("geometry.json"), json.as_bytes())
}

fn phantom_cmd(a: &PhantomArgs) -> AppResult<i32> {
    let table = match &a.table {
        Some(p) => EllipseTable::read(p)?,
        None => EllipseTable::bundled(),
    };
    write_phantom(&a.out, a.n, a.angles, a.detectors, &table)?;
    println!("wrote phantom problem to {}", a.out.display());
    Ok(exit::OK)
}
