//! Run configuration, problem loading and the solve driver shared by the
//! CLI subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use asi_core::linear::{
    art_operators, drop_operators, BlockPartition, BlockStrategy, ColumnScope, DropBlockOperator,
    Hyperplane,
};
use asi_core::problem::{
    make_phantom, make_projector, make_random_system, Geometry, RandomSystemSpec,
    TomographySystem,
};
use asi_core::sim::XiSettings;
use asi_core::step::StepKind;
use asi_core::{
    max_step_size, simulate_nodes, simulate_scripted, ControlSequence, DelayModel, DispatchPolicy,
    FixedPointOperator, LogPolicy, Mode, NodePool, NodeSimConfig, RunOptions, RunRecord,
    StepSchedule, StopKind, StoppingRule, SystemView, TimingModel,
};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::{log, matrix_market, pgm, table::EllipseTable, vector};
use crate::threaded::{run_threaded, Fault, ThreadedConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Phantom {
        n: usize,
        angles: usize,
        detectors: usize,
        table: Option<PathBuf>,
    },
    Random {
        rows: usize,
        cols: usize,
        nnz_per_row: usize,
        seed: u64,
    },
    Load {
        matrix: PathBuf,
        rhs: PathBuf,
        x_true: Option<PathBuf>,
    },
}

impl Default for ProblemSource {
    fn default() -> Self {
        ProblemSource::Phantom {
            n: 64,
            angles: 90,
            detectors: 95,
            table: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Asi,
    Ekn,
    /// Sequential Krasnoselskii-Mann sweep (`τ = 0`, one node).
    Km,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Art,
    #[default]
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Simulate,
    Threaded,
}

/// How simulate mode generates delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    /// Event-driven worker nodes with random computation times.
    #[default]
    Nodes,
    /// Cyclic control with uniformly random delays in `0..=τ`.
    Scripted,
}

/// `auto` or an explicit step size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LambdaSpec {
    #[default]
    Auto,
    Value(f64),
}

impl FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaSpec::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected `auto` or a number, got `{s}`"))?;
        Ok(LambdaSpec::Value(v))
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Auto => f.write_str("auto"),
            LambdaSpec::Value(v) => write!(f, "{v}"),
        }
    }
}

impl From<LambdaSpec> for String {
    fn from(l: LambdaSpec) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for LambdaSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub kind: StopKind,
    pub threshold: f64,
    pub max_epochs: f64,
    pub operator_threshold: Option<f64>,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            kind: StopKind::RelativeResidual,
            threshold: 1e-6,
            max_epochs: 5000.0,
            operator_threshold: None,
        }
    }
}

/// Everything that determines a run. Serialized verbatim into every
/// summary the run writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub alg: Algorithm,
    pub family: Family,
    pub r: usize,
    pub blocks: BlockStrategy,
    pub column_scope: ColumnScope,
    pub w: usize,
    pub tau: usize,
    pub lambda: LambdaSpec,
    #[serde(rename = "unsafe")]
    pub unsafe_step: bool,
    pub epsilon: f64,
    pub stop: StopConfig,
    pub seed: u64,
    pub mode: ExecMode,
    pub sim: SimKind,
    pub dispatch: DispatchPolicy,
    pub timing_min: u64,
    pub timing_max: u64,
    pub retry_cap: usize,
    pub log: LogPolicy,
    pub audit: bool,
    /// Track ξ with this weight (needs a known solution).
    pub xi_mu: Option<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSource::default(),
            alg: Algorithm::Asi,
            family: Family::Drop,
            r: 40,
            blocks: BlockStrategy::Contiguous,
            column_scope: ColumnScope::Block,
            w: 4,
            tau: 4,
            lambda: LambdaSpec::Auto,
            unsafe_step: false,
            epsilon: asi_core::step::DEFAULT_EPSILON,
            stop: StopConfig::default(),
            seed: 1,
            mode: ExecMode::Simulate,
            sim: SimKind::Nodes,
            dispatch: DispatchPolicy::PerNode,
            timing_min: 8,
            timing_max: 12,
            retry_cap: 100,
            log: LogPolicy::Checkpoints,
            audit: false,
            xi_mu: None,
            out: PathBuf::from("asi-out"),
        }
    }
}

impl RunConfig {
    /// Checks the module preconditions that do not need the problem.
    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::config(m));
        if self.alg == Algorithm::Km && (self.tau != 0 || self.w != 1) {
            return bad("--alg km is the synchronous case and needs --tau 0 --w 1".into());
        }
        if self.w == 0 {
            return bad("--w must be at least 1".into());
        }
        if self.family == Family::Drop && self.r == 0 {
            return bad("--r must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("--epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if let LambdaSpec::Value(l) = self.lambda {
            if !(l > 0.0 && l < 1.0) {
                return bad(format!("--lambda must lie in (0, 1), got {l}"));
            }
        }
        if self.unsafe_step && self.lambda == LambdaSpec::Auto {
            return bad("--unsafe needs an explicit --lambda value".into());
        }
        if self.timing_min == 0 || self.timing_max < self.timing_min {
            return bad("need 1 <= --timing-min <= --timing-max".into());
        }
        if !(self.stop.max_epochs > 0.0) {
            return bad("--max-epochs must be positive".into());
        }
        if self.stop.kind != StopKind::MaxEpochs && !(self.stop.threshold > 0.0) {
            return bad("--stop-threshold must be positive".into());
        }
        if let Some(mu) = self.xi_mu {
            if !(mu > 0.0) {
                return bad("--xi-mu must be positive".into());
            }
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        match self.alg {
            Algorithm::Ekn => Mode::Ekn,
            Algorithm::Asi | Algorithm::Km => Mode::Asi,
        }
    }

    pub fn schedule(&self) -> AppResult<StepSchedule> {
        let lambda = match self.lambda {
            LambdaSpec::Auto => max_step_size(self.tau, self.epsilon),
            LambdaSpec::Value(v) => v,
        };
        Ok(StepSchedule::new(
            StepKind::Constant(lambda),
            self.tau,
            self.epsilon,
            !self.unsafe_step,
        )?)
    }

    pub fn run_options(&self, with_solution: bool) -> AppResult<RunOptions> {
        let mut stop = StoppingRule::new(self.stop.kind, self.stop.threshold, self.stop.max_epochs);
        stop.operator_threshold = self.stop.operator_threshold;
        if stop.kind == StopKind::TrueError && !with_solution {
            return Err(AppError::config("true-error stopping needs a known solution"));
        }
        let mut opts = RunOptions::new(self.mode(), self.schedule()?, stop);
        opts.log = self.log;
        opts.audit = self.audit;
        opts.xi = match self.xi_mu {
            Some(_) if !with_solution => {
                return Err(AppError::config("ξ tracking needs a known solution"))
            }
            Some(mu) => Some(XiSettings {
                mu,
                epsilon: self.epsilon,
            }),
            None => None,
        };
        Ok(opts)
    }
}

/// Builds or loads the system named by `source`.
pub fn load_problem(source: &ProblemSource) -> AppResult<TomographySystem> {
    match source {
        ProblemSource::Phantom {
            n,
            angles,
            detectors,
            table,
        } => {
            let table = match table {
                Some(p) => EllipseTable::read(p)?,
                None => EllipseTable::bundled(),
            };
            let img = make_phantom(*n, &table.ellipses)?;
            Ok(make_projector(&img, &Geometry::parallel(*n, *angles, *detectors))?)
        }
        ProblemSource::Random {
            rows,
            cols,
            nnz_per_row,
            seed,
        } => Ok(make_random_system(RandomSystemSpec {
            rows: *rows,
            cols: *cols,
            nnz_per_row: *nnz_per_row,
            seed: *seed,
        })?),
        ProblemSource::Load { matrix, rhs, x_true } => {
            let a = matrix_market::read(matrix)?;
            let b = vector::read(rhs)?;
            if b.len() != a.rows() {
                return Err(AppError::config(format!(
                    "{} has {} entries, matrix has {} rows",
                    rhs.display(),
                    b.len(),
                    a.rows()
                )));
            }
            let cols = a.cols();
            let x = match x_true {
                Some(p) => vector::read(p)?,
                None => vec![0.0; cols],
            };
            if x.len() != cols {
                return Err(AppError::config(format!(
                    "solution has {} entries, matrix has {cols} columns",
                    x.len()
                )));
            }
            let mut sys = TomographySystem::from_parts(a, b, x)?;
            if x_true.is_none() {
                sys.x_true.clear();
            }
            Ok(sys)
        }
    }
}

/// `x_true` when the problem has one.
pub fn solution(sys: &TomographySystem) -> Option<&[f64]> {
    (!sys.x_true.is_empty()).then_some(&sys.x_true[..])
}

pub fn view(sys: &TomographySystem) -> SystemView<'_> {
    SystemView {
        a: &sys.a,
        b: &sys.b,
        x_true: solution(sys),
    }
}

pub enum Operators {
    Art(Vec<Hyperplane>),
    Drop(Vec<DropBlockOperator>),
}

impl Operators {
    pub fn build(config: &RunConfig, sys: &TomographySystem) -> AppResult<Self> {
        Ok(match config.family {
            Family::Art => Operators::Art(art_operators(&sys.a, &sys.b)?),
            Family::Drop => {
                let part = BlockPartition::build(sys.a.rows(), config.r, config.blocks)?;
                Operators::Drop(drop_operators(&sys.a, &sys.b, &part, config.column_scope)?)
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Operators::Art(v) => v.len(),
            Operators::Drop(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs `config` on `sys` with the given operators. `faults` only applies
/// in threaded mode.
pub fn solve_with(
    config: &RunConfig,
    sys: &TomographySystem,
    ops: &Operators,
    faults: &[Fault],
) -> AppResult<RunRecord> {
    config.validate()?;
    match ops {
        Operators::Art(v) => solve_generic(config, sys, v, faults),
        Operators::Drop(v) => solve_generic(config, sys, v, faults),
    }
}

fn solve_generic<O: FixedPointOperator + Sync>(
    config: &RunConfig,
    sys: &TomographySystem,
    ops: &[O],
    faults: &[Fault],
) -> AppResult<RunRecord> {
    let opts = config.run_options(solution(sys).is_some())?;
    let m = ops.len();
    if config.alg == Algorithm::Km {
        let control = ControlSequence::cyclic(m)?;
        return Ok(simulate_scripted(ops, view(sys), &control, &DelayModel::zero(), &opts)?);
    }
    if config.w > m {
        return Err(AppError::config(format!("--w {} exceeds the {m} operators", config.w)));
    }
    let pool = NodePool::strided(m, config.w, config.dispatch)?;
    match (config.mode, config.sim) {
        (ExecMode::Threaded, _) => {
            let mut cfg = ThreadedConfig::new(pool, config.tau);
            cfg.retry_cap = config.retry_cap;
            cfg.task_timeout = Duration::from_secs(5);
            cfg.faults = faults.to_vec();
            Ok(run_threaded(ops, view(sys), &cfg, &opts)?)
        }
        (ExecMode::Simulate, SimKind::Nodes) => {
            let cfg = NodeSimConfig {
                pool,
                timing: TimingModel::uniform(config.timing_min, config.timing_max, config.seed)?,
                tau: config.tau,
                retry_cap: config.retry_cap,
            };
            Ok(simulate_nodes(ops, view(sys), &cfg, &opts)?)
        }
        (ExecMode::Simulate, SimKind::Scripted) => {
            let control = ControlSequence::cyclic(m)?;
            let delays = DelayModel::uniform_random(config.tau, config.seed);
            Ok(simulate_scripted(ops, view(sys), &control, &delays, &opts)?)
        }
    }
}

/// Loads the problem, builds operators and runs.
pub fn solve(config: &RunConfig) -> AppResult<(TomographySystem, RunRecord)> {
    config.validate()?;
    let sys = load_problem(&config.problem)?;
    let ops = Operators::build(config, &sys)?;
    let record = solve_with(config, &sys, &ops, &[])?;
    Ok((sys, record))
}

/// Writes `log.csv`, `summary.json` and `x.txt` under `dir`.
pub fn write_run(dir: &Path, config: &RunConfig, record: &RunRecord) -> AppResult<()> {
    log::write_csv(&dir.join("log.csv"), &record.rows)?;
    log::SummaryDoc::new(config, record.summary.clone()).write(&dir.join("summary.json"))?;
    vector::write(&dir.join("x.txt"), &record.x)
}

/// Writes the image as a graymap when the problem is a square phantom.
pub fn write_image(path: &Path, sys: &TomographySystem, x: &[f64]) -> AppResult<()> {
    let Some(g) = &sys.geometry else { return Ok(()) };
    let full = sys.embed(x, g.n * g.n);
    pgm::write(path, g.n, g.n, &full)
}
