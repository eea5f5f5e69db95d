use std::time::Duration;

use asi::config::view;
use asi::threaded::{run_threaded, Fault, FaultKind, ThreadedConfig};
use asi_core::linear::{drop_operators, BlockPartition, BlockStrategy, ColumnScope};
use asi_core::problem::{make_random_system, RandomSystemSpec, TomographySystem};
use asi_core::{
    simulate_nodes, DispatchPolicy, LogPolicy, Mode, NodePool, NodeSimConfig, RunOptions,
    StepSchedule, StopKind, StoppingRule, Termination, TimingModel,
};

fn system() -> TomographySystem {
    make_random_system(RandomSystemSpec {
        rows: 60,
        cols: 20,
        nnz_per_row: 4,
        seed: 3,
    })
    .unwrap()
}

fn options(tau: usize) -> RunOptions {
    let mut o = RunOptions::new(
        Mode::Asi,
        StepSchedule::auto(tau),
        StoppingRule::new(StopKind::RelativeResidual, 1e-8, 2000.0),
    );
    o.log = LogPolicy::EveryStep;
    o
}

#[test]
fn single_worker_matches_the_simulator() {
    let s = system();
    let part = BlockPartition::build(60, 6, BlockStrategy::Strided).unwrap();
    let ops = drop_operators(&s.a, &s.b, &part, ColumnScope::Block).unwrap();
    let pool = NodePool::strided(6, 1, DispatchPolicy::PerNode).unwrap();
    let opts = options(0);
    let threaded = run_threaded(&ops, view(&s), &ThreadedConfig::new(pool.clone(), 0), &opts).unwrap();
    let cfg = NodeSimConfig {
        pool,
        timing: TimingModel::fixed(1).unwrap(),
        tau: 0,
        retry_cap: 0,
    };
    let sim = simulate_nodes(&ops, view(&s), &cfg, &opts).unwrap();
    assert_eq!(threaded.summary.termination, Termination::Converged);
    assert_eq!(threaded.x, sim.x);
    assert_eq!(threaded.summary.applications, sim.summary.applications);
    assert!(threaded.summary.wall_ms.is_some());
}

#[test]
fn delays_stay_within_the_cap() {
    let s = system();
    let part = BlockPartition::build(60, 12, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&s.a, &s.b, &part, ColumnScope::Block).unwrap();
    let pool = NodePool::strided(12, 3, DispatchPolicy::Global).unwrap();
    let mut opts = options(2);
    opts.record_events = true;
    let rec = run_threaded(&ops, view(&s), &ThreadedConfig::new(pool, 2), &opts).unwrap();
    assert_eq!(rec.summary.termination, Termination::Converged);
    assert!(rec.events.iter().all(|e| e.delay() <= 2));
    assert!(rec.summary.realized_tau <= 2);
}

#[test]
fn lost_output_with_no_retries_hits_the_cap() {
    let s = system();
    let part = BlockPartition::build(60, 4, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&s.a, &s.b, &part, ColumnScope::Block).unwrap();
    let mut cfg = ThreadedConfig::new(NodePool::strided(4, 2, DispatchPolicy::PerNode).unwrap(), 3);
    cfg.retry_cap = 0;
    cfg.task_timeout = Duration::from_millis(50);
    cfg.faults = vec![Fault {
        node: 0,
        after_tasks: 2,
        kind: FaultKind::DropOutput,
    }];
    // Only the cap can end this run.
    let mut opts = options(3);
    opts.stop = StoppingRule::new(StopKind::MaxEpochs, 0.0, 1e12);
    opts.log = LogPolicy::Checkpoints;
    let rec = run_threaded(&ops, view(&s), &cfg, &opts).unwrap();
    assert_eq!(rec.summary.termination, Termination::RetryCapExceeded);
    assert_eq!(rec.summary.failures, 1);
}

#[test]
fn crashed_worker_is_replaced() {
    let s = system();
    let part = BlockPartition::build(60, 8, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&s.a, &s.b, &part, ColumnScope::Block).unwrap();
    let mut cfg = ThreadedConfig::new(NodePool::strided(8, 2, DispatchPolicy::PerNode).unwrap(), 3);
    cfg.faults = vec![Fault {
        node: 1,
        after_tasks: 0,
        kind: FaultKind::Crash,
    }];
    let rec = run_threaded(&ops, view(&s), &cfg, &options(3)).unwrap();
    assert_eq!(rec.summary.termination, Termination::Converged);
    assert_eq!(rec.summary.failures, 1);
}

#[test]
fn operator_count_must_match_pool() {
    let s = system();
    let part = BlockPartition::build(60, 4, BlockStrategy::Contiguous).unwrap();
    let ops = drop_operators(&s.a, &s.b, &part, ColumnScope::Block).unwrap();
    let cfg = ThreadedConfig::new(NodePool::strided(5, 2, DispatchPolicy::PerNode).unwrap(), 1);
    assert!(run_threaded(&ops, view(&s), &cfg, &options(1)).is_err());
}
