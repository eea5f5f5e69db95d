//! Shared-memory master/worker engine.
//!
//! The coordinator thread owns the iterate. Each worker receives an
//! immutable snapshot of `x` together with an operator index, computes
//! `S_i(snapshot)` and sends it back tagged with the version it read. The
//! coordinator drains every reply that has arrived, applies them in node
//! order, and refuses any reply whose read version is more than `τ` behind;
//! the node then recomputes the same operator from a fresh snapshot. A node
//! only gets new work after its previous output was applied.
//!
//! Worker failures are detected in two ways: the worker thread has exited
//! (crash) or its output did not arrive within `task_timeout` (lost
//! transmission). Either way the pending output is dropped, a crashed
//! worker is respawned, and the same operator is dispatched again.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, Scope, ScopedJoinHandle};
use std::time::{Duration, Instant};

use asi_core::sim::{Dispatcher, Driver, Flow};
use asi_core::{
    FixedPointOperator, NodePool, Result, RunOptions, RunRecord, SparseVec, SystemView, Termination,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// The worker thread exits without answering.
    Crash,
    /// The worker computes the output but it never reaches the coordinator.
    DropOutput,
}

/// Injects one failure on `node` when it receives its task number
/// `after_tasks` (counting from zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub node: usize,
    pub after_tasks: u64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone)]
pub struct ThreadedConfig {
    pub pool: NodePool,
    pub tau: usize,
    /// Consecutive refusals or failures allowed per node.
    pub retry_cap: usize,
    /// Outputs older than this are treated as lost.
    pub task_timeout: Duration,
    pub faults: Vec<Fault>,
}

impl ThreadedConfig {
    pub fn new(pool: NodePool, tau: usize) -> Self {
        Self {
            pool,
            tau,
            retry_cap: 100,
            task_timeout: Duration::from_secs(5),
            faults: Vec::new(),
        }
    }
}

struct Task {
    id: u64,
    op: usize,
    read: usize,
    snapshot: Arc<Vec<f64>>,
}

struct Reply {
    node: usize,
    id: u64,
    op: usize,
    read: usize,
    residual: SparseVec,
}

struct Pending {
    id: u64,
    op: usize,
    sent: Instant,
}

struct Node<'scope> {
    tx: Sender<Task>,
    handle: ScopedJoinHandle<'scope, ()>,
    pending: Option<Pending>,
    strikes: usize,
}

fn worker<O: FixedPointOperator>(
    node: usize,
    ops: &[O],
    rx: Receiver<Task>,
    tx: Sender<Reply>,
    fault: Option<Fault>,
) {
    let mut received = 0u64;
    for task in rx {
        let fire = fault.filter(|f| f.after_tasks == received);
        received += 1;
        if let Some(f) = fire {
            match f.kind {
                FaultKind::Crash => return,
                FaultKind::DropOutput => continue,
            }
        }
        let mut residual = SparseVec::new();
        ops[task.op].residual_into(&task.snapshot, &mut residual);
        let reply = Reply {
            node,
            id: task.id,
            op: task.op,
            read: task.read,
            residual,
        };
        if tx.send(reply).is_err() {
            return;
        }
    }
}

struct Coordinator<'scope, 'env, O> {
    scope: &'scope Scope<'scope, 'env>,
    ops: &'env [O],
    reply_tx: Sender<Reply>,
    nodes: Vec<Node<'scope>>,
    next_id: u64,
    snapshot: Option<(usize, Arc<Vec<f64>>)>,
}

impl<'scope, 'env, O: FixedPointOperator + Sync> Coordinator<'scope, 'env, O> {
    fn spawn(&self, node: usize, fault: Option<Fault>) -> (Sender<Task>, ScopedJoinHandle<'scope, ()>) {
        let (tx, rx) = mpsc::channel();
        let reply_tx = self.reply_tx.clone();
        let ops = self.ops;
        let handle = self.scope.spawn(move || worker(node, ops, rx, reply_tx, fault));
        (tx, handle)
    }

    fn dispatch(&mut self, node: usize, op: usize, driver: &Driver<'_, O>) {
        let k = driver.k();
        let snap = match &self.snapshot {
            Some((v, s)) if *v == k => Arc::clone(s),
            _ => {
                let s = Arc::new(driver.state().x().to_vec());
                self.snapshot = Some((k, Arc::clone(&s)));
                s
            }
        };
        let id = self.next_id;
        self.next_id += 1;
        let n = &mut self.nodes[node];
        n.pending = Some(Pending {
            id,
            op,
            sent: Instant::now(),
        });
        // A send only fails if the worker is gone; the crash check will
        // notice and re-dispatch.
        let _ = n.tx.send(Task {
            id,
            op,
            read: k,
            snapshot: snap,
        });
    }
}

/// Runs the master/worker iteration on real threads. Not bit-reproducible:
/// arrival order depends on scheduling.
pub fn run_threaded<O: FixedPointOperator + Sync>(
    ops: &[O],
    sys: SystemView<'_>,
    cfg: &ThreadedConfig,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if ops.len() != cfg.pool.m() {
        return Err(asi_core::Error::DimensionMismatch {
            expected: cfg.pool.m(),
            found: ops.len(),
        });
    }
    let start = Instant::now();
    let w = cfg.pool.w();
    let mut driver = Driver::new(ops, sys, opts, cfg.tau, 0)?;
    let mut dispatcher = Dispatcher::new(&cfg.pool);
    let poll = (cfg.task_timeout / 4).clamp(Duration::from_micros(200), Duration::from_millis(20));

    let (termination, driver) = thread::scope(|scope| -> Result<(Termination, Driver<'_, O>)> {
        let (reply_tx, reply_rx) = mpsc::channel::<Reply>();
        let mut co = Coordinator {
            scope,
            ops,
            reply_tx,
            nodes: Vec::with_capacity(w),
            next_id: 0,
            snapshot: None,
        };
        for l in 0..w {
            let fault = cfg.faults.iter().copied().find(|f| f.node == l);
            let (tx, handle) = co.spawn(l, fault);
            co.nodes.push(Node {
                tx,
                handle,
                pending: None,
                strikes: 0,
            });
        }
        for l in 0..w {
            let op = dispatcher.next_op(l);
            co.dispatch(l, op, &driver);
        }

        let mut theta = 0u64;
        let mut batch = Vec::new();
        let stop = 'run: loop {
            batch.clear();
            match reply_rx.recv_timeout(poll) {
                Ok(r) => batch.push(r),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => unreachable!("coordinator holds a sender"),
            }
            while let Ok(r) = reply_rx.try_recv() {
                batch.push(r);
            }

            for l in 0..w {
                let Some(p) = &co.nodes[l].pending else { continue };
                let crashed = co.nodes[l].handle.is_finished();
                if !crashed && p.sent.elapsed() <= cfg.task_timeout {
                    continue;
                }
                // Prefer an output that did arrive over a timeout verdict.
                if !crashed && batch.iter().any(|r| r.node == l && r.id == p.id) {
                    continue;
                }
                let op = p.op;
                driver.note_failure();
                co.nodes[l].strikes += 1;
                if co.nodes[l].strikes > cfg.retry_cap {
                    break 'run Termination::RetryCapExceeded;
                }
                if crashed {
                    let (tx, handle) = co.spawn(l, None);
                    co.nodes[l].tx = tx;
                    co.nodes[l].handle = handle;
                }
                co.dispatch(l, op, &driver);
            }

            if batch.is_empty() {
                continue;
            }
            theta += 1;
            batch.sort_by_key(|r| r.node);
            for r in batch.drain(..) {
                let current = co.nodes[r.node].pending.as_ref().map(|p| p.id);
                if current != Some(r.id) {
                    // Output of a task already written off as lost.
                    continue;
                }
                let delay = driver.k() - r.read;
                if delay > cfg.tau {
                    driver.note_refusal();
                    co.nodes[r.node].strikes += 1;
                    if co.nodes[r.node].strikes > cfg.retry_cap {
                        break 'run Termination::RetryCapExceeded;
                    }
                    co.dispatch(r.node, r.op, &driver);
                    continue;
                }
                let logged = driver.rows().len();
                let flow = driver.step(r.op, delay, Some(r.node), Some(theta), Some(&r.residual))?;
                if driver.rows().len() > logged {
                    if let Some(row) = driver.last_row_mut() {
                        row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                    }
                }
                co.nodes[r.node].strikes = 0;
                co.nodes[r.node].pending = None;
                if let Flow::Stop(t) = flow {
                    break 'run t;
                }
                let op = dispatcher.next_op(r.node);
                co.dispatch(r.node, op, &driver);
            }
        };
        // Dropping the task senders and the reply receiver lets every
        // worker exit before the scope joins them.
        drop(co);
        drop(reply_rx);
        Ok((stop, driver))
    })?;

    let mut record = driver.finish(termination, None);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    record.summary.wall_ms = Some(ms);
    if let Some(row) = record.rows.last_mut() {
        row.wall_ms.get_or_insert(ms);
    }
    Ok(record)
}
