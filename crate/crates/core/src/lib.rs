//! Asynchronous sequential inertial (ASI) iteration for common fixed-point
//! problems, together with the row-action (Kaczmarz/ART) and DROP operator
//! families for sparse consistent linear systems.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! computation: operators, step rules, the ξ monitor, block partitions,
//! spectral certificates, test-problem generators and a deterministic
//! discrete-event simulator of a master/worker execution. File formats and
//! the threaded engine live in the companion `asi` crate.
//!
//! Indices are zero-based throughout (operator `0..m`, rows `0..M`), while
//! the iteration counter `k` starts at 1 so that `x^1` is the initial point.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod asi;
pub mod control;
pub mod delay;
mod error;
pub mod linear;
pub mod operator;
pub mod problem;
pub mod record;
pub mod sim;
pub mod sparse;
pub mod step;
pub mod vector;
pub mod xi;

pub use asi::{asi_step, AsiState, Mode, StepBreakdown};
pub use control::{almost_cyclic_check, ControlSequence};
pub use delay::DelayModel;
pub use error::{Error, Result};
pub use operator::{relax, residual, FixedPointOperator, Relaxed, SparseVec};
pub use record::{realized_tau, LogRow, RunRecord, RunSummary, Termination};
pub use sparse::CsrMatrix;
pub use step::{max_step_size, StepSchedule};
pub use xi::XiMonitor;
pub use sim::{
    simulate_nodes, simulate_scripted, DispatchPolicy, LogPolicy, NodePool, NodeSimConfig,
    RunOptions, StopKind, StoppingRule, SystemView, TimingModel,
};
