//! File formats, a threaded master/worker engine and the `asi` command-line
//! harness built on `asi-core`.

pub mod check;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod threaded;

pub use error::{exit, AppError, AppResult};
