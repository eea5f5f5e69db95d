//! File formats: Matrix Market matrices, plain-text and little-endian
//! binary vectors, 8-bit graymaps, CSV run logs and JSON summaries.

pub mod log;
pub mod matrix_market;
pub mod pgm;
pub mod table;
pub mod vector;

use std::fs;
use std::path::Path;

use crate::error::{AppError, AppResult};

pub(crate) fn read_to_string(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}
