//! Ellipse tables for the phantom generator, stored as JSON.

use std::path::Path;

use asi_core::problem::Ellipse;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// The bundled modified Shepp-Logan table.
pub const BUNDLED: &str = include_str!("../../data/shepp_logan_modified.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseTable {
    pub name: String,
    pub version: u32,
    #[serde(default)]
    pub coordinates: String,
    pub ellipses: Vec<Ellipse>,
}

impl EllipseTable {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled ellipse table parses")
    }

    pub fn read(path: &Path) -> AppResult<Self> {
        let table: Self = serde_json::from_str(&super::read_to_string(path)?)?;
        if table.ellipses.is_empty() {
            return Err(AppError::config(format!("{}: ellipse table is empty", path.display())));
        }
        Ok(table)
    }
}
