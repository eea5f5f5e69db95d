//! Run logs as CSV and run summaries as JSON.

use std::path::Path;

use asi_core::{LogRow, RunSummary};
use serde::{Deserialize, Serialize};

use crate::error::AppResult;

/// CSV header, in column order.
pub const COLUMNS: [&str; 10] = [
    "k",
    "epoch",
    "theta",
    "node",
    "op_index",
    "delay",
    "residual_b",
    "true_error",
    "xi",
    "wall_ms",
];

/// Missing fields are written as empty cells.
pub fn rows_to_csv(rows: &[LogRow]) -> AppResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

pub fn rows_from_csv(bytes: &[u8]) -> AppResult<Vec<LogRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_csv(path: &Path, rows: &[LogRow]) -> AppResult<()> {
    super::write_bytes(path, &rows_to_csv(rows)?)
}

/// The JSON document written next to each run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc<C> {
    pub config: C,
    pub termination: String,
    pub epochs: f64,
    pub wall_ms: Option<f64>,
    pub realized_tau: usize,
    pub summary: RunSummary,
}

impl<C: Serialize> SummaryDoc<C> {
    pub fn new(config: C, summary: RunSummary) -> Self {
        Self {
            config,
            termination: summary.termination.as_str().to_string(),
            epochs: summary.epochs,
            wall_ms: summary.wall_ms,
            realized_tau: summary.realized_tau,
            summary,
        }
    }

    pub fn to_json(&self) -> AppResult<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> AppResult<()> {
        super::write_bytes(path, self.to_json()?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize) -> LogRow {
        LogRow {
            k,
            epoch: k as f64 / 4.0,
            theta: Some(3),
            node: None,
            op_index: Some(1),
            delay: Some(0),
            residual_b: Some(0.1 + 0.2),
            true_error: None,
            xi: None,
            wall_ms: None,
        }
    }

    #[test]
    fn header_and_empty_cells() {
        let bytes = rows_to_csv(&[row(2)]).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "2,0.5,3,,1,0,0.30000000000000004,,,");
        assert_eq!(rows_from_csv(&bytes).unwrap(), vec![row(2)]);
    }

    #[test]
    fn empty_log_still_has_header() {
        let text = String::from_utf8(rows_to_csv(&[]).unwrap()).unwrap();
        assert_eq!(text.trim_end(), COLUMNS.join(","));
    }
}
