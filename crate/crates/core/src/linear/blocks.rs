use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BlockStrategy {
    /// `r` runs of consecutive rows whose sizes differ by at most one; the
    /// first `M mod r` runs get the extra row.
    Contiguous,
    /// Block `t` holds the rows `i` with `i mod r = t`.
    Strided,
    /// Contiguous runs each extended by `overlap` rows into the next run,
    /// wrapping past the last row.
    Overlapping { overlap: usize },
    User,
}

/// A covering of the rows `0..M` by `r` nonempty, possibly overlapping,
/// blocks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockPartition {
    rows: usize,
    strategy: BlockStrategy,
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn build(rows: usize, r: usize, strategy: BlockStrategy) -> Result<Self> {
        if r == 0 || r > rows {
            return Err(Error::param("r", format!("need 1 <= r <= M, got r = {r}, M = {rows}")));
        }
        let blocks = match strategy {
            BlockStrategy::Contiguous => contiguous(rows, r),
            BlockStrategy::Strided => (0..r).map(|t| (t..rows).step_by(r).collect()).collect(),
            BlockStrategy::Overlapping { overlap } => {
                if overlap >= rows {
                    return Err(Error::param("overlap", "overlap must be smaller than M"));
                }
                contiguous(rows, r)
                    .into_iter()
                    .map(|b| {
                        let end = *b.last().unwrap();
                        let mut ext = b;
                        ext.extend((1..=overlap).map(|o| (end + o) % rows));
                        ext.sort_unstable();
                        ext.dedup();
                        ext
                    })
                    .collect()
            }
            BlockStrategy::User => {
                return Err(Error::param("strategy", "use BlockPartition::user for explicit blocks"))
            }
        };
        Ok(Self {
            rows,
            strategy,
            blocks,
        })
    }

    /// Blocks given explicitly; they must be nonempty, in range and cover
    /// every row.
    pub fn user(rows: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::param("blocks", "every block must be nonempty"));
        }
        let mut seen = vec![false; rows];
        for &i in blocks.iter().flatten() {
            if i >= rows {
                return Err(Error::param("blocks", format!("row {i} >= M = {rows}")));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::param("blocks", format!("row {i} is not covered")));
        }
        Ok(Self {
            rows,
            strategy: BlockStrategy::User,
            blocks,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn strategy(&self) -> BlockStrategy {
        self.strategy
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn covers_all_rows(&self) -> bool {
        let mut seen = vec![false; self.rows];
        for &i in self.blocks.iter().flatten() {
            if i < self.rows {
                seen[i] = true;
            }
        }
        seen.iter().all(|&s| s)
    }
}

fn contiguous(rows: usize, r: usize) -> Vec<Vec<usize>> {
    let base = rows / r;
    let extra = rows % r;
    let mut start = 0;
    (0..r)
        .map(|t| {
            let len = base + usize::from(t < extra);
            let b = (start..start + len).collect();
            start += len;
            b
        })
        .collect()
}
