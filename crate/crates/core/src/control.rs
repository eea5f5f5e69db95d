//! Almost cyclic controls: index sequences in which every window of `M`
//! consecutive entries contains every operator index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ControlKind {
    /// `i_k = k mod m`.
    Cyclic,
    /// A user script, repeated periodically.
    Scripted(Vec<usize>),
    /// Each node walks its own subcollection cyclically and nodes report in
    /// round-robin order (node index as tiebreaker).
    PerNodeCyclic(Vec<Vec<usize>>),
}

/// An operator-index generator on `0..m` with a known almost cyclicality
/// constant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlSequence {
    m: usize,
    kind: ControlKind,
    almost_cyclicality: usize,
}

impl ControlSequence {
    pub fn cyclic(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "need at least one operator"));
        }
        Ok(Self {
            m,
            kind: ControlKind::Cyclic,
            almost_cyclicality: m,
        })
    }

    /// A periodic script. The almost cyclicality constant is the smallest `M`
    /// for which the periodic extension passes the window check.
    pub fn scripted(m: usize, script: Vec<usize>) -> Result<Self> {
        if m == 0 || script.is_empty() {
            return Err(Error::param("script", "need a nonempty script over m >= 1 operators"));
        }
        if let Some(&bad) = script.iter().find(|&&i| i >= m) {
            return Err(Error::param("script", format!("index {bad} outside 0..{m}")));
        }
        let big_m = periodic_cyclicality(&script, m)
            .ok_or_else(|| Error::param("script", "some operator index never occurs"))?;
        Ok(Self {
            m,
            kind: ControlKind::Scripted(script),
            almost_cyclicality: big_m,
        })
    }

    /// Per-node cyclic walks merged round-robin. `assignment[l]` is the
    /// subcollection of node `l`; together they must cover `0..m`.
    pub fn per_node(m: usize, assignment: Vec<Vec<usize>>) -> Result<Self> {
        validate_assignment(m, &assignment)?;
        let big_m = per_node_merge_bound(&assignment, assignment.len());
        Ok(Self {
            m,
            kind: ControlKind::PerNodeCyclic(assignment),
            almost_cyclicality: big_m,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn almost_cyclicality(&self) -> usize {
        self.almost_cyclicality
    }

    /// Operator index for the `n`-th operator application (zero-based).
    pub fn index(&self, n: usize) -> usize {
        match &self.kind {
            ControlKind::Cyclic => n % self.m,
            ControlKind::Scripted(s) => s[n % s.len()],
            ControlKind::PerNodeCyclic(a) => {
                let node = n % a.len();
                let turn = n / a.len();
                let ops = &a[node];
                ops[turn % ops.len()]
            }
        }
    }

    /// The first `len` indices.
    pub fn take(&self, len: usize) -> Vec<usize> {
        (0..len).map(|n| self.index(n)).collect()
    }
}

pub(crate) fn validate_assignment(m: usize, assignment: &[Vec<usize>]) -> Result<()> {
    if assignment.is_empty() || assignment.iter().any(|a| a.is_empty()) {
        return Err(Error::param("assignment", "every node needs at least one operator"));
    }
    let mut seen = vec![false; m];
    for &i in assignment.iter().flatten() {
        if i >= m {
            return Err(Error::param("assignment", format!("index {i} outside 0..{m}")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::param("assignment", "subcollections do not cover every operator"));
    }
    Ok(())
}

/// Almost cyclicality constant of a per-node cyclic merge in which every
/// node reports at least once in any `max_gap` consecutive arrivals.
///
/// Node `l` then reports `n_l` times within `n_l * max_gap` arrivals and so
/// visits its whole subcollection; the bound is the maximum over nodes.
pub fn per_node_merge_bound(assignment: &[Vec<usize>], max_gap: usize) -> usize {
    assignment.iter().map(|a| a.len()).max().unwrap_or(0) * max_gap
}

/// Operator-index stream produced when nodes report in the order
/// `arrivals`, each walking its own subcollection cyclically.
pub fn merge_per_node(assignment: &[Vec<usize>], arrivals: &[usize]) -> Vec<usize> {
    let mut cursor = vec![0usize; assignment.len()];
    arrivals
        .iter()
        .map(|&node| {
            let ops = &assignment[node];
            let i = ops[cursor[node] % ops.len()];
            cursor[node] += 1;
            i
        })
        .collect()
}

/// Largest number of consecutive arrivals between (and including) two
/// reports of the same node, also counting the lead-in before a node's
/// first report and the tail after its last one.
pub fn max_arrival_gap(arrivals: &[usize], nodes: usize) -> usize {
    let mut last: Vec<Option<usize>> = vec![None; nodes];
    let mut gap = 0;
    for (t, &node) in arrivals.iter().enumerate() {
        let since = match last[node] {
            Some(prev) => t - prev,
            None => t + 1,
        };
        gap = gap.max(since);
        last[node] = Some(t);
    }
    for l in last {
        let tail = match l {
            Some(prev) => arrivals.len() - prev,
            None => arrivals.len() + 1,
        };
        gap = gap.max(tail);
    }
    gap
}

/// True iff every length-`big_m` contiguous window of `window` contains all
/// of `0..m`.
pub fn almost_cyclic_check(window: &[usize], m: usize, big_m: usize) -> Result<bool> {
    if m == 0 {
        return Err(Error::param("m", "need at least one operator"));
    }
    if big_m < m {
        return Err(Error::param("M", format!("almost cyclicality constant {big_m} < m = {m}")));
    }
    if window.len() < big_m {
        return Err(Error::param(
            "window",
            format!("window length {} shorter than M = {big_m}", window.len()),
        ));
    }
    if let Some(&bad) = window.iter().find(|&&i| i >= m) {
        return Err(Error::param("window", format!("index {bad} outside 0..{m}")));
    }
    let mut count = vec![0usize; m];
    let mut distinct = 0;
    for (t, &i) in window.iter().enumerate() {
        if count[i] == 0 {
            distinct += 1;
        }
        count[i] += 1;
        if t >= big_m {
            let out = window[t - big_m];
            count[out] -= 1;
            if count[out] == 0 {
                distinct -= 1;
            }
        }
        if t + 1 >= big_m && distinct < m {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest `M` such that every window of the periodic extension of
/// `script` contains all of `0..m`, or `None` if an index is missing.
fn periodic_cyclicality(script: &[usize], m: usize) -> Option<usize> {
    let p = script.len();
    let mut present = vec![false; m];
    for &i in script {
        present[i] = true;
    }
    if present.iter().any(|s| !s) {
        return None;
    }
    // For each start position, the window must reach the farthest "next
    // occurrence" among all indices.
    let mut worst = m;
    for start in 0..p {
        let mut need = vec![true; m];
        let mut remaining = m;
        let mut len = 0;
        while remaining > 0 {
            let i = script[(start + len) % p];
            if need[i] {
                need[i] = false;
                remaining -= 1;
            }
            len += 1;
        }
        worst = worst.max(len);
    }
    Some(worst)
}
