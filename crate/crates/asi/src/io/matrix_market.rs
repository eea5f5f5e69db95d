//! Matrix Market `coordinate real general` (1-based indices).

use std::fmt::Write as _;
use std::path::Path;

use asi_core::CsrMatrix;

use crate::error::{AppError, AppResult};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

pub fn to_string(a: &CsrMatrix) -> String {
    let mut s = String::with_capacity(32 * a.nnz() + 64);
    s.push_str(HEADER);
    s.push('\n');
    let _ = writeln!(s, "{} {} {}", a.rows(), a.cols(), a.nnz());
    for r in 0..a.rows() {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            // `{:?}` prints the shortest string that reads back bitwise.
            let _ = writeln!(s, "{} {} {:?}", r + 1, c + 1, v);
        }
    }
    s
}

pub fn parse(text: &str, path: &Path) -> AppResult<CsrMatrix> {
    let err = |line: usize, reason: String| AppError::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(err(1, "missing %%MatrixMarket matrix banner".into()));
    }
    if fields[2] != "coordinate" {
        return Err(err(1, format!("unsupported format `{}`", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(err(1, format!("unsupported field `{}`", fields[3])));
    }
    if fields[4] != "general" {
        return Err(err(1, format!("unsupported symmetry `{}`", fields[4])));
    }

    let mut size = None;
    let mut triplets = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next_usize = |what: &str| -> AppResult<usize> {
            it.next()
                .ok_or_else(|| err(line_no, format!("missing {what}")))?
                .parse()
                .map_err(|e| err(line_no, format!("bad {what}: {e}")))
        };
        match size {
            None => {
                let rows = next_usize("row count")?;
                let cols = next_usize("column count")?;
                let nnz = next_usize("entry count")?;
                size = Some((rows, cols, nnz));
                triplets.reserve(nnz);
            }
            Some((rows, cols, _)) => {
                let r = next_usize("row index")?;
                let c = next_usize("column index")?;
                let v: f64 = it
                    .next()
                    .ok_or_else(|| err(line_no, "missing value".into()))?
                    .parse()
                    .map_err(|e| err(line_no, format!("bad value: {e}")))?;
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(err(line_no, format!("entry ({r}, {c}) outside {rows}x{cols}")));
                }
                triplets.push((r - 1, c - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| err(1, "missing size line".into()))?;
    if triplets.len() != nnz {
        return Err(err(
            text.lines().count(),
            format!("size line promises {nnz} entries, found {}", triplets.len()),
        ));
    }
    Ok(CsrMatrix::from_triplets(rows, cols, triplets)?)
}

pub fn read(path: &Path) -> AppResult<CsrMatrix> {
    parse(&super::read_to_string(path)?, path)
}

pub fn write(path: &Path, a: &CsrMatrix) -> AppResult<()> {
    super::write_bytes(path, to_string(a).as_bytes())
}
