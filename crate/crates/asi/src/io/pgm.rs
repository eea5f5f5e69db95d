//! Binary 8-bit portable graymap (`P5`).

use std::path::Path;

use crate::error::{AppError, AppResult};

/// Gray levels are `round(255 · v / max(v))`, negatives clamped to black.
pub fn encode(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "image size");
    let top = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if top > 0.0 {
            (255.0 * v.max(0.0) / top).round().min(255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Returns `(width, height, pixels)`.
pub fn decode(bytes: &[u8], path: &Path) -> AppResult<(usize, usize, Vec<u8>)> {
    let err = |reason: &str| AppError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: reason.to_string(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("bad header"))?);
    }
    if fields[0] != "P5" {
        return Err(err("not a binary graymap"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(err("only 8-bit graymaps are supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != w * h {
        return Err(err("raster size does not match header"));
    }
    Ok((w, h, data.to_vec()))
}

pub fn write(path: &Path, width: usize, height: usize, values: &[f64]) -> AppResult<()> {
    super::write_bytes(path, &encode(width, height, values))
}

pub fn read(path: &Path) -> AppResult<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, path)
}
