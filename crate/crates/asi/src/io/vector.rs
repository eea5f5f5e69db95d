//! Vectors as text (one number per line) or raw little-endian `f64`.
//! Paths ending in `.bin` use the binary form.

use std::path::Path;

use crate::error::{AppError, AppResult};

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bin"))
}

pub fn to_text(v: &[f64]) -> String {
    let mut s = String::with_capacity(24 * v.len());
    for x in v {
        s.push_str(&format!("{x:?}\n"));
    }
    s
}

pub fn parse_text(text: &str, path: &Path) -> AppResult<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|e| AppError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("bad number: {e}"),
            })
        })
        .collect()
}

pub fn to_le_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn from_le_bytes(bytes: &[u8], path: &Path) -> AppResult<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(AppError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{} bytes is not a whole number of f64 values", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn read(path: &Path) -> AppResult<Vec<f64>> {
    if is_binary(path) {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        from_le_bytes(&bytes, path)
    } else {
        parse_text(&super::read_to_string(path)?, path)
    }
}

pub fn write(path: &Path, v: &[f64]) -> AppResult<()> {
    if is_binary(path) {
        super::write_bytes(path, &to_le_bytes(v))
    } else {
        super::write_bytes(path, to_text(v).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AWKWARD: [f64; 5] = [0.1, -0.0, 1e-310, f64::MAX, 2.0 / 3.0];

    #[test]
    fn text_round_trip() {
        let back = parse_text(&to_text(&AWKWARD), Path::new("v")).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&AWKWARD));
    }

    #[test]
    fn binary_round_trip() {
        let bytes = to_le_bytes(&AWKWARD);
        assert_eq!(bytes.len(), 40);
        assert_eq!(&bytes[..8], &0.1f64.to_le_bytes());
        assert_eq!(from_le_bytes(&bytes, Path::new("v")).unwrap(), AWKWARD);
        assert!(from_le_bytes(&bytes[..7], Path::new("v")).is_err());
    }

    #[test]
    fn reports_bad_line() {
        let e = parse_text("1\n2\nx\n", Path::new("v")).unwrap_err();
        assert!(matches!(e, AppError::Parse { line: 3, .. }));
    }
}
