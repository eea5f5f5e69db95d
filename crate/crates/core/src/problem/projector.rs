//! Parallel-beam projector with line-intersection weights.
//!
//! The image occupies `[-n/2, n/2]²` with unit pixels; pixel `(r, c)` covers
//! `x ∈ [c - n/2, c + 1 - n/2]`, `y ∈ [n/2 - r - 1, n/2 - r]` and has column
//! index `r·n + c`. A ray at angle `θ` and detector offset `s` is the line
//! `{p : <p, (cos θ, sin θ)> = s}`; detector `j` of `d` sits at
//! `s_j = (j - (d - 1)/2)·spacing`. Matrix row `a·d + j` belongs to angle
//! `a` and detector `j`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problem::phantom::PhantomImage;
use crate::problem::TomographySystem;
use crate::sparse::CsrMatrix;

/// Chords shorter than this are dropped (corner grazes).
pub const MIN_SEGMENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Geometry {
    pub n: usize,
    pub angles: Vec<f64>,
    pub detectors: usize,
    pub spacing: f64,
}

impl Geometry {
    /// `count` angles `i·π/count`, unit detector spacing.
    pub fn parallel(n: usize, count: usize, detectors: usize) -> Self {
        Self {
            n,
            angles: uniform_angles(count),
            detectors,
            spacing: 1.0,
        }
    }

    /// 64×64 image, 90 angles over `[0, π)`, 95 detectors.
    pub fn desk_default() -> Self {
        Self::parallel(64, 90, 95)
    }

    pub fn rays(&self) -> usize {
        self.angles.len() * self.detectors
    }

    pub fn detector_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.detectors as f64 - 1.0) / 2.0) * self.spacing
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "image side must be positive"));
        }
        if self.angles.is_empty() {
            return Err(Error::param("angles", "need at least one angle"));
        }
        if self.detectors == 0 {
            return Err(Error::param("detectors", "need at least one detector"));
        }
        if !(self.spacing > 0.0) || self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("geometry", "spacing must be positive and angles finite"));
        }
        Ok(())
    }
}

pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| i as f64 * core::f64::consts::PI / count as f64)
        .collect()
}

/// Appends `(pixel, length)` for every pixel the ray crosses.
pub fn trace_ray(n: usize, theta: f64, s: f64, out: &mut Vec<(usize, f64)>) {
    const PARALLEL: f64 = 1e-12;
    let half = n as f64 / 2.0;
    let (sn, cs) = (libm::sin(theta), libm::cos(theta));
    let p0 = [s * cs, s * sn];
    let d = [-sn, cs];

    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for axis in 0..2 {
        if d[axis].abs() < PARALLEL {
            if p0[axis] < -half || p0[axis] > half {
                return;
            }
        } else {
            let t1 = (-half - p0[axis]) / d[axis];
            let t2 = (half - p0[axis]) / d[axis];
            t_lo = t_lo.max(t1.min(t2));
            t_hi = t_hi.min(t1.max(t2));
        }
    }
    if !(t_hi > t_lo) {
        return;
    }

    let mut ts = Vec::with_capacity(2 * n + 4);
    ts.push(t_lo);
    ts.push(t_hi);
    for axis in 0..2 {
        if d[axis].abs() < PARALLEL {
            continue;
        }
        for k in 0..=n {
            let t = (k as f64 - half - p0[axis]) / d[axis];
            if t > t_lo && t < t_hi {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);

    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= MIN_SEGMENT {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let xm = p0[0] + mid * d[0];
        let ym = p0[1] + mid * d[1];
        let c = libm::floor(xm + half);
        let r = libm::floor(half - ym);
        if c >= 0.0 && r >= 0.0 && c < n as f64 && r < n as f64 {
            out.push((r as usize * n + c as usize, len));
        }
    }
}

/// The unpruned `rays × n²` system matrix.
pub fn projection_matrix(geometry: &Geometry) -> Result<CsrMatrix> {
    geometry.validate()?;
    let n = geometry.n;
    let mut triplets = Vec::new();
    let mut ray = Vec::new();
    for (a, &theta) in geometry.angles.iter().enumerate() {
        for j in 0..geometry.detectors {
            ray.clear();
            trace_ray(n, theta, geometry.detector_offset(j), &mut ray);
            let row = a * geometry.detectors + j;
            triplets.extend(ray.iter().map(|&(p, len)| (row, p, len)));
        }
    }
    if triplets.is_empty() {
        return Err(Error::param("geometry", "no ray intersects the pixel grid"));
    }
    CsrMatrix::from_triplets(geometry.rays(), n * n, triplets)
}

/// Projects `image` along `geometry`, prunes empty rows and columns, and
/// sets `b = A x_true` from the pruned matrix.
pub fn make_projector(image: &PhantomImage, geometry: &Geometry) -> Result<TomographySystem> {
    if image.side() != geometry.n {
        return Err(Error::param(
            "geometry",
            format!("image side {} differs from geometry side {}", image.side(), geometry.n),
        ));
    }
    let full = projection_matrix(geometry)?;
    let (a, row_map, col_map) = full.prune_empty();
    let x_true: Vec<f64> = col_map.iter().map(|&c| image.values()[c]).collect();
    let b = a.mul_vec(&x_true)?;
    Ok(TomographySystem {
        a,
        b,
        x_true,
        geometry: Some(geometry.clone()),
        row_map,
        col_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn single_pixel_horizontal_ray() {
        let g = Geometry {
            n: 1,
            angles: vec![FRAC_PI_2],
            detectors: 1,
            spacing: 1.0,
        };
        let a = projection_matrix(&g).unwrap();
        assert_eq!(a.nnz(), 1);
        assert!((a.values()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn axis_aligned_ray_crosses_whole_column() {
        // θ = 0: vertical lines x = s at half-integer offsets.
        let k = 6;
        let g = Geometry {
            n: k,
            angles: vec![0.0],
            detectors: k,
            spacing: 1.0,
        };
        let a = projection_matrix(&g).unwrap();
        for r in 0..k {
            let (cols, vals) = a.row(r);
            assert_eq!(cols.len(), k);
            assert!(cols.iter().all(|&p| p % k == r));
            assert!((vals.iter().sum::<f64>() - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_ray_length() {
        // The diagonal through the centre of a 4×4 grid has length 4√2.
        let g = Geometry {
            n: 4,
            angles: vec![PI / 4.0],
            detectors: 1,
            spacing: 1.0,
        };
        let a = projection_matrix(&g).unwrap();
        let total: f64 = a.row(0).1.iter().sum();
        assert!((total - 4.0 * core::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn half_turn_reverses_detectors() {
        let n = 16;
        let angles = vec![0.3, 1.1, 2.0, 2.9];
        let d = 23;
        let g = Geometry {
            n,
            angles: angles.clone(),
            detectors: d,
            spacing: 1.0,
        };
        let rot = Geometry {
            angles: angles.iter().map(|a| a + PI).collect(),
            ..g.clone()
        };
        let a = projection_matrix(&g).unwrap().to_dense();
        let b = projection_matrix(&rot).unwrap().to_dense();
        let cols = n * n;
        for ai in 0..angles.len() {
            for j in 0..d {
                let r1 = ai * d + j;
                let r2 = ai * d + (d - 1 - j);
                for c in 0..cols {
                    assert!((a[r1 * cols + c] - b[r2 * cols + c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn missing_grid_is_an_error() {
        let g = Geometry {
            n: 2,
            angles: vec![0.0],
            detectors: 1,
            spacing: 100.0,
        };
        // One detector sits at offset 0 and does hit; move it off the grid.
        let far = Geometry {
            detectors: 2,
            ..g
        };
        assert!(projection_matrix(&far).is_err());
    }
}
