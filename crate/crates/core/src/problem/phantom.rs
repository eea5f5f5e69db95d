//! Ellipse phantoms on an `n × n` pixel grid.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Values within this distance of zero are snapped to exactly zero, so
/// that cancelling intensities such as `1 - 0.8 - 0.2` leave no residue.
pub const SNAP_TOL: f64 = 1e-12;

/// One ellipse of an additive phantom, in normalized coordinates where the
/// image spans `[-1, 1]²` with `y` pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ellipse {
    pub intensity: f64,
    pub semi_axis_x: f64,
    pub semi_axis_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    /// Counterclockwise rotation in degrees.
    pub angle_deg: f64,
}

const fn ellipse(intensity: f64, ax: f64, ay: f64, cx: f64, cy: f64, deg: f64) -> Ellipse {
    Ellipse {
        intensity,
        semi_axis_x: ax,
        semi_axis_y: ay,
        center_x: cx,
        center_y: cy,
        angle_deg: deg,
    }
}

/// The modified (higher-contrast) Shepp-Logan table; values lie in `[0, 1]`.
pub const MODIFIED_SHEPP_LOGAN: [Ellipse; 10] = [
    ellipse(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    ellipse(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    ellipse(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    ellipse(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    ellipse(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    ellipse(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    ellipse(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    ellipse(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    ellipse(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    ellipse(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let phi = self.angle_deg * core::f64::consts::PI / 180.0;
        let (s, c) = (libm::sin(phi), libm::cos(phi));
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * c + dy * s;
        let v = dy * c - dx * s;
        let p = u / self.semi_axis_x;
        let q = v / self.semi_axis_y;
        p * p + q * q <= 1.0
    }
}

/// Row-major `n × n` image; row 0 is the top.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomImage {
    n: usize,
    values: Vec<f64>,
}

impl PhantomImage {
    pub fn side(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }
}

/// Pixel-center coordinates of `(row, col)` in `[-1, 1]²`.
pub fn pixel_center(n: usize, row: usize, col: usize) -> (f64, f64) {
    let n_f = n as f64;
    let x = (2 * col + 1) as f64 - n_f;
    let y = n_f - (2 * row + 1) as f64;
    (x / n_f, y / n_f)
}

/// Sums the intensities of all ellipses containing each pixel center.
pub fn make_phantom(n: usize, table: &[Ellipse]) -> Result<PhantomImage> {
    if n < 8 {
        return Err(Error::param("n", "phantom side must be at least 8"));
    }
    if table.is_empty() {
        return Err(Error::param("table", "ellipse table is empty"));
    }
    if table
        .iter()
        .any(|e| !(e.semi_axis_x > 0.0 && e.semi_axis_y > 0.0) || !e.intensity.is_finite())
    {
        return Err(Error::param("table", "ellipses need positive semi-axes and finite intensity"));
    }
    let mut values = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let (x, y) = pixel_center(n, r, c);
            let mut v = 0.0;
            for e in table {
                if e.contains(x, y) {
                    v += e.intensity;
                }
            }
            values.push(if v.abs() <= SNAP_TOL { 0.0 } else { v });
        }
    }
    Ok(PhantomImage { n, values })
}
