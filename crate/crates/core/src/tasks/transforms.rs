//! MI-preserving maps applied to sampled points.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::TaskError;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Elementwise (or, for spiral and swiss roll, per-row) maps. Every kind but
/// `SwissRoll` acts on both variables; `SwissRoll` embeds a 1-D `X` into the
/// plane and leaves `Y` alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    HalfCube,
    Asinh,
    NormalCdf,
    Wiggly,
    /// Rotation by `v‖x‖²` in the plane of coordinates (1, 2) for `X` and
    /// (2, 3) for `Y`, with `v = 1/dim`.
    Spiral,
    SwissRoll,
}

impl Transform {
    pub fn label(&self) -> &'static str {
        match self {
            Transform::HalfCube => "Hc",
            Transform::Asinh => "Asinh",
            Transform::NormalCdf => "NmCDF",
            Transform::Wiggly => "Wiggly",
            Transform::Spiral => "Sp",
            Transform::SwissRoll => "SwissRoll",
        }
    }

    /// Output dims for input dims, or an error when the map does not apply.
    pub fn output_dims(&self, m: usize, n: usize) -> Result<(usize, usize), TaskError> {
        match self {
            Transform::Spiral if m < 2 || n < 3 => Err(TaskError::UnsupportedDim {
                transform: "spiral",
                dims: (m, n),
            }),
            Transform::SwissRoll if m != 1 => Err(TaskError::UnsupportedDim {
                transform: "swiss roll",
                dims: (m, n),
            }),
            Transform::SwissRoll => Ok((2, n)),
            _ => Ok((m, n)),
        }
    }

    /// Applies the map to row-major `x` (`m` columns) and `y` (`n` columns).
    pub fn apply(&self, x: Vec<f64>, m: usize, y: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>), TaskError> {
        self.output_dims(m, n)?;
        Ok(match self {
            Transform::HalfCube => (map(x, half_cube), map(y, half_cube)),
            Transform::Asinh => (map(x, f64::asinh), map(y, f64::asinh)),
            Transform::NormalCdf => (map(x, phi), map(y, phi)),
            Transform::Wiggly => (map(x, wiggly_x), map(y, wiggly_y)),
            Transform::Spiral => (spiral(x, m, 0, 1.0 / m as f64), spiral(y, n, 1, 1.0 / n as f64)),
            Transform::SwissRoll => (x.iter().flat_map(|&u| swiss_roll(u)).collect(), y),
        })
    }
}

fn map(mut v: Vec<f64>, f: impl Fn(f64) -> f64) -> Vec<f64> {
    v.iter_mut().for_each(|a| *a = f(*a));
    v
}

/// `sign(x)|x|^{3/2}`.
pub fn half_cube(x: f64) -> f64 {
    x.signum() * x.abs().powf(1.5)
}

pub fn wiggly_x(x: f64) -> f64 {
    x + 0.4 * x.sin() + 0.2 * (1.7 * x + 1.0).sin() + 0.03 * (3.3 * x - 2.5).sin()
}

pub fn wiggly_y(y: f64) -> f64 {
    y - 0.4 * (0.4 * y).sin() + 0.17 * (1.3 * y + 3.5).sin() + 0.02 * (4.3 * y - 2.5).sin()
}

/// `exp(vA‖x‖²) x` with `A` the unit skew matrix on coordinates
/// `(plane, plane + 1)`; rotation preserves `‖x‖`, so the map is invertible.
pub fn spiral_row(row: &mut [f64], plane: usize, speed: f64) {
    let theta = speed * row.iter().map(|v| v * v).sum::<f64>();
    let (s, c) = theta.sin_cos();
    let (a, b) = (row[plane], row[plane + 1]);
    row[plane] = c * a + s * b;
    row[plane + 1] = -s * a + c * b;
}

fn spiral(mut v: Vec<f64>, dim: usize, plane: usize, speed: f64) -> Vec<f64> {
    v.chunks_mut(dim).for_each(|row| spiral_row(row, plane, speed));
    v
}

/// `(t cos t, t sin t) / 21` with `t = (3π/2)(1 + 2u)`, for `u ∈ [0, 1]`.
pub fn swiss_roll(u: f64) -> [f64; 2] {
    let t = 1.5 * PI * (1.0 + 2.0 * u);
    [t * t.cos() / 21.0, t * t.sin() / 21.0]
}
