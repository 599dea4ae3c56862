//! Closed-form ground truth and the monotone solver used to pick task parameters.

use nalgebra::DMatrix;
use statrs::function::gamma::{digamma, ln_gamma};

use super::cov::gaussian_mi;
use super::TaskError;

fn f(x: f64) -> f64 {
    ln_gamma(x / 2.0) - (x / 2.0) * digamma(x / 2.0)
}

/// Excess MI of a multivariate Student-t over its Gaussian base.
pub fn student_correction(dof: f64, m: usize, n: usize) -> Result<f64, TaskError> {
    if !(dof >= 1.0) || !dof.is_finite() {
        return Err(TaskError::Invalid(format!("degrees of freedom {dof} < 1")));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(f(dof) + f(dof + m + n) - f(dof + m) - f(dof + n))
}

/// MI of the Student-t with dispersion `omega` over `[X; Y]`.
pub fn student_mi(omega: &DMatrix<f64>, dof: f64, m: usize, n: usize) -> Result<f64, TaskError> {
    let c = student_correction(dof, m, n)?;
    Ok(gaussian_mi(omega, m, n)? + c)
}

/// `Y = X + N` with `X ~ U(0, 1)` and `N ~ U(−ε, ε)`.
pub fn uniform_additive_mi(epsilon: f64) -> f64 {
    if epsilon <= 0.5 {
        epsilon - (2.0 * epsilon).ln()
    } else {
        1.0 / (4.0 * epsilon)
    }
}

/// Finds `p ≥ lo` with `mi(p) = target` for a nondecreasing `mi`.
///
/// The upper bracket starts at `hi` and doubles up to `limit`. Stops once the
/// MI is within `tol` nats of the target.
pub fn solve_increasing(
    mut mi: impl FnMut(f64) -> Result<f64, TaskError>,
    target: f64,
    lo: f64,
    hi: f64,
    limit: f64,
    tol: f64,
) -> Result<f64, TaskError> {
    if !(target >= 0.0) || !target.is_finite() {
        return Err(TaskError::Unreachable(target));
    }
    let (mut lo, mut hi) = (lo, hi);
    let at_lo = mi(lo)?;
    if (at_lo - target).abs() <= tol {
        return Ok(lo);
    }
    if at_lo > target {
        return Err(TaskError::Unreachable(target));
    }
    while mi(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(TaskError::Unreachable(target));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = mi(mid)?;
        if (v - target).abs() <= tol {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solver tolerance for catalogue parameters, in nats.
pub const SOLVE_TOL: f64 = 1e-7;
