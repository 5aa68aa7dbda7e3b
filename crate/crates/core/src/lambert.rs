//! Real branches of the Lambert function, W(y)·e^{W(y)} = y.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// -1/e, the common branch point of W0 and W-1.
pub const BRANCH_POINT: f64 = -1.0 / E;

const CLAMP: f64 = 1e-15;
const STEP_TOL: f64 = 1e-15;
const MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambertBranch {
    /// W0, defined on [-1/e, inf), values >= -1.
    Principal,
    /// W-1, defined on [-1/e, 0), values <= -1.
    MinusOne,
}

impl LambertBranch {
    /// Parses the conventional branch index 0 or -1.
    pub fn from_index(k: i32) -> Result<Self> {
        match k {
            0 => Ok(LambertBranch::Principal),
            -1 => Ok(LambertBranch::MinusOne),
            _ => Err(Error::Parameter(format!("branch must be 0 or -1, got {k}"))),
        }
    }
}

fn check_domain(branch: LambertBranch, y: f64) -> Result<bool> {
    if y.is_nan() {
        return Err(Error::Domain("W of NaN".into()));
    }
    if y < BRANCH_POINT - CLAMP {
        return Err(Error::Domain(format!("W undefined below -1/e, got {y}")));
    }
    if branch == LambertBranch::MinusOne && y >= 0.0 {
        return Err(Error::Domain(format!("W-1 needs y < 0, got {y}")));
    }
    if y.is_infinite() {
        return Err(Error::Domain("W of infinity".into()));
    }
    Ok(y <= BRANCH_POINT)
}

fn branch_series(p: f64) -> f64 {
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn initial_guess(branch: LambertBranch, y: f64) -> f64 {
    match branch {
        LambertBranch::Principal => {
            if y < -0.3 {
                branch_series((2.0 * (E * y + 1.0)).max(0.0).sqrt())
            } else if y.abs() <= 0.1 {
                y - y * y + 1.5 * y * y * y
            } else if y < 3.0 {
                let l = y.ln_1p();
                l * (1.0 - (1.0 + l).ln() / (2.0 + l))
            } else {
                let l1 = y.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
        }
        LambertBranch::MinusOne => {
            if y < -0.25 {
                branch_series(-(2.0 * (E * y + 1.0)).max(0.0).sqrt())
            } else {
                let l1 = (-y).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    }
}

fn halley(mut z: f64, y: f64) -> Result<f64> {
    for _ in 0..MAX_ITER {
        let ez = z.exp();
        let f = z * ez - y;
        // Residual at the rounding floor: further steps only chase noise.
        if f.abs() <= 2.0 * f64::EPSILON * y.abs() {
            return Ok(z);
        }
        let zp1 = z + 1.0;
        let denom = ez * zp1 - (z + 2.0) * f / (2.0 * zp1);
        let step = f / denom;
        if !step.is_finite() {
            return Ok(z);
        }
        z -= step;
        if step.abs() <= STEP_TOL * z.abs().max(1.0) {
            return Ok(z);
        }
    }
    Err(Error::NonConvergence(format!("Lambert W at y = {y}")))
}

/// Newton on z + ln|z| = ln|y|, used where z·e^z over- or underflows.
fn log_newton(mut z: f64, y: f64) -> Result<f64> {
    let target = y.abs().ln();
    for _ in 0..MAX_ITER {
        let g = z + z.abs().ln() - target;
        let step = g / (1.0 + 1.0 / z);
        z -= step;
        if step.abs() <= STEP_TOL * z.abs().max(1.0) {
            return Ok(z);
        }
    }
    Err(Error::NonConvergence(format!("Lambert W at y = {y}")))
}

/// W_b(y). Arguments within 1e-15 below -1/e are treated as -1/e.
pub fn w(branch: LambertBranch, y: f64) -> Result<f64> {
    if check_domain(branch, y)? {
        return Ok(-1.0);
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let z0 = initial_guess(branch, y);
    match branch {
        LambertBranch::Principal if y > 1e6 => log_newton(z0, y),
        LambertBranch::MinusOne if y > -1e-3 => log_newton(z0, y),
        _ => halley(z0, y),
    }
}

/// W0(y).
pub fn w0(y: f64) -> Result<f64> {
    w(LambertBranch::Principal, y)
}

/// dW/dy = W / ((1 + W) y), with the limit 1 at y = 0 on the principal branch.
pub fn w_derivative(branch: LambertBranch, y: f64) -> Result<f64> {
    if check_domain(branch, y)? || (y - BRANCH_POINT).abs() <= CLAMP {
        return Err(Error::Singularity(y));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let z = w(branch, y)?;
    Ok(z / ((1.0 + z) * y))
}

/// Coefficient (-k)^{k-1}/k! of y^k in the Taylor series of W0 at 0.
pub fn series_coefficient(k: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let log_mag = (k as f64 - 1.0) * (k as f64).ln() - ln_factorial(k);
    let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
    sign * log_mag.exp()
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Partial sum of the Taylor series of W0 with `terms` terms.
pub fn w_series(y: f64, terms: u32) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let ln_y = y.abs().ln();
    let mut sum = 0.0;
    for k in 1..=terms {
        let kf = k as f64;
        let log_mag = (kf - 1.0) * kf.ln() - ln_factorial(k) + kf * ln_y;
        let mut sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        if y < 0.0 && k % 2 == 1 {
            sign = -sign;
        }
        sum += sign * log_mag.exp();
    }
    sum
}
