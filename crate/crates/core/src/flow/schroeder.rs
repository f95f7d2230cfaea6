//! Scalar quadratic recursion `p(y) = ρ y (1 + C y)` and its Schröder
//! conjugacy.
//!
//! Multiplying the recursion by `C` reduces it to `C = 1`, so the limit
//! `lim_n p^n(x / ρ^n)` is computed for `p(y) = ρ y (1 + y)` at `C x` and
//! divided by `C` afterwards. The limit equals `φ⁻¹(x)`, where `φ` solves
//! `φ(p(y)) = ρ φ(y)` with `φ'(0+) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHROEDER_N_MAX: usize = 2000;

/// Bisection tolerance used when inverting the tabulated limit.
const INVERSION_INNER_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchroederSolution {
    pub rho: f64,
    pub c: f64,
    pub x: f64,
    /// `lim_n p^n(x / ρ^n)`.
    pub value: f64,
    pub n_used: usize,
    /// `|value_n - value_{n-1}|` at the stopping index.
    pub last_difference: f64,
}

pub(super) fn check_inputs(rho: f64, c: f64, x: f64, tol: f64) -> Result<()> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("rho = {rho} must exceed 1")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("C = {c} must be nonnegative")));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidInput(format!("x = {x} must be nonnegative")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    Ok(())
}

/// `p^n(y / ρ^n)` for the normalised parabola.
fn scaled_iterate(rho: f64, y: f64, n: usize) -> f64 {
    let mut z = y * rho.powi(-(n as i32));
    for _ in 0..n {
        z = rho * z * (1.0 + z);
    }
    z
}

pub fn schroeder_limit(rho: f64, c: f64, x: f64, tol: f64) -> Result<SchroederSolution> {
    schroeder_limit_capped(rho, c, x, tol, SCHROEDER_N_MAX)
}

/// Stops once two consecutive `n` change the value by less than `tol`.
pub fn schroeder_limit_capped(
    rho: f64,
    c: f64,
    x: f64,
    tol: f64,
    n_max: usize,
) -> Result<SchroederSolution> {
    check_inputs(rho, c, x, tol)?;
    let exact = |value| SchroederSolution {
        rho,
        c,
        x,
        value,
        n_used: 0,
        last_difference: 0.0,
    };
    if x == 0.0 {
        return Ok(exact(0.0));
    }
    if c == 0.0 {
        // p is linear, p^n(x/ρ^n) = x for every n
        return Ok(exact(x));
    }
    let y = c * x;
    let mut prev = y;
    let mut below = 0;
    let mut diff = f64::NAN;
    for n in 1..=n_max {
        let cur = scaled_iterate(rho, y, n);
        if !cur.is_finite() {
            return Err(Error::NonFinite { iterations: n });
        }
        diff = (cur - prev).abs() / c;
        prev = cur;
        below = if diff < tol { below + 1 } else { 0 };
        if below == 2 {
            return Ok(SchroederSolution {
                rho,
                c,
                x,
                value: cur / c,
                n_used: n,
                last_difference: diff,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: n_max,
        residual: diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchroederLog {
    pub rho: f64,
    pub c: f64,
    pub x: f64,
    /// Natural log of `lim_n p^n(x / ρ^n)`.
    pub ln_value: f64,
    pub n_used: usize,
    pub last_difference: f64,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Same limit iterated on `ln y`, for arguments whose limit overflows f64.
/// The stopping rule is applied to successive log values.
pub fn schroeder_limit_ln(rho: f64, c: f64, x: f64, tol: f64) -> Result<SchroederLog> {
    check_inputs(rho, c, x, tol)?;
    if x == 0.0 || c == 0.0 {
        return Err(Error::InvalidInput(
            "log-domain limit needs x > 0 and C > 0".into(),
        ));
    }
    let ln_rho = rho.ln();
    let ln_y = (c * x).ln();
    let iterate = |n: usize| {
        let mut t = ln_y - n as f64 * ln_rho;
        for _ in 0..n {
            t += ln_rho + softplus(t);
        }
        t
    };
    let mut prev = ln_y;
    let mut below = 0;
    let mut diff = f64::NAN;
    for n in 1..=SCHROEDER_N_MAX {
        let cur = iterate(n);
        diff = (cur - prev).abs();
        prev = cur;
        below = if diff < tol { below + 1 } else { 0 };
        if below == 2 {
            return Ok(SchroederLog {
                rho,
                c,
                x,
                ln_value: cur - c.ln(),
                n_used: n,
                last_difference: diff,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: SCHROEDER_N_MAX,
        residual: diff,
    })
}

/// Numerical Schröder function `φ̂` for `p(y) = ρ y (1 + y)`, obtained by
/// inverting `x ↦ lim p^n(x / ρ^n)` with monotone bisection inside the
/// cells of a tabulated grid.
#[derive(Debug, Clone)]
pub struct PhiTable {
    rho: f64,
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl PhiTable {
    /// Tabulates the limit at `nodes` equally spaced points of `[0, x_max]`.
    pub fn new(rho: f64, x_max: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(x_max > 0.0) {
            return Err(Error::InvalidInput("table needs x_max > 0 and at least 2 nodes".into()));
        }
        let xs: Vec<f64> = (0..nodes)
            .map(|i| x_max * i as f64 / (nodes - 1) as f64)
            .collect();
        let values = xs
            .iter()
            .map(|&x| schroeder_limit(rho, 1.0, x, INVERSION_INNER_TOL).map(|s| s.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(PhiTable { rho, xs, values })
    }

    /// Largest `y` the table can invert.
    pub fn y_max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn phi(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0 && y <= self.y_max()) {
            return Err(Error::Domain(format!(
                "y = {y} outside the tabulated range [0, {}]",
                self.y_max()
            )));
        }
        let cell = self.values.partition_point(|&v| v < y).clamp(1, self.xs.len() - 1);
        let (mut lo, mut hi) = (self.xs[cell - 1], self.xs[cell]);
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if schroeder_limit(self.rho, 1.0, mid, INVERSION_INNER_TOL)?.value < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
