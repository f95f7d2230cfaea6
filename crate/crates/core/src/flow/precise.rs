//! Arbitrary-precision evaluation of `lim_n p^n(x / ρ^n)`.
//!
//! The limit is doubly exponential in `x` (about `e^3752` at `x = 10`,
//! `ρ = 4/3`, `C = 1`), so f64 overflows long before the iteration settles.
//! Here every term is computed with a binary precision large enough to
//! resolve absolute differences of size `tol` at the magnitude of the limit.
//!
//! Terms `a_n = p^n(x / ρ^n)` are not nested in `n`, so each costs `n`
//! steps. Instead of scanning `n = 1, 2, …` the solver samples three
//! consecutive terms, doubling `n` until their differences decay
//! geometrically, then jumps to the index where the differences should
//! fall below `tol`.

use astro_float::{BigFloat, RoundingMode};
use serde::{Deserialize, Serialize};

use super::schroeder::{check_inputs, schroeder_limit_ln};
use crate::error::{Error, Result};

const RM: RoundingMode = RoundingMode::ToEven;

/// Largest working precision the solver will allocate.
pub const PRECISE_MAX_BITS: usize = 1 << 20;

/// Default index cap; `x = 10` at `ρ = 4/3` needs about 13 000.
pub const PRECISE_N_MAX: usize = 100_000;

const FIRST_INDEX: usize = 32;
const GUARD_BITS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchroederPrecise {
    pub rho: f64,
    pub c: f64,
    pub x: f64,
    /// Nearest f64 to the limit; infinite when the limit exceeds f64.
    pub value: f64,
    pub ln_value: f64,
    /// Index `n` of the last term; the two differences below are
    /// `|a_{n-1} - a_{n-2}|` and `|a_n - a_{n-1}|`.
    pub n_used: usize,
    pub differences: [f64; 2],
    pub precision_bits: usize,
}

/// `log2 |v|`, from the exponent and the leading mantissa word.
fn log2_abs(v: &BigFloat) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    let (Some(e), Some(words)) = (v.exponent(), v.mantissa_digits()) else {
        return f64::NAN;
    };
    let top = *words.last().unwrap_or(&0) as f64 / 2f64.powi(64);
    e as f64 + top.log2()
}

/// Nearest f64 of `|v|`, saturating to 0 and infinity.
fn abs_to_f64(v: &BigFloat) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    let (Some(e), Some(words)) = (v.exponent(), v.mantissa_digits()) else {
        return f64::NAN;
    };
    let top = *words.last().unwrap_or(&0) as f64 / 2f64.powi(64);
    match e {
        e if e > 1024 => f64::INFINITY,
        e if e < -1100 => 0.0,
        // split the scaling so neither factor under- or overflows early
        e => top * 2f64.powi(e / 2) * 2f64.powi(e - e / 2),
    }
}

struct Terms {
    rho: BigFloat,
    inv_rho: BigFloat,
    y0: BigFloat,
    one: BigFloat,
    bits: usize,
}

impl Terms {
    /// `p^n(y0 / ρ^n)` for the normalised parabola.
    fn term(&self, n: usize) -> BigFloat {
        let p = self.bits;
        let mut y = self.y0.mul(&self.inv_rho.powi(n, p, RM), p, RM);
        for _ in 0..n {
            let grown = y.add(&self.one, p, RM);
            y = self.rho.mul(&y, p, RM).mul(&grown, p, RM);
        }
        y
    }
}

/// Limit of `p^n(x / ρ^n)` for `p(y) = ρ y (1 + C y)`, stopping once two
/// consecutive differences are below `tol` in absolute value.
pub fn schroeder_limit_precise(
    rho: f64,
    c: f64,
    x: f64,
    tol: f64,
    n_max: usize,
) -> Result<SchroederPrecise> {
    check_inputs(rho, c, x, tol)?;
    let exact = |value: f64| SchroederPrecise {
        rho,
        c,
        x,
        value,
        ln_value: value.ln(),
        n_used: 0,
        differences: [0.0, 0.0],
        precision_bits: 53,
    };
    if x == 0.0 {
        return Ok(exact(0.0));
    }
    if c == 0.0 {
        return Ok(exact(x));
    }

    // magnitude of the limit from the log-domain iteration
    let ln_estimate = schroeder_limit_ln(rho, c, x, 1e-6)?.ln_value;
    let magnitude_bits = (ln_estimate / std::f64::consts::LN_2).max(0.0);
    let tol_bits = (-tol.log2()).max(0.0);
    let bits_f = magnitude_bits + tol_bits + (n_max.max(2) as f64).log2() + GUARD_BITS as f64;
    let bits = bits_f.ceil() as usize;
    if bits > PRECISE_MAX_BITS {
        return Err(Error::BudgetExceeded {
            required: bits as u64,
            limit: PRECISE_MAX_BITS as u64,
        });
    }
    let rho_b = BigFloat::from_f64(rho, bits);
    let terms = Terms {
        inv_rho: rho_b.reciprocal(bits, RM),
        rho: rho_b,
        y0: BigFloat::from_f64(c, bits).mul(&BigFloat::from_f64(x, bits), bits, RM),
        one: BigFloat::from_f64(1.0, bits),
        bits,
    };
    let log2_c = c.log2();
    let log2_tol = tol.log2();
    let log2_rho = rho.log2();

    let mut n = FIRST_INDEX;
    loop {
        if n + 2 > n_max {
            return Err(Error::NoConvergence {
                iterations: n_max,
                residual: f64::NAN,
            });
        }
        let a = [terms.term(n), terms.term(n + 1), terms.term(n + 2)];
        let d = [
            a[1].sub(&a[0], bits, RM),
            a[2].sub(&a[1], bits, RM),
        ];
        let l = [log2_abs(&d[0]) - log2_c, log2_abs(&d[1]) - log2_c];
        if l[0] < log2_tol && l[1] < log2_tol {
            let limit = a[2].div(&BigFloat::from_f64(c, bits), bits, RM);
            let scale = 2f64.powf(-log2_c);
            return Ok(SchroederPrecise {
                rho,
                c,
                x,
                value: abs_to_f64(&limit),
                ln_value: log2_abs(&limit) * std::f64::consts::LN_2,
                n_used: n + 2,
                differences: [abs_to_f64(&d[0]) * scale, abs_to_f64(&d[1]) * scale],
                precision_bits: bits,
            });
        }
        // differences shrink by about ρ per step once x / ρ^n is small;
        // before that they may still grow, so keep doubling
        let measured = l[0] - l[1];
        let next = if measured.is_finite() && measured > 0.5 * log2_rho {
            let rate = measured.min(2.0 * log2_rho);
            let steps = ((l[1].max(l[0]) - log2_tol) / rate).ceil().max(1.0) as usize;
            n + 1 + steps
        } else if l[1].is_finite() {
            2 * n
        } else {
            // exact zero difference: step once to confirm
            n + 1
        };
        // try the largest admissible index once before giving up
        n = if next + 2 > n_max && n + 2 < n_max { n_max - 2 } else { next };
    }
}
