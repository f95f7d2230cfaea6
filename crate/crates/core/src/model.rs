//! Model parameters and the deterministic density dynamics.
//!
//! The density map is
//!
//! ```text
//! f1(x) = 2 a1 x1 / (a1 + x1 + γ x2)
//! f2(x) = 2 a2 x2 / (a2 + γ x1 + x2)
//! ```
//!
//! with splitting probabilities `p_i(x) = m_i(x) / 2`, and `g` is the same
//! map written in coordinates centred at the resident equilibrium `(a1, 0)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance against 1 used when classifying eigenvalue moduli.
pub const STABILITY_TOL: f64 = 1e-9;

/// Fractional parts of `log_ρ K` closer than this to an integer are snapped.
pub const FRAC_SNAP_TOL: f64 = 1e-12;

/// Validated triple `(a1, a2, γ)` satisfying the coexistence condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    a1: f64,
    a2: f64,
    gamma: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawParams {
    a1: f64,
    a2: f64,
    gamma: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.a1, raw.a2, raw.gamma)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            a1: p.a1,
            a2: p.a2,
            gamma: p.gamma,
        }
    }
}

impl ModelParams {
    /// Validates the raw triple. Every violated constraint is reported.
    pub fn new(a1: f64, a2: f64, gamma: f64) -> Result<Self> {
        let mut problems = Vec::new();
        for (name, v) in [("a1", a1), ("a2", a2), ("gamma", gamma)] {
            if !v.is_finite() {
                problems.push(format!("{name} = {v} is not finite"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidParams(problems));
        }
        if a1 <= 0.0 {
            problems.push(format!("a1 = {a1} must be positive"));
        }
        if a2 <= 0.0 {
            problems.push(format!("a2 = {a2} must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            problems.push(format!("gamma = {gamma} must lie in the open interval (0, 1)"));
        }
        let resident_margin = a1 - gamma * a2;
        if resident_margin <= 0.0 {
            problems.push(format!(
                "coexistence violated: a1 - gamma*a2 = {resident_margin} must be positive"
            ));
        }
        let mutant_margin = a2 - gamma * a1;
        if mutant_margin <= 0.0 {
            problems.push(format!(
                "coexistence violated: a2 - gamma*a1 = {mutant_margin} must be positive"
            ));
        }
        if problems.is_empty() {
            Ok(ModelParams { a1, a2, gamma })
        } else {
            Err(Error::InvalidParams(problems))
        }
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Mutant offspring mean at the resident equilibrium, `2 a2 / (a2 + γ a1)`.
    pub fn rho(&self) -> f64 {
        2.0 * self.a2 / (self.a2 + self.gamma * self.a1)
    }

    /// Mutant splitting probability at the resident equilibrium, `ρ / 2`.
    pub fn mutant_split_at_resident(&self) -> f64 {
        self.a2 / (self.a2 + self.gamma * self.a1)
    }

    pub fn resident_equilibrium(&self) -> DensityPoint {
        DensityPoint::new(self.a1, 0.0)
    }

    pub fn coexistence_point(&self) -> DensityPoint {
        let det = 1.0 - self.gamma * self.gamma;
        DensityPoint::new(
            (self.a1 - self.gamma * self.a2) / det,
            (self.a2 - self.gamma * self.a1) / det,
        )
    }

    /// Splitting probabilities `(p1, p2)` at density `x`.
    pub fn splitting_probs(&self, x: DensityPoint) -> (f64, f64) {
        (
            self.a1 / (self.a1 + x.x1 + self.gamma * x.x2),
            self.a2 / (self.a2 + self.gamma * x.x1 + x.x2),
        )
    }

    /// Offspring means `m_i = 2 p_i`.
    pub fn offspring_means(&self, x: DensityPoint) -> (f64, f64) {
        let (p1, p2) = self.splitting_probs(x);
        (2.0 * p1, 2.0 * p2)
    }

    /// The deterministic density map `f`.
    pub fn map_f(&self, x: DensityPoint) -> DensityPoint {
        DensityPoint::new(
            2.0 * x.x1 * self.a1 / (self.a1 + x.x1 + self.gamma * x.x2),
            2.0 * x.x2 * self.a2 / (self.a2 + self.gamma * x.x1 + x.x2),
        )
    }

    /// Translated map `g(d) = f(x_re + d) - x_re`.
    pub fn map_g(&self, d: Deviation) -> Result<Deviation> {
        self.check_deviation(d)?;
        Ok(self.g_unchecked(d))
    }

    /// `g` without domain checks. Written in the centred form so that tiny
    /// deviations are not absorbed by the addition of `a1`.
    #[inline]
    pub(crate) fn g_unchecked(&self, d: Deviation) -> Deviation {
        let (a1, a2, gamma) = (self.a1, self.a2, self.gamma);
        Deviation {
            d1: a1 * (d.d1 - gamma * d.d2) / (2.0 * a1 + d.d1 + gamma * d.d2),
            d2: 2.0 * a2 * d.d2 / (a2 + gamma * (a1 + d.d1) + d.d2),
        }
    }

    pub(crate) fn check_deviation(&self, d: Deviation) -> Result<()> {
        if !(d.d1.is_finite() && d.d2.is_finite()) {
            return Err(Error::Domain(format!("non-finite deviation ({}, {})", d.d1, d.d2)));
        }
        if d.d1 <= -self.a1 {
            return Err(Error::Domain(format!(
                "deviation d1 = {} puts the resident density at or below zero (a1 = {})",
                d.d1, self.a1
            )));
        }
        if d.d2 < 0.0 {
            return Err(Error::Domain(format!("mutant deviation d2 = {} is negative", d.d2)));
        }
        Ok(())
    }

    /// Forward-invariant region `E = [x1_co - a1, ∞) × [0, x2_co]` of `g`.
    pub fn in_invariant_region(&self, d: Deviation) -> bool {
        let co = self.coexistence_point();
        d.d1 >= co.x1 - self.a1 && d.d2 >= 0.0 && d.d2 <= co.x2
    }

    /// Exact Jacobian of `f` at `x`.
    pub fn jacobian_at(&self, x: DensityPoint) -> Mat2 {
        let (a1, a2, gamma) = (self.a1, self.a2, self.gamma);
        let d1 = a1 + x.x1 + gamma * x.x2;
        let d2 = a2 + gamma * x.x1 + x.x2;
        let s1 = 2.0 * a1 / (d1 * d1);
        let s2 = 2.0 * a2 / (d2 * d2);
        Mat2([
            [s1 * (a1 + gamma * x.x2), -s1 * gamma * x.x1],
            [-s2 * gamma * x.x2, s2 * (a2 + gamma * x.x1)],
        ])
    }

    pub fn fixed_points(&self) -> FixedPointSet {
        let classify = |point: DensityPoint| {
            let moduli = self.jacobian_at(point).eigen_moduli();
            FixedPoint {
                point,
                eigen_moduli: moduli,
                stability: Stability::from_moduli(moduli),
            }
        };
        FixedPointSet {
            ex: classify(DensityPoint::new(0.0, 0.0)),
            re: classify(self.resident_equilibrium()),
            mu: classify(DensityPoint::new(0.0, self.a2)),
            co: classify(self.coexistence_point()),
        }
    }

    pub fn derived_constants(&self) -> DerivedConstants {
        let rho = self.rho();
        DerivedConstants {
            rho,
            b: 1.0 / rho.ln(),
            a: Mat2([[0.5, -0.5 * self.gamma], [0.0, rho]]),
            rho_tilde: self.lipschitz_bound(),
        }
    }

    /// Supremum of the row-sum norm of `∇f` over the closed quadrant.
    ///
    /// Row one of the Jacobian sums to `2 a1 (a1 + γ x1 + γ x2) / (a1 + x1 + γ x2)^2`.
    /// Since `(a1 + x1 + γ x2)^2 >= a1 (a1 + x1 + γ x2) >= a1 (a1 + γ x1 + γ x2)`
    /// the row sum is at most 2, with equality at the origin; row two is
    /// symmetric. The bound is therefore exactly 2.
    pub fn lipschitz_bound(&self) -> f64 {
        let at_origin = self.jacobian_at(DensityPoint::new(0.0, 0.0)).norm_inf();
        at_origin.clamp(self.rho(), 2.0)
    }
}

/// `log_ρ K` split into integer and fractional parts, `ln K / ln ρ` in
/// double precision with fractional parts within [`FRAC_SNAP_TOL`] of an
/// integer snapped to zero.
pub fn log_rho_split(rho: f64, k: f64) -> (i64, f64) {
    let t = k.ln() / rho.ln();
    let nearest = t.round();
    let t = if (t - nearest).abs() < FRAC_SNAP_TOL { nearest } else { t };
    let whole = t.floor();
    (whole as i64, t - whole)
}

/// A point in density coordinates `(z1 / K, z2 / K)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DensityPoint {
    pub x1: f64,
    pub x2: f64,
}

impl DensityPoint {
    pub const fn new(x1: f64, x2: f64) -> Self {
        DensityPoint { x1, x2 }
    }

    pub fn norm_inf(self) -> f64 {
        self.x1.abs().max(self.x2.abs())
    }

    pub fn dist_inf(self, other: DensityPoint) -> f64 {
        (self - other).norm_inf()
    }

    pub fn is_nonnegative(self) -> bool {
        self.x1 >= 0.0 && self.x2 >= 0.0
    }
}

impl Sub for DensityPoint {
    type Output = DensityPoint;

    fn sub(self, rhs: DensityPoint) -> DensityPoint {
        DensityPoint::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl Add<Deviation> for DensityPoint {
    type Output = DensityPoint;

    fn add(self, rhs: Deviation) -> DensityPoint {
        DensityPoint::new(self.x1 + rhs.d1, self.x2 + rhs.d2)
    }
}

impl fmt::Display for DensityPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

/// Offset from the resident equilibrium, the argument of `g` and `H`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Deviation {
    pub d1: f64,
    pub d2: f64,
}

impl Deviation {
    pub const ZERO: Deviation = Deviation { d1: 0.0, d2: 0.0 };

    pub const fn new(d1: f64, d2: f64) -> Self {
        Deviation { d1, d2 }
    }

    pub fn norm_inf(self) -> f64 {
        self.d1.abs().max(self.d2.abs())
    }

    pub fn scale(self, s: f64) -> Deviation {
        Deviation::new(self.d1 * s, self.d2 * s)
    }

    pub fn dist_inf(self, other: Deviation) -> f64 {
        (self.d1 - other.d1).abs().max((self.d2 - other.d2).abs())
    }
}

impl Mul<Deviation> for f64 {
    type Output = Deviation;

    fn mul(self, rhs: Deviation) -> Deviation {
        rhs.scale(self)
    }
}

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// ℓ∞ operator norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.0
            .iter()
            .map(|row| row[0].abs() + row[1].abs())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Moduli of the two eigenvalues, sorted ascending.
    pub fn eigen_moduli(&self) -> [f64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.det();
        let mut m = if disc >= 0.0 {
            let r = disc.sqrt();
            [(half_tr - r).abs(), (half_tr + r).abs()]
        } else {
            let r = self.det().sqrt();
            [r, r]
        };
        m.sort_by(f64::total_cmp);
        m
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigen_moduli()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
    /// Some eigenvalue has modulus within [`STABILITY_TOL`] of 1.
    Marginal,
}

impl Stability {
    pub fn from_moduli(moduli: [f64; 2]) -> Self {
        if moduli.iter().any(|m| (m - 1.0).abs() <= STABILITY_TOL) {
            return Stability::Marginal;
        }
        match (moduli[0] < 1.0, moduli[1] < 1.0) {
            (true, true) => Stability::Stable,
            (false, false) => Stability::Unstable,
            _ => Stability::Saddle,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Saddle => "saddle",
            Stability::Marginal => "marginal",
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub point: DensityPoint,
    pub eigen_moduli: [f64; 2],
    pub stability: Stability,
}

/// The four fixed points of `f`: total extinction, resident only, mutant
/// only and coexistence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub ex: FixedPoint,
    pub re: FixedPoint,
    pub mu: FixedPoint,
    pub co: FixedPoint,
}

impl FixedPointSet {
    pub fn named(&self) -> [(&'static str, &FixedPoint); 4] {
        [("ex", &self.ex), ("re", &self.re), ("mu", &self.mu), ("co", &self.co)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub rho: f64,
    /// `1 / ln ρ`, so that `b ln K = log_ρ K`.
    pub b: f64,
    /// Jacobian of `f` at the resident equilibrium.
    pub a: Mat2,
    /// Global Lipschitz bound of `f` in the ℓ∞ norm.
    pub rho_tilde: f64,
}
