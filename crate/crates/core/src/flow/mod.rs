//! Deterministic dynamics: orbits of `f`, the scaling limit
//! `H(x) = lim f^n(x_re + x / ρ^n)` and grid tabulations.

mod precise;
mod schroeder;

pub use precise::{schroeder_limit_precise, SchroederPrecise, PRECISE_MAX_BITS, PRECISE_N_MAX};
pub use schroeder::{
    schroeder_limit, schroeder_limit_capped, schroeder_limit_ln, PhiTable, SchroederLog,
    SchroederSolution, SCHROEDER_N_MAX,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_rho_split, DensityPoint, Deviation, ModelParams};

pub const DEFAULT_H_TOL: f64 = 1e-10;
pub const DEFAULT_H_N_MAX: usize = 400;

/// `‖x‖ / ρ^n0` must fall below this before the telescoping starts.
const START_RADIUS: f64 = 0.1;
/// Largest accepted ratio between the last two increments.
const DECAY_RATIO_CAP: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub points: Vec<DensityPoint>,
}

impl Orbit {
    pub fn last(&self) -> DensityPoint {
        *self.points.last().expect("orbit always holds its start point")
    }
}

/// `x0, f(x0), …, f^n(x0)`.
pub fn iterate_orbit(p: &ModelParams, x0: DensityPoint, n: usize) -> Orbit {
    let mut points = Vec::with_capacity(n + 1);
    let mut x = x0;
    points.push(x);
    for _ in 0..n {
        x = p.map_f(x);
        points.push(x);
    }
    Orbit { points }
}

/// Result of a certified evaluation of `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HEvaluation {
    pub input: Deviation,
    pub value: DensityPoint,
    /// Final `n` of the telescoping sequence `g^n(x / ρ^n)`.
    pub iterations_used: usize,
    /// Last increment `‖a_{n} - a_{n-1}‖∞`.
    pub residual: f64,
    /// Every increment, starting from the first index `n0 + 1`.
    pub increments: Vec<f64>,
}

/// `g^n(x / ρ^n)`, recomputed from scratch.
fn telescope_term(p: &ModelParams, x: Deviation, rho: f64, n: usize) -> Deviation {
    let mut d = x.scale(rho.powi(-(n as i32)));
    for _ in 0..n {
        d = p.g_unchecked(d);
    }
    d
}

/// Smallest `n` with `x / ρ^n` inside the invariant region and of norm below 0.1.
fn start_index(p: &ModelParams, x: Deviation, rho: f64, n_max: usize) -> Result<usize> {
    let norm = x.norm_inf();
    (0..=n_max)
        .find(|&n| {
            let s = rho.powi(-(n as i32));
            norm * s < START_RADIUS && p.in_invariant_region(x.scale(s))
        })
        .ok_or_else(|| {
            Error::Domain(format!(
                "x/ρ^n never enters the invariant region for n <= {n_max} (x = ({}, {}))",
                x.d1, x.d2
            ))
        })
}

/// Evaluates `H(x)` as the limit of `x_re + g^n(x / ρ^n)`.
///
/// Stops once two consecutive increments are below `tol` and the last one
/// is at most 0.9 times its predecessor.
pub fn eval_h(p: &ModelParams, x: Deviation, tol: f64, n_max: usize) -> Result<HEvaluation> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    if !(x.d1.is_finite() && x.d2.is_finite()) {
        return Err(Error::Domain(format!("non-finite argument ({}, {})", x.d1, x.d2)));
    }
    if x.d2 < 0.0 {
        return Err(Error::Domain(format!(
            "H is defined for a nonnegative mutant coordinate, got {}",
            x.d2
        )));
    }
    let rho = p.rho();
    let mut n = start_index(p, x, rho, n_max)?;
    let mut prev = telescope_term(p, x, rho, n);
    let mut increments = Vec::new();
    while n < n_max {
        n += 1;
        let cur = telescope_term(p, x, rho, n);
        let inc = cur.dist_inf(prev);
        increments.push(inc);
        prev = cur;
        if let [.., before, last] = increments[..] {
            let ratio_ok = before == 0.0 || last / before <= DECAY_RATIO_CAP;
            if last < tol && before < tol && ratio_ok {
                return Ok(HEvaluation {
                    input: x,
                    value: p.resident_equilibrium() + cur,
                    iterations_used: n,
                    residual: last,
                    increments,
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: n,
        residual: increments.last().copied().unwrap_or(f64::NAN),
    })
}

/// `‖H(x) - f(H(x / ρ))‖∞`.
pub fn abel_residual(p: &ModelParams, x: Deviation, tol: f64) -> Result<f64> {
    let lhs = eval_h(p, x, tol, DEFAULT_H_N_MAX)?.value;
    let inner = eval_h(p, x.scale(1.0 / p.rho()), tol, DEFAULT_H_N_MAX)?.value;
    Ok(lhs.dist_inf(p.map_f(inner)))
}

/// Random initial condition `χ(K) = H(ρ^{-{log_ρ K}} (0, W))`.
pub fn compute_chi(p: &ModelParams, w: f64, k: f64, tol: f64) -> Result<DensityPoint> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidInput(format!("W = {w} must be a finite nonnegative number")));
    }
    if !(k > 1.0) {
        return Err(Error::InvalidInput(format!("K = {k} must exceed 1")));
    }
    let (_, frac) = log_rho_split(p.rho(), k);
    let scale = p.rho().powf(-frac);
    Ok(eval_h(p, Deviation::new(0.0, scale * w), tol, DEFAULT_H_N_MAX)?.value)
}

/// Empirical witness of the growth bound: `max_m ‖g^m(x/ρ^n)‖∞ / ρ^{m-n}`
/// over `m = 1..=n`.
pub fn growth_bound_probe(p: &ModelParams, x: Deviation, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let rho = p.rho();
    let mut d = x.scale(rho.powi(-(n as i32)));
    p.check_deviation(d)?;
    let mut best: f64 = 0.0;
    for m in 1..=n {
        d = p.g_unchecked(d);
        best = best.max(d.norm_inf() * rho.powi((n - m) as i32));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseNode {
    pub point: DensityPoint,
    /// `f(x) - x`.
    pub displacement: DensityPoint,
}

fn linspace(range: (f64, f64), resolution: usize, i: usize) -> f64 {
    range.0 + (range.1 - range.0) * i as f64 / (resolution - 1) as f64
}

/// Displacement field of `f` on a `resolution × resolution` grid, `x1`
/// varying slowest.
pub fn phase_grid(
    p: &ModelParams,
    x1_range: (f64, f64),
    x2_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<PhaseNode>> {
    if resolution < 2 {
        return Err(Error::InvalidInput("resolution must be at least 2".into()));
    }
    if x1_range.0 < 0.0 || x2_range.0 < 0.0 {
        return Err(Error::Domain("phase grid must lie in the nonnegative quadrant".into()));
    }
    let mut nodes = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let point = DensityPoint::new(linspace(x1_range, resolution, i), linspace(x2_range, resolution, j));
            nodes.push(PhaseNode {
                point,
                displacement: p.map_f(point) - point,
            });
        }
    }
    Ok(nodes)
}

#[derive(Debug)]
pub struct HSurfaceNode {
    pub w: f64,
    pub x1: f64,
    pub outcome: Result<HEvaluation>,
}

/// Tabulates `H((x1, w))` on a grid, `w` varying slowest. Failures are kept
/// per node.
pub fn h_surface(
    p: &ModelParams,
    w_range: (f64, f64),
    x1_range: (f64, f64),
    resolution: usize,
    tol: f64,
    n_max: usize,
) -> Result<Vec<HSurfaceNode>> {
    if resolution < 2 {
        return Err(Error::InvalidInput("resolution must be at least 2".into()));
    }
    if w_range.0 < 0.0 {
        return Err(Error::Domain("w range must lie in [0, ∞)".into()));
    }
    let nodes = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let w = linspace(w_range, resolution, idx / resolution);
            let x1 = linspace(x1_range, resolution, idx % resolution);
            HSurfaceNode {
                w,
                x1,
                outcome: eval_h(p, Deviation::new(x1, w), tol, n_max),
            }
        })
        .collect();
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn base() -> ModelParams {
        ModelParams::new(1.0, 1.0, 0.5).unwrap()
    }

    fn h(p: &ModelParams, d1: f64, d2: f64) -> HEvaluation {
        eval_h(p, Deviation::new(d1, d2), DEFAULT_H_TOL, DEFAULT_H_N_MAX).unwrap()
    }

    #[test]
    fn orbit_at_fixed_points_is_constant() {
        let p = base();
        for x0 in [p.coexistence_point(), p.resident_equilibrium()] {
            let orbit = iterate_orbit(&p, x0, 25);
            assert_eq!(orbit.points.len(), 26);
            assert!(orbit.points.iter().all(|x| x.dist_inf(x0) < 1e-15));
        }
    }

    #[test]
    fn orbit_from_near_resident_reaches_coexistence() {
        let p = base();
        let orbit = iterate_orbit(&p, DensityPoint::new(1.0, 0.01), 200);
        assert!(orbit.last().dist_inf(DensityPoint::new(2.0 / 3.0, 2.0 / 3.0)) < 1e-8);
        for w in orbit.points.windows(2) {
            assert_eq!(w[1], p.map_f(w[0]));
        }
    }

    #[test]
    fn global_stability_from_random_starts() {
        let p = base();
        let co = p.coexistence_point();
        let mut rng = crate::seed::rng_from_seed(11);
        for _ in 0..500 {
            let mut x = DensityPoint::new(rng.random_range(1e-6..5.0), rng.random_range(1e-6..5.0));
            let mut steps = 0;
            while x.dist_inf(co) >= 1e-6 {
                x = p.map_f(x);
                steps += 1;
                assert!(steps < 10_000, "no convergence from start");
            }
        }
    }

    #[test]
    fn h_at_zero_is_resident() {
        let p = base();
        let e = h(&p, 0.0, 0.0);
        assert_eq!(e.value, p.resident_equilibrium());
        assert_eq!(e.residual, 0.0);
    }

    #[test]
    fn h_rejects_negative_mutant_and_bad_tol() {
        let p = base();
        assert!(matches!(
            eval_h(&p, Deviation::new(0.0, -1.0), 1e-10, 400),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            eval_h(&p, Deviation::new(0.0, 1.0), 0.0, 400),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            eval_h(&p, Deviation::new(0.0, 1.0), 1e-10, 20),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn h_value_stays_in_quadrant_and_is_certified() {
        let p = base();
        for (d1, d2) in [(0.0, 1.0), (5.0, 5.0), (-5.0, 5.0), (3.0, 0.25)] {
            let e = h(&p, d1, d2);
            assert!(e.value.x2 > 0.0);
            assert!(e.residual < DEFAULT_H_TOL);
            assert_eq!(e.increments.last().copied(), Some(e.residual));
        }
        // resident-only perturbation dies out
        let e = h(&p, 2.0, 0.0);
        assert!(e.value.dist_inf(p.resident_equilibrium()) < 1e-9);
    }

    #[test]
    fn abel_equation_holds() {
        let p = base();
        for (d1, d2) in [(0.0, 1.0), (2.0, 3.0), (-4.0, 0.5)] {
            let x = Deviation::new(d1, d2);
            let direct = h(&p, d1, d2).value;
            let inner = h(&p, d1 / p.rho(), d2 / p.rho()).value;
            assert!(direct.dist_inf(p.map_f(inner)) < 10.0 * DEFAULT_H_TOL);
            assert!(abel_residual(&p, x, 1e-10).unwrap() < 1e-8);
        }
        assert_eq!(abel_residual(&p, Deviation::ZERO, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn abel_residual_is_continuous_on_grid() {
        let p = base();
        let step = 0.05;
        let values: Vec<f64> = (0..20)
            .map(|i| abel_residual(&p, Deviation::new(0.0, 0.5 + step * i as f64), 1e-10).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!((w[1] - w[0]).abs() < step);
        }
    }

    #[test]
    fn h2_is_flat_in_resident_coordinate() {
        let p = base();
        for w in [0.5, 1.0, 2.0] {
            let centre = h(&p, 0.0, w).value.x2;
            assert!((h(&p, 5.0, w).value.x2 - centre).abs() < 1e-6);
        }
    }

    #[test]
    fn tolerance_refinement_is_consistent() {
        let p = base();
        for (d1, d2) in [(0.0, 0.3), (1.0, 1.0), (-2.0, 4.0), (0.5, 2.5)] {
            let x = Deviation::new(d1, d2);
            let coarse = eval_h(&p, x, 1e-8, 400).unwrap().value;
            let fine = eval_h(&p, x, 1e-10, 400).unwrap().value;
            assert!(coarse.dist_inf(fine) < 1e-7);
        }
    }

    #[test]
    fn chi_examples() {
        let p = base();
        let rho = p.rho();
        assert_eq!(compute_chi(&p, 0.0, 1234.0, 1e-10).unwrap(), p.resident_equilibrium());
        let k = rho.powi(30);
        let chi = compute_chi(&p, 1.3, k, 1e-10).unwrap();
        assert_eq!(chi, h(&p, 0.0, 1.3).value);
        let a = compute_chi(&p, 0.7, 5000.0, 1e-10).unwrap();
        let b = compute_chi(&p, 0.7, 5000.0 * rho, 1e-10).unwrap();
        assert!(a.dist_inf(b) < 1e-9);
        assert!(compute_chi(&p, -1.0, 100.0, 1e-10).is_err());
        assert!(compute_chi(&p, 1.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn forward_iterates_of_h_shift_the_argument() {
        // f^n(H(y)) = H(ρ^n y)
        let p = base();
        let y = Deviation::new(0.0, 0.2);
        let mut x = h(&p, y.d1, y.d2).value;
        for n in 1..=4 {
            x = p.map_f(x);
            let target = h(&p, 0.0, y.d2 * p.rho().powi(n)).value;
            assert!(x.dist_inf(target) < 1e-8, "n = {n}");
        }
    }

    #[test]
    fn growth_probe_examples() {
        let p = base();
        assert_eq!(growth_bound_probe(&p, Deviation::ZERO, 10).unwrap(), 0.0);
        let x = Deviation::new(0.5, 1.0);
        let probes: Vec<f64> = [10, 20, 40]
            .iter()
            .map(|&n| growth_bound_probe(&p, x, n).unwrap())
            .collect();
        assert!(probes.iter().all(|v| v.is_finite() && *v < 10.0), "{probes:?}");
        for n in [10, 20, 40] {
            let small = growth_bound_probe(&p, x, n).unwrap();
            let big = growth_bound_probe(&p, x.scale(2.0), n).unwrap();
            assert!(big >= small);
        }
        assert!(growth_bound_probe(&p, x, 0).is_err());
    }

    #[test]
    fn phase_grid_examples() {
        let p = base();
        let grid = phase_grid(&p, (0.0, 2.0), (0.0, 2.0), 7).unwrap();
        assert_eq!(grid.len(), 49);
        // (1, 0) is node i = 3, j = 0
        let re = grid[3 * 7];
        assert_eq!(re.point, DensityPoint::new(1.0, 0.0));
        assert_eq!(re.displacement, DensityPoint::new(0.0, 0.0));
        let co = p.coexistence_point();
        assert!((p.map_f(co) - co).norm_inf() < 1e-15);
        // f1 - x1 = x1 (a1 - x1 - γ x2) / (a1 + x1 + γ x2) vanishes on x1 + γ x2 = a1
        for x2 in [0.2, 0.8, 1.4] {
            let x = DensityPoint::new(1.0 - 0.5 * x2, x2);
            assert!((p.map_f(x) - x).x1.abs() < 1e-15);
        }
        assert!(phase_grid(&p, (0.0, 1.0), (0.0, 1.0), 1).is_err());
    }

    #[test]
    fn h_surface_examples() {
        let p = base();
        let nodes = h_surface(&p, (0.0, 2.0), (-1.0, 1.0), 5, 1e-10, 400).unwrap();
        assert_eq!(nodes.len(), 25);
        for node in &nodes[..5] {
            assert_eq!(node.w, 0.0);
            let v = node.outcome.as_ref().unwrap().value;
            assert!(v.dist_inf(p.resident_equilibrium()) < 1e-9);
        }
        // x1 = 0 column, H2 strictly increasing in w
        let column: Vec<f64> = nodes
            .iter()
            .filter(|n| n.x1 == 0.0)
            .map(|n| n.outcome.as_ref().unwrap().value.x2)
            .collect();
        assert_eq!(column.len(), 5);
        assert!(column.windows(2).all(|w| w[1] > w[0]));
        // shared nodes agree across resolutions
        let fine = h_surface(&p, (0.0, 2.0), (-1.0, 1.0), 9, 1e-10, 400).unwrap();
        for node in &nodes {
            let twin = fine.iter().find(|f| f.w == node.w && f.x1 == node.x1).unwrap();
            assert_eq!(twin.outcome.as_ref().unwrap().value, node.outcome.as_ref().unwrap().value);
        }
    }
}
