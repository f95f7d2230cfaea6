//! Exact simulation of the density-dependent binary-splitting process `Z`,
//! its Galton–Watson approximation `Y` and their shared-uniform coupling.
//!
//! Draw order, per generation: type 1 first, then type 2.
//!
//! * Fast mode draws one binomial per alive component (`rand_distr`'s
//!   exact sampler: inversion for small means, BTPE otherwise) and doubles it.
//!   Extinct components consume nothing.
//! * Coupled mode draws `max(Z_i(n), Y_i(n))` uniforms `U(n, j)` for
//!   `j = 1, 2, …` per type. Individual `j` of `Z` splits iff
//!   `U(n, j) <= p_i(Z(n))`, individual `j` of `Y` splits iff `U(n, j)` is
//!   below the constant threshold (1/2 for residents, ρ/2 for mutants).

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_rho_split, DensityPoint, ModelParams};
use crate::seed::rng_from_seed;

/// Counts above this would overflow sums of doubled counts.
pub const COUNT_LIMIT: u64 = 1 << 62;

/// Maximum number of uniforms a single coupled path may draw.
pub const COUPLED_DRAW_BUDGET: u64 = 2_000_000_000;

pub const DEFAULT_C: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fast,
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: u64,
    pub seed: u64,
    pub horizon: usize,
    pub mode: Mode,
    /// Overrides the start `(⌊a1 K⌋, 1)`; paths started this way are
    /// flagged non-canonical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<[u64; 2]>,
}

impl SimConfig {
    pub fn new(k: u64, seed: u64, horizon: usize, mode: Mode) -> Self {
        SimConfig {
            k,
            seed,
            horizon,
            mode,
            initial: None,
        }
    }

    pub fn with_initial(mut self, initial: [u64; 2]) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn is_canonical(&self) -> bool {
        self.initial.is_none()
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("carrying capacity K must be at least 1".into()));
        }
        Ok(())
    }

    fn start(&self, p: &ModelParams) -> [u64; 2] {
        self.initial.unwrap_or([canonical_resident(p, self.k), 1])
    }
}

/// `⌊a1 K⌋`.
pub fn canonical_resident(p: &ModelParams, k: u64) -> u64 {
    (p.a1() * k as f64).floor() as u64
}

/// Counts of the density-dependent process, one pair per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationPath {
    pub counts: Vec<[u64; 2]>,
    pub config: SimConfig,
    pub params: ModelParams,
}

/// Counts of the Galton–Watson approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwPath {
    pub counts: Vec<[u64; 2]>,
    pub config: SimConfig,
    pub params: ModelParams,
}

fn densities(counts: &[[u64; 2]], k: u64) -> Vec<DensityPoint> {
    let k = k as f64;
    counts
        .iter()
        .map(|c| DensityPoint::new(c[0] as f64 / k, c[1] as f64 / k))
        .collect()
}

impl PopulationPath {
    pub fn densities(&self) -> Vec<DensityPoint> {
        densities(&self.counts, self.config.k)
    }
}

impl GwPath {
    pub fn densities(&self) -> Vec<DensityPoint> {
        densities(&self.counts, self.config.k)
    }
}

/// Splitting probabilities evaluated on counts: `a1 K / (a1 K + z1 + γ z2)`
/// and `a2 K / (a2 K + γ z1 + z2)`.
pub fn count_split_probs(p: &ModelParams, k: u64, z: [u64; 2]) -> (f64, f64) {
    let k = k as f64;
    let (z1, z2) = (z[0] as f64, z[1] as f64);
    let r = p.a1() * k;
    let m = p.a2() * k;
    (r / (r + z1 + p.gamma() * z2), m / (m + p.gamma() * z1 + z2))
}

fn doubled_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, prob: f64, generation: usize) -> Result<u64> {
    if n == 0 {
        return Ok(0);
    }
    let successes = Binomial::new(n, prob)
        .map_err(|e| Error::InvalidInput(format!("binomial({n}, {prob}): {e}")))?
        .sample(rng);
    double_checked(successes, generation)
}

fn double_checked(successes: u64, generation: usize) -> Result<u64> {
    if successes > COUNT_LIMIT / 2 {
        return Err(Error::Overflow { generation });
    }
    Ok(2 * successes)
}

/// One fast-mode generation of `Z`.
pub fn step_z<R: Rng + ?Sized>(
    p: &ModelParams,
    k: u64,
    z: [u64; 2],
    rng: &mut R,
    generation: usize,
) -> Result<[u64; 2]> {
    let (p1, p2) = count_split_probs(p, k, z);
    let z1 = doubled_binomial(rng, z[0], p1, generation)?;
    let z2 = doubled_binomial(rng, z[1], p2, generation)?;
    Ok([z1, z2])
}

/// Simulates `Z` with the mode from `cfg`, seeding from `cfg.seed`.
pub fn simulate_z(p: &ModelParams, cfg: &SimConfig) -> Result<PopulationPath> {
    let mut rng = rng_from_seed(cfg.seed);
    simulate_z_with(p, cfg, &mut rng)
}

pub fn simulate_z_with<R: Rng + ?Sized>(
    p: &ModelParams,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PopulationPath> {
    match cfg.mode {
        Mode::Fast => {
            cfg.validate()?;
            let mut counts = Vec::with_capacity(cfg.horizon + 1);
            let mut z = cfg.start(p);
            counts.push(z);
            for n in 0..cfg.horizon {
                z = step_z(p, cfg.k, z, rng, n + 1)?;
                counts.push(z);
            }
            Ok(PopulationPath {
                counts,
                config: *cfg,
                params: *p,
            })
        }
        Mode::Coupled => simulate_coupled_with(p, cfg, rng).map(|(z, _)| z),
    }
}

/// Simulates `Y`: critical residents (split probability 1/2) and
/// supercritical mutants (split probability ρ/2). Coupled mode runs the
/// shared-uniform construction and returns its `Y` half.
pub fn simulate_gw(p: &ModelParams, cfg: &SimConfig) -> Result<GwPath> {
    let mut rng = rng_from_seed(cfg.seed);
    simulate_gw_with(p, cfg, &mut rng)
}

pub fn simulate_gw_with<R: Rng + ?Sized>(p: &ModelParams, cfg: &SimConfig, rng: &mut R) -> Result<GwPath> {
    match cfg.mode {
        Mode::Fast => {
            cfg.validate()?;
            let q = p.mutant_split_at_resident();
            let mut counts = Vec::with_capacity(cfg.horizon + 1);
            let mut y = cfg.start(p);
            counts.push(y);
            for n in 0..cfg.horizon {
                y = [
                    doubled_binomial(rng, y[0], 0.5, n + 1)?,
                    doubled_binomial(rng, y[1], q, n + 1)?,
                ];
                counts.push(y);
            }
            Ok(GwPath {
                counts,
                config: *cfg,
                params: *p,
            })
        }
        Mode::Coupled => simulate_coupled_with(p, cfg, rng).map(|(_, y)| y),
    }
}

/// Rough upper estimate of coupled-mode draws used to reject runs up front.
pub fn coupled_draw_estimate(p: &ModelParams, cfg: &SimConfig) -> u64 {
    let peak = (p.a1().max(p.a2()) * cfg.k as f64).ceil() as u64;
    let start = cfg.start(p);
    let peak = peak.max(start[0]).max(start[1]);
    (cfg.horizon as u64).saturating_mul(2).saturating_mul(peak)
}

/// Runs `Z` and `Y` on the same uniforms.
pub fn simulate_coupled(p: &ModelParams, cfg: &SimConfig) -> Result<(PopulationPath, GwPath)> {
    let mut rng = rng_from_seed(cfg.seed);
    simulate_coupled_with(p, cfg, &mut rng)
}

pub fn simulate_coupled_with<R: Rng + ?Sized>(
    p: &ModelParams,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(PopulationPath, GwPath)> {
    cfg.validate()?;
    let estimate = coupled_draw_estimate(p, cfg);
    if estimate > COUPLED_DRAW_BUDGET {
        return Err(Error::BudgetExceeded {
            required: estimate,
            limit: COUPLED_DRAW_BUDGET,
        });
    }
    let y_thresholds = [0.5, p.mutant_split_at_resident()];
    let mut z = cfg.start(p);
    let mut y = z;
    let mut z_counts = Vec::with_capacity(cfg.horizon + 1);
    let mut y_counts = Vec::with_capacity(cfg.horizon + 1);
    z_counts.push(z);
    y_counts.push(y);
    let mut drawn: u64 = 0;
    for n in 0..cfg.horizon {
        let (p1, p2) = count_split_probs(p, cfg.k, z);
        let z_thresholds = [p1, p2];
        let mut next_z = [0u64; 2];
        let mut next_y = [0u64; 2];
        for i in 0..2 {
            let draws = z[i].max(y[i]);
            drawn += draws;
            if drawn > COUPLED_DRAW_BUDGET {
                return Err(Error::BudgetExceeded {
                    required: drawn,
                    limit: COUPLED_DRAW_BUDGET,
                });
            }
            let (mut zs, mut ys) = (0u64, 0u64);
            for j in 0..draws {
                let u: f64 = rng.random();
                if j < z[i] && u <= z_thresholds[i] {
                    zs += 1;
                }
                if j < y[i] && u <= y_thresholds[i] {
                    ys += 1;
                }
            }
            next_z[i] = double_checked(zs, n + 1)?;
            next_y[i] = double_checked(ys, n + 1)?;
        }
        z = next_z;
        y = next_y;
        z_counts.push(z);
        y_counts.push(y);
    }
    Ok((
        PopulationPath {
            counts: z_counts,
            config: *cfg,
            params: *p,
        },
        GwPath {
            counts: y_counts,
            config: *cfg,
            params: *p,
        },
    ))
}

/// Continues a `Z` path in fast mode until it reaches `horizon` generations.
pub fn extend_fast<R: Rng + ?Sized>(
    p: &ModelParams,
    path: &mut PopulationPath,
    horizon: usize,
    rng: &mut R,
) -> Result<()> {
    let mut z = *path.counts.last().expect("paths hold their start");
    for n in path.counts.len()..=horizon {
        z = step_z(p, path.config.k, z, rng, n)?;
        path.counts.push(z);
    }
    path.config.horizon = path.config.horizon.max(horizon);
    Ok(())
}

/// Truncated martingale `ρ^{-n} Y2(n)` of the mutant Galton–Watson process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WSample {
    pub value: f64,
    pub truncation_n: usize,
    pub extinct: bool,
}

pub fn estimate_w(p: &ModelParams, seed: u64, n_w: usize) -> Result<WSample> {
    let mut rng = rng_from_seed(seed);
    estimate_w_with(p, n_w, &mut rng)
}

pub fn estimate_w_with<R: Rng + ?Sized>(p: &ModelParams, n_w: usize, rng: &mut R) -> Result<WSample> {
    if n_w == 0 {
        return Err(Error::InvalidInput("truncation level n_W must be at least 1".into()));
    }
    let q = p.mutant_split_at_resident();
    let mut y: u64 = 1;
    for n in 0..n_w {
        if y == 0 {
            break;
        }
        y = doubled_binomial(rng, y, q, n + 1)?;
    }
    Ok(WSample {
        value: y as f64 * p.rho().powi(-(n_w as i32)),
        truncation_n: n_w,
        extinct: y == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeIndices {
    /// `⌊log_ρ K⌋`.
    pub n1: usize,
    /// `⌊c log_ρ K⌋`.
    pub nc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub n1: usize,
    pub nc: usize,
    /// Fractional part of `log_ρ K`, snapped to 0 near integers.
    pub frac: f64,
}

pub fn time_indices(rho: f64, k: u64, c: f64) -> Result<TimeSplit> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("K = {k} must be at least 2")));
    }
    check_c(c)?;
    let (n1, frac) = log_rho_split(rho, k as f64);
    let t = n1 as f64 + frac;
    Ok(TimeSplit {
        n1: n1 as usize,
        nc: (c * t).floor() as usize,
        frac,
    })
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.5 && c <= 1.0) {
        return Err(Error::InvalidInput(format!("c = {c} must lie in (1/2, 1]")));
    }
    Ok(())
}

/// GW density up to `n_c`, deterministic iteration of `f` afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluedPath {
    pub densities: Vec<DensityPoint>,
    pub switch_index: usize,
    pub c: f64,
    /// The GW counts behind the stochastic segment.
    pub gw: GwPath,
}

pub fn glued_approx(p: &ModelParams, cfg: &SimConfig, c: f64) -> Result<GluedPath> {
    let mut rng = rng_from_seed(cfg.seed);
    glued_approx_with(p, cfg, c, &mut rng)
}

pub fn glued_approx_with<R: Rng + ?Sized>(
    p: &ModelParams,
    cfg: &SimConfig,
    c: f64,
    rng: &mut R,
) -> Result<GluedPath> {
    let split = time_indices(p.rho(), cfg.k, c)?;
    let stochastic_len = cfg.horizon.min(split.nc);
    let gw_cfg = SimConfig {
        horizon: stochastic_len,
        ..*cfg
    };
    let gw = simulate_gw_with(p, &gw_cfg, rng)?;
    let mut densities = gw.densities();
    let mut x = *densities.last().unwrap();
    for _ in stochastic_len..cfg.horizon {
        x = p.map_f(x);
        densities.push(x);
    }
    Ok(GluedPath {
        densities,
        switch_index: split.nc,
        c,
        gw,
    })
}

/// `η(n+1) = √K (X(n+1) - f(X(n)))` for each step of the path.
pub fn noise_residual(p: &ModelParams, path: &PopulationPath) -> Result<Vec<[f64; 2]>> {
    if path.counts.len() < 2 {
        return Err(Error::InvalidInput("noise residuals need at least two generations".into()));
    }
    let root_k = (path.config.k as f64).sqrt();
    let x = path.densities();
    Ok(x.windows(2)
        .map(|w| {
            let pred = p.map_f(w[0]);
            [root_k * (w[1].x1 - pred.x1), root_k * (w[1].x2 - pred.x2)]
        })
        .collect())
}
