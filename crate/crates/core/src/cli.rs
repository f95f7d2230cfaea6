//! Command-line surface.
//!
//! Parameters resolve as: command-line flag, then the JSON config file
//! (`--config`, keys named like the flags), then built-in defaults.
//!
//! With `--out DIR` every artifact is written under `DIR` together with a
//! `manifest.json`; otherwise artifacts go to stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentReport, Metric};
use crate::flow::{self, SCHROEDER_N_MAX};
use crate::io::{self, fmt_f64, RunManifest};
use crate::model::{DensityPoint, Deviation, ModelParams};
use crate::seed::{replicate_rng, Stream};
use crate::sim::{self, Mode, SimConfig};

pub const DEFAULT_A1: f64 = 1.0;
pub const DEFAULT_A2: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "bare-bones", version, about = "Mutant establishment in the two-type Bare Bones model")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true)]
    pub a1: Option<f64>,
    #[arg(long, global = true)]
    pub a2: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// The four fixed points, their stability and the constants ρ, b.
    FixedPoints,
    /// Deterministic orbit of f.
    Flow(FlowArgs),
    /// H at one point, or tabulated over a (w, x1) grid.
    Hfun(HfunArgs),
    /// Displacement field f(x) - x on a grid.
    Phase(PhaseArgs),
    /// Population paths of Z (and Y in coupled mode).
    Simulate(SimulateArgs),
    /// Galton-Watson path glued to the deterministic flow at n_c.
    Glued(GluedArgs),
    /// Truncated martingale-limit samples.
    EstimateW(EstimateWArgs),
    /// Law of X2(n1) against the limit along exact powers of ρ.
    VerifyTheorem1(Theorem1Args),
    /// Pathwise error of the deterministic prediction at offsets from n1.
    VerifyCorollary1(Corollary1Args),
    /// Establishment probability at finite K.
    Establishment(EstablishmentArgs),
    /// Scaled coupling error between Z and Y at n_c.
    CouplingError(CouplingArgs),
    /// Limit of p^n(x/ρ^n) for p(y) = ρ y (1 + C y).
    Schroeder(SchroederArgs),
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x2: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HfunArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x2: Option<f64>,
    /// `lo:hi`; switches to grid mode.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub w_range: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub x1_range: Option<(f64, f64)>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub x1_range: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub x2_range: Option<(f64, f64)>,
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long = "K")]
    pub k: Option<u64>,
    /// Defaults to 2 n1(K).
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GluedArgs {
    #[arg(long = "K")]
    pub k: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateWArgs {
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_w: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Theorem1Args {
    /// Exponents j with K = round(ρ^j).
    #[arg(long, value_delimiter = ',')]
    pub j: Option<Vec<i32>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_w: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Corollary1Args {
    /// Values of K; one value gives a single check, several a comparison.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<u64>>,
    #[arg(long = "K")]
    pub k: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma list of integers or `lo..hi` ranges.
    #[arg(long, value_parser = parse_offsets, allow_hyphen_values = true)]
    pub offsets: Option<Offsets>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstablishmentArgs {
    #[arg(long = "K")]
    pub k: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Defaults to half the coexistence mutant density.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CouplingArgs {
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<u64>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SchroederArgs {
    /// Defaults to ρ of the model parameters.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "C")]
    pub c_coef: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<f64>>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Offsets(pub Vec<i64>);

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected `lo:hi`, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    if !(lo <= hi) {
        return Err(format!("range `{s}` has lo > hi"));
    }
    Ok((lo, hi))
}

fn parse_offsets(s: &str) -> std::result::Result<Offsets, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        // "a..b" is inclusive; the leading '-' of a negative bound is not a separator
        match item.get(1..).and_then(|rest| rest.find("..")).map(|i| i + 1) {
            Some(i) => {
                let lo: i64 = item[..i].parse().map_err(|e| format!("`{item}`: {e}"))?;
                let hi: i64 = item[i + 2..].parse().map_err(|e| format!("`{item}`: {e}"))?;
                if lo > hi {
                    return Err(format!("empty offset range `{item}`"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(item.parse().map_err(|e| format!("`{item}`: {e}"))?),
        }
    }
    if out.is_empty() {
        return Err("no offsets given".into());
    }
    Ok(Offsets(out))
}

/// Values read from `--config`. Keys match the flag names.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    #[serde(rename = "K")]
    pub k: Option<u64>,
    pub replicates: Option<usize>,
    pub c: Option<f64>,
    pub tol: Option<f64>,
    #[serde(rename = "n-max", alias = "n_max")]
    pub n_max: Option<usize>,
    #[serde(rename = "n-w", alias = "n_w")]
    pub n_w: Option<usize>,
    pub horizon: Option<usize>,
    pub mode: Option<Mode>,
    pub eps: Option<f64>,
    pub resolution: Option<usize>,
    pub j: Option<Vec<i32>>,
    pub grid: Option<Vec<u64>>,
    pub offsets: Option<Vec<i64>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Action {
    FixedPoints,
    Flow {
        x0: DensityPoint,
        horizon: usize,
    },
    Hfun {
        x: Deviation,
        tol: f64,
        n_max: usize,
    },
    HSurface {
        w_range: (f64, f64),
        x1_range: (f64, f64),
        resolution: usize,
        tol: f64,
        n_max: usize,
    },
    Phase {
        x1_range: (f64, f64),
        x2_range: (f64, f64),
        resolution: usize,
    },
    Simulate {
        #[serde(rename = "K")]
        k: u64,
        horizon: usize,
        mode: Mode,
        replicates: usize,
    },
    Glued {
        #[serde(rename = "K")]
        k: u64,
        horizon: usize,
        c: f64,
    },
    EstimateW {
        replicates: usize,
        n_w: usize,
    },
    VerifyTheorem1 {
        j: Vec<i32>,
        replicates: usize,
        n_w: usize,
        tol: f64,
    },
    VerifyCorollary1 {
        grid: Vec<u64>,
        replicates: usize,
        offsets: Vec<i64>,
        c: f64,
        tol: f64,
    },
    Establishment {
        #[serde(rename = "K")]
        k: u64,
        replicates: usize,
        eps: f64,
    },
    CouplingError {
        grid: Vec<u64>,
        replicates: usize,
        c: f64,
    },
    Schroeder {
        rho: f64,
        c_coef: f64,
        x: Vec<f64>,
        tol: f64,
        n_max: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    /// Subcommand name as typed.
    pub name: &'static str,
    pub params: ModelParams,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub action: Action,
}

impl Invocation {
    /// Resolved parameters as recorded in the manifest.
    pub fn parameter_map(&self) -> serde_json::Map<String, serde_json::Value> {
        let mut map = match serde_json::to_value(&self.action) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => serde_json::Map::new(),
        };
        map.remove("command");
        map.insert("a1".into(), self.params.a1().into());
        map.insert("a2".into(), self.params.a2().into());
        map.insert("gamma".into(), self.params.gamma().into());
        map.insert("seed".into(), self.seed.into());
        map.insert(
            "format".into(),
            serde_json::to_value(self.format).unwrap_or(serde_json::Value::Null),
        );
        map
    }
}

#[derive(Debug)]
pub enum ParseFailure {
    /// Usage errors, `--help` and `--version`; clap picks the exit code.
    Clap(clap::Error),
    Invalid(Error),
}

impl From<Error> for ParseFailure {
    fn from(e: Error) -> Self {
        ParseFailure::Invalid(e)
    }
}

fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

pub fn parse_cli<I, T>(argv: I) -> std::result::Result<Invocation, ParseFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ParseFailure::Clap)?;
    Ok(resolve(cli)?)
}

pub fn resolve(cli: Cli) -> Result<Invocation> {
    let g = cli.global;
    let cfg = match &g.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let params = ModelParams::new(
        pick(g.a1, cfg.a1, DEFAULT_A1),
        pick(g.a2, cfg.a2, DEFAULT_A2),
        pick(g.gamma, cfg.gamma, DEFAULT_GAMMA),
    )?;
    let seed = pick(g.seed, cfg.seed, DEFAULT_SEED);
    let format = pick(g.format, cfg.format, Format::Csv);
    let tol = |flag: Option<f64>| pick(flag, cfg.tol, DEFAULT_TOL);
    let c = |flag: Option<f64>| pick(flag, cfg.c, sim::DEFAULT_C);
    let n_w = |flag: Option<usize>| pick(flag, cfg.n_w, experiments::DEFAULT_N_W);
    let k = |flag: Option<u64>, default: u64| pick(flag, cfg.k, default);
    let replicates = |flag: Option<usize>, default: usize| pick(flag, cfg.replicates, default);
    let resolution = |flag: Option<usize>, default: usize| pick(flag, cfg.resolution, default);

    let (name, action) = match cli.command {
        Command::FixedPoints => ("fixed-points", Action::FixedPoints),
        Command::Flow(a) => (
            "flow",
            Action::Flow {
                x0: DensityPoint::new(a.x1.unwrap_or(params.a1()), a.x2.unwrap_or(0.01)),
                horizon: pick(a.horizon, cfg.horizon, 200),
            },
        ),
        Command::Hfun(a) => {
            let n_max = pick(a.n_max, cfg.n_max, flow::DEFAULT_H_N_MAX);
            let action = match a.w_range {
                Some(w_range) => Action::HSurface {
                    w_range,
                    x1_range: a.x1_range.unwrap_or((-3.0, 3.0)),
                    resolution: resolution(a.resolution, 11),
                    tol: tol(a.tol),
                    n_max,
                },
                None => Action::Hfun {
                    x: Deviation::new(a.x1.unwrap_or(0.0), a.x2.unwrap_or(1.0)),
                    tol: tol(a.tol),
                    n_max,
                },
            };
            ("hfun", action)
        }
        Command::Phase(a) => (
            "phase",
            Action::Phase {
                x1_range: a.x1_range.unwrap_or((0.0, 2.0 * params.a1())),
                x2_range: a.x2_range.unwrap_or((0.0, 2.0 * params.a2())),
                resolution: resolution(a.resolution, 21),
            },
        ),
        Command::Simulate(a) => {
            let k = k(a.k, 100_000);
            let horizon = match a.horizon.or(cfg.horizon) {
                Some(h) => h,
                None => 2 * experiments::n1_of(&params, k)?,
            };
            (
                "simulate",
                Action::Simulate {
                    k,
                    horizon,
                    mode: pick(a.mode, cfg.mode, Mode::Fast),
                    replicates: replicates(a.replicates, 1),
                },
            )
        }
        Command::Glued(a) => {
            let k = k(a.k, 100_000);
            let horizon = match a.horizon.or(cfg.horizon) {
                Some(h) => h,
                None => 2 * experiments::n1_of(&params, k)?,
            };
            ("glued", Action::Glued { k, horizon, c: c(a.c) })
        }
        Command::EstimateW(a) => (
            "estimate-w",
            Action::EstimateW {
                replicates: replicates(a.replicates, 1000),
                n_w: n_w(a.n_w),
            },
        ),
        Command::VerifyTheorem1(a) => (
            "verify-theorem1",
            Action::VerifyTheorem1 {
                j: pick(a.j, cfg.j.clone(), vec![25, 30, 35, 40]),
                replicates: replicates(a.replicates, 4000),
                n_w: n_w(a.n_w),
                tol: tol(a.tol),
            },
        ),
        Command::VerifyCorollary1(a) => {
            let grid = match (a.grid, a.k) {
                (Some(g), _) => g,
                (None, Some(k)) => vec![k],
                (None, None) => cfg.grid.clone().or(cfg.k.map(|k| vec![k])).unwrap_or(vec![1000, 100_000]),
            };
            (
                "verify-corollary1",
                Action::VerifyCorollary1 {
                    grid,
                    replicates: replicates(a.replicates, 500),
                    offsets: pick(a.offsets.map(|o| o.0), cfg.offsets.clone(), (-5..=5).collect()),
                    c: c(a.c),
                    tol: tol(a.tol),
                },
            )
        }
        Command::Establishment(a) => (
            "establishment",
            Action::Establishment {
                k: k(a.k, 100_000),
                replicates: replicates(a.replicates, 10_000),
                eps: pick(a.eps, cfg.eps, experiments::default_establishment_eps(&params)),
            },
        ),
        Command::CouplingError(a) => (
            "coupling-error",
            Action::CouplingError {
                grid: pick(a.grid, cfg.grid.clone(), vec![1000, 10_000, 100_000]),
                replicates: replicates(a.replicates, 400),
                c: c(a.c),
            },
        ),
        Command::Schroeder(a) => (
            "schroeder",
            Action::Schroeder {
                rho: a.rho.unwrap_or(params.rho()),
                c_coef: a.c_coef.unwrap_or(1.0),
                x: a.x.unwrap_or(vec![0.1, 1.0, 10.0]),
                tol: tol(a.tol),
                n_max: pick(a.n_max, cfg.n_max, SCHROEDER_N_MAX),
            },
        ),
    };
    Ok(Invocation {
        name,
        params,
        seed,
        format,
        out: g.out,
        action,
    })
}

/// One table cell; floats are written with full precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::UInt(v as u64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    #[serde(skip)]
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Table(Table),
    Report(ExperimentReport),
}

impl Artifact {
    fn file_name(&self, format: Format) -> String {
        match (self, format) {
            (Artifact::Table(t), Format::Csv) => format!("{}.csv", t.name),
            (Artifact::Table(t), Format::Json) => format!("{}.json", t.name),
            (Artifact::Report(r), _) => format!("{}.json", r.name),
        }
    }
}

fn counts_table(name: &str, counts: &[[u64; 2]], k: u64) -> Table {
    let mut t = Table::new(name, &io::PATH_HEADER);
    let kf = k as f64;
    for (n, c) in counts.iter().enumerate() {
        t.push(vec![
            n.into(),
            c[0].into(),
            c[1].into(),
            (c[0] as f64 / kf).into(),
            (c[1] as f64 / kf).into(),
        ]);
    }
    t
}

fn fixed_points_artifacts(p: &ModelParams) -> Vec<Artifact> {
    let mut t = Table::new("fixed_points", &["name", "x1", "x2", "modulus1", "modulus2", "stability"]);
    let fps = p.fixed_points();
    for (name, fp) in fps.named() {
        t.push(vec![
            name.into(),
            fp.point.x1.into(),
            fp.point.x2.into(),
            fp.eigen_moduli[0].into(),
            fp.eigen_moduli[1].into(),
            fp.stability.as_str().into(),
        ]);
    }
    let dc = p.derived_constants();
    let mut c = Table::new("constants", &["name", "value"]);
    c.push(vec!["rho".into(), dc.rho.into()]);
    c.push(vec!["b".into(), dc.b.into()]);
    c.push(vec!["rho_tilde".into(), dc.rho_tilde.into()]);
    vec![Artifact::Table(t), Artifact::Table(c)]
}

fn h_row(e: &flow::HEvaluation) -> Vec<Cell> {
    vec![
        e.input.d1.into(),
        e.input.d2.into(),
        e.value.x1.into(),
        e.value.x2.into(),
        e.iterations_used.into(),
        e.residual.into(),
    ]
}

/// Computes the artifacts of a resolved command.
pub fn run(inv: &Invocation) -> Result<Vec<Artifact>> {
    let p = &inv.params;
    let seed = inv.seed;
    let out = match &inv.action {
        Action::FixedPoints => fixed_points_artifacts(p),
        Action::Flow { x0, horizon } => {
            let orbit = flow::iterate_orbit(p, *x0, *horizon);
            let mut t = Table::new("orbit", &["n", "x1", "x2"]);
            for (n, x) in orbit.points.iter().enumerate() {
                t.push(vec![n.into(), x.x1.into(), x.x2.into()]);
            }
            vec![Artifact::Table(t)]
        }
        Action::Hfun { x, tol, n_max } => {
            let e = flow::eval_h(p, *x, *tol, *n_max)?;
            let mut t = Table::new("h", &["d1", "d2", "H1", "H2", "iterations", "residual"]);
            t.push(h_row(&e));
            let mut inc = Table::new("h_increments", &["n", "increment"]);
            let first = e.iterations_used + 1 - e.increments.len();
            for (i, d) in e.increments.iter().enumerate() {
                inc.push(vec![(first + i).into(), (*d).into()]);
            }
            vec![Artifact::Table(t), Artifact::Table(inc)]
        }
        Action::HSurface {
            w_range,
            x1_range,
            resolution,
            tol,
            n_max,
        } => {
            let nodes = flow::h_surface(p, *w_range, *x1_range, *resolution, *tol, *n_max)?;
            let mut t = Table::new("h_surface", &["w", "x1", "H1", "H2", "iterations", "residual", "status"]);
            for node in nodes {
                let row = match &node.outcome {
                    Ok(e) => vec![
                        node.w.into(),
                        node.x1.into(),
                        e.value.x1.into(),
                        e.value.x2.into(),
                        e.iterations_used.into(),
                        e.residual.into(),
                        "ok".into(),
                    ],
                    Err(err) => vec![
                        node.w.into(),
                        node.x1.into(),
                        f64::NAN.into(),
                        f64::NAN.into(),
                        0usize.into(),
                        f64::NAN.into(),
                        Cell::Text(err.to_string().replace(',', ";")),
                    ],
                };
                t.push(row);
            }
            vec![Artifact::Table(t)]
        }
        Action::Phase {
            x1_range,
            x2_range,
            resolution,
        } => {
            let nodes = flow::phase_grid(p, *x1_range, *x2_range, *resolution)?;
            let mut t = Table::new("phase", &["x1", "x2", "dx1", "dx2"]);
            for node in nodes {
                t.push(vec![
                    node.point.x1.into(),
                    node.point.x2.into(),
                    node.displacement.x1.into(),
                    node.displacement.x2.into(),
                ]);
            }
            vec![Artifact::Table(t)]
        }
        Action::Simulate {
            k,
            horizon,
            mode,
            replicates,
        } => {
            let mut arts = Vec::new();
            for r in 0..*replicates {
                let suffix = if *replicates == 1 { String::new() } else { format!("_{r:04}") };
                let cfg = SimConfig::new(*k, seed, *horizon, *mode);
                let mut rng = replicate_rng(seed, r as u64, Stream::Paths);
                match mode {
                    Mode::Fast => {
                        let z = sim::simulate_z_with(p, &cfg, &mut rng)?;
                        arts.push(Artifact::Table(counts_table(&format!("path{suffix}"), &z.counts, *k)));
                    }
                    Mode::Coupled => {
                        let (z, y) = sim::simulate_coupled_with(p, &cfg, &mut rng)?;
                        arts.push(Artifact::Table(counts_table(&format!("path{suffix}"), &z.counts, *k)));
                        arts.push(Artifact::Table(counts_table(&format!("gw_path{suffix}"), &y.counts, *k)));
                    }
                }
            }
            arts
        }
        Action::Glued { k, horizon, c } => {
            let cfg = SimConfig::new(*k, seed, *horizon, Mode::Fast);
            let mut rng = replicate_rng(seed, 0, Stream::Paths);
            let g = sim::glued_approx_with(p, &cfg, *c, &mut rng)?;
            let mut t = Table::new("glued", &["n", "x1", "x2", "segment"]);
            for (n, x) in g.densities.iter().enumerate() {
                let seg = if n <= g.switch_index { "gw" } else { "flow" };
                t.push(vec![n.into(), x.x1.into(), x.x2.into(), seg.into()]);
            }
            vec![Artifact::Table(t)]
        }
        Action::EstimateW { replicates, n_w } => {
            let mut t = Table::new("w_samples", &["replicate", "w", "extinct"]);
            let mut values = Vec::with_capacity(*replicates);
            let mut extinct = 0u64;
            for r in 0..*replicates {
                let mut rng = replicate_rng(seed, r as u64, Stream::MartingaleLimit);
                let w = sim::estimate_w_with(p, *n_w, &mut rng)?;
                t.push(vec![r.into(), w.value.into(), w.extinct.into()]);
                values.push(w.value);
                extinct += w.extinct as u64;
            }
            let mut report = ExperimentReport::new("estimate_w", *p, Vec::new(), *replicates, seed);
            report.metric("mean", Metric::mean(experiments::mean_with_se(&values)?));
            let n = *replicates as u64;
            let ci = experiments::wilson_interval(extinct, n, experiments::CONFIDENCE)?;
            report.metric("extinct_fraction", Metric::proportion(extinct, n, ci, experiments::CONFIDENCE));
            report.metric("extinction_target", Metric::exact(2.0 / p.rho() - 1.0, *replicates));
            report.note(format!("W truncated at generation {n_w}"));
            vec![Artifact::Table(t), Artifact::Report(report)]
        }
        Action::VerifyTheorem1 {
            j,
            replicates,
            n_w,
            tol,
        } => {
            let (report, runs) = experiments::theorem1_trend(p, j, *replicates, seed, *n_w, *tol, 0.08)?;
            let mut t = Table::new("theorem1_samples", &["j", "K", "replicate", "x2", "chi2", "w"]);
            for (jj, run) in j.iter().zip(&runs) {
                for r in 0..run.x2.len() {
                    t.push(vec![
                        (*jj as i64).into(),
                        run.k.into(),
                        r.into(),
                        run.x2[r].into(),
                        run.chi2[r].into(),
                        run.w[r].value.into(),
                    ]);
                }
            }
            vec![Artifact::Report(report), Artifact::Table(t)]
        }
        Action::VerifyCorollary1 {
            grid,
            replicates,
            offsets,
            c,
            tol,
        } => {
            let (report, outcomes) = if grid.len() == 1 {
                let out = experiments::corollary1_check(p, grid[0], *replicates, offsets, *c, seed, *tol)?;
                (out.report.clone(), vec![out])
            } else {
                experiments::corollary1_study(p, grid, *replicates, offsets, *c, seed, *tol)?
            };
            let mut t = Table::new("corollary1_errors", &["K", "offset", "replicate", "w_hat", "error"]);
            for out in &outcomes {
                for (i, n) in out.offsets.iter().enumerate() {
                    for (r, e) in out.errors[i].iter().enumerate() {
                        t.push(vec![out.k.into(), (*n).into(), r.into(), out.w_hat[r].into(), (*e).into()]);
                    }
                }
            }
            vec![Artifact::Report(report), Artifact::Table(t)]
        }
        Action::Establishment { k, replicates, eps } => {
            vec![Artifact::Report(experiments::establishment_probability(p, *k, *replicates, *eps, seed)?)]
        }
        Action::CouplingError { grid, replicates, c } => {
            vec![Artifact::Report(experiments::coupling_error_study(p, grid, *replicates, *c, seed)?)]
        }
        Action::Schroeder {
            rho,
            c_coef,
            x,
            tol,
            n_max,
        } => {
            let mut t = Table::new("schroeder", &["x", "value", "ln_value", "n_used", "last_difference", "status"]);
            for &xi in x {
                let row = match flow::schroeder_limit_capped(*rho, *c_coef, xi, *tol, *n_max) {
                    Ok(s) => vec![
                        xi.into(),
                        s.value.into(),
                        s.value.ln().into(),
                        s.n_used.into(),
                        s.last_difference.into(),
                        "ok".into(),
                    ],
                    Err(Error::NonFinite { .. }) => {
                        // the value overflows f64: resolve it in arbitrary
                        // precision and report its logarithm
                        let cap = (*n_max).max(flow::PRECISE_N_MAX);
                        match flow::schroeder_limit_precise(*rho, *c_coef, xi, *tol, cap) {
                            Ok(hp) => vec![
                                xi.into(),
                                hp.value.into(),
                                hp.ln_value.into(),
                                hp.n_used.into(),
                                hp.differences[1].into(),
                                "overflow".into(),
                            ],
                            Err(Error::BudgetExceeded { .. }) => {
                                let l = flow::schroeder_limit_ln(*rho, *c_coef, xi, *tol)?;
                                vec![
                                    xi.into(),
                                    f64::INFINITY.into(),
                                    l.ln_value.into(),
                                    l.n_used.into(),
                                    Cell::Float(f64::NAN),
                                    "log-only".into(),
                                ]
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    Err(e) => return Err(e),
                };
                t.push(row);
            }
            vec![Artifact::Table(t)]
        }
    };
    Ok(out)
}

fn render(art: &Artifact, format: Format) -> Result<String> {
    let json_err = |source| Error::Json {
        path: PathBuf::from("<stdout>"),
        source,
    };
    Ok(match (art, format) {
        (Artifact::Table(t), Format::Csv) => t.to_csv(),
        (Artifact::Table(t), Format::Json) => serde_json::to_string_pretty(t).map_err(json_err)? + "\n",
        (Artifact::Report(r), _) => serde_json::to_string_pretty(r).map_err(json_err)? + "\n",
    })
}

/// Writes artifacts under `--out` (plus the manifest) or prints them.
/// Returns the text destined for stdout.
pub fn emit(inv: &Invocation, mut artifacts: Vec<Artifact>, seconds: f64) -> Result<String> {
    let manifest = RunManifest::new(inv.name, inv.parameter_map(), inv.seed);
    for art in &mut artifacts {
        if let Artifact::Report(r) = art {
            r.manifest = Some(manifest.clone());
        }
    }
    let mut stdout = String::new();
    match &inv.out {
        Some(dir) => {
            for art in &artifacts {
                let dest = io::output_path(dir, &art.file_name(inv.format));
                match (art, inv.format) {
                    (Artifact::Table(t), Format::Csv) => {
                        let cols: Vec<&str> = t.columns.iter().map(String::as_str).collect();
                        io::write_csv(&dest, &cols, t.rows.iter().map(|r| r.iter().map(Cell::render).collect()))?
                    }
                    (Artifact::Table(t), Format::Json) => io::write_json(t, &dest)?,
                    (Artifact::Report(r), _) => io::write_report_json(r, &dest)?,
                }
                stdout.push_str(&format!("wrote {}\n", dest.display()));
            }
            let dest = io::output_path(dir, "manifest.json");
            io::write_json(&manifest.with_duration(seconds), &dest)?;
            stdout.push_str(&format!("wrote {}\n", dest.display()));
        }
        None => {
            let parts = artifacts
                .iter()
                .map(|a| render(a, inv.format))
                .collect::<Result<Vec<_>>>()?;
            stdout = parts.join("\n");
        }
    }
    Ok(stdout)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match parse_cli(argv) {
        Ok(inv) => inv,
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(ParseFailure::Invalid(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let start = Instant::now();
    let result = run(&inv).and_then(|arts| emit(&inv, arts, start.elapsed().as_secs_f64()));
    match result {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                // a closed reader (e.g. `| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error: writing to stdout: {e}");
                    5
                }
                _ => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
