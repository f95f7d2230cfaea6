//! Acceptance suite. Runs every criterion at its stated tolerance and
//! replicate count, prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Run alone with `cargo test --release --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use bare_bones::experiments::{
    self, coupling_error_study, corollary1_study, establishment_probability, theorem1_trend, ExperimentReport,
};
use bare_bones::flow::{
    abel_residual, eval_h, schroeder_limit, schroeder_limit_precise, PhiTable, DEFAULT_H_N_MAX, PRECISE_N_MAX,
};
use bare_bones::model::{Mat2, Stability};
use bare_bones::seed::{replicate_rng, rng_from_seed, Stream};
use bare_bones::sim::{count_split_probs, simulate_gw_with, step_z, Mode, SimConfig};
use bare_bones::{Deviation, ModelParams};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn base() -> ModelParams {
    ModelParams::new(1.0, 1.0, 0.5).unwrap()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn failing_verdicts(r: &ExperimentReport) -> Vec<String> {
    r.verdicts
        .iter()
        .filter(|(_, v)| !v.pass)
        .map(|(k, v)| format!("{k} (observed {:.4e}, threshold {:.4e})", v.observed, v.threshold))
        .collect()
}

/// Eigenvalue moduli of a 2x2 matrix from its characteristic polynomial.
fn moduli(a: &Mat2) -> [f64; 2] {
    let [[p, q], [r, s]] = a.0;
    let tr = p + s;
    let det = p * s - q * r;
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        [(tr / 2.0 - root).abs(), (tr / 2.0 + root).abs()]
    } else {
        let m = det.sqrt();
        [m, m]
    }
}

fn fixed_points() -> Outcome {
    let mut rng = rng_from_seed(SEED);
    let mut worst: f64 = 0.0;
    let mut mismatches = Vec::new();
    let mut triples = 0;
    while triples < 100 {
        let (a1, a2, gamma) = (rng.random_range(0.1..10.0), rng.random_range(0.1..10.0), rng.random_range(0.01..0.99));
        if !(a1 - gamma * a2 > 0.0 && a2 - gamma * a1 > 0.0) {
            continue;
        }
        triples += 1;
        let p = ModelParams::new(a1, a2, gamma).unwrap();
        let set = p.fixed_points();
        let expected = [Stability::Unstable, Stability::Saddle, Stability::Saddle, Stability::Stable];
        for ((name, fp), want) in set.named().into_iter().zip(expected) {
            worst = worst.max(p.map_f(fp.point).dist_inf(fp.point));
            let from_jacobian = Stability::from_moduli(moduli(&p.jacobian_at(fp.point)));
            if fp.stability != want || from_jacobian != want {
                mismatches.push(format!("{name} at ({a1:.3}, {a2:.3}, {gamma:.3})"));
            }
        }
    }
    Outcome {
        pass: worst < 1e-12 && mismatches.is_empty(),
        detail: format!("100 triples, max |f(x*) - x*| = {worst:.2e}, class mismatches: {}", mismatches.len()),
    }
}

fn abel_equation() -> Outcome {
    let p = base();
    let mut rng = rng_from_seed(SEED);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..200 {
        let x = Deviation::new(rng.random_range(-5.0..5.0), rng.random_range(0.0..5.0));
        match abel_residual(&p, x, 1e-10) {
            Ok(r) => worst = worst.max(r),
            Err(_) => errors += 1,
        }
    }
    Outcome {
        pass: errors == 0 && worst < 1e-8,
        detail: format!("200 points, max residual {worst:.2e}, evaluation errors {errors}"),
    }
}

fn telescoping_decay() -> Outcome {
    let p = base();
    let cap = 1.0 / p.rho() + 0.05;
    let mut rng = rng_from_seed(SEED);
    let mut worst_fit: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    let mut short = 0;
    for _ in 0..20 {
        let x = Deviation::new(rng.random_range(-5.0..5.0), rng.random_range(0.1..5.0));
        let inc = eval_h(&p, x, 1e-10, DEFAULT_H_N_MAX).unwrap().increments;
        if inc.len() < 21 {
            short += 1;
            continue;
        }
        let tail = &inc[inc.len() - 21..];
        // least-squares slope of ln(increment) against the iteration index
        let ys: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
        let n = ys.len() as f64;
        let xbar = (n - 1.0) / 2.0;
        let ybar = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in ys.iter().enumerate() {
            sxy += (i as f64 - xbar) * (y - ybar);
            sxx += (i as f64 - xbar).powi(2);
        }
        worst_fit = worst_fit.max((sxy / sxx).exp());
        for w in tail.windows(2) {
            worst_step = worst_step.max(w[1] / w[0]);
        }
    }
    Outcome {
        pass: short == 0 && worst_fit <= cap,
        detail: format!(
            "20 probes, fitted ratio max {worst_fit:.4} (cap 1/rho + 0.05 = {cap:.4}), largest single-step ratio {worst_step:.4}"
        ),
    }
}

fn resident_invariance() -> Outcome {
    let p = base();
    let mut worst: f64 = 0.0;
    for w in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let centre = eval_h(&p, Deviation::new(0.0, w), 1e-10, DEFAULT_H_N_MAX).unwrap().value.x2;
        for x1 in [-3.0, 0.0, 3.0] {
            let h = eval_h(&p, Deviation::new(x1, w), 1e-10, DEFAULT_H_N_MAX).unwrap().value.x2;
            worst = worst.max((h - centre).abs());
        }
    }
    Outcome {
        pass: worst < 1e-6,
        detail: format!("max |H2((x1, w)) - H2((0, w))| = {worst:.2e}"),
    }
}

fn schroeder() -> Outcome {
    let rho = 4.0 / 3.0;
    let mut parts = Vec::new();
    let mut pass = true;
    for x in [0.1, 1.0, 10.0] {
        match schroeder_limit_precise(rho, 1.0, x, 1e-9, PRECISE_N_MAX) {
            Ok(s) => {
                let d = s.differences[0].max(s.differences[1]);
                pass &= d < 1e-9;
                parts.push(format!("x={x}: diff {d:.1e} at n={} (ln limit {:.4})", s.n_used, s.ln_value));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("x={x}: {e}"));
            }
        }
    }
    let table = PhiTable::new(rho, 1.0, 21).unwrap();
    let mut conj: f64 = 0.0;
    for i in 1..=40 {
        let y = 0.4 * i as f64 / 40.0;
        let py = rho * y * (1.0 + y);
        conj = conj.max((table.phi(py).unwrap() - rho * table.phi(y).unwrap()).abs());
    }
    pass &= conj < 1e-8;
    let zero_c = [0.1, 1.0, 10.0, 123.456]
        .iter()
        .all(|&x| schroeder_limit(rho, 0.0, x, 1e-9).unwrap().value == x);
    pass &= zero_c;
    Outcome {
        pass,
        detail: format!("{}; conjugacy max {conj:.1e}; C=0 exact: {zero_c}", parts.join(", ")),
    }
}

fn gw_identities() -> Outcome {
    let p = base();
    let rho = p.rho();
    let m = 100_000;
    let cfg = SimConfig::new(1000, SEED, 60, Mode::Fast).with_initial([0, 1]);
    let paths: Vec<[u64; 3]> = (0..m as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(SEED, r, Stream::Paths);
            let c = simulate_gw_with(&p, &cfg, &mut rng).unwrap().counts;
            [c[10][1], c[30][1], c[60][1]]
        })
        .collect();
    let extinct = paths.iter().filter(|c| c[2] == 0).count() as f64 / m as f64;
    let target = 2.0 / rho - 1.0;
    let se = (target * (1.0 - target) / m as f64).sqrt();
    let mut pass = (extinct - target).abs() <= 3.0 * se;
    let mut parts = vec![format!("extinction {extinct:.4} vs {target:.4} ({:.2} SE)", (extinct - target) / se)];
    for (i, n) in [10, 30, 60].into_iter().enumerate() {
        let scaled: Vec<f64> = paths.iter().map(|c| c[i] as f64 * rho.powi(-n)).collect();
        let (mean, sd) = mean_sd(&scaled);
        let se = sd / (m as f64).sqrt();
        pass &= (mean - 1.0).abs() <= 3.0 * se;
        parts.push(format!("n={n}: mean {mean:.4} ({:.2} SE)", (mean - 1.0) / se));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn one_step_moments() -> Outcome {
    let p = base();
    let (k, z) = (1000, [1000, 100]);
    let m = 100_000;
    let (p1, p2) = count_split_probs(&p, k, z);
    let next: Vec<[u64; 2]> = (0..m as u64)
        .into_par_iter()
        .map(|r| step_z(&p, k, z, &mut replicate_rng(SEED, r, Stream::Paths), 1).unwrap())
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, q) in [p1, p2].into_iter().enumerate() {
        let n = z[i] as f64;
        let (mean_want, var_want) = (2.0 * n * q, 4.0 * n * q * (1.0 - q));
        let xs: Vec<f64> = next.iter().map(|c| c[i] as f64).collect();
        let (mean, sd) = mean_sd(&xs);
        let var = sd * sd;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m as f64;
        let se_mean = sd / (m as f64).sqrt();
        let se_var = ((m4 - var * var) / m as f64).sqrt();
        let (zm, zv) = ((mean - mean_want) / se_mean, (var - var_want) / se_var);
        pass &= zm.abs() <= 3.0 && zv.abs() <= 3.0;
        parts.push(format!("type {}: mean {zm:+.2} SE, variance {zv:+.2} SE", i + 1));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn establishment() -> Outcome {
    let r = establishment_probability(&base(), 100_000, 10_000, 1.0 / 3.0, SEED).unwrap();
    let est = &r.metrics["estimate"];
    let width = r.verdicts["interval_width"].observed;
    Outcome {
        pass: r.all_pass(),
        detail: format!("estimate {:.4} (target 0.5), Wilson width {width:.4}", est.value),
    }
}

fn theorem1() -> Outcome {
    let (r, runs) = theorem1_trend(&base(), &[25, 30, 35, 40], 4000, SEED, experiments::DEFAULT_N_W, 1e-10, 0.08).unwrap();
    let ks: Vec<String> = runs
        .iter()
        .map(|o| format!("K={}: {:.4}", o.k, o.report.metrics["ks_distance"].value))
        .collect();
    let failed = failing_verdicts(&r);
    Outcome {
        pass: r.all_pass(),
        detail: format!("KS {}; failing: {failed:?}", ks.join(", ")),
    }
}

fn corollary1() -> Outcome {
    let offsets: Vec<i64> = (-5..=5).collect();
    let (r, runs) = corollary1_study(&base(), &[1000, 100_000], 500, &offsets, 0.75, SEED, 1e-10).unwrap();
    let means = |i: usize| -> Vec<String> {
        runs[i].errors.iter().map(|e| format!("{:.3}", mean_sd(e).0)).collect()
    };
    Outcome {
        pass: r.all_pass(),
        detail: format!(
            "mean errors K=1e3 [{}], K=1e5 [{}]; failing: {:?}",
            means(0).join(" "),
            means(1).join(" "),
            failing_verdicts(&r)
        ),
    }
}

fn coupling() -> Outcome {
    let grid = [1000, 10_000, 100_000];
    let r = coupling_error_study(&base(), &grid, 400, 0.75, SEED).unwrap();
    let medians: Vec<String> = grid
        .iter()
        .map(|k| format!("{:.4}", r.metrics[&format!("median_scaled_error_z2_alive[K={k}]")].value))
        .collect();
    Outcome {
        pass: r.all_pass(),
        detail: format!("alive-path medians of K^-0.75|Z2 - Y2| at nc: {}", medians.join(" > ")),
    }
}

const CLI_RUNS: &[&[&str]] = &[
    &["fixed-points"],
    &["flow", "--x1", "0.5", "--x2", "0.1", "--horizon", "20"],
    &["hfun", "--x1", "-1", "--x2", "1"],
    &["hfun", "--w-range", "0.5:2", "--x1-range", "-1:1", "--resolution", "3"],
    &["phase", "--resolution", "5"],
    &["simulate", "--K", "1000", "--horizon", "30", "--replicates", "2"],
    &["simulate", "--K", "1000", "--horizon", "30", "--mode", "coupled"],
    &["glued", "--K", "1000"],
    &["estimate-w", "--replicates", "50", "--n-w", "30"],
    &["verify-theorem1", "--j", "17,20", "--replicates", "100", "--n-w", "30"],
    &["verify-corollary1", "--grid", "1000,2000", "--replicates", "100", "--offsets", "-2..2"],
    &["establishment", "--K", "1000", "--replicates", "200"],
    &["coupling-error", "--grid", "1000,2000", "--replicates", "20"],
    &["schroeder", "--rho", "1.3333333333333333", "--x", "0.1,1,10"],
];

fn run_cli(args: &[&str], format: &str, out: Option<&Path>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bare-bones"));
    cmd.args(args).args(["--seed", "11", "--format", format]);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    let output = cmd.output().map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(format!("{args:?} exited with {}: {}", output.status, String::from_utf8_lossy(&output.stderr)));
    }
    Ok(output.stdout)
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).unwrap();
        if name == "manifest.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("wall_clock_seconds");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        files.insert(name, bytes);
    }
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    let mut compared = 0;
    for (i, args) in CLI_RUNS.iter().enumerate() {
        for format in ["csv", "json"] {
            let dirs = [tmp.path().join(format!("{i}-{format}-a")), tmp.path().join(format!("{i}-{format}-b"))];
            let printed = [run_cli(args, format, None), run_cli(args, format, None)];
            let written = [run_cli(args, format, Some(&dirs[0])), run_cli(args, format, Some(&dirs[1]))];
            match (printed, written) {
                ([Ok(a), Ok(b)], [Ok(_), Ok(_)]) => {
                    let (fa, fb) = (read_outputs(&dirs[0]), read_outputs(&dirs[1]));
                    compared += fa.len() + 1;
                    if a != b {
                        problems.push(format!("{} {format}: stdout differs", args[0]));
                    }
                    if fa.is_empty() || fa != fb {
                        problems.push(format!("{} {format}: files differ", args[0]));
                    }
                }
                (printed, written) => {
                    for e in printed.into_iter().chain(written).filter_map(|r| r.err()) {
                        problems.push(e);
                    }
                }
            }
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: format!(
            "{} invocations x 2 formats, {compared} outputs compared; problems: {problems:?}",
            CLI_RUNS.len()
        ),
    }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("fixed points and stability", Duration::from_secs(1), fixed_points),
        ("Abel equation residual", Duration::from_secs(10), abel_equation),
        ("telescoping decay", Duration::from_secs(5), telescoping_decay),
        ("H2 independent of resident deviation", Duration::from_secs(5), resident_invariance),
        ("Schroeder limit and conjugacy", Duration::from_secs(2), schroeder),
        ("Galton-Watson identities", Duration::from_secs(30), gw_identities),
        ("one-step moments", Duration::from_secs(30), one_step_moments),
        ("establishment probability", Duration::from_secs(180), establishment),
        ("distributional limit trend", Duration::from_secs(600), theorem1),
        ("pathwise deterministic approximation", Duration::from_secs(600), corollary1),
        ("coupling error", Duration::from_secs(600), coupling),
        ("CLI reproducibility", Duration::from_secs(600), reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed < budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failures} failed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
