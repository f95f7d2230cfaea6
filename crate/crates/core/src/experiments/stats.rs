//! Sample statistics used by the experiment harnesses.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use crate::error::{Error, Result};

/// Sorted sample with an `O(log n)` empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(bad) = values.iter().find(|v| v.is_nan()) {
            return Err(Error::InvalidInput(format!("sample contains {bad}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fraction of the sample `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Number of values strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic, by a merge scan over both
/// sorted samples. Ties are stepped together so the CDFs are compared only
/// between distinct values.
pub fn ks_distance(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xa, xb) = (a.values(), b.values());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let t = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= t {
            i += 1;
        }
        while j < xb.len() && xb[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// 99% two-sample KS fluctuation scale `1.63 √((m+n)/(mn))`.
pub fn ks_critical_99(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    1.63 * ((m + n) / (m * n)).sqrt()
}

fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} must lie in (0, 1)")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidInput(format!(
            "need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}"
        )));
    }
    let z = normal_quantile(level)?;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let centre = (phat + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn mean_with_se(values: &[f64]) -> Result<MeanEstimate> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = values.len();
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let std_error = if n > 1 {
        let ss = compensated_sum(values.iter().map(|v| (v - mean).powi(2)));
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(MeanEstimate { mean, std_error, n })
}

/// Sample quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile level {q} outside [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub value: f64,
    /// Order-statistic interval with coverage at least `level` (clamped to
    /// the sample range for small samples).
    pub interval: (f64, f64),
    pub level: f64,
    pub n: usize,
}

/// Quantile with a distribution-free order-statistic confidence interval.
pub fn quantile_with_ci(values: &[f64], q: f64, level: f64) -> Result<QuantileEstimate> {
    let mut sorted = values.to_vec();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let value = quantile(&sorted, q)?;
    let n = sorted.len();
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} must lie in (0, 1)")));
    }
    // The count of observations below the true quantile is Binomial(n, q);
    // [X_(l), X_(u)] covers it with probability P(l <= B < u).
    let alpha = (1.0 - level) / 2.0;
    let bin = Binomial::new(q, n as u64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let l = (0..=n as u64).rev().find(|&k| bin.cdf(k) <= alpha).map(|k| k as usize + 1);
    let u = (0..=n as u64).find(|&k| bin.cdf(k) >= 1.0 - alpha).map(|k| k as usize + 1);
    let lo = l.map_or(sorted[0], |l| sorted[(l - 1).min(n - 1)]);
    let hi = u.map_or(sorted[n - 1], |u| sorted[(u - 1).min(n - 1)]);
    Ok(QuantileEstimate {
        value,
        interval: (lo, hi),
        level,
        n,
    })
}

/// Number of adjacent pairs where the sequence fails to strictly decrease.
pub fn count_non_decreasing_steps(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] >= w[0]).count()
}
