use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::experiments::stats::{MeanEstimate, QuantileEstimate};
use crate::io::RunManifest;
use crate::model::ModelParams;

/// How the uncertainty of a metric is expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Uncertainty {
    StdError { value: f64 },
    /// Confidence interval that does not rest on a normal approximation
    /// of the metric itself (Wilson, order statistics).
    Interval { lo: f64, hi: f64, level: f64, method: String },
    /// Deterministic quantity, or a count.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub replicates: usize,
    pub uncertainty: Uncertainty,
}

impl Metric {
    pub fn exact(value: f64, replicates: usize) -> Self {
        Metric {
            value,
            replicates,
            uncertainty: Uncertainty::Exact,
        }
    }

    pub fn mean(m: MeanEstimate) -> Self {
        Metric {
            value: m.mean,
            replicates: m.n,
            uncertainty: Uncertainty::StdError { value: m.std_error },
        }
    }

    pub fn quantile(q: QuantileEstimate) -> Self {
        Metric {
            value: q.value,
            replicates: q.n,
            uncertainty: Uncertainty::Interval {
                lo: q.interval.0,
                hi: q.interval.1,
                level: q.level,
                method: "order statistics".into(),
            },
        }
    }

    pub fn proportion(successes: u64, trials: u64, interval: (f64, f64), level: f64) -> Self {
        Metric {
            value: successes as f64 / trials as f64,
            replicates: trials as usize,
            uncertainty: Uncertainty::Interval {
                lo: interval.0,
                hi: interval.1,
                level,
                method: "wilson".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub threshold: f64,
    pub observed: f64,
    pub pass: bool,
}

impl Verdict {
    /// Passes when `observed < threshold`.
    pub fn below(criterion: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Verdict {
            criterion: criterion.into(),
            threshold,
            observed,
            pass: observed < threshold,
        }
    }

    /// Passes when `observed <= threshold`.
    pub fn at_most(criterion: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Verdict {
            criterion: criterion.into(),
            threshold,
            observed,
            pass: observed <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub params: ModelParams,
    pub grid: Vec<u64>,
    pub replicates: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, Metric>,
    pub verdicts: BTreeMap<String, Verdict>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>, params: ModelParams, grid: Vec<u64>, replicates: usize, seed: u64) -> Self {
        ExperimentReport {
            name: name.into(),
            params,
            grid,
            replicates,
            seed,
            metrics: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            notes: Vec::new(),
            manifest: None,
        }
    }

    pub fn metric(&mut self, key: impl Into<String>, m: Metric) {
        self.metrics.insert(key.into(), m);
    }

    pub fn verdict(&mut self, key: impl Into<String>, v: Verdict) {
        self.verdicts.insert(key.into(), v);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(|v| v.pass)
    }

    pub fn metric_value(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).map(|m| m.value)
    }
}
