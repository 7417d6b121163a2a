//! Seeded batches of CSCP runs and their summaries.

use cscp_core::{run, CscpTrace, Method, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SUMMARY_SCHEMA_VERSION: &str = "1";

/// One (method, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: Method,
    pub seed: u64,
    pub result: std::result::Result<CscpTrace, String>,
}

impl RunOutcome {
    pub fn run_id(&self) -> String {
        run_id(self.method, self.seed)
    }
}

pub fn run_id(method: Method, seed: u64) -> String {
    format!("{}_s{seed}", method.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub seed: u64,
    /// `converged`, `max-iterations` or `error`.
    pub status: String,
    pub iterations: Option<usize>,
    pub j_hat: Option<f64>,
    pub j_true: Option<f64>,
    pub var_j: Option<f64>,
    pub travel: Option<f64>,
    pub evaluations: Option<usize>,
    pub millis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl SummaryRow {
    pub fn from_outcome(outcome: &RunOutcome) -> Self {
        match &outcome.result {
            Ok(trace) => {
                let last = trace.terminal();
                Self {
                    method: outcome.method,
                    seed: outcome.seed,
                    status: match trace.status {
                        cscp_core::Status::Converged => "converged",
                        cscp_core::Status::MaxIterations => "max-iterations",
                    }
                    .to_string(),
                    iterations: Some(trace.iterations()),
                    j_hat: Some(last.j_hat),
                    j_true: Some(last.j_true),
                    var_j: Some(last.var_j),
                    travel: Some(trace.cumulative_travel()),
                    evaluations: Some(trace.records.iter().map(|r| r.evaluations).sum()),
                    millis: Some(trace.records.iter().map(|r| r.millis).sum()),
                    error: None,
                }
            }
            Err(message) => Self {
                method: outcome.method,
                seed: outcome.seed,
                status: "error".to_string(),
                iterations: None,
                j_hat: None,
                j_true: None,
                var_j: None,
                travel: None,
                evaluations: None,
                millis: None,
                error: Some(message.clone()),
            },
        }
    }

    fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "iterations" => self.iterations.map(|v| v as f64),
            "j_hat" => self.j_hat,
            "j_true" => self.j_true,
            "var_j" => self.var_j,
            "travel" => self.travel,
            "evaluations" => self.evaluations.map(|v| v as f64),
            "millis" => self.millis,
            _ => None,
        }
    }
}

pub const METRICS: [&str; 7] = ["iterations", "j_hat", "j_true", "var_j", "travel", "evaluations", "millis"];

/// Median and quartiles of one metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub metric: String,
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: String,
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

impl ExperimentSummary {
    /// Aggregates are computed over rows that did not error.
    pub fn from_rows(rows: Vec<SummaryRow>) -> Self {
        let mut methods: Vec<Method> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let mut aggregates = Vec::new();
        for &method in &methods {
            for metric in METRICS {
                let mut values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.method == method)
                    .filter_map(|r| r.metric(metric))
                    .collect();
                if values.is_empty() {
                    continue;
                }
                values.sort_by(f64::total_cmp);
                aggregates.push(Aggregate {
                    method,
                    metric: metric.to_string(),
                    count: values.len(),
                    q1: quantile(&values, 0.25),
                    median: quantile(&values, 0.5),
                    q3: quantile(&values, 0.75),
                });
            }
        }
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION.to_string(),
            rows,
            aggregates,
        }
    }

    /// Appends rows from another experiment and recomputes the aggregates.
    pub fn merge(self, other: ExperimentSummary) -> Self {
        let mut rows = self.rows;
        rows.extend(other.rows);
        Self::from_rows(rows)
    }

    pub fn aggregate(&self, method: Method, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.metric == metric)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.schema_version != SUMMARY_SCHEMA_VERSION {
            return Err(CliError::Schema {
                found: s.schema_version,
                expected: SUMMARY_SCHEMA_VERSION,
            });
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub summary: ExperimentSummary,
    pub runs: Vec<RunOutcome>,
}

impl Experiment {
    pub fn trace(&self, method: Method, seed: u64) -> Option<&CscpTrace> {
        self.runs
            .iter()
            .find(|r| r.method == method && r.seed == seed)
            .and_then(|r| r.result.as_ref().ok())
    }
}

/// Runs every (method, seed) pair. Under one seed all methods see the same
/// ground truth. A failing run is recorded and the batch continues.
///
/// `parallelism = 0` uses all available cores.
pub fn run_experiment(
    scenario: &Scenario,
    methods: &[Method],
    seeds: &[u64],
    parallelism: usize,
) -> Result<Experiment> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("need at least one method and one seed".into()));
    }
    scenario.build()?;
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let runs: Vec<RunOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(method, seed)| RunOutcome {
                method,
                seed,
                result: run(&scenario.clone().with_method(method), seed).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let rows = runs.iter().map(SummaryRow::from_outcome).collect();
    Ok(Experiment {
        summary: ExperimentSummary::from_rows(rows),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn error_rows_are_kept_but_not_aggregated() {
        let ok = SummaryRow {
            method: Method::Crmi,
            seed: 0,
            status: "converged".into(),
            iterations: Some(4),
            j_hat: Some(1.0),
            j_true: Some(1.0),
            var_j: Some(0.01),
            travel: Some(2.0),
            evaluations: Some(10),
            millis: Some(1.0),
            error: None,
        };
        let bad = SummaryRow {
            seed: 1,
            status: "error".into(),
            iterations: None,
            j_hat: None,
            j_true: None,
            var_j: None,
            travel: None,
            evaluations: None,
            millis: None,
            error: Some("boom".into()),
            ..ok.clone()
        };
        let s = ExperimentSummary::from_rows(vec![ok, bad]);
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.aggregate(Method::Crmi, "iterations").unwrap().count, 1);
        let back = ExperimentSummary::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
