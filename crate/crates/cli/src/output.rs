//! Trace CSVs, field matrices and experiment directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cscp_core::cscp::Model;
use cscp_core::{CscpTrace, Scenario};
use cscp_core::nalgebra::DVector;

use crate::error::{CliError, Result};
use crate::experiment::Experiment;
use crate::scenario_file::EmitFields;

/// Column order of the per-iteration trace CSV.
pub const TRACE_COLUMNS: [&str; 13] = [
    "k", "q", "z", "trace_p", "j_hat", "j_true", "var_j", "risk", "objective", "margin", "travel",
    "millis", "path",
];

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes one row per iteration; list-valued cells are space separated.
pub fn write_trace_csv<W: Write>(trace: &CscpTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            join(r.config.indices()),
            join(&r.measurements),
            r.trace_p.to_string(),
            r.j_hat.to_string(),
            r.j_true.to_string(),
            r.var_j.to_string(),
            r.risk.to_string(),
            r.objective.to_string(),
            r.margin.to_string(),
            r.travel.to_string(),
            r.millis.to_string(),
            join(&r.path),
        ])?;
    }
    w.flush().map_err(|e| CliError::io("trace csv", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    True,
    Estimated,
    Error,
    ObjectiveMap,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [FieldKind::True, FieldKind::Estimated, FieldKind::Error, FieldKind::ObjectiveMap];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::True => "true",
            FieldKind::Estimated => "estimated",
            FieldKind::Error => "error",
            FieldKind::ObjectiveMap => "objective-map",
        }
    }
}

impl FromStr for FieldKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        FieldKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown field kind {s:?}")))
    }
}

/// `grid_side × grid_side` values for iteration `k`, row-major with row 0
/// at the bottom of the workspace (the grid index layout).
pub fn field_matrix(trace: &CscpTrace, model: &Model, k: usize, kind: FieldKind) -> Result<Vec<f64>> {
    let record = trace
        .records
        .iter()
        .find(|r| r.k == k)
        .ok_or_else(|| CliError::Usage(format!("iteration {k} not in trace")))?;
    let field = |theta: &[f64]| -> Vec<f64> {
        let theta = DVector::from_column_slice(theta);
        (0..model.workspace.len())
            .map(|i| model.basis.field_value(model.workspace.point(i), &theta))
            .collect()
    };
    Ok(match kind {
        FieldKind::True => field(&record.theta_true),
        FieldKind::Estimated => field(&record.theta_hat),
        FieldKind::Error => field(&record.theta_true)
            .into_iter()
            .zip(field(&record.theta_hat))
            .map(|(c, c_hat)| (c - c_hat).abs())
            .collect(),
        FieldKind::ObjectiveMap => {
            if record.objective_map.is_empty() {
                return Err(CliError::Usage(format!(
                    "no objective map recorded at iteration {k}"
                )));
            }
            record.objective_map.clone()
        }
    })
}

pub fn field_file_name(run_id: &str, k: usize, kind: FieldKind) -> String {
    format!("{run_id}_k{k}_{}.csv", kind.name())
}

/// Writes `<run-id>_k<k>_<kind>.csv` into `dir`.
pub fn emit_field_dump(
    trace: &CscpTrace,
    model: &Model,
    k: usize,
    kind: FieldKind,
    run_id: &str,
    dir: &Path,
) -> Result<PathBuf> {
    let values = field_matrix(trace, model, k, kind)?;
    let side = model.workspace.grid_side();
    let path = dir.join(field_file_name(run_id, k, kind));
    let mut text = String::new();
    for row in values.chunks(side) {
        text.push_str(&join(row).replace(' ', ","));
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes `summary.json`, one trace CSV per successful run, and the field
/// dumps requested by `emit`.
pub fn write_experiment(experiment: &Experiment, scenario: &Scenario, emit: EmitFields, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let model = scenario.build()?;
    for outcome in &experiment.runs {
        let Ok(trace) = &outcome.result else { continue };
        let id = outcome.run_id();
        let path = dir.join(format!("{id}.csv"));
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_trace_csv(trace, file)?;
        let ks: Vec<usize> = match emit {
            EmitFields::None => Vec::new(),
            EmitFields::Terminal => vec![trace.iterations()],
            EmitFields::All => trace.records.iter().map(|r| r.k).collect(),
        };
        for k in ks {
            let has_map = trace.records.iter().any(|r| r.k == k && !r.objective_map.is_empty());
            for kind in FieldKind::ALL {
                if kind == FieldKind::ObjectiveMap && !has_map {
                    continue;
                }
                emit_field_dump(trace, &model, k, kind, &id, dir)?;
            }
        }
    }
    let path = dir.join("summary.json");
    fs::write(&path, experiment.summary.to_json()?).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}
