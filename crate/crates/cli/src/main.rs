use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cscp::experiment::median;
use cscp::{load_scenario, run_experiment, CliError, EmitFields};
use cscp_core::{Method, Scenario};

/// Runs coupled sensor-placement and path-planning experiments.
#[derive(Debug, Parser)]
#[command(name = "cscp", version)]
struct Args {
    /// Scenario file (TOML). Without it the illustrative preset is used.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in scenario: illustrative, reconfiguration or greedy.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,

    /// Comma-separated methods; defaults to the scenario's method.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,

    /// A count `n` (seeds 0..n), a range `a..b`, or a list `3,5,8`.
    #[arg(long, default_value = "1")]
    seeds: String,

    /// Overrides the termination threshold on Var[J].
    #[arg(long)]
    epsilon: Option<f64>,

    /// Output directory.
    #[arg(long, default_value = "cscp-out")]
    out: PathBuf,

    /// Field matrices to write; overrides the scenario file.
    #[arg(long, value_enum)]
    emit_fields: Option<EmitFields>,

    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("cannot read seeds from {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return if a < b { Ok((a..b).collect()) } else { Err(bad()) };
    }
    if text.contains(',') {
        return text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect();
    }
    let n: u64 = text.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((0..n).collect())
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let (mut scenario, file_emit) = match (&args.config, &args.preset) {
        (Some(path), _) => load_scenario(path)?,
        (None, Some(name)) => (Scenario::preset(name)?, EmitFields::None),
        (None, None) => (Scenario::illustrative(), EmitFields::None),
    };
    if let Some(eps) = args.epsilon {
        scenario.epsilon = eps;
    }
    let emit = args.emit_fields.unwrap_or(file_emit);
    scenario.record_objective_map = emit != EmitFields::None;
    for w in scenario.warnings() {
        eprintln!("warning: {w}");
    }
    let methods = if args.method.is_empty() { vec![scenario.method] } else { args.method.clone() };
    let seeds = parse_seeds(&args.seeds)?;

    let experiment = run_experiment(&scenario, &methods, &seeds, args.parallel)?;
    cscp::output::write_experiment(&experiment, &scenario, emit, &args.out)?;

    println!("{:<14} {:>5} {:>9} {:>10} {:>10} {:>8} {:>8}", "method", "runs", "converged", "median k", "median J^", "travel", "errors");
    for &m in &methods {
        let rows: Vec<_> = experiment.summary.rows.iter().filter(|r| r.method == m).collect();
        let converged = rows.iter().filter(|r| r.status == "converged").count();
        let errors = rows.iter().filter(|r| r.status == "error").count();
        let med = |v: Vec<f64>| if v.is_empty() { f64::NAN } else { median(&v) };
        println!(
            "{:<14} {:>5} {:>9} {:>10.1} {:>10.3} {:>8.3} {:>8}",
            m.name(),
            rows.len(),
            converged,
            med(rows.iter().filter_map(|r| r.iterations.map(|v| v as f64)).collect()),
            med(rows.iter().filter_map(|r| r.j_hat).collect()),
            med(rows.iter().filter_map(|r| r.travel).collect()),
            errors
        );
    }
    for r in experiment.summary.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} seed {}: {}", r.method, r.seed, r.error.as_deref().unwrap_or(""));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4..6").unwrap(), vec![4, 5]);
        assert_eq!(parse_seeds("7, 2").unwrap(), vec![7, 2]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
