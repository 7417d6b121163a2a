use std::fs;
use std::path::Path;
use std::process::Command;

use cscp::experiment::{run_experiment, ExperimentSummary};
use cscp::output::{field_matrix, write_experiment, TRACE_COLUMNS};
use cscp::{EmitFields, FieldKind, ScenarioFile};
use cscp_core::placement::PenaltyMode;
use cscp_core::{Method, Scenario};
use proptest::prelude::*;

fn quick() -> Scenario {
    Scenario::illustrative()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scenario_files_round_trip(
        grid in 3usize..12,
        per_side in 2usize..6,
        eps in 1e-3f64..10.0,
        var in 1e-3f64..1.0,
        ns in 1usize..3,
        method in prop::sample::select(Method::ALL.to_vec()),
        pair_min in any::<bool>(),
        width in prop::option::of(0.01f64..0.5),
    ) {
        let s = Scenario {
            grid_side: grid,
            basis_per_side: per_side,
            basis_width: width,
            epsilon: eps,
            measurement_variance: var,
            n_sensors: ns,
            method,
            penalty_mode: if pair_min { PenaltyMode::PairMin } else { PenaltyMode::PerCandidate },
            ..Scenario::default()
        };
        let text = ScenarioFile::from_scenario(&s, EmitFields::None).emit();
        let back = ScenarioFile::parse(&text, Path::new("mem.toml")).unwrap().to_scenario().unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn single_seed_summary_is_the_terminal_record() {
    let exp = run_experiment(&quick(), &[Method::Crmi], &[4], 1).unwrap();
    let trace = exp.trace(Method::Crmi, 4).unwrap();
    let last = trace.terminal();
    let row = &exp.summary.rows[0];
    assert_eq!(row.iterations, Some(trace.iterations()));
    assert_eq!(row.j_hat, Some(last.j_hat));
    assert_eq!(row.j_true, Some(last.j_true));
    assert_eq!(row.var_j, Some(last.var_j));
    let agg = exp.summary.aggregate(Method::Crmi, "j_hat").unwrap();
    assert_eq!((agg.q1, agg.median, agg.q3), (last.j_hat, last.j_hat, last.j_hat));
}

#[test]
fn field_dumps() {
    let scenario = Scenario {
        record_objective_map: true,
        ..quick()
    };
    let model = scenario.build().unwrap();
    let exp = run_experiment(&scenario, &[Method::Crmi], &[1], 1).unwrap();
    let mut trace = exp.trace(Method::Crmi, 1).unwrap().clone();
    let k = trace.iterations();

    let err = field_matrix(&trace, &model, k, FieldKind::Error).unwrap();
    assert_eq!(err.len(), scenario.n_grid());
    assert!(err.iter().all(|&e| e >= 0.0));
    assert!(field_matrix(&trace, &model, 0, FieldKind::ObjectiveMap).is_err());
    assert_eq!(field_matrix(&trace, &model, k, FieldKind::ObjectiveMap).unwrap().len(), scenario.n_grid());

    let zero = vec![0.0; model.basis.len()];
    trace.records[k].theta_hat = zero;
    let est = field_matrix(&trace, &model, k, FieldKind::Estimated).unwrap();
    assert!(est.iter().all(|&c| c == 1.0));

    assert!("bogus".parse::<FieldKind>().is_err());
    for kind in FieldKind::ALL {
        assert_eq!(kind.name().parse::<FieldKind>().unwrap(), kind);
    }
}

#[test]
fn summaries_reaggregate() {
    let s = quick();
    let a = run_experiment(&s, &[Method::Crmi, Method::Smi], &[0, 1], 0).unwrap();
    let b = run_experiment(&s, &[Method::Crmi, Method::Smi], &[2, 3, 4], 0).unwrap();
    let both = run_experiment(&s, &[Method::Crmi, Method::Smi], &[0, 1, 2, 3, 4], 0).unwrap();
    let a = ExperimentSummary::from_json(&a.summary.to_json().unwrap()).unwrap();
    let b = ExperimentSummary::from_json(&b.summary.to_json().unwrap()).unwrap();
    let merged = a.merge(b);
    for m in [Method::Crmi, Method::Smi] {
        for metric in ["iterations", "j_hat", "travel"] {
            let x = merged.aggregate(m, metric).unwrap();
            let y = both.summary.aggregate(m, metric).unwrap();
            assert_eq!((x.count, x.q1, x.median, x.q3), (y.count, y.q1, y.median, y.q3));
        }
    }
    let mut json = both.summary.to_json().unwrap();
    json = json.replace("\"schema_version\": \"1\"", "\"schema_version\": \"9\"");
    assert!(ExperimentSummary::from_json(&json).is_err());
}

#[test]
fn failed_runs_do_not_stop_the_batch() {
    // the exhaustive methods exceed this budget, the greedy one does not
    let s = Scenario {
        exhaustive_budget: 10,
        ..quick()
    };
    let exp = run_experiment(&s, &[Method::Crmi, Method::CrmiGreedy], &[0, 1], 0).unwrap();
    for row in &exp.summary.rows {
        match row.method {
            Method::Crmi => {
                assert_eq!(row.status, "error");
                assert!(row.error.as_deref().unwrap().contains("budget"));
            }
            _ => assert_eq!(row.status, "converged"),
        }
    }
    assert!(exp.summary.aggregate(Method::Crmi, "iterations").is_none());
    assert_eq!(exp.summary.aggregate(Method::CrmiGreedy, "iterations").unwrap().count, 2);
}

#[test]
fn written_experiment_layout() {
    let dir = tempfile::tempdir().unwrap();
    let s = quick();
    let exp = run_experiment(&s, &[Method::Smi], &[0], 1).unwrap();
    write_experiment(&exp, &s, EmitFields::Terminal, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("smi_s0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
    assert_eq!(lines.count(), exp.runs[0].result.as_ref().unwrap().records.len());
    let k = exp.trace(Method::Smi, 0).unwrap().iterations();
    let dump = fs::read_to_string(dir.path().join(format!("smi_s0_k{k}_true.csv"))).unwrap();
    assert_eq!(dump.lines().count(), s.grid_side);
    assert!(dump.lines().all(|l| l.split(',').count() == s.grid_side));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn binary_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cscp"))
        .args(["--preset", "illustrative", "--method", "crmi,smi", "--seeds", "0..2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: ExperimentSummary =
        ExperimentSummary::from_json(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.rows.len(), 4);
    for id in ["crmi_s0", "crmi_s1", "smi_s0", "smi_s1"] {
        assert!(dir.path().join(format!("{id}.csv")).exists());
    }

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema_version = \"1\"\n[sensing]\nn_sensorz = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cscp")).arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_sensorz"));
}
