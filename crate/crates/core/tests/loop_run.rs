use cscp_core::{run, Method, Scenario, Status};

#[test]
fn converged_runs_certify_the_variance() {
    for method in Method::ALL {
        let scenario = Scenario::illustrative().with_method(method);
        let trace = run(&scenario, 3).unwrap();
        assert_eq!(trace.status, Status::Converged, "{method}");
        let last = trace.terminal();
        assert!(last.var_j <= scenario.epsilon);
        for r in &trace.records[..trace.records.len() - 1] {
            assert!(r.var_j > scenario.epsilon);
        }
        for r in &trace.records {
            let mut q = r.config.indices().to_vec();
            q.sort_unstable();
            q.dedup();
            assert_eq!(q.len(), scenario.n_sensors);
            assert!(r.risk >= r.j_hat);
            assert_eq!(*r.path.first().unwrap(), 0);
            assert_eq!(*r.path.last().unwrap(), scenario.n_grid() - 1);
        }
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let scenario = Scenario {
        max_iterations: 2,
        epsilon: 1e-12,
        ..Scenario::illustrative()
    };
    let trace = run(&scenario, 0).unwrap();
    assert_eq!(trace.status, Status::MaxIterations);
    assert_eq!(trace.records.len(), 3);
}

#[test]
fn static_field_keeps_the_truth_fixed() {
    let scenario = Scenario {
        diffusivity: 0.0,
        process_std: 0.0,
        ..Scenario::illustrative()
    };
    let trace = run(&scenario, 9).unwrap();
    let first = &trace.records[0].theta_true;
    assert!(trace.records.iter().all(|r| &r.theta_true == first));
}
