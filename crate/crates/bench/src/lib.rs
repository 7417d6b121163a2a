//! Shared fixtures for the criterion benches.

use cscp_core::nalgebra::DVector;
use cscp_core::estimator::{measurement_matrix, ukf_predict, ukf_update};
use cscp_core::planner::plan_min_expected_cost;
use cscp_core::{GaussianBelief, MeasurementModel, Model, Scenario, SensorConfig, UkfParams};

pub struct Fixture {
    pub scenario: Scenario,
    pub model: Model,
    /// Belief after a few measurement rounds, predicted one step ahead.
    pub predicted: GaussianBelief,
    pub updated: GaussianBelief,
    pub measurement: MeasurementModel,
    pub path: Vec<usize>,
}

pub fn fixture(scenario: Scenario) -> Fixture {
    let model = scenario.build().expect("preset scenarios are valid");
    let params = UkfParams::default();
    let n = model.basis.len();
    let mut belief = GaussianBelief::prior(n, scenario.chi);
    let mut measurement = None;
    for k in 0..3 {
        belief = ukf_predict(&belief, &model.dynamics, &params).unwrap();
        let config = SensorConfig::new((0..scenario.n_sensors).map(|i| (i * 7 + k * 3) % model.workspace.len()).collect());
        let m = measurement_matrix(config, &model.basis, &model.workspace, scenario.measurement_variance).unwrap();
        let z = DVector::zeros(m.len());
        belief = ukf_update(&belief, &z, &m, &params).unwrap().belief;
        measurement = Some(m);
    }
    let plan = plan_min_expected_cost(
        &model.graph,
        &belief,
        &model.dynamics,
        &model.basis,
        model.horizon_cap,
        scenario.cost_floor,
    )
    .unwrap();
    let predicted = ukf_predict(&belief, &model.dynamics, &params).unwrap();
    Fixture {
        scenario,
        model,
        predicted,
        updated: belief,
        measurement: measurement.unwrap(),
        path: plan.vertices,
    }
}
