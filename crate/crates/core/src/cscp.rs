//! The iterative coupled sensor-configuration and planning loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    measurement_matrix, simulate_measurement, ukf_predict, ukf_update, GaussianBelief, UkfParams,
    DEFAULT_CHI, DEFAULT_MEASUREMENT_VARIANCE,
};
use crate::placement::{
    optimize_exhaustive, optimize_greedy, ObjectiveContext, ObjectiveKind, PenaltyMode,
    PlacementResult, Reconfiguration, SearchMethod, SensorConfig, DEFAULT_EXHAUSTIVE_BUDGET,
};
use crate::planner::{plan_min_expected_cost, GridGraph, PathPlan, DEFAULT_COST_FLOOR};
use crate::threat::{
    distance, heat_diffusion_ac, BasisSet, LinearDynamics, ThreatTruth, Workspace,
    DEFAULT_SUPPORT_THRESHOLD,
};

/// RNG stream for ground-truth process noise and the initial draw.
pub const STREAM_TRUTH: u64 = 0;
/// RNG stream for measurement noise.
pub const STREAM_MEASUREMENT: u64 = 1;
/// RNG stream reserved for method-internal randomness.
pub const STREAM_MISC: u64 = 2;

/// Independent generator for one purpose, derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Placement strategy of one CSCP variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Crmi,
    Smi,
    CrmiGreedy,
    CrmiReconfig,
    SmiGreedy,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Crmi,
        Method::Smi,
        Method::CrmiGreedy,
        Method::CrmiReconfig,
        Method::SmiGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Crmi => "crmi",
            Method::Smi => "smi",
            Method::CrmiGreedy => "crmi-greedy",
            Method::CrmiReconfig => "crmi-reconfig",
            Method::SmiGreedy => "smi-greedy",
        }
    }

    pub fn objective(self) -> ObjectiveKind {
        match self {
            Method::Crmi | Method::CrmiGreedy => ObjectiveKind::Crmi,
            Method::Smi | Method::SmiGreedy => ObjectiveKind::Smi,
            Method::CrmiReconfig => ObjectiveKind::ModifiedCrmi,
        }
    }

    pub fn search(self) -> SearchMethod {
        match self {
            Method::CrmiGreedy | Method::SmiGreedy => SearchMethod::Greedy,
            _ => SearchMethod::Exhaustive,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method {s:?}")))
    }
}

/// Full description of one CSCP experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub half_extent: f64,
    pub grid_side: usize,
    /// Basis centers form a `basis_per_side × basis_per_side` lattice.
    pub basis_per_side: usize,
    /// Common basis width `a`; `None` picks the half-maximum width for the
    /// lattice spacing.
    pub basis_width: Option<f64>,
    pub support_threshold: f64,
    pub diffusivity: f64,
    pub process_std: f64,
    pub dt: f64,
    pub order: usize,
    /// Range of the i.i.d. uniform initial weights.
    pub theta_range: (f64, f64),
    pub n_sensors: usize,
    pub measurement_variance: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub method: Method,
    /// Defaults to the first `n_sensors` grid indices.
    pub initial_config: Option<Vec<usize>>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub penalty_mode: PenaltyMode,
    pub chi: f64,
    /// Defaults to `4 · grid_side²`.
    pub horizon_cap: Option<usize>,
    pub cost_floor: f64,
    /// Defaults to the bottom-left grid point.
    pub start: Option<usize>,
    /// Defaults to the top-right grid point.
    pub goal: Option<usize>,
    pub ukf: UkfParams,
    pub exhaustive_budget: u128,
    /// Records the single-sensor objective over the grid at every iteration.
    pub record_objective_map: bool,
}

/// Replication presets use a noisier sensor than the library default; at
/// `σ_R² = 0.01` a single reading pins a weight down and every method
/// converges within a handful of rounds.
pub const PRESET_MEASUREMENT_VARIANCE: f64 = 0.1;

impl Default for Scenario {
    /// 7×7 grid, 25 basis functions, two sensors, CRMI placement.
    fn default() -> Self {
        Self {
            half_extent: 1.0,
            grid_side: 7,
            basis_per_side: 5,
            basis_width: None,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            diffusivity: 1e-4,
            process_std: 0.01,
            dt: 1.0,
            order: 2,
            theta_range: (0.0, 4.0),
            n_sensors: 2,
            measurement_variance: DEFAULT_MEASUREMENT_VARIANCE,
            epsilon: 0.1,
            max_iterations: 200,
            method: Method::Crmi,
            initial_config: None,
            alpha1: 8f64.sqrt(),
            alpha2: 0.01,
            penalty_mode: PenaltyMode::PerCandidate,
            chi: DEFAULT_CHI,
            horizon_cap: None,
            cost_floor: DEFAULT_COST_FLOOR,
            start: None,
            goal: None,
            ukf: UkfParams::default(),
            exhaustive_budget: DEFAULT_EXHAUSTIVE_BUDGET,
            record_objective_map: false,
        }
    }
}

impl Scenario {
    /// The default layout with the preset sensor noise.
    pub fn illustrative() -> Self {
        Self {
            measurement_variance: PRESET_MEASUREMENT_VARIANCE,
            ..Self::default()
        }
    }

    /// 11×11 grid, 49 basis functions, three sensors.
    pub fn reconfiguration() -> Self {
        Self {
            grid_side: 11,
            basis_per_side: 7,
            n_sensors: 3,
            method: Method::CrmiReconfig,
            ..Self::illustrative()
        }
    }

    /// 5×5 grid on the 25 basis centers, four sensors.
    pub fn greedy() -> Self {
        Self {
            grid_side: 5,
            basis_per_side: 5,
            n_sensors: 4,
            method: Method::CrmiGreedy,
            ..Self::illustrative()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "illustrative" => Ok(Self::illustrative()),
            "reconfiguration" => Ok(Self::reconfiguration()),
            "greedy" => Ok(Self::greedy()),
            _ => Err(Error::config("preset", format!("unknown preset {name:?}"))),
        }
    }

    pub fn n_grid(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Checks every constraint and assembles the numerical model.
    pub fn build(&self) -> Result<Model> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("termination.epsilon", "must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::config("termination.max_iterations", "must be at least 1"));
        }
        if self.n_sensors < 1 {
            return Err(Error::config("sensing.n_sensors", "must be at least 1"));
        }
        if self.n_sensors > self.n_grid() {
            return Err(Error::config("sensing.n_sensors", "more sensors than grid points"));
        }
        if !(self.chi > 0.0) {
            return Err(Error::config("estimator.chi", "must be positive"));
        }
        if !(self.cost_floor > 0.0) {
            return Err(Error::config("planning.cost_floor", "must be positive"));
        }
        if !(self.measurement_variance > 0.0) {
            return Err(Error::config("sensing.measurement_variance", "must be positive"));
        }
        let workspace = Workspace::new(self.half_extent, self.grid_side)?;
        if self.basis_per_side < 1 {
            return Err(Error::config("basis.per_side", "must be at least 1"));
        }
        let width = match self.basis_width {
            Some(w) => w,
            None if self.basis_per_side == 1 => self.half_extent.powi(2),
            None => {
                let spacing = 2.0 * self.half_extent / (self.basis_per_side - 1) as f64;
                BasisSet::half_max_width(spacing)
            }
        };
        let basis = BasisSet::uniform(self.half_extent, self.basis_per_side, width, self.support_threshold)?;
        let a_c = heat_diffusion_ac(&basis, self.diffusivity, basis.centers())?;
        let dynamics = LinearDynamics::from_continuous(a_c, self.process_std, self.dt, self.order)?;
        let start = self.start.unwrap_or(0);
        let goal = self.goal.unwrap_or(workspace.len() - 1);
        let graph = GridGraph::new(workspace.clone(), start, goal)?;
        let horizon_cap = self.horizon_cap.unwrap_or_else(|| graph.default_horizon());
        let initial = SensorConfig::new(
            self.initial_config
                .clone()
                .unwrap_or_else(|| (0..self.n_sensors).collect()),
        );
        initial.validate(workspace.len())?;
        if initial.len() != self.n_sensors {
            return Err(Error::config(
                "sensing.initial_config",
                format!("has {} entries, expected {}", initial.len(), self.n_sensors),
            ));
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::config("sensing.alpha1/alpha2", "weights must be non-negative"));
        }
        if self.theta_range.0 > self.theta_range.1 {
            return Err(Error::config("dynamics.theta_min/theta_max", "lower bound exceeds upper bound"));
        }
        self.ukf.weights(basis.len())?;
        Ok(Model {
            workspace,
            basis,
            dynamics,
            graph,
            horizon_cap,
            initial,
        })
    }

    /// Non-fatal remarks about the scenario.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_sensors * 4 > self.n_grid() {
            out.push(format!(
                "{} sensors on {} grid points: more than a quarter of the grid is instrumented",
                self.n_sensors,
                self.n_grid()
            ));
        }
        out
    }
}

/// Numerical objects derived from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Model {
    pub workspace: Workspace,
    pub basis: BasisSet,
    pub dynamics: LinearDynamics,
    pub graph: GridGraph,
    pub horizon_cap: usize,
    pub initial: SensorConfig,
}

impl Model {
    fn plan(&self, belief: &GaussianBelief, cost_floor: f64) -> Result<PathPlan> {
        plan_min_expected_cost(&self.graph, belief, &self.dynamics, &self.basis, self.horizon_cap, cost_floor)
    }

    /// Path cost under the noise-free continuation of the true state.
    pub fn true_cost(&self, path: &[usize], truth: &ThreatTruth) -> f64 {
        let mut theta = truth.theta.clone();
        let mut sum = 0.0;
        for &v in &path[1..] {
            theta = &self.dynamics.a * theta;
            sum += self.basis.field_value(self.workspace.point(v), &theta);
        }
        self.workspace.delta() * sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
}

/// State of the loop after iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub config: SensorConfig,
    pub measurements: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub theta_true: Vec<f64>,
    pub trace_p: f64,
    pub path: Vec<usize>,
    pub j_hat: f64,
    pub j_true: f64,
    pub var_j: f64,
    pub risk: f64,
    /// Objective value of the chosen configuration (NaN at `k = 0`).
    pub objective: f64,
    /// Evaluations spent by the placement search.
    pub evaluations: usize,
    /// Trace criterion margin (NaN at `k = 0`).
    pub margin: f64,
    /// Distance travelled by the sensors to reach `config`.
    pub travel: f64,
    pub millis: f64,
    /// Single-sensor objective per grid point, when recorded.
    pub objective_map: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscpTrace {
    pub method: Method,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub status: Status,
}

impl CscpTrace {
    pub fn terminal(&self) -> &IterationRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    /// Number of measurement rounds performed.
    pub fn iterations(&self) -> usize {
        self.terminal().k
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn cumulative_travel(&self) -> f64 {
        sensor_travel(self).1
    }
}

/// `tr(L C P⁻) - tr(A P Aᵀ - P + Q)`: positive when the measurement removes
/// more uncertainty than one prediction step adds.
pub fn convergence_margin(
    p_prev_updated: &DMatrix<f64>,
    p_predicted: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> f64 {
    let growth = (a * p_prev_updated * a.transpose() - p_prev_updated + q).trace();
    if c.nrows() == 0 {
        return -growth;
    }
    (gain * c * p_predicted).trace() - growth
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `assignment[row] = column`. O(n³) shortest augmenting paths with
/// potentials.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1, col - 1)] - u[r] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    next = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = next;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Total distance for moving sensors from `from` to `to` under the
/// cheapest pairing.
pub fn reconfiguration_distance(from: &SensorConfig, to: &SensorConfig, workspace: &Workspace) -> f64 {
    assert_eq!(from.len(), to.len(), "configurations differ in size");
    let a = from.points(workspace);
    let b = to.points(workspace);
    let cost = DMatrix::from_fn(a.len(), b.len(), |i, j| distance(a[i], b[j]));
    min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum()
}

/// Per-iteration travel (as recorded) and the cumulative sum.
pub fn sensor_travel(trace: &CscpTrace) -> (Vec<f64>, f64) {
    let per: Vec<f64> = trace.records.iter().map(|r| r.travel).collect();
    let total = per.iter().sum();
    (per, total)
}

fn place(
    method: Method,
    context: &ObjectiveContext,
    n_sensors: usize,
    budget: u128,
) -> Result<PlacementResult> {
    let objective = context.objective(method.objective());
    match method.search() {
        SearchMethod::Exhaustive => optimize_exhaustive(&objective, n_sensors, budget),
        SearchMethod::Greedy => optimize_greedy(&objective, n_sensors),
    }
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Runs the loop for one seed.
///
/// Iteration `k = 0` plans on the prior without measuring. Every later
/// iteration advances the truth one step, predicts, chooses a configuration
/// against the previous plan, measures, updates and replans, stopping once
/// `Var[J] ≤ ε` or after `max_iterations` rounds.
pub fn run(scenario: &Scenario, seed: u64) -> Result<CscpTrace> {
    let model = scenario.build()?;
    let mut truth_rng = stream_rng(seed, STREAM_TRUTH);
    let mut meas_rng = stream_rng(seed, STREAM_MEASUREMENT);
    let mut truth = ThreatTruth::sample_initial(&model.basis, &model.workspace, scenario.theta_range, &mut truth_rng)?;
    let mut belief = GaussianBelief::prior(model.basis.len(), scenario.chi);

    let started = Instant::now();
    let mut plan = model.plan(&belief, scenario.cost_floor).map_err(|e| e.at_iteration(0))?;
    let mut config = model.initial.clone();
    let mut records = vec![IterationRecord {
        k: 0,
        config: config.clone(),
        measurements: Vec::new(),
        theta_hat: to_vec(&belief.mean),
        theta_true: to_vec(&truth.theta),
        trace_p: belief.cov_trace(),
        path: plan.vertices.clone(),
        j_hat: plan.j_hat,
        j_true: model.true_cost(&plan.vertices, &truth),
        var_j: plan.var_j,
        risk: plan.risk,
        objective: f64::NAN,
        evaluations: 0,
        margin: f64::NAN,
        travel: 0.0,
        millis: started.elapsed().as_secs_f64() * 1e3,
        objective_map: Vec::new(),
    }];
    if plan.var_j <= scenario.epsilon {
        return Ok(CscpTrace {
            method: scenario.method,
            seed,
            records,
            status: Status::Converged,
        });
    }

    for k in 1..=scenario.max_iterations {
        let started = Instant::now();
        let mut step = || -> Result<(IterationRecord, GaussianBelief, PathPlan, ThreatTruth)> {
            let truth = truth.step(&model.dynamics, &mut truth_rng);
            let predicted = ukf_predict(&belief, &model.dynamics, &scenario.ukf)?;
            let mut context = ObjectiveContext::new(
                &predicted,
                &model.dynamics,
                &model.basis,
                &model.workspace,
                &plan.vertices,
                scenario.measurement_variance,
            )?;
            if scenario.method == Method::CrmiReconfig {
                context = context.with_reconfiguration(Reconfiguration::new(
                    &config,
                    &model.workspace,
                    scenario.alpha1,
                    scenario.alpha2,
                    scenario.penalty_mode,
                )?);
            }
            let placement = place(scenario.method, &context, scenario.n_sensors, scenario.exhaustive_budget)?;
            let objective_map = if scenario.record_objective_map {
                let f = context.objective(scenario.method.objective());
                (0..model.workspace.len())
                    .map(|i| crate::placement::SetFunction::eval(&f, &[i]))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let sensors = measurement_matrix(
                placement.config.clone(),
                &model.basis,
                &model.workspace,
                scenario.measurement_variance,
            )?;
            let z = simulate_measurement(&truth, &sensors, &mut meas_rng);
            let outcome = ukf_update(&predicted, &z, &sensors, &scenario.ukf)?;
            let margin = convergence_margin(
                &belief.cov,
                &predicted.cov,
                &outcome.gain,
                &sensors.c,
                &model.dynamics.a,
                &model.dynamics.q,
            );
            let updated = outcome.belief;
            let next_plan = model.plan(&updated, scenario.cost_floor)?;
            let travel = reconfiguration_distance(&config, &placement.config, &model.workspace);
            let record = IterationRecord {
                k,
                config: placement.config.clone(),
                measurements: to_vec(&z),
                theta_hat: to_vec(&updated.mean),
                theta_true: to_vec(&truth.theta),
                trace_p: updated.cov_trace(),
                path: next_plan.vertices.clone(),
                j_hat: next_plan.j_hat,
                j_true: model.true_cost(&next_plan.vertices, &truth),
                var_j: next_plan.var_j,
                risk: next_plan.risk,
                objective: placement.objective_value,
                evaluations: placement.evaluations,
                margin,
                travel,
                millis: started.elapsed().as_secs_f64() * 1e3,
                objective_map,
            };
            Ok((record, updated, next_plan, truth))
        };
        let (record, updated, next_plan, next_truth) = step().map_err(|e| e.at_iteration(k))?;
        config = record.config.clone();
        records.push(record);
        belief = updated;
        plan = next_plan;
        truth = next_truth;
        if plan.var_j <= scenario.epsilon {
            return Ok(CscpTrace {
                method: scenario.method,
                seed,
                records,
                status: Status::Converged,
            });
        }
    }
    Ok(CscpTrace {
        method: scenario.method,
        seed,
        records,
        status: Status::MaxIterations,
    })
}
