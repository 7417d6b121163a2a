//! Minimum-expected-exposure planning on the 4-connected grid, and the path
//! cost mean/variance machinery shared by termination and CRMI.
//!
//! Path step `ℓ` (for `ℓ = 1..L`) is costed with the threat predicted `ℓ`
//! dynamics steps after the belief's time index: `θ̂_ℓ = A^ℓ θ̂`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::GaussianBelief;
use crate::threat::{BasisSet, LinearDynamics, Workspace};

/// Stage-cost floor applied inside the search only.
pub const DEFAULT_COST_FLOOR: f64 = 1e-3;

/// Implicit 4-neighbourhood graph over the workspace grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    pub workspace: Workspace,
    pub start: usize,
    pub goal: usize,
}

impl GridGraph {
    pub fn new(workspace: Workspace, start: usize, goal: usize) -> Result<Self> {
        let n = workspace.len();
        if start >= n || goal >= n {
            return Err(Error::config("planning.start/goal", format!("must be below {n}")));
        }
        if start == goal {
            return Err(Error::config("planning.start/goal", "start and goal must differ"));
        }
        Ok(Self {
            workspace,
            start,
            goal,
        })
    }

    /// Bottom-left to top-right.
    pub fn corner_to_corner(workspace: Workspace) -> Self {
        let goal = workspace.len() - 1;
        Self {
            workspace,
            start: 0,
            goal,
        }
    }

    /// Neighbours of `v` in ascending index order.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> {
        let side = self.workspace.grid_side();
        let (row, col) = (v / side, v % side);
        let down = (row > 0).then(|| v - side);
        let left = (col > 0).then(|| v - 1);
        let right = (col + 1 < side).then(|| v + 1);
        let up = (row + 1 < side).then(|| v + side);
        [down, left, right, up].into_iter().flatten()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).any(|n| n == b)
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = self.workspace.row_col(a);
        let (rb, cb) = self.workspace.row_col(b);
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    pub fn default_horizon(&self) -> usize {
        4 * self.workspace.len()
    }
}

/// Predicted means and covariances along a planning horizon.
///
/// Index `ℓ = 0` is the base belief; `ℓ = 1..=L` are the prediction-only
/// steps ahead. Cross-covariances follow from the linear propagation
/// `P_{ℓm} = P_ℓ (A^{m-ℓ})ᵀ` and are computed on demand.
#[derive(Debug, Clone)]
pub struct PathHorizonStats {
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    a: DMatrix<f64>,
}

impl PathHorizonStats {
    pub fn horizon(&self) -> usize {
        self.means.len() - 1
    }

    pub fn mean(&self, step: usize) -> &DVector<f64> {
        &self.means[step]
    }

    pub fn cov(&self, step: usize) -> &DMatrix<f64> {
        &self.covs[step]
    }

    /// `Cov(θ_ℓ, θ_m) = P_ℓ (A^{m-ℓ})ᵀ` for `ℓ ≤ m`.
    pub fn cross_cov(&self, l: usize, m: usize) -> DMatrix<f64> {
        assert!(l <= m, "cross_cov expects l <= m");
        let mut out = self.covs[l].clone();
        for _ in l..m {
            out = &out * self.a.transpose();
        }
        out
    }

    /// `Cov(θ_ℓ, θ_0) = A^ℓ P_0`.
    pub fn cross_with_base(&self, l: usize) -> DMatrix<f64> {
        self.cross_cov(0, l).transpose()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }
}

/// Prediction-only propagation of `belief` for `steps` steps.
pub fn predict_horizon(
    belief: &GaussianBelief,
    dynamics: &LinearDynamics,
    steps: usize,
) -> Result<PathHorizonStats> {
    if steps < 1 {
        return Err(Error::config("planning.horizon", "need at least one step"));
    }
    if dynamics.dim() != belief.dim() {
        return Err(Error::Dimension {
            context: "horizon prediction",
            expected: belief.dim(),
            actual: dynamics.dim(),
        });
    }
    let a = &dynamics.a;
    let mut means = Vec::with_capacity(steps + 1);
    let mut covs = Vec::with_capacity(steps + 1);
    means.push(belief.mean.clone());
    covs.push(belief.cov.clone());
    for l in 1..=steps {
        means.push(a * &means[l - 1]);
        let p = a * &covs[l - 1] * a.transpose() + &dynamics.q;
        covs.push((&p + p.transpose()) * 0.5);
    }
    Ok(PathHorizonStats {
        means,
        covs,
        a: a.clone(),
    })
}

fn check_path(path: &[usize], stats: &PathHorizonStats) -> Result<()> {
    if path.len() < 2 {
        return Err(Error::config("path", "a path needs at least two vertices"));
    }
    if stats.horizon() < path.len() - 1 {
        return Err(Error::Dimension {
            context: "horizon stats shorter than path",
            expected: path.len() - 1,
            actual: stats.horizon(),
        });
    }
    Ok(())
}

/// `Ĵ = δ (L + Σ_ℓ Φ(x_{v_ℓ})ᵀ θ̂_ℓ)`.
pub fn path_cost_mean(
    path: &[usize],
    stats: &PathHorizonStats,
    basis: &BasisSet,
    workspace: &Workspace,
) -> Result<f64> {
    check_path(path, stats)?;
    let sum: f64 = path
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, &v)| basis.eval(workspace.point(v)).dot(stats.mean(l)))
        .sum();
    Ok(workspace.delta() * ((path.len() - 1) as f64 + sum))
}

/// `Var[J] = δ² Σ_ℓ Φ_ℓᵀ P_ℓ Φ_ℓ + 2 δ² Σ_{ℓ<m} Φ_ℓᵀ P_{ℓm} Φ_m`.
pub fn path_cost_variance(
    path: &[usize],
    stats: &PathHorizonStats,
    basis: &BasisSet,
    workspace: &Workspace,
) -> Result<f64> {
    check_path(path, stats)?;
    let len = path.len() - 1;
    let phis: Vec<DVector<f64>> = path.iter().map(|&v| basis.eval(workspace.point(v))).collect();
    let a = stats.transition();
    let mut diag = 0.0;
    let mut cross = 0.0;
    for l in 1..=len {
        // w = A^{m-ℓ} P_ℓ Φ_ℓ, so Φ_ℓᵀ P_{ℓm} Φ_m = w · Φ_m
        let mut w = stats.cov(l) * &phis[l];
        diag += w.dot(&phis[l]);
        for phi_m in &phis[l + 1..=len] {
            w = a * w;
            cross += w.dot(phi_m);
        }
    }
    let d2 = workspace.delta().powi(2);
    let var = d2 * (diag + 2.0 * cross);
    if var < -1e-9 * (d2 * diag).max(1.0) {
        return Err(Error::numerical(
            "path cost variance",
            format!("negative variance {var}; inconsistent horizon statistics"),
        ));
    }
    Ok(var.max(0.0))
}

/// `Cov(θ_0, J) = δ Σ_ℓ P_0 (A^ℓ)ᵀ Φ_ℓ`: how the path cost co-varies with the
/// base-time state that sensors observe.
pub fn path_cost_base_covariance(
    path: &[usize],
    stats: &PathHorizonStats,
    basis: &BasisSet,
    workspace: &Workspace,
) -> Result<DVector<f64>> {
    check_path(path, stats)?;
    let a_t = stats.transition().transpose();
    // Horner-style accumulation of Σ_ℓ (A^ℓ)ᵀ Φ_ℓ from the far end.
    let mut g = DVector::zeros(basis.len());
    for &v in path[1..].iter().rev() {
        g = &a_t * (g + basis.eval(workspace.point(v)));
    }
    Ok(stats.cov(0) * g * workspace.delta())
}

/// `ρ = Ĵ + sqrt(Var[J])`.
pub fn risk(j_hat: f64, var_j: f64) -> f64 {
    j_hat + var_j.max(0.0).sqrt()
}

/// Basis indices whose significant support touches the path.
pub fn path_relevant_set(path: &[usize], basis: &BasisSet, workspace: &Workspace) -> Vec<usize> {
    let tau = basis.support_threshold();
    (0..basis.len())
        .filter(|&m| {
            let c = basis.centers()[m];
            let a = basis.widths()[m];
            path.iter().any(|&v| {
                let p = workspace.point(v);
                let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                (-r2 / (2.0 * a)).exp() >= tau
            })
        })
        .collect()
}

/// Planned path with its cost statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub vertices: Vec<usize>,
    pub j_hat: f64,
    pub var_j: f64,
    pub risk: f64,
    pub relevant_set: Vec<usize>,
}

impl PathPlan {
    /// Number of steps `L`.
    pub fn steps(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Scores a fixed vertex sequence against `belief`.
    pub fn evaluate(
        vertices: Vec<usize>,
        belief: &GaussianBelief,
        dynamics: &LinearDynamics,
        basis: &BasisSet,
        workspace: &Workspace,
    ) -> Result<Self> {
        let stats = predict_horizon(belief, dynamics, vertices.len() - 1)?;
        let j_hat = path_cost_mean(&vertices, &stats, basis, workspace)?;
        let var_j = path_cost_variance(&vertices, &stats, basis, workspace)?;
        let relevant_set = path_relevant_set(&vertices, basis, workspace);
        Ok(Self {
            vertices,
            j_hat,
            var_j,
            risk: risk(j_hat, var_j),
            relevant_set,
        })
    }
}

/// Stage costs `δ max(1 + Φ(x_v)ᵀ θ̂_ℓ, floor)` for `ℓ = 1..=horizon`,
/// stored row-per-stage (row 0 unused).
pub fn stage_costs(
    belief: &GaussianBelief,
    dynamics: &LinearDynamics,
    basis: &BasisSet,
    workspace: &Workspace,
    horizon: usize,
    cost_floor: f64,
) -> Vec<Vec<f64>> {
    let phi = basis.grid_matrix(workspace);
    let delta = workspace.delta();
    let mut theta = belief.mean.clone();
    let mut out = vec![Vec::new()];
    for _ in 1..=horizon {
        theta = &dynamics.a * theta;
        let field = &phi * &theta;
        out.push(field.iter().map(|f| delta * (1.0 + f).max(cost_floor)).collect());
    }
    out
}

/// Exact minimizer of the floored stage cost over all walks of at most
/// `horizon` steps from start to goal.
///
/// Backward dynamic programming over the time-expanded graph (vertex, step);
/// among equal-cost walks the lexicographically smallest vertex sequence is
/// returned.
pub fn min_cost_walk(graph: &GridGraph, costs: &[Vec<f64>], horizon: usize) -> Result<Vec<usize>> {
    let n = graph.workspace.len();
    let mut value = vec![vec![f64::INFINITY; n]; horizon + 1];
    value[horizon][graph.goal] = 0.0;
    for l in (0..horizon).rev() {
        for v in 0..n {
            if v == graph.goal {
                value[l][v] = 0.0;
                continue;
            }
            let mut best = f64::INFINITY;
            for u in graph.neighbors(v) {
                let c = costs[l + 1][u] + value[l + 1][u];
                if c < best {
                    best = c;
                }
            }
            value[l][v] = best;
        }
    }
    if !value[0][graph.start].is_finite() {
        return Err(Error::NoPath {
            start: graph.start,
            goal: graph.goal,
            horizon,
        });
    }

    let mut path = vec![graph.start];
    let mut v = graph.start;
    let mut l = 0;
    while v != graph.goal {
        let target = value[l][v];
        let tol = 1e-12 * target.abs().max(1e-300);
        let next = graph
            .neighbors(v)
            .find(|&u| costs[l + 1][u] + value[l + 1][u] <= target + tol)
            .expect("dynamic-programming value has a witness");
        path.push(next);
        v = next;
        l += 1;
    }
    Ok(path)
}

/// Plans the walk minimizing expected exposure and scores it.
pub fn plan_min_expected_cost(
    graph: &GridGraph,
    belief: &GaussianBelief,
    dynamics: &LinearDynamics,
    basis: &BasisSet,
    horizon_cap: usize,
    cost_floor: f64,
) -> Result<PathPlan> {
    let min_steps = graph.manhattan(graph.start, graph.goal);
    if horizon_cap < min_steps {
        return Err(Error::NoPath {
            start: graph.start,
            goal: graph.goal,
            horizon: horizon_cap,
        });
    }
    let costs = stage_costs(belief, dynamics, basis, &graph.workspace, horizon_cap, cost_floor);
    let vertices = min_cost_walk(graph, &costs, horizon_cap)?;
    PathPlan::evaluate(vertices, belief, dynamics, basis, &graph.workspace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::Phase;
    use crate::threat::standard_normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis25() -> BasisSet {
        BasisSet::uniform(1.0, 5, BasisSet::covering_width(0.5, 0.1), 0.1).unwrap()
    }

    fn static_dynamics(n: usize) -> LinearDynamics {
        LinearDynamics::from_discrete(DMatrix::identity(n, n), DMatrix::zeros(n, n)).unwrap()
    }

    #[test]
    fn interior_vertices_have_four_neighbours() {
        let g = GridGraph::corner_to_corner(Workspace::new(1.0, 5).unwrap());
        assert_eq!(g.neighbors(12).collect::<Vec<_>>(), vec![7, 11, 13, 17]);
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![1, 5]);
        assert_eq!(g.neighbors(24).count(), 2);
        assert_eq!(g.neighbors(2).count(), 3);
        assert!(GridGraph::new(Workspace::new(1.0, 5).unwrap(), 3, 3).is_err());
    }

    #[test]
    fn static_noise_free_horizon_repeats_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let belief = GaussianBelief {
            mean: standard_normal(4, &mut rng),
            cov: &m * m.transpose(),
            time_index: 0,
            phase: Phase::Updated,
        };
        let s = predict_horizon(&belief, &static_dynamics(4), 5).unwrap();
        for l in 0..=5 {
            assert_eq!(s.cov(l), &belief.cov);
            for k in l..=5 {
                assert_eq!(s.cross_cov(l, k), belief.cov);
            }
        }
        assert!(predict_horizon(&belief, &static_dynamics(4), 0).is_err());
    }

    #[test]
    fn single_step_horizon_is_one_predict() {
        let belief = GaussianBelief::prior(2, 2.0);
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let q = DMatrix::identity(2, 2) * 0.5;
        let d = LinearDynamics::from_discrete(a.clone(), q.clone()).unwrap();
        let s = predict_horizon(&belief, &d, 1).unwrap();
        let expect = &a * &belief.cov * a.transpose() + q;
        assert!((s.cov(1) - expect).amax() < 1e-15);
    }

    #[test]
    fn zero_mean_gives_unit_field_cost() {
        let w = Workspace::new(1.0, 7).unwrap();
        let belief = GaussianBelief::prior(25, 0.0);
        let d = static_dynamics(25);
        let path: Vec<usize> = (0..7).chain((1..7).map(|r| r * 7 + 6)).collect();
        let s = predict_horizon(&belief, &d, 12).unwrap();
        let j = path_cost_mean(&path, &s, &basis25(), &w).unwrap();
        assert!((j - w.delta() * 12.0).abs() < 1e-12);
        assert_eq!(path_cost_variance(&path, &s, &basis25(), &w).unwrap(), 0.0);
    }

    #[test]
    fn mean_matches_stepwise_field_sum() {
        let w = Workspace::new(1.0, 7).unwrap();
        let b = basis25();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(25, 25, |_, _| rng.random_range(-0.02..0.02)) + DMatrix::identity(25, 25) * 0.97;
        let d = LinearDynamics::from_discrete(a.clone(), DMatrix::identity(25, 25) * 0.01).unwrap();
        let mut belief = GaussianBelief::prior(25, 1.0);
        belief.mean = standard_normal(25, &mut rng);
        let path = vec![0, 1, 8, 9, 16, 23, 24, 31];
        let s = predict_horizon(&belief, &d, 7).unwrap();
        let mut theta = belief.mean.clone();
        let mut expect = 0.0;
        for &v in &path[1..] {
            theta = &a * theta;
            expect += w.delta() * b.field_value(w.point(v), &theta);
        }
        assert!((path_cost_mean(&path, &s, &b, &w).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn single_step_variance_has_no_cross_terms() {
        let w = Workspace::new(1.0, 7).unwrap();
        let b = basis25();
        let belief = GaussianBelief::prior(25, 3.0);
        let s = predict_horizon(&belief, &static_dynamics(25), 1).unwrap();
        let phi = b.eval(w.point(1));
        let expect = w.delta().powi(2) * phi.dot(&(s.cov(1) * &phi));
        let got = path_cost_variance(&[0, 1], &s, &b, &w).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_explicit_double_sum() {
        let w = Workspace::new(1.0, 7).unwrap();
        let b = basis25();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = DMatrix::from_fn(25, 25, |_, _| rng.random_range(-0.03..0.03)) + DMatrix::identity(25, 25) * 0.95;
        let d = LinearDynamics::from_discrete(a, DMatrix::identity(25, 25) * 0.02).unwrap();
        let belief = GaussianBelief::prior(25, 2.0);
        let path = vec![0, 7, 8, 15, 16, 17, 24];
        let s = predict_horizon(&belief, &d, 6).unwrap();
        let phis: Vec<_> = path.iter().map(|&v| b.eval(w.point(v))).collect();
        let mut expect = 0.0;
        for l in 1..path.len() {
            for m in 1..path.len() {
                let c = if l <= m { s.cross_cov(l, m) } else { s.cross_cov(m, l).transpose() };
                expect += phis[l].dot(&(c * &phis[m]));
            }
        }
        expect *= w.delta().powi(2);
        let got = path_cost_variance(&path, &s, &b, &w).unwrap();
        assert!((got - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn uniform_field_plans_lexicographic_staircase() {
        let w = Workspace::new(1.0, 7).unwrap();
        let g = GridGraph::corner_to_corner(w.clone());
        let belief = GaussianBelief::prior(25, 1.0);
        let plan = plan_min_expected_cost(&g, &belief, &static_dynamics(25), &basis25(), g.default_horizon(), DEFAULT_COST_FLOOR).unwrap();
        assert_eq!(plan.steps(), 12);
        assert!((plan.j_hat - 12.0 * w.delta()).abs() < 1e-12);
        let expect: Vec<usize> = (0..7).chain((1..7).map(|r| r * 7 + 6)).collect();
        assert_eq!(plan.vertices, expect);
        assert!(plan.risk >= plan.j_hat);
    }

    #[test]
    fn plan_rejects_short_horizon() {
        let g = GridGraph::corner_to_corner(Workspace::new(1.0, 4).unwrap());
        let belief = GaussianBelief::prior(25, 1.0);
        let err = plan_min_expected_cost(&g, &belief, &static_dynamics(25), &basis25(), 5, DEFAULT_COST_FLOOR);
        assert!(matches!(err, Err(Error::NoPath { .. })));
    }

    #[test]
    fn plan_detours_around_high_threat() {
        let w = Workspace::new(1.0, 5).unwrap();
        let g = GridGraph::corner_to_corner(w.clone());
        let b = basis25();
        let mut belief = GaussianBelief::prior(25, 1.0);
        // high threat along the bottom row and right column
        for n in [1, 2, 3, 4, 9, 14, 19] {
            belief.mean[n] = 20.0;
        }
        let plan = plan_min_expected_cost(&g, &belief, &static_dynamics(25), &b, 40, DEFAULT_COST_FLOOR).unwrap();
        assert!(plan.vertices.windows(2).all(|p| g.adjacent(p[0], p[1])));
        assert!(!plan.vertices.contains(&2));
        assert_eq!(plan.vertices[0], 0);
        assert_eq!(*plan.vertices.last().unwrap(), 24);
    }

    #[test]
    fn relevant_set_edges() {
        let w = Workspace::new(1.0, 5).unwrap();
        let b = basis25();
        // the 5×5 grid coincides with the basis centers
        let k = path_relevant_set(&[12], &b, &w);
        assert!(k.contains(&12));
        let all = basis25().with_support_threshold(1e-300).unwrap();
        assert_eq!(path_relevant_set(&[0, 1], &all, &w).len(), 25);
        let path = [0, 1, 6, 7, 12];
        let k = path_relevant_set(&path, &b, &w);
        for m in 0..25 {
            let hit = path.iter().any(|&v| b.significant_support(m, &w).contains(&v));
            assert_eq!(k.contains(&m), hit);
        }
    }

    #[test]
    fn risk_examples() {
        assert_eq!(risk(10.0, 4.0), 12.0);
        assert_eq!(risk(3.5, 0.0), 3.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let j = rng.random_range(0.0..20.0);
            let v = rng.random_range(0.0..20.0);
            assert!(risk(j + 0.1, v) > risk(j, v));
            assert!(risk(j, v + 0.1) > risk(j, v));
        }
    }

    #[test]
    fn base_covariance_matches_cross_terms() {
        let w = Workspace::new(1.0, 7).unwrap();
        let b = basis25();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(25, 25, |_, _| rng.random_range(-0.03..0.03)) + DMatrix::identity(25, 25) * 0.95;
        let d = LinearDynamics::from_discrete(a, DMatrix::identity(25, 25) * 0.02).unwrap();
        let belief = GaussianBelief::prior(25, 2.0);
        let path = vec![0, 1, 2, 9, 16];
        let s = predict_horizon(&belief, &d, 4).unwrap();
        let mut expect = DVector::zeros(25);
        for (l, &v) in path.iter().enumerate().skip(1) {
            expect += s.cross_with_base(l).transpose() * b.eval(w.point(v));
        }
        expect *= w.delta();
        let got = path_cost_base_covariance(&path, &s, &b, &w).unwrap();
        assert!((got - expect).amax() < 1e-12);
    }
}
