//! Sensor placement: information objectives and set-function maximizers.
//!
//! All objectives are in nats. Configurations are sets; the order in which
//! indices are listed never changes a value.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::GaussianBelief;
use crate::linalg::{log_det_spd, small_cholesky_in_place, small_forward_solve, symmetrize};
use crate::planner::{path_cost_base_covariance, path_cost_variance, predict_horizon};
use crate::threat::{distance, BasisSet, LinearDynamics, Point, Workspace};

/// Default enumeration budget for exhaustive search.
pub const DEFAULT_EXHAUSTIVE_BUDGET: u128 = 2_000_000;

/// Distinct grid indices hosting a sensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensorConfig {
    indices: Vec<usize>,
}

impl SensorConfig {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// Grid indices `0..n`.
    pub fn first(n: usize) -> Self {
        Self::new((0..n).collect())
    }

    pub fn validate(&self, n_grid: usize) -> Result<()> {
        let mut seen = vec![false; n_grid];
        for &q in &self.indices {
            if q >= n_grid {
                return Err(Error::Configuration(format!(
                    "sensor index {q} outside grid of {n_grid} points"
                )));
            }
            if seen[q] {
                return Err(Error::Configuration(format!("duplicate sensor index {q}")));
            }
            seen[q] = true;
        }
        Ok(())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn points(&self, workspace: &Workspace) -> Vec<Point> {
        self.indices.iter().map(|&q| workspace.point(q)).collect()
    }

    /// Same set, ascending order.
    pub fn sorted(&self) -> Self {
        let mut indices = self.indices.clone();
        indices.sort_unstable();
        Self { indices }
    }
}

/// `½ log(|C P Cᵀ + R| / |R|)`: mutual information between the state and
/// the measurements of `config`.
pub fn smi(
    config: &SensorConfig,
    belief: &GaussianBelief,
    basis: &BasisSet,
    workspace: &Workspace,
    r: &DMatrix<f64>,
) -> Result<f64> {
    config.validate(workspace.len())?;
    if config.is_empty() {
        return Ok(0.0);
    }
    let c = sensor_rows(config, basis, workspace);
    let pzz = symmetrize(&(&c * &belief.cov * c.transpose() + r));
    let log_r = log_det_spd(r, "measurement noise covariance")?;
    Ok(0.5 * (log_det_spd(&pzz, "innovation covariance")? - log_r))
}

/// `½ log(P_JJ / (P_JJ - P_Jz P_zz⁻¹ P_Jzᵀ))` for a scalar cost.
///
/// Values whose log argument falls below `1 + 1e-15` are reported as 0.
pub fn crmi_from_moments(p_jj: f64, p_jz: &DVector<f64>, p_zz: &DMatrix<f64>) -> Result<f64> {
    if !(p_jj > 0.0) {
        return Err(Error::numerical("crmi", format!("path cost variance {p_jj} is not positive")));
    }
    if p_jz.is_empty() {
        return Ok(0.0);
    }
    let chol = crate::linalg::spd_cholesky(p_zz, "innovation covariance")?;
    let reduction = p_jz.dot(&chol.solve(p_jz));
    crmi_from_reduction(p_jj, reduction)
}

fn crmi_from_reduction(p_jj: f64, reduction: f64) -> Result<f64> {
    let frac = reduction / p_jj;
    if frac >= 1.0 {
        return Err(Error::numerical(
            "crmi",
            format!("variance reduction {reduction} exceeds prior variance {p_jj}"),
        ));
    }
    // log argument 1/(1-frac) below 1+1e-15
    if frac < 1e-15 {
        return Ok(0.0);
    }
    Ok(-0.5 * (-frac).ln_1p())
}

fn sensor_rows(config: &SensorConfig, basis: &BasisSet, workspace: &Workspace) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(config.len(), basis.len());
    for (j, &q) in config.indices().iter().enumerate() {
        c.row_mut(j).copy_from(&basis.eval(workspace.point(q)).transpose());
    }
    c
}

/// How the reconfiguration distance enters the modified objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// `Σ_{s∈S} (α₁ - α₂ d(s))`, with `d(s)` the distance from `s` to the
    /// nearest previous sensor.
    #[default]
    PerCandidate,
    /// `α₁ - α₂ min_{s∈S} d(s)`, and 0 for the empty set.
    PairMin,
}

/// Reconfiguration-cost term of the modified CRMI.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration {
    pub alpha1: f64,
    pub alpha2: f64,
    pub mode: PenaltyMode,
    nearest: Vec<f64>,
}

impl Reconfiguration {
    pub fn new(
        previous: &SensorConfig,
        workspace: &Workspace,
        alpha1: f64,
        alpha2: f64,
        mode: PenaltyMode,
    ) -> Result<Self> {
        if !(alpha1 >= 0.0) || !(alpha2 >= 0.0) {
            return Err(Error::config("sensing.alpha1/alpha2", "weights must be non-negative"));
        }
        previous.validate(workspace.len())?;
        if previous.is_empty() {
            return Err(Error::config("sensing.initial_config", "needs at least one sensor"));
        }
        let prev = previous.points(workspace);
        let nearest = (0..workspace.len())
            .map(|i| {
                let p = workspace.point(i);
                prev.iter().map(|&s| distance(p, s)).fold(f64::INFINITY, f64::min)
            })
            .collect();
        Ok(Self {
            alpha1,
            alpha2,
            mode,
            nearest,
        })
    }

    /// Distance from grid point `i` to the nearest previous sensor.
    pub fn nearest_distance(&self, i: usize) -> f64 {
        self.nearest[i]
    }

    pub fn value(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        match self.mode {
            PenaltyMode::PerCandidate => set
                .iter()
                .map(|&s| self.alpha1 - self.alpha2 * self.nearest[s])
                .sum(),
            PenaltyMode::PairMin => {
                let d = set.iter().map(|&s| self.nearest[s]).fold(f64::INFINITY, f64::min);
                self.alpha1 - self.alpha2 * d
            }
        }
    }
}

/// Everything the placement objectives need at one CSCP iteration,
/// with the grid-level quantities precomputed once.
///
/// `belief` is the predicted belief at the measurement time; `path` is the
/// plan the cost `J` refers to.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    n_grid: usize,
    measurement_variance: f64,
    p_jj: f64,
    /// `Cov(J, z_i)` for a sensor at grid point `i`.
    p_jz: Vec<f64>,
    /// `Φ_G P Φ_Gᵀ`, row-major.
    gram: Vec<f64>,
    pub reconfiguration: Option<Reconfiguration>,
}

impl ObjectiveContext {
    pub fn new(
        belief: &GaussianBelief,
        dynamics: &LinearDynamics,
        basis: &BasisSet,
        workspace: &Workspace,
        path: &[usize],
        measurement_variance: f64,
    ) -> Result<Self> {
        if !(measurement_variance > 0.0) {
            return Err(Error::config("sensing.measurement_variance", "must be positive"));
        }
        let stats = predict_horizon(belief, dynamics, path.len().saturating_sub(1).max(1))?;
        let p_jj = path_cost_variance(path, &stats, basis, workspace)?;
        let cov0 = path_cost_base_covariance(path, &stats, basis, workspace)?;
        let phi = basis.grid_matrix(workspace);
        let p_jz = (&phi * cov0).iter().copied().collect();
        let gram = symmetrize(&(&phi * &belief.cov * phi.transpose()));
        let n = workspace.len();
        // nalgebra is column-major; the gram is symmetric so either order works
        let gram = gram.as_slice().to_vec();
        Ok(Self {
            n_grid: n,
            measurement_variance,
            p_jj,
            p_jz,
            gram,
            reconfiguration: None,
        })
    }

    pub fn with_reconfiguration(mut self, reconfiguration: Reconfiguration) -> Self {
        self.reconfiguration = Some(reconfiguration);
        self
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// Prior path-cost variance `P_JJ`.
    pub fn p_jj(&self) -> f64 {
        self.p_jj
    }

    pub fn p_jz(&self, set: &[usize]) -> DVector<f64> {
        DVector::from_iterator(set.len(), set.iter().map(|&s| self.p_jz[s]))
    }

    pub fn p_zz(&self, set: &[usize]) -> DMatrix<f64> {
        let n = self.n_grid;
        DMatrix::from_fn(set.len(), set.len(), |i, j| {
            self.gram[set[i] * n + set[j]] + if i == j { self.measurement_variance } else { 0.0 }
        })
    }

    fn factor(&self, set: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_grid;
        let k = set.len();
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                a[i * k + j] = self.gram[set[i] * n + set[j]];
            }
            a[i * k + i] += self.measurement_variance;
        }
        if !small_cholesky_in_place(&mut a, k) {
            return Err(Error::numerical("placement", "innovation covariance is not positive definite"));
        }
        Ok(a)
    }

    fn check(&self, set: &[usize]) -> Result<()> {
        for (i, &s) in set.iter().enumerate() {
            if s >= self.n_grid || set[..i].contains(&s) {
                return Err(Error::Configuration(format!("invalid sensor set {set:?}")));
            }
        }
        Ok(())
    }

    /// Context-relevant mutual information `I(J; z(S))`.
    pub fn crmi(&self, set: &[usize]) -> Result<f64> {
        self.check(set)?;
        if !(self.p_jj > 0.0) {
            return Err(Error::numerical("crmi", format!("path cost variance {} is not positive", self.p_jj)));
        }
        if set.is_empty() {
            return Ok(0.0);
        }
        let l = self.factor(set)?;
        let mut u: Vec<f64> = set.iter().map(|&s| self.p_jz[s]).collect();
        small_forward_solve(&l, set.len(), &mut u);
        let reduction: f64 = u.iter().map(|x| x * x).sum();
        crmi_from_reduction(self.p_jj, reduction)
    }

    /// Standard mutual information `I(θ; z(S))`.
    pub fn smi(&self, set: &[usize]) -> Result<f64> {
        self.check(set)?;
        if set.is_empty() {
            return Ok(0.0);
        }
        let k = set.len();
        let l = self.factor(set)?;
        let log_det: f64 = (0..k).map(|i| 2.0 * l[i * k + i].ln()).sum();
        Ok(0.5 * (log_det - k as f64 * self.measurement_variance.ln()))
    }

    /// CRMI plus the reconfiguration term (plain CRMI without one).
    pub fn modified_crmi(&self, set: &[usize]) -> Result<f64> {
        let base = self.crmi(set)?;
        Ok(base + self.reconfiguration.as_ref().map_or(0.0, |r| r.value(set)))
    }

    pub fn objective(&self, kind: ObjectiveKind) -> ContextObjective<'_> {
        ContextObjective { context: self, kind }
    }
}

/// Which information objective a placement step maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Smi,
    Crmi,
    ModifiedCrmi,
}

/// A real-valued function on subsets of `0..ground_size()`.
pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;
    fn eval(&self, set: &[usize]) -> Result<f64>;
}

/// One objective of an [`ObjectiveContext`] viewed as a set function.
#[derive(Debug, Clone, Copy)]
pub struct ContextObjective<'a> {
    pub context: &'a ObjectiveContext,
    pub kind: ObjectiveKind,
}

impl SetFunction for ContextObjective<'_> {
    fn ground_size(&self) -> usize {
        self.context.n_grid
    }

    fn eval(&self, set: &[usize]) -> Result<f64> {
        match self.kind {
            ObjectiveKind::Smi => self.context.smi(set),
            ObjectiveKind::Crmi => self.context.crmi(set),
            ObjectiveKind::ModifiedCrmi => self.context.modified_crmi(set),
        }
    }
}

/// The reconfiguration term on its own.
impl SetFunction for (usize, &Reconfiguration) {
    fn ground_size(&self) -> usize {
        self.0
    }

    fn eval(&self, set: &[usize]) -> Result<f64> {
        Ok(self.1.value(set))
    }
}

/// Wraps a set function and counts evaluations.
#[derive(Debug)]
pub struct Counting<F> {
    pub inner: F,
    count: AtomicUsize,
}

impl<F> Counting<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

impl<F: SetFunction> SetFunction for Counting<F> {
    fn ground_size(&self) -> usize {
        self.inner.ground_size()
    }

    fn eval(&self, set: &[usize]) -> Result<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub config: SensorConfig,
    pub objective_value: f64,
    pub method: SearchMethod,
    pub evaluations: usize,
    /// For greedy on a monotone submodular objective with `f(∅) = 0`:
    /// `value / (1 - 1/e)`, an upper bound on the optimum.
    pub bound: Option<f64>,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc·(n−i) is divisible by i+1; divide first by the common factor
        let (num, den) = ((n - i) as u128, (i + 1) as u128);
        let g = gcd(acc, den);
        match (acc / g).checked_mul(num / (den / g)) {
            Some(v) => acc = v,
            None => return u128::MAX,
        }
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Evaluates every `n_sensors`-subset; ties go to the lexicographically
/// first subset.
pub fn optimize_exhaustive<F: SetFunction + ?Sized>(
    objective: &F,
    n_sensors: usize,
    budget: u128,
) -> Result<PlacementResult> {
    let n = objective.ground_size();
    if n_sensors > n {
        return Err(Error::config("sensing.n_sensors", format!("{n_sensors} sensors on {n} grid points")));
    }
    let required = binomial(n, n_sensors);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let mut comb: Vec<usize> = (0..n_sensors).collect();
    let mut best = comb.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut evaluations = 0;
    loop {
        let v = objective.eval(&comb)?;
        evaluations += 1;
        if v > best_value {
            best_value = v;
            best.copy_from_slice(&comb);
        }
        // next combination in lexicographic order
        let mut i = n_sensors;
        loop {
            if i == 0 {
                return Ok(PlacementResult {
                    config: SensorConfig::new(best),
                    objective_value: best_value,
                    method: SearchMethod::Exhaustive,
                    evaluations,
                    bound: None,
                });
            }
            i -= 1;
            if comb[i] < n - n_sensors + i {
                comb[i] += 1;
                for j in i + 1..n_sensors {
                    comb[j] = comb[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Greedy maximization: each round adds the index that maximizes the
/// objective of the augmented set, lowest index on ties.
pub fn optimize_greedy<F: SetFunction + ?Sized>(objective: &F, n_sensors: usize) -> Result<PlacementResult> {
    let n = objective.ground_size();
    if n_sensors > n {
        return Err(Error::config("sensing.n_sensors", format!("{n_sensors} sensors on {n} grid points")));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n_sensors);
    let mut taken = vec![false; n];
    let mut value = objective.eval(&[])?;
    let mut evaluations = 0;
    for _ in 0..n_sensors {
        let mut best: Option<(usize, f64)> = None;
        chosen.push(0);
        for x in (0..n).filter(|&x| !taken[x]) {
            *chosen.last_mut().unwrap() = x;
            let v = objective.eval(&chosen)?;
            evaluations += 1;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((x, v));
            }
        }
        let (x, v) = best.expect("at least one candidate remains");
        *chosen.last_mut().unwrap() = x;
        taken[x] = true;
        value = v;
    }
    let factor = 1.0 - (-1.0f64).exp();
    Ok(PlacementResult {
        config: SensorConfig::new(chosen),
        objective_value: value,
        method: SearchMethod::Greedy,
        evaluations,
        bound: Some(value / factor),
    })
}

/// Summary of sampled diminishing-returns margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: usize,
    pub min_margin: f64,
    pub violations: usize,
    pub tolerance: f64,
}

/// Samples nested pairs `A ⊆ B` with `|B| ≤ max_set_size` and `x ∉ B`,
/// recording `f(A∪x) - f(A) - (f(B∪x) - f(B))`.
pub fn submodularity_probe<F: SetFunction + ?Sized, R: Rng + ?Sized>(
    objective: &F,
    samples: usize,
    max_set_size: usize,
    rng: &mut R,
) -> Result<ProbeReport> {
    const TOLERANCE: f64 = 1e-9;
    let n = objective.ground_size();
    if samples == 0 || n == 0 {
        return Err(Error::config("probe.samples", "need at least one sample and a non-empty ground set"));
    }
    let max_b = max_set_size.min(n - 1);
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..samples {
        let size_b = rng.random_range(0..=max_b);
        let picks = sample(rng, n, size_b + 1).into_vec();
        let x = picks[size_b];
        let b = &picks[..size_b];
        let size_a = rng.random_range(0..=size_b);
        // `b` is a uniformly random ordering, so any prefix is a random subset
        let a = &b[..size_a];
        let with = |s: &[usize]| {
            let mut v = s.to_vec();
            v.push(x);
            v
        };
        let gain_a = objective.eval(&with(a))? - objective.eval(a)?;
        let gain_b = objective.eval(&with(b))? - objective.eval(b)?;
        let margin = gain_a - gain_b;
        min_margin = min_margin.min(margin);
        if margin < -TOLERANCE {
            violations += 1;
        }
    }
    Ok(ProbeReport {
        samples,
        min_margin,
        violations,
        tolerance: TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::Phase;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Modular(Vec<f64>);

    impl SetFunction for Modular {
        fn ground_size(&self) -> usize {
            self.0.len()
        }
        fn eval(&self, set: &[usize]) -> Result<f64> {
            Ok(set.iter().map(|&s| self.0[s]).sum())
        }
    }

    fn setup(seed: u64) -> (GaussianBelief, LinearDynamics, BasisSet, Workspace) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Workspace::new(1.0, 5).unwrap();
        let b = BasisSet::uniform(1.0, 5, BasisSet::covering_width(0.5, 0.1), 0.1).unwrap();
        let m = DMatrix::from_fn(25, 25, |_, _| rng.random_range(-1.0..1.0));
        let belief = GaussianBelief {
            mean: DVector::from_fn(25, |_, _| rng.random_range(0.0..2.0)),
            cov: &m * m.transpose() + DMatrix::identity(25, 25) * 0.1,
            time_index: 1,
            phase: Phase::Predicted,
        };
        let a = DMatrix::from_fn(25, 25, |_, _| rng.random_range(-0.02..0.02)) + DMatrix::identity(25, 25) * 0.95;
        let d = LinearDynamics::from_discrete(a, DMatrix::identity(25, 25) * 1e-4).unwrap();
        (belief, d, b, w)
    }

    fn staircase() -> Vec<usize> {
        vec![0, 1, 2, 3, 4, 9, 14, 19, 24]
    }

    #[test]
    fn config_validation() {
        assert!(SensorConfig::new(vec![0, 3]).validate(4).is_ok());
        assert!(SensorConfig::new(vec![0, 4]).validate(4).is_err());
        assert!(SensorConfig::new(vec![2, 2]).validate(4).is_err());
        assert_eq!(SensorConfig::new(vec![3, 1]).sorted().indices(), &[1, 3]);
    }

    #[test]
    fn scalar_smi_is_half_log_two() {
        let w = Workspace::new(1.0, 2).unwrap();
        let b = BasisSet::new(vec![w.point(0)], vec![0.01], 0.1).unwrap();
        let belief = GaussianBelief::prior(1, 1.0);
        let r = DMatrix::identity(1, 1);
        let v = smi(&SensorConfig::new(vec![0]), &belief, &b, &w, &r).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn far_sensor_is_uninformative() {
        let w = Workspace::new(1.0, 5).unwrap();
        let b = BasisSet::new(vec![w.point(0)], vec![0.001], 0.1).unwrap();
        let belief = GaussianBelief::prior(1, 1.0);
        let v = smi(&SensorConfig::new(vec![24]), &belief, &b, &w, &DMatrix::identity(1, 1)).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn fast_objectives_match_dense_forms() {
        let (belief, d, b, w) = setup(3);
        let ctx = ObjectiveContext::new(&belief, &d, &b, &w, &staircase(), 0.01).unwrap();
        for set in [vec![12], vec![3, 17], vec![0, 6, 24, 11]] {
            let config = SensorConfig::new(set.clone());
            let r = DMatrix::identity(set.len(), set.len()) * 0.01;
            let dense = smi(&config, &belief, &b, &w, &r).unwrap();
            assert!((ctx.smi(&set).unwrap() - dense).abs() < 1e-9);
            let crmi = crmi_from_moments(ctx.p_jj(), &ctx.p_jz(&set), &ctx.p_zz(&set)).unwrap();
            assert!((ctx.crmi(&set).unwrap() - crmi).abs() < 1e-12);
        }
    }

    #[test]
    fn objectives_ignore_order() {
        let (belief, d, b, w) = setup(4);
        let ctx = ObjectiveContext::new(&belief, &d, &b, &w, &staircase(), 0.01).unwrap();
        let a = ctx.crmi(&[2, 9, 20]).unwrap();
        for p in [[9, 2, 20], [20, 9, 2], [2, 20, 9]] {
            assert!((ctx.crmi(&p).unwrap() - a).abs() < 1e-12);
        }
        assert!(ctx.crmi(&[2, 2]).is_err());
    }

    #[test]
    fn objectives_are_monotone() {
        let (belief, d, b, w) = setup(5);
        let ctx = ObjectiveContext::new(&belief, &d, &b, &w, &staircase(), 0.01).unwrap();
        let mut set = Vec::new();
        let (mut c0, mut s0) = (0.0, 0.0);
        for x in [7, 13, 1, 22, 18] {
            set.push(x);
            let (c, s) = (ctx.crmi(&set).unwrap(), ctx.smi(&set).unwrap());
            assert!(c >= c0 - 1e-9 && s >= s0 - 1e-9);
            (c0, s0) = (c, s);
        }
    }

    #[test]
    fn coincident_candidate_gets_full_alpha1() {
        let (belief, d, b, w) = setup(6);
        let prev = SensorConfig::new(vec![4, 10]);
        let rec = Reconfiguration::new(&prev, &w, 8f64.sqrt(), 0.01, PenaltyMode::PerCandidate).unwrap();
        let ctx = ObjectiveContext::new(&belief, &d, &b, &w, &staircase(), 0.01)
            .unwrap()
            .with_reconfiguration(rec);
        let v = ctx.modified_crmi(&[4]).unwrap();
        assert!((v - ctx.crmi(&[4]).unwrap() - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pair_min_reading() {
        let w = Workspace::new(1.0, 5).unwrap();
        let rec = Reconfiguration::new(&SensorConfig::new(vec![0]), &w, 3.0, 1.0, PenaltyMode::PairMin).unwrap();
        assert_eq!(rec.value(&[]), 0.0);
        assert!((rec.value(&[2, 1]) - (3.0 - w.delta())).abs() < 1e-15);
        assert_eq!(rec.value(&[0, 24]), 3.0);
    }

    #[test]
    fn exhaustive_and_greedy_small_cases() {
        let f = Modular(vec![0.3, 1.0, 0.2, 1.0, 0.5]);
        let e = optimize_exhaustive(&f, 1, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
        assert_eq!(e.config.indices(), &[1]);
        let e = optimize_exhaustive(&f, 5, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
        assert_eq!(e.config.indices(), &[0, 1, 2, 3, 4]);
        assert_eq!(e.evaluations, 1);
        let g = optimize_greedy(&f, 2).unwrap();
        assert_eq!(g.config.indices(), &[1, 3]);
        assert_eq!(g.evaluations, 5 + 4);
        assert!(matches!(
            optimize_exhaustive(&f, 2, 3),
            Err(Error::BudgetExceeded { required: 10, budget: 3 })
        ));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(49, 2), 1176);
        assert_eq!(binomial(121, 3), 287_980);
        assert_eq!(binomial(5, 7), 0);
        assert_eq!(binomial(196, 98), u128::MAX);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn modular_probe_has_zero_margins() {
        let f = Modular((0..10).map(|i| i as f64 * 0.37).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = submodularity_probe(&f, 500, 5, &mut rng).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.min_margin.abs() < 1e-12);
    }

    #[test]
    fn counting_wrapper_counts() {
        let f = Counting::new(Modular(vec![1.0; 6]));
        let g = optimize_greedy(&f, 3).unwrap();
        // one extra call for the empty set
        assert_eq!(f.count(), g.evaluations + 1);
        assert_eq!(g.evaluations, 6 + 5 + 4);
    }
}
