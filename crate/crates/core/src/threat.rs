//! Workspace grid, Gaussian basis expansion of the threat field, linear
//! threat dynamics and the ground-truth simulator.
//!
//! Grid layout: point `i` sits at column `i % side` and row `i / side`, with
//! row 0 at the bottom of the workspace (`y = -half_extent`) and column 0 at
//! the left edge (`x = -half_extent`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_factor, symmetrize};

pub type Point = [f64; 2];

/// Square workspace `[-h, h]²` sampled by a uniform `side × side` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    half_extent: f64,
    grid_side: usize,
}

impl Workspace {
    pub fn new(half_extent: f64, grid_side: usize) -> Result<Self> {
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::config("workspace.half_extent", "must be positive and finite"));
        }
        if grid_side < 2 {
            return Err(Error::config("workspace.grid_side", "must be at least 2"));
        }
        Ok(Self {
            half_extent,
            grid_side,
        })
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    /// Number of grid points, `grid_side²`.
    pub fn len(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spacing between adjacent grid points.
    pub fn delta(&self) -> f64 {
        2.0 * self.half_extent / (self.grid_side - 1) as f64
    }

    pub fn point(&self, index: usize) -> Point {
        let d = self.delta();
        let col = index % self.grid_side;
        let row = index / self.grid_side;
        [
            -self.half_extent + col as f64 * d,
            -self.half_extent + row as f64 * d,
        ]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.grid_side + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.grid_side, index % self.grid_side)
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Length of the workspace diagonal.
    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extent * std::f64::consts::SQRT_2
    }

    pub fn contains(&self, p: Point) -> bool {
        let h = self.half_extent * (1.0 + 1e-12);
        p[0].abs() <= h && p[1].abs() <= h
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Default significant-support level.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.1;

/// Gaussian radial basis `φₙ(x) = exp(-|x - x̄ₙ|² / (2aₙ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    centers: Vec<Point>,
    widths: Vec<f64>,
    support_threshold: f64,
}

impl BasisSet {
    pub fn new(centers: Vec<Point>, widths: Vec<f64>, support_threshold: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::config("basis.centers", "at least one basis function is required"));
        }
        if centers.len() != widths.len() {
            return Err(Error::Dimension {
                context: "basis widths",
                expected: centers.len(),
                actual: widths.len(),
            });
        }
        if widths.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::config("basis.widths", "all widths must be positive"));
        }
        if centers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("basis.centers", "centers must be finite"));
        }
        if !(support_threshold > 0.0 && support_threshold <= 1.0) {
            return Err(Error::config("basis.support_threshold", "must lie in (0, 1]"));
        }
        Ok(Self {
            centers,
            widths,
            support_threshold,
        })
    }

    /// `per_side × per_side` centers spread uniformly over `[-h, h]²`, all
    /// sharing `width`.
    pub fn uniform(half_extent: f64, per_side: usize, width: f64, support_threshold: f64) -> Result<Self> {
        if per_side < 2 {
            return Err(Error::config("basis.per_side", "must be at least 2"));
        }
        let spacing = 2.0 * half_extent / (per_side - 1) as f64;
        let mut centers = Vec::with_capacity(per_side * per_side);
        for row in 0..per_side {
            for col in 0..per_side {
                centers.push([
                    -half_extent + col as f64 * spacing,
                    -half_extent + row as f64 * spacing,
                ]);
            }
        }
        Self::new(centers, vec![width; per_side * per_side], support_threshold)
    }

    /// Width at which the `τ` level sets of a uniform lattice with the given
    /// spacing just cover the square: the support radius equals half the
    /// cell diagonal.
    pub fn covering_width(spacing: f64, support_threshold: f64) -> f64 {
        spacing * spacing / (4.0 * (1.0 / support_threshold).ln())
    }

    /// Width at which each basis function falls to one half at the
    /// neighbouring lattice centers.
    pub fn half_max_width(spacing: f64) -> f64 {
        spacing * spacing / (2.0 * std::f64::consts::LN_2)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn support_threshold(&self) -> f64 {
        self.support_threshold
    }

    pub fn with_support_threshold(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::config("basis.support_threshold", "must lie in (0, 1]"));
        }
        self.support_threshold = tau;
        Ok(self)
    }

    /// `Φ(x)`: one value per basis function, each in `(0, 1]`.
    pub fn eval(&self, x: Point) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.centers.iter().zip(&self.widths).map(|(c, &a)| {
                let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                (-r2 / (2.0 * a)).exp()
            }),
        )
    }

    /// Analytic Laplacian `∇²φₙ(x) = φₙ(x) (|x - x̄ₙ|² - 2aₙ) / aₙ²`.
    pub fn laplacian(&self, x: Point) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.centers.iter().zip(&self.widths).map(|(c, &a)| {
                let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                (-r2 / (2.0 * a)).exp() * (r2 - 2.0 * a) / (a * a)
            }),
        )
    }

    /// Threat intensity `c(x) = 1 + Φ(x)ᵀθ`.
    pub fn field_value(&self, x: Point, theta: &DVector<f64>) -> f64 {
        1.0 + self.eval(x).dot(theta)
    }

    /// Matrix whose row `i` is `Φ(xᵢ)ᵀ` for every grid point.
    pub fn grid_matrix(&self, workspace: &Workspace) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(workspace.len(), self.len());
        for i in 0..workspace.len() {
            m.row_mut(i).copy_from(&self.eval(workspace.point(i)).transpose());
        }
        m
    }

    /// Grid points where `φₙ ≥ τ`.
    pub fn significant_support(&self, n: usize, workspace: &Workspace) -> Vec<usize> {
        let c = self.centers[n];
        let a = self.widths[n];
        (0..workspace.len())
            .filter(|&i| {
                let p = workspace.point(i);
                let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                (-r2 / (2.0 * a)).exp() >= self.support_threshold
            })
            .collect()
    }
}

/// Continuous-time heat-diffusion generator projected onto the basis.
///
/// Solves `B A_c = α L` in the least-squares sense, where row `m` of `B` is
/// `Φ(yₘ)ᵀ` and row `m` of `L` is `∇²Φ(yₘ)ᵀ` at the collocation points `yₘ`.
pub fn heat_diffusion_ac(basis: &BasisSet, alpha: f64, collocation: &[Point]) -> Result<DMatrix<f64>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config("dynamics.diffusivity", "must be non-negative"));
    }
    let np = basis.len();
    if collocation.len() < np {
        return Err(Error::config(
            "dynamics.collocation",
            format!("{} points cannot determine {} basis weights", collocation.len(), np),
        ));
    }
    let mut b = DMatrix::zeros(collocation.len(), np);
    let mut lap = DMatrix::zeros(collocation.len(), np);
    for (m, &y) in collocation.iter().enumerate() {
        b.row_mut(m).copy_from(&basis.eval(y).transpose());
        lap.row_mut(m).copy_from(&basis.laplacian(y).transpose());
    }
    let svd = b.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::config(
            "dynamics.collocation",
            "collocation matrix is rank deficient",
        ));
    }
    let x = svd
        .solve(&lap, 0.0)
        .map_err(|e| Error::numerical("heat diffusion projection", e))?;
    Ok(x * alpha)
}

/// Truncated series for `A = e^{A_c Δt}` and `Q = ∫₀^Δt e^{A_c s} Q_c e^{A_cᵀ s} ds`.
///
/// Both series stop at the `order`-th power of `Δt`.
pub fn discretize(
    a_c: &DMatrix<f64>,
    q_c: &DMatrix<f64>,
    dt: f64,
    order: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    if a_c.ncols() != n {
        return Err(Error::Dimension {
            context: "A_c must be square",
            expected: n,
            actual: a_c.ncols(),
        });
    }
    if q_c.nrows() != n || q_c.ncols() != n {
        return Err(Error::Dimension {
            context: "Q_c must match A_c",
            expected: n,
            actual: q_c.nrows().max(q_c.ncols()),
        });
    }
    if order < 1 {
        return Err(Error::config("dynamics.order", "must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("dynamics.dt", "must be positive"));
    }

    let mut a = DMatrix::identity(n, n);
    let mut a_term = DMatrix::identity(n, n);
    // q_term holds M_j Δt^j / j! with M_1 = Q_c, M_{j+1} = A_c M_j + M_j A_cᵀ
    let mut q_term = q_c * dt;
    let mut q = q_term.clone();
    for j in 1..=order {
        a_term = &a_term * a_c * (dt / j as f64);
        a += &a_term;
        if j < order {
            q_term = (a_c * &q_term + &q_term * a_c.transpose()) * (dt / (j + 1) as f64);
            q += &q_term;
        }
    }
    Ok((a, symmetrize(&q)))
}

/// Discrete linear threat dynamics `θₖ = A θₖ₋₁ + ω`, `ω ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a_c: DMatrix<f64>,
    pub q_c: DMatrix<f64>,
    pub dt: f64,
    pub order: usize,
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
}

impl LinearDynamics {
    /// Discretizes `(A_c, σ_P² I)`.
    pub fn from_continuous(a_c: DMatrix<f64>, process_std: f64, dt: f64, order: usize) -> Result<Self> {
        if !(process_std >= 0.0 && process_std.is_finite()) {
            return Err(Error::config("dynamics.process_std", "must be non-negative"));
        }
        let n = a_c.nrows();
        let q_c = DMatrix::identity(n, n) * process_std.powi(2);
        let (a, q) = discretize(&a_c, &q_c, dt, order)?;
        Self::from_discrete_parts(a_c, q_c, dt, order, a, q)
    }

    /// Wraps an already-discrete pair `(A, Q)`; used by tests and oracles.
    pub fn from_discrete(a: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension {
                context: "discrete dynamics",
                expected: n,
                actual: q.nrows(),
            });
        }
        Self::from_discrete_parts(DMatrix::zeros(n, n), DMatrix::zeros(n, n), 1.0, 1, a, q)
    }

    fn from_discrete_parts(
        a_c: DMatrix<f64>,
        q_c: DMatrix<f64>,
        dt: f64,
        order: usize,
        a: DMatrix<f64>,
        q: DMatrix<f64>,
    ) -> Result<Self> {
        let q = symmetrize(&q);
        let noise_factor = psd_noise_factor(&q)?;
        Ok(Self {
            a_c,
            q_c,
            dt,
            order,
            a,
            q,
            noise_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Lower factor `L` with `L Lᵀ ≈ Q`, used to sample process noise.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise_factor
    }

    /// Spectral radius of `A` (largest eigenvalue modulus).
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Cholesky factor for noise sampling, with a 1e-12 diagonal jitter if the
/// plain factorization fails.
fn psd_noise_factor(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.iter().all(|&x| x == 0.0) {
        return Ok(DMatrix::zeros(q.nrows(), q.ncols()));
    }
    if let Some(ch) = nalgebra::Cholesky::new(q.clone()) {
        return Ok(ch.l());
    }
    let n = q.nrows();
    if let Some(ch) = nalgebra::Cholesky::new(q + DMatrix::<f64>::identity(n, n) * 1e-12) {
        return Ok(ch.l());
    }
    psd_factor(q, "process noise factor")
}

/// Draws a standard-normal vector of length `n`.
pub fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Ground-truth threat state.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreatTruth {
    pub theta: DVector<f64>,
    pub time_index: usize,
}

impl ThreatTruth {
    pub fn new(theta: DVector<f64>) -> Self {
        Self {
            theta,
            time_index: 0,
        }
    }

    /// Draws `θ₀` i.i.d. uniform on `[lo, hi]`, redrawing until the field is
    /// strictly positive at every grid point.
    pub fn sample_initial<R: Rng + ?Sized>(
        basis: &BasisSet,
        workspace: &Workspace,
        range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        let (lo, hi) = range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::config("dynamics.theta_min/theta_max", "need finite lo <= hi"));
        }
        let phi = basis.grid_matrix(workspace);
        for _ in 0..10_000 {
            let theta = DVector::from_iterator(
                basis.len(),
                (0..basis.len()).map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) }),
            );
            let field = &phi * &theta;
            if field.iter().all(|&v| 1.0 + v > 0.0) {
                return Ok(Self::new(theta));
            }
        }
        Err(Error::config(
            "dynamics.theta_range",
            "could not draw a strictly positive field",
        ))
    }

    /// Advances one step: `θ ← Aθ + ω`.
    pub fn step<R: Rng + ?Sized>(&self, dynamics: &LinearDynamics, rng: &mut R) -> Self {
        let xi = standard_normal(dynamics.dim(), rng);
        Self {
            theta: &dynamics.a * &self.theta + dynamics.noise_factor() * xi,
            time_index: self.time_index + 1,
        }
    }

    /// Field values at every grid point.
    pub fn field(&self, basis: &BasisSet, workspace: &Workspace) -> Vec<f64> {
        (0..workspace.len())
            .map(|i| basis.field_value(workspace.point(i), &self.theta))
            .collect()
    }
}
