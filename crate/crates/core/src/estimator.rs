//! Threat-state estimation: an augmented-state unscented Kalman filter over
//! the basis weights, the configuration-dependent linear measurement model,
//! and a closed-form Kalman filter used as a test oracle.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, psd_factor, spd_cholesky, symmetrize};
use crate::placement::SensorConfig;
use crate::threat::{standard_normal, BasisSet, LinearDynamics, ThreatTruth, Workspace};

/// Default prior scale: `P₀ = χ I`.
pub const DEFAULT_CHI: f64 = 1e3;
/// Default per-sensor measurement noise variance.
pub const DEFAULT_MEASUREMENT_VARIANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// `(k | k-1)`
    Predicted,
    /// `(k | k)`
    Updated,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Predicted => "predicted",
            Phase::Updated => "updated",
        }
    }
}

/// Gaussian belief over the threat weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time_index: usize,
    pub phase: Phase,
}

impl GaussianBelief {
    /// Zero mean, `χ I` covariance, in the updated phase at time 0.
    pub fn prior(dim: usize, chi: f64) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * chi,
            time_index: 0,
            phase: Phase::Updated,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_trace(&self) -> f64 {
        self.cov.trace()
    }

    fn expect_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(Error::Phase {
                expected: expected.name(),
                actual: self.phase.name(),
            });
        }
        Ok(())
    }
}

/// Linear point-sensor model `z = C θ + η`, `η ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    pub config: SensorConfig,
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
    r_factor: DMatrix<f64>,
}

impl MeasurementModel {
    /// Row `j` of `C` is `Φ(x_{q_j})ᵀ`; `R` is given explicitly.
    pub fn new(
        config: SensorConfig,
        basis: &BasisSet,
        workspace: &Workspace,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        config.validate(workspace.len())?;
        let ns = config.len();
        if r.nrows() != ns || r.ncols() != ns {
            return Err(Error::Dimension {
                context: "measurement noise covariance",
                expected: ns,
                actual: r.nrows(),
            });
        }
        let mut c = DMatrix::zeros(ns, basis.len());
        for (j, &q) in config.indices().iter().enumerate() {
            c.row_mut(j).copy_from(&basis.eval(workspace.point(q)).transpose());
        }
        let r_factor = if ns == 0 {
            DMatrix::zeros(0, 0)
        } else {
            spd_cholesky(&r, "measurement noise covariance")?.l()
        };
        Ok(Self {
            config,
            c,
            r,
            r_factor,
        })
    }

    pub fn len(&self) -> usize {
        self.config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config.is_empty()
    }
}

/// Measurement model with `R = variance · I`.
pub fn measurement_matrix(
    config: SensorConfig,
    basis: &BasisSet,
    workspace: &Workspace,
    variance: f64,
) -> Result<MeasurementModel> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::config("sensing.measurement_variance", "must be positive"));
    }
    let ns = config.len();
    MeasurementModel::new(config, basis, workspace, DMatrix::identity(ns, ns) * variance)
}

/// Draws `z = C θ_true + η`.
///
/// The field offset of 1 is not part of the measurement: sensors observe the
/// basis-weighted part of the threat, consistent with the filter's model.
pub fn simulate_measurement<R: Rng + ?Sized>(
    truth: &ThreatTruth,
    model: &MeasurementModel,
    rng: &mut R,
) -> DVector<f64> {
    let noise = &model.r_factor * standard_normal(model.len(), rng);
    &model.c * &truth.theta + noise
}

/// Sigma-point scaling constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Weights for `2n + 1` sigma points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaWeights {
    pub lambda: f64,
    pub mean0: f64,
    pub cov0: f64,
    /// Shared weight of the `2n` outer points (mean and covariance).
    pub outer: f64,
    /// `sqrt(n + λ)`
    pub spread: f64,
}

impl UkfParams {
    pub fn weights(&self, n: usize) -> Result<SigmaWeights> {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let scale = nf + lambda;
        if !(scale > 0.0) || !(self.alpha > 0.0) {
            return Err(Error::config(
                "estimator.ukf",
                "alpha and kappa must give n + lambda > 0",
            ));
        }
        let mean0 = lambda / scale;
        Ok(SigmaWeights {
            lambda,
            mean0,
            cov0: mean0 + (1.0 - self.alpha * self.alpha + self.beta),
            outer: 1.0 / (2.0 * scale),
            spread: scale.sqrt(),
        })
    }
}

/// Propagates the `2n + 1` sigma points of `N(center, factor factorᵀ)`
/// through `f`, returning the transformed points (central point first).
fn propagate<F>(center: &DVector<f64>, factor: &DMatrix<f64>, spread: f64, f: F) -> Vec<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = center.len();
    let mut out = Vec::with_capacity(2 * n + 1);
    out.push(f(center));
    for sign in [1.0, -1.0] {
        for j in 0..n {
            let point = center + factor.column(j) * (sign * spread);
            out.push(f(&point));
        }
    }
    out
}

/// Weighted mean, computed as deviations from the central point so the
/// large-magnitude central weight does not cancel catastrophically.
fn weighted_mean(points: &[DVector<f64>], w: &SigmaWeights) -> DVector<f64> {
    let center = &points[0];
    let mut acc = DVector::zeros(center.len());
    for p in &points[1..] {
        acc += p - center;
    }
    center + acc * w.outer
}

fn weighted_cross(
    a: &[DVector<f64>],
    a_mean: &DVector<f64>,
    b: &[DVector<f64>],
    b_mean: &DVector<f64>,
    w: &SigmaWeights,
) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(a_mean.len(), b_mean.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let weight = if i == 0 { w.cov0 } else { w.outer };
        acc += (x - a_mean) * (y - b_mean).transpose() * weight;
    }
    acc
}

/// UKF time update on the augmented state `[θ; ω]`.
pub fn ukf_predict(
    belief: &GaussianBelief,
    dynamics: &LinearDynamics,
    params: &UkfParams,
) -> Result<GaussianBelief> {
    belief.expect_phase(Phase::Updated)?;
    let np = belief.dim();
    if dynamics.dim() != np {
        return Err(Error::Dimension {
            context: "dynamics vs belief",
            expected: np,
            actual: dynamics.dim(),
        });
    }
    let w = params.weights(2 * np)?;
    let p_factor = psd_factor(&belief.cov, "ukf predict")?;
    let q_factor = psd_factor(&dynamics.q, "ukf predict process noise")?;
    let factor = block_diag(&[&p_factor, &q_factor]);
    let mut center = DVector::zeros(2 * np);
    center.rows_mut(0, np).copy_from(&belief.mean);

    let a = &dynamics.a;
    let points = propagate(&center, &factor, w.spread, |x| {
        a * x.rows(0, np) + x.rows(np, np)
    });
    let mean = weighted_mean(&points, &w);
    let cov = weighted_cross(&points, &mean, &points, &mean, &w);
    Ok(GaussianBelief {
        mean,
        cov: symmetrize(&cov),
        time_index: belief.time_index + 1,
        phase: Phase::Predicted,
    })
}

/// Result of a measurement update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub belief: GaussianBelief,
    /// Filter gain `L_k = P_θz P_zz⁻¹`.
    pub gain: DMatrix<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub predicted_measurement: DVector<f64>,
}

/// UKF measurement update on the augmented state `[θ; η]`.
pub fn ukf_update(
    belief: &GaussianBelief,
    z: &DVector<f64>,
    model: &MeasurementModel,
    params: &UkfParams,
) -> Result<UpdateOutcome> {
    belief.expect_phase(Phase::Predicted)?;
    let np = belief.dim();
    let ns = model.len();
    if z.len() != ns {
        return Err(Error::Dimension {
            context: "measurement vector",
            expected: ns,
            actual: z.len(),
        });
    }
    if model.c.ncols() != np {
        return Err(Error::Dimension {
            context: "measurement matrix columns",
            expected: np,
            actual: model.c.ncols(),
        });
    }
    if ns == 0 {
        let mut updated = belief.clone();
        updated.phase = Phase::Updated;
        return Ok(UpdateOutcome {
            belief: updated,
            gain: DMatrix::zeros(np, 0),
            innovation_cov: DMatrix::zeros(0, 0),
            predicted_measurement: DVector::zeros(0),
        });
    }

    let w = params.weights(np + ns)?;
    let p_factor = psd_factor(&belief.cov, "ukf update")?;
    let factor = block_diag(&[&p_factor, &model.r_factor]);
    let mut center = DVector::zeros(np + ns);
    center.rows_mut(0, np).copy_from(&belief.mean);

    let c = &model.c;
    // Each propagated point stacks [θ; γ] so state and measurement share
    // one pass over the sigma set.
    let points = propagate(&center, &factor, w.spread, |x| {
        let theta = x.rows(0, np).into_owned();
        let gamma = c * &theta + x.rows(np, ns);
        let mut out = DVector::zeros(np + ns);
        out.rows_mut(0, np).copy_from(&theta);
        out.rows_mut(np, ns).copy_from(&gamma);
        out
    });
    let states: Vec<DVector<f64>> = points.iter().map(|p| p.rows(0, np).into_owned()).collect();
    let meas: Vec<DVector<f64>> = points.iter().map(|p| p.rows(np, ns).into_owned()).collect();

    let z_hat = weighted_mean(&meas, &w);
    let p_zz = symmetrize(&weighted_cross(&meas, &z_hat, &meas, &z_hat, &w));
    let p_tz = weighted_cross(&states, &belief.mean, &meas, &z_hat, &w);

    let chol = spd_cholesky(&p_zz, "ukf innovation covariance")?;
    let gain = chol.solve(&p_tz.transpose()).transpose();
    let mean = &belief.mean + &gain * (z - &z_hat);
    let cov = symmetrize(&(&belief.cov - &gain * &p_zz * gain.transpose()));
    Ok(UpdateOutcome {
        belief: GaussianBelief {
            mean,
            cov,
            time_index: belief.time_index,
            phase: Phase::Updated,
        },
        gain,
        innovation_cov: p_zz,
        predicted_measurement: z_hat,
    })
}

/// Closed-form linear Kalman filter, kept as an oracle for the UKF.
pub mod reference {
    use super::*;

    pub fn kf_predict(belief: &GaussianBelief, dynamics: &LinearDynamics) -> GaussianBelief {
        let a = &dynamics.a;
        GaussianBelief {
            mean: a * &belief.mean,
            cov: symmetrize(&(a * &belief.cov * a.transpose() + &dynamics.q)),
            time_index: belief.time_index + 1,
            phase: Phase::Predicted,
        }
    }

    pub fn kf_update(
        belief: &GaussianBelief,
        z: &DVector<f64>,
        model: &MeasurementModel,
    ) -> Result<GaussianBelief> {
        let c = &model.c;
        let s = c * &belief.cov * c.transpose() + &model.r;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::numerical("kf update", "singular innovation covariance"))?;
        let k = &belief.cov * c.transpose() * s_inv;
        let n = belief.dim();
        let mean = &belief.mean + &k * (z - c * &belief.mean);
        // Joseph form
        let ikc = DMatrix::identity(n, n) - &k * c;
        let cov = &ikc * &belief.cov * ikc.transpose() + &k * &model.r * k.transpose();
        Ok(GaussianBelief {
            mean,
            cov: symmetrize(&cov),
            time_index: belief.time_index,
            phase: Phase::Updated,
        })
    }

    /// One predict + update cycle.
    pub fn kf_reference(
        belief: &GaussianBelief,
        dynamics: &LinearDynamics,
        model: &MeasurementModel,
        z: &DVector<f64>,
    ) -> Result<GaussianBelief> {
        kf_update(&kf_predict(belief, dynamics), z, model)
    }
}
