//! Quantum point contact charge detector.
//!
//! The time-averaged QPC current is a Gaussian pointer for the double-dot
//! charge: `I0 = (I1 + I2)/2`, `q = I - I0`, `g = (I1 - I2)/2`,
//! `sigma^2 = S_I / 2t`. Everything below works in the dimensionless
//! variables `u = q/g` and `tau = (g/sigma)^2 = t/T_m`, where the pointer has
//! unit shift and standard deviation `1/sqrt(tau)`.

use crate::averaging::{conditioned_average, ConditionedSetup};
use crate::error::{CvError, Result};
use crate::operator::{ComplexMatrix, DensityOperator, MeasurementContext};
use crate::scenarios::detector::{discrete_pointer_cv, sinh_ratio_scaled, DetectorModel, PointerDistribution};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpcParams {
    pub i1: f64,
    pub i2: f64,
    pub shot_noise: f64,
    pub time: f64,
}

impl QpcParams {
    pub fn new(i1: f64, i2: f64, shot_noise: f64, time: f64) -> Result<Self> {
        if i1 == i2 || !i1.is_finite() || !i2.is_finite() {
            return Err(CvError::InvalidParameter("characteristic currents must differ".into()));
        }
        if !(shot_noise > 0.0) || !(time > 0.0) {
            return Err(CvError::InvalidParameter(
                "shot noise power and averaging time must be positive".into(),
            ));
        }
        Ok(Self {
            i1,
            i2,
            shot_noise,
            time,
        })
    }

    /// Parameters with unit coupling and `S_I = 2` realizing a given `tau`.
    pub fn from_tau(tau: f64) -> Result<Self> {
        Self::new(1.0, -1.0, 2.0, tau)
    }

    pub fn mean_current(&self) -> f64 {
        0.5 * (self.i1 + self.i2)
    }

    pub fn coupling(&self) -> f64 {
        0.5 * (self.i1 - self.i2)
    }

    pub fn sigma(&self) -> f64 {
        (self.shot_noise / (2.0 * self.time)).sqrt()
    }

    pub fn tau(&self) -> f64 {
        (self.coupling() / self.sigma()).powi(2)
    }

    /// `T_m = t / tau`.
    pub fn measurement_time(&self) -> f64 {
        self.time / self.tau()
    }

    /// Dimensionless reading `u = (I - I0) / g`.
    pub fn reading(&self, current: f64) -> f64 {
        (current - self.mean_current()) / self.coupling()
    }
}

/// `sqrt(2) exp(-u^2 tau / 2) sinh(u tau) / sinh(tau / 2)`.
pub fn qpc_cv(u: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(CvError::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(std::f64::consts::SQRT_2 * sinh_ratio_scaled(u * tau, tau / 2.0, -u * u * tau / 2.0))
}

/// Closed-form conditioned average after rotating by `theta` about
/// `sigma_x` and postselecting on `|+1>`:
///
/// ```text
/// [cos^2(t/2) r11 - sin^2(t/2) r22]
///   / [cos^2(t/2) r11 + sin^2(t/2) r22 - sin(t) Im[r12] exp(-tau/2)]
/// ```
pub fn qpc_conditioned_oracle(rho: &DensityOperator, theta: f64, tau: f64) -> Result<f64> {
    if rho.dim() != 2 {
        return Err(CvError::DimensionMismatch {
            expected: 2,
            found: rho.dim(),
        });
    }
    let m = rho.matrix();
    let (r11, r22, r12) = (m.get(0, 0).re, m.get(1, 1).re, m.get(0, 1));
    let c2 = (theta / 2.0).cos().powi(2);
    let s2 = (theta / 2.0).sin().powi(2);
    let denominator = c2 * r11 + s2 * r22 - theta.sin() * r12.im * (-tau / 2.0).exp();
    if denominator.abs() <= 1e-12 {
        return Err(CvError::DivergentPostselection { denominator });
    }
    Ok((c2 * r11 - s2 * r22) / denominator)
}

/// `exp(-i theta sigma_x / 2)`.
pub fn x_rotation(theta: f64) -> ComplexMatrix {
    ComplexMatrix::pauli_x().exp_i(-theta / 2.0)
}

/// Rotation about `sigma_x` followed by a projective z measurement,
/// postselected on `|+1>`.
pub fn rotated_postselection(theta: f64) -> MeasurementContext {
    MeasurementContext::computational(2).preceded_by(&x_rotation(theta))
}

/// Discretized Gaussian pointer in the dimensionless reading `u`.
pub fn qpc_detector_model(tau: f64, points: usize) -> Result<DetectorModel> {
    if !(tau > 0.0) {
        return Err(CvError::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    DetectorModel::with_points(PointerDistribution::gaussian(1.0 / tau.sqrt())?, 1.0, points)
}

pub fn qpc_setup(tau: f64, theta: f64, points: usize) -> Result<ConditionedSetup> {
    let model = qpc_detector_model(tau, points)?;
    let (det, cv) = discrete_pointer_cv(&model, &SolverOptions::default())?;
    ConditionedSetup::new(det.context, cv, rotated_postselection(theta), 0)
}

/// Detector measurement for the averaging time, rotation, strong
/// postselection, evaluated with the generic conditioned average.
pub fn qpc_full_pipeline(params: &QpcParams, rho: &DensityOperator, theta: f64) -> Result<f64> {
    let setup = qpc_setup(params.tau(), theta, crate::scenarios::detector::DEFAULT_GRID_POINTS)?;
    conditioned_average(&setup, rho)
}
