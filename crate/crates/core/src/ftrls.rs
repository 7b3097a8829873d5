//! Recursive least squares with an error-driven forgetting factor, used to
//! identify the environment impedance and recover the contact force without
//! a force sensor.
//!
//! The full dynamics are written as `τ = Y(q, q̇, q̈, χ_e, χ̇_e) h` with the
//! parameter vector partitioned as
//!
//! | block | entries | meaning |
//! |-------|---------|---------|
//! | `h_i` | 13 | inertial parameters, see [`InertialParams`] |
//! | `h_l` | 12 | diagonals of the environment stiffness and damping |
//! | `h_w` | 4  | wind coefficients `(f_wx1, f_wx2, f_wy1, f_wy2)` |
//!
//! and the estimate follows the continuous-time laws
//!
//! ```text
//! τ̃ = τ - Y ĥ
//! dĥ/dt = R Yᵀ τ̃
//! dR⁻¹/dt = -η R⁻¹ + YᵀY
//! η = η_min + (1 - η_min) 2^(-round(γ ‖τ̃‖²))
//! ```
//!
//! integrated with forward Euler. The information matrix is advanced first
//! and the parameter step uses the refreshed covariance: with `R(0) = r₀ I`
//! and gravity-sized regressor entries the explicit step gain
//! `dt R YᵀY` starts far above 2 and the first samples would blow up, while
//! the refreshed `R` keeps it below 1. Whenever the information matrix `R⁻¹`
//! stops being positive definite or `R` becomes too ill-conditioned, the
//! covariance is reset to its initial value and the event is counted.

use std::ops::Range;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::inertial_regressor;
use crate::environment::{contact_regressor, wind_regressor, EnvImpedance};
use crate::kinematics::Mat6x8;
use crate::params::{InertialParams, N_INERTIAL};
use crate::{Error, Result, RobotParams, Vec6, Vec8};

/// Number of environment parameters.
pub const N_ENV: usize = 12;
/// Number of wind parameters.
pub const N_WIND: usize = 4;
/// Total number of identified parameters.
pub const N_PARAMS: usize = N_INERTIAL + N_ENV + N_WIND;

pub type ParamVec = SVector<f64, N_PARAMS>;
pub type Regressor = SMatrix<f64, 8, N_PARAMS>;
pub type Covariance = SMatrix<f64, N_PARAMS, N_PARAMS>;
pub type EnvVec = SVector<f64, N_ENV>;

/// Where each parameter block sits in the stacked vector.
pub mod partition {
    use super::*;
    pub const INERTIAL: Range<usize> = 0..N_INERTIAL;
    pub const ENV: Range<usize> = N_INERTIAL..N_INERTIAL + N_ENV;
    pub const WIND: Range<usize> = N_INERTIAL + N_ENV..N_PARAMS;
}

/// Assembles `Y = [Y_i | Jᵀ Y_e | Y_w]`.
///
/// `Y_i` is obtained column by column by evaluating the internal dynamics
/// with unit inertial parameters.
#[allow(clippy::too_many_arguments)]
pub fn build_regressor(
    q: &Vec8,
    qd: &Vec8,
    qdd: &Vec8,
    chi: &Vec6,
    chi_dot: &Vec6,
    jacobian: &Mat6x8,
    params: &RobotParams,
    env: &EnvImpedance,
) -> Regressor {
    let mut y = Regressor::zeros();
    y.fixed_view_mut::<8, N_INERTIAL>(0, partition::INERTIAL.start)
        .copy_from(&inertial_regressor(q, qd, qdd, params));
    y.fixed_view_mut::<8, N_ENV>(0, partition::ENV.start)
        .copy_from(&(jacobian.transpose() * contact_regressor(chi, chi_dot, env)));
    y.fixed_view_mut::<8, N_WIND>(0, partition::WIND.start)
        .copy_from(&wind_regressor(q));
    y
}

/// Stacks `(h_i, h_l, h_w)`.
pub fn stack_parameters(
    inertial: &InertialParams,
    env: &[f64; N_ENV],
    wind: &[f64; N_WIND],
) -> ParamVec {
    let mut h = ParamVec::zeros();
    for (k, v) in inertial.0.iter().chain(env).chain(wind).enumerate() {
        h[k] = *v;
    }
    h
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtrlsConfig {
    /// `η_min`.
    pub min_forgetting: f64,
    /// `γ_g`.
    pub error_gain: f64,
    /// `r₀` in the initial and reset covariance `R = r₀ I`.
    pub initial_covariance: f64,
    /// Covariance reset threshold on the condition number of `R`.
    pub condition_limit: f64,
    /// When set, replaces the adaptive law with this constant (used for
    /// comparisons).
    pub fixed_forgetting: Option<f64>,
}

impl Default for FtrlsConfig {
    fn default() -> Self {
        Self {
            min_forgetting: 0.8,
            error_gain: 5.0,
            initial_covariance: 100.0,
            condition_limit: 1e10,
            fixed_forgetting: None,
        }
    }
}

impl FtrlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_forgetting > 0.0 && self.min_forgetting < 1.0) {
            return Err(Error::InvalidConfig(
                "min_forgetting must lie in (0, 1)".into(),
            ));
        }
        if !(self.error_gain.is_finite() && self.error_gain >= 0.0) {
            return Err(Error::InvalidConfig(
                "error_gain must be nonnegative".into(),
            ));
        }
        if !(self.initial_covariance.is_finite() && self.initial_covariance > 0.0) {
            return Err(Error::InvalidConfig(
                "initial_covariance must be positive".into(),
            ));
        }
        if !(self.condition_limit > 1.0) {
            return Err(Error::InvalidConfig("condition_limit must exceed 1".into()));
        }
        if let Some(f) = self.fixed_forgetting {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::InvalidConfig(
                    "fixed_forgetting must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// `η` for a given prediction error.
    pub fn forgetting(&self, error_norm_sq: f64) -> f64 {
        if let Some(f) = self.fixed_forgetting {
            return f;
        }
        let level = (self.error_gain * error_norm_sq).round();
        // 2^-level underflows to zero long before f64::MAX
        let decay = if level > 1100.0 { 0.0 } else { (-level).exp2() };
        self.min_forgetting + (1.0 - self.min_forgetting) * decay
    }
}

/// Running estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FtrlsState {
    pub config: FtrlsConfig,
    pub estimate: ParamVec,
    /// `R`.
    pub covariance: Covariance,
    /// `R⁻¹`.
    pub information: Covariance,
    /// Most recent `η`.
    pub forgetting: f64,
    /// Number of covariance resets so far.
    pub resets: usize,
}

/// What one update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtrlsStep {
    /// Prediction error `τ̃` before the update.
    pub error: Vec8,
    pub forgetting: f64,
    /// The covariance was reset during this step.
    pub reset: bool,
}

impl FtrlsState {
    pub fn new(initial: ParamVec, config: FtrlsConfig) -> Result<Self> {
        config.validate()?;
        let r0 = config.initial_covariance;
        Ok(Self {
            estimate: initial,
            covariance: Covariance::identity() * r0,
            information: Covariance::identity() / r0,
            forgetting: 1.0,
            resets: 0,
            config,
        })
    }

    /// Advances the estimate by one sample of length `dt`.
    pub fn step(&mut self, y: &Regressor, tau: &Vec8, dt: f64) -> FtrlsStep {
        let error = tau - y * self.estimate;
        let eta = self.config.forgetting(error.norm_squared());
        self.forgetting = eta;

        let mut info = self.information + (y.transpose() * y - self.information * eta) * dt;
        info = (info + info.transpose()) * 0.5;
        let reset = match self.refresh_covariance(&info) {
            Ok(()) => false,
            Err(_) => {
                self.reset_covariance();
                true
            }
        };
        self.estimate += self.covariance * y.transpose() * error * dt;
        FtrlsStep {
            error,
            forgetting: eta,
            reset,
        }
    }

    fn refresh_covariance(&mut self, info: &Covariance) -> Result<()> {
        let eig = info.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::CovarianceBreakdown);
        }
        if hi / lo > self.config.condition_limit {
            return Err(Error::CovarianceBreakdown);
        }
        let chol = info.cholesky().ok_or(Error::CovarianceBreakdown)?;
        self.information = *info;
        self.covariance = chol.inverse();
        Ok(())
    }

    pub fn reset_covariance(&mut self) {
        let r0 = self.config.initial_covariance;
        self.covariance = Covariance::identity() * r0;
        self.information = Covariance::identity() / r0;
        self.resets += 1;
    }

    pub fn environment(&self) -> EnvVec {
        self.estimate
            .fixed_rows::<N_ENV>(partition::ENV.start)
            .into_owned()
    }

    pub fn wind(&self) -> [f64; N_WIND] {
        std::array::from_fn(|k| self.estimate[partition::WIND.start + k])
    }

    pub fn inertial(&self) -> InertialParams {
        InertialParams(std::array::from_fn(|k| self.estimate[k]))
    }

    /// `V = h̃ᵀ R⁻¹ h̃` for a known true parameter vector.
    pub fn lyapunov(&self, truth: &ParamVec) -> f64 {
        let e = truth - self.estimate;
        e.dot(&(self.information * e))
    }
}

/// Estimated contact wrench and its generalized force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceEstimate {
    pub force: Vec6,
    pub generalized: Vec8,
}

/// `F̂_e = Y_e ĥ_l` and `τ̂_l = Jᵀ F̂_e`.
pub fn reconstruct_force(
    state: &FtrlsState,
    chi: &Vec6,
    chi_dot: &Vec6,
    jacobian: &Mat6x8,
    env: &EnvImpedance,
) -> ForceEstimate {
    let force = contact_regressor(chi, chi_dot, env) * state.environment();
    ForceEstimate {
        force,
        generalized: jacobian.transpose() * force,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::dynamics_terms;
    use crate::environment::{contact_force, wind_generalized, WindParams};
    use crate::kinematics::{forward_kinematics, jacobians};

    #[test]
    fn forgetting_is_one_at_zero_error() {
        let c = FtrlsConfig::default();
        assert_eq!(c.forgetting(0.0), 1.0);
        assert_eq!(c.forgetting(0.05), 1.0);
        assert!((c.forgetting(0.2) - 0.9).abs() < 1e-15);
        assert!((c.forgetting(1e9) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn forgetting_non_increasing_in_error() {
        let c = FtrlsConfig::default();
        let mut prev = c.forgetting(0.0);
        for k in 1..2000 {
            let e = c.forgetting(k as f64 * 0.01);
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn null_regressor_only_decays_information() {
        let mut s = FtrlsState::new(ParamVec::repeat(0.3), FtrlsConfig::default()).unwrap();
        let before = s.information;
        let out = s.step(&Regressor::zeros(), &Vec8::zeros(), 1e-3);
        assert_eq!(out.forgetting, 1.0);
        assert_eq!(s.estimate, ParamVec::repeat(0.3));
        assert!((s.information - before * (1.0 - 1e-3)).norm() < 1e-15);
    }

    #[test]
    fn regressor_reproduces_full_generalized_force() {
        let p = RobotParams::default();
        let env = EnvImpedance::default();
        let wind = WindParams::default();
        let q = Vec8::from([0.4, -0.3, 1.2, 0.3, 0.1, -0.2, 0.4, -0.5]);
        let qd = Vec8::from([0.2, -0.1, 0.05, 0.3, -0.2, 0.1, 0.6, -0.4]);
        let qdd = Vec8::from([1.0, -0.5, 0.3, 0.2, -1.0, 0.7, 2.0, -3.0]);
        let jac = jacobians(&q, &p).unwrap().analytic().unwrap();
        let chi = forward_kinematics(&q, &p).unwrap().to_vector();
        let chi_dot = jac * qd;
        let y = build_regressor(&q, &qd, &qdd, &chi, &chi_dot, &jac, &p, &env);
        let h = stack_parameters(&p.inertial(), &env.parameters(), &wind.coefficients());
        let direct = dynamics_terms(&q, &qd, &p).internal_force(&qd, &qdd)
            + jac.transpose() * contact_force(&chi, &chi_dot, &env)
            + wind_generalized(&q, &wind);
        assert!((y * h - direct).norm() < 1e-9);
    }

    #[test]
    fn reconstruct_with_true_parameters_matches_contact_model() {
        let p = RobotParams::default();
        let env = EnvImpedance::default();
        let q = Vec8::from([0.1, 0.2, 1.0, 0.1, 0.05, -0.05, 0.2, 0.1]);
        let jac = jacobians(&q, &p).unwrap().analytic().unwrap();
        let chi = forward_kinematics(&q, &p).unwrap().to_vector();
        let chi_dot = Vec6::from([0.1, -0.2, 0.3, 0.0, 0.1, -0.1]);
        let h = stack_parameters(&p.inertial(), &env.parameters(), &[0.0; 4]);
        let s = FtrlsState::new(h, FtrlsConfig::default()).unwrap();
        let est = reconstruct_force(&s, &chi, &chi_dot, &jac, &env);
        assert!((est.force - contact_force(&chi, &chi_dot, &env)).norm() < 1e-15);
        let zero = FtrlsState::new(ParamVec::zeros(), FtrlsConfig::default()).unwrap();
        assert_eq!(
            reconstruct_force(&zero, &chi, &chi_dot, &jac, &env).force,
            Vec6::zeros()
        );
    }

    #[test]
    fn covariance_reset_on_ill_conditioning() {
        let cfg = FtrlsConfig {
            condition_limit: 10.0,
            ..Default::default()
        };
        let mut s = FtrlsState::new(ParamVec::zeros(), cfg).unwrap();
        let mut y = Regressor::zeros();
        y[(0, 0)] = 1e3;
        let out = s.step(&y, &Vec8::zeros(), 1e-3);
        assert!(out.reset);
        assert_eq!(s.resets, 1);
        assert_eq!(s.covariance, Covariance::identity() * 100.0);
    }
}
