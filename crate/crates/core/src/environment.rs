//! Environment interaction: a bilateral spring/damper at the end-effector and
//! an altitude-dependent horizontal wind force.
//!
//! Both enter the equations of motion on the left-hand side,
//! `M q̈ + C q̇ + G + τ_w + τ_l = B u`. Each is linear in a small set of
//! parameters, and the matching regressors used by the estimator live here
//! next to the force models they must reproduce.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::kinematics::Mat6x8;
use crate::{Error, Result, Vec6, Vec8};

pub type Mat6x12 = SMatrix<f64, 6, 12>;
pub type Mat8x4 = SMatrix<f64, 8, 4>;

/// Diagonal stiffness/damping of the environment seen by the end-effector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvImpedance {
    /// Diagonal of `S_c` (N/m for positions, N·m/rad for angles).
    pub stiffness: [f64; 6],
    /// Diagonal of `D_c` (N·s/m, N·m·s/rad).
    pub damping: [f64; 6],
    /// Task pose at which the spring is relaxed. The default anchors the
    /// environment at the task-space origin.
    pub rest_pose: [f64; 6],
}

impl Default for EnvImpedance {
    fn default() -> Self {
        Self {
            stiffness: [0.1; 6],
            damping: [0.01; 6],
            rest_pose: [0.0; 6],
        }
    }
}

impl EnvImpedance {
    pub fn validate(&self) -> Result<()> {
        for (name, vals) in [("stiffness", &self.stiffness), ("damping", &self.damping)] {
            if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "environment {name} must be nonnegative"
                )));
            }
        }
        if self.rest_pose.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "environment rest pose must be finite".into(),
            ));
        }
        Ok(())
    }

    /// `(S_c diag, D_c diag)` stacked: the true value of the estimator's
    /// environment parameters.
    pub fn parameters(&self) -> [f64; 12] {
        std::array::from_fn(|k| {
            if k < 6 {
                self.stiffness[k]
            } else {
                self.damping[k - 6]
            }
        })
    }

    /// Spring deflection `χ_e - χ_e0`.
    pub fn deflection(&self, chi: &Vec6) -> Vec6 {
        chi - Vec6::from(self.rest_pose)
    }
}

/// `F_e = S_c (χ_e - χ_e0) + D_c χ̇_e`.
pub fn contact_force(chi: &Vec6, chi_dot: &Vec6, env: &EnvImpedance) -> Vec6 {
    env.deflection(chi)
        .component_mul(&Vec6::from(env.stiffness))
        + chi_dot.component_mul(&Vec6::from(env.damping))
}

/// `τ_l = Jᵀ F_e` with `J` the analytic task Jacobian (`q̇ ↦ χ̇_e`).
pub fn contact_generalized(force: &Vec6, jacobian: &Mat6x8) -> Vec8 {
    jacobian.transpose() * force
}

/// `Y_e = [diag(χ_e - χ_e0) | diag(χ̇_e)]`, so that `F_e = Y_e h_l`.
pub fn contact_regressor(chi: &Vec6, chi_dot: &Vec6, env: &EnvImpedance) -> Mat6x12 {
    let d = env.deflection(chi);
    let mut y = Mat6x12::zeros();
    for i in 0..6 {
        y[(i, i)] = d[i];
        y[(i, 6 + i)] = chi_dot[i];
    }
    y
}

/// Wind described by its speed at a reference height, growing linearly with
/// altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindParams {
    /// Wind speed at the reference height.
    pub reference_speed_mps: f64,
    pub reference_height_m: f64,
    /// Direction the wind blows towards, measured from world `x`.
    pub direction_rad: f64,
    /// Effective area exposed when the body is tilted.
    pub area_tilt_m2: f64,
    /// Effective area exposed when level.
    pub area_level_m2: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            reference_speed_mps: 3.0,
            reference_height_m: 1.0,
            direction_rad: std::f64::consts::FRAC_PI_4,
            area_tilt_m2: 0.16,
            area_level_m2: 0.032,
        }
    }
}

/// Dynamic-pressure constant converting squared wind speed into pressure.
pub const PRESSURE_COEFF: f64 = 0.61;

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_height_m.is_finite() && self.reference_height_m > 0.0) {
            return Err(Error::InvalidConfig(
                "wind reference height must be positive".into(),
            ));
        }
        if !(self.area_tilt_m2 >= 0.0 && self.area_level_m2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "wind areas must be nonnegative".into(),
            ));
        }
        if !(self.reference_speed_mps.is_finite() && self.direction_rad.is_finite()) {
            return Err(Error::InvalidConfig(
                "wind speed and direction must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Wind speed at altitude `z`.
    pub fn speed_at(&self, z: f64) -> f64 {
        self.reference_speed_mps * z / self.reference_height_m
    }

    /// `(f_wx1, f_wx2, f_wy1, f_wy2)`: the wind parameters the estimator
    /// identifies.
    pub fn coefficients(&self) -> [f64; 4] {
        let gradient = self.reference_speed_mps / self.reference_height_m;
        let base = PRESSURE_COEFF * gradient * gradient;
        let (s, c) = self.direction_rad.sin_cos();
        [
            base * self.area_tilt_m2 * c,
            base * self.area_level_m2 * c,
            base * self.area_tilt_m2 * s,
            base * self.area_level_m2 * s,
        ]
    }
}

/// Horizontal wind force `(F_wx, F_wy)` at altitude `z` with body pitch
/// `θ` and roll `φ`.
pub fn wind_force(z: f64, pitch: f64, roll: f64, wind: &WindParams) -> (f64, f64) {
    let [fx1, fx2, fy1, fy2] = wind.coefficients();
    let z2 = z * z;
    (
        fx1 * z2 * pitch.sin() + fx2 * z2 * pitch.cos(),
        fy1 * z2 * roll.sin() + fy2 * z2 * roll.cos(),
    )
}

/// `τ_w = (F_wx, F_wy, 0, …, 0)`: only the horizontal force is modelled.
pub fn wind_generalized(q: &Vec8, wind: &WindParams) -> Vec8 {
    let (fx, fy) = wind_force(q[2], q[4], q[5], wind);
    let mut tau = Vec8::zeros();
    tau[0] = fx;
    tau[1] = fy;
    tau
}

/// `Y_w` with `τ_w = Y_w h_w`, `h_w = (f_wx1, f_wx2, f_wy1, f_wy2)`.
pub fn wind_regressor(q: &Vec8) -> Mat8x4 {
    let z2 = q[2] * q[2];
    let mut y = Mat8x4::zeros();
    y[(0, 0)] = z2 * q[4].sin();
    y[(0, 1)] = z2 * q[4].cos();
    y[(1, 2)] = z2 * q[5].sin();
    y[(1, 3)] = z2 * q[5].cos();
    y
}
