//! Physical parameters of the vehicle and arm.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Masses, inertias, geometry and rotor coefficients.
///
/// Defaults are the Asctec-Pelican-sized platform with the 200 g arm. The
/// arm links are modelled as uniform thin rods; see [`InertialParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    pub mass_kg: f64,
    /// Mount link (rigidly attached below the body).
    pub link0_mass_kg: f64,
    pub link1_mass_kg: f64,
    pub link2_mass_kg: f64,
    pub inertia_x_kgm2: f64,
    pub inertia_y_kgm2: f64,
    pub inertia_z_kgm2: f64,
    /// Rotor inertia. Recorded only; gyroscopic torque is not modelled.
    pub rotor_inertia_kgm2: f64,
    pub link0_length_m: f64,
    pub link1_length_m: f64,
    pub link2_length_m: f64,
    /// Distance from the body centre to each rotor.
    pub arm_length_m: f64,
    pub thrust_coeff: [f64; 4],
    pub drag_coeff: [f64; 4],
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass_kg: 1.0,
            link0_mass_kg: 30e-3,
            link1_mass_kg: 55e-3,
            link2_mass_kg: 112e-3,
            inertia_x_kgm2: 13.2e-3,
            inertia_y_kgm2: 12.5e-3,
            inertia_z_kgm2: 23.5e-3,
            rotor_inertia_kgm2: 33.2e-6,
            link0_length_m: 30e-3,
            link1_length_m: 70e-3,
            link2_length_m: 85e-3,
            arm_length_m: 223e-3,
            thrust_coeff: [1.6e-5, 1.2e-5, 1.7e-5, 1.5e-5],
            drag_coeff: [3.9e-7, 2.8e-7, 4.4e-7, 3.1e-7],
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("mass_kg", self.mass_kg),
            ("link0_mass_kg", self.link0_mass_kg),
            ("link1_mass_kg", self.link1_mass_kg),
            ("link2_mass_kg", self.link2_mass_kg),
            ("inertia_x_kgm2", self.inertia_x_kgm2),
            ("inertia_y_kgm2", self.inertia_y_kgm2),
            ("inertia_z_kgm2", self.inertia_z_kgm2),
            ("rotor_inertia_kgm2", self.rotor_inertia_kgm2),
            ("link0_length_m", self.link0_length_m),
            ("link1_length_m", self.link1_length_m),
            ("link2_length_m", self.link2_length_m),
            ("arm_length_m", self.arm_length_m),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (j, (&kf, &km)) in self.thrust_coeff.iter().zip(&self.drag_coeff).enumerate() {
            if !(kf.is_finite() && kf > 0.0 && km.is_finite() && km > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "rotor {} coefficients must be positive",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_kg + self.link0_mass_kg + self.link1_mass_kg + self.link2_mass_kg
    }

    /// Drag-to-thrust ratio `Km/Kf` of each rotor.
    pub fn drag_ratio(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.drag_coeff[j] / self.thrust_coeff[j])
    }

    /// Total distance from the body origin to the end-effector with the arm
    /// extended.
    pub fn reach(&self) -> f64 {
        self.link0_length_m + self.link1_length_m + self.link2_length_m
    }

    pub fn inertial(&self) -> InertialParams {
        InertialParams::from_robot(self)
    }
}

/// Number of entries in [`InertialParams`].
pub const N_INERTIAL: usize = 13;

/// The parameters the equations of motion are linear in.
///
/// Each arm link `k` (a rod hinged at one end) contributes its mass, its
/// first moment about the hinge `m_k c_k` and its moment of inertia about any
/// axis through the hinge perpendicular to the rod. The body contributes its
/// mass and principal inertias. Ordering:
///
/// `[m, Ix, Iy, Iz, m0, s0, j0, m1, s1, j1, m2, s2, j2]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams(pub [f64; N_INERTIAL]);

impl InertialParams {
    pub const NAMES: [&'static str; N_INERTIAL] = [
        "m", "Ix", "Iy", "Iz", "m0", "s0", "j0", "m1", "s1", "j1", "m2", "s2", "j2",
    ];

    pub fn from_robot(p: &RobotParams) -> Self {
        let rod = |m: f64, l: f64| [m, m * l / 2.0, m * l * l / 3.0];
        let [m0, s0, j0] = rod(p.link0_mass_kg, p.link0_length_m);
        let [m1, s1, j1] = rod(p.link1_mass_kg, p.link1_length_m);
        let [m2, s2, j2] = rod(p.link2_mass_kg, p.link2_length_m);
        Self([
            p.mass_kg,
            p.inertia_x_kgm2,
            p.inertia_y_kgm2,
            p.inertia_z_kgm2,
            m0,
            s0,
            j0,
            m1,
            s1,
            j1,
            m2,
            s2,
            j2,
        ])
    }

    /// The `k`-th unit basis vector.
    pub fn unit(k: usize) -> Self {
        let mut v = [0.0; N_INERTIAL];
        v[k] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
