//! The outer loop: task-space impedance, mapping to quadrotor/joint
//! accelerations, attitude-setpoint extraction, attitude PD and control
//! allocation.
//!
//! The impedance law asks the end-effector to behave like a mass-spring-
//! damper around the reference while pushing back the estimated contact
//! force:
//!
//! ```text
//! χ̈^des = χ̈_r + S_cd (χ_r - χ_e) + D_cd (χ̇_r - χ̇_e) - F̂_e
//! ```
//!
//! With the inner loop making every coordinate a double integrator, the task
//! error obeys `ë + D_cd ė + S_cd e = 0`, so the error dynamics are set by
//! the two diagonal gain matrices alone ([`error_dynamics_check`]).

use nalgebra::{Complex, SMatrix};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuatorInput, MAX_JOINT_TORQUE, MAX_THRUST};
use crate::kinematics::{invert_euler_map, jacobians, sigma_of, zeta_of, JacobianSet, Mat6x2};
use crate::{Error, Mat6, Result, RobotParams, Vec2, Vec6, Vec8};

/// Smallest singular value of `J_ζ` below which the damped inverse is used.
pub const SINGULAR_THRESHOLD: f64 = 1e-3;
/// Damping of the damped least-squares inverse.
pub const DLS_DAMPING: f64 = 1e-2;

/// Desired task-space stiffness and damping (diagonals, task order
/// `(x, y, z, yaw, pitch, roll)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceParams {
    pub stiffness: [f64; 6],
    pub damping: [f64; 6],
    pub sigma_feedforward: SigmaFeedforward,
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        Self {
            stiffness: [20.0, 20.0, 30.0, 50.0, 100.0, 500.0],
            damping: [15.0, 15.0, 25.0, 100.0, 100.0, 100.0],
            sigma_feedforward: SigmaFeedforward::None,
        }
    }
}

/// The attitude acceleration `σ̈_b` that [`task_to_joint`] compensates for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaFeedforward {
    /// None: the attitude motion reaches the end-effector only through the
    /// feedback terms.
    #[default]
    None,
    /// The previous period's `σ̈^des`. Through the horizontal channels this
    /// closes a one-period loop `σ̈^des → ẍ^des → σ_r → σ̈^des` of gain about
    /// `l K_p / g` (arm offset `l`), and through the joints it drives the
    /// pitch/joint-2 and roll/joint-1 modes; the linearized closed loop with
    /// contact is unstable for every attitude and observer tuning tried.
    PreviousCommand,
}

impl ImpedanceParams {
    pub fn validate(&self) -> Result<()> {
        if self
            .stiffness
            .iter()
            .chain(&self.damping)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidConfig(
                "impedance gains must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Reference pose, rate and acceleration of the end-effector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskReference {
    pub pose: Vec6,
    pub rate: Vec6,
    pub accel: Vec6,
}

/// `χ̈^des = χ̈_r + S_cd (χ_r - χ_e) + D_cd (χ̇_r - χ̇_e) - F̂_e`.
pub fn impedance_accel(
    reference: &TaskReference,
    chi: &Vec6,
    chi_dot: &Vec6,
    force_estimate: &Vec6,
    params: &ImpedanceParams,
) -> Vec6 {
    reference.accel
        + (reference.pose - chi).component_mul(&Vec6::from(params.stiffness))
        + (reference.rate - chi_dot).component_mul(&Vec6::from(params.damping))
        - force_estimate
}

/// Time derivatives of the Jacobians along the current motion.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianRates {
    pub zeta: Mat6,
    pub sigma: Mat6x2,
    /// Derivative of `Q_e = diag(I, T(Φ_e))`.
    pub task_euler_map: Mat6,
}

/// Central differences of the Jacobians along `q̇`:
/// `J̇ ≈ (J(q + h q̇) - J(q - h q̇)) / 2h`.
pub fn jacobian_rates(
    q: &Vec8,
    qd: &Vec8,
    params: &RobotParams,
    step: f64,
) -> Result<JacobianRates> {
    let a = jacobians(&(q + qd * step), params)?;
    let b = jacobians(&(q - qd * step), params)?;
    let s = 0.5 / step;
    Ok(JacobianRates {
        zeta: (a.zeta - b.zeta) * s,
        sigma: (a.sigma - b.sigma) * s,
        task_euler_map: (a.task_euler_map - b.task_euler_map) * s,
    })
}

/// Desired `ζ̈` and whether the damped inverse was needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAccel {
    pub zeta: Vec6,
    pub damped: bool,
}

/// `ζ̈^des = J_ζ⁻¹ (Q_e χ̈^des + Q̇_e χ̇_r - J̇_ζ ζ̇ - J_σ σ̈_b - J̇_σ σ̇_b)`.
///
/// `sigma_accel` is the attitude acceleration expected over this period
/// (see [`SigmaFeedforward`]).
pub fn task_to_joint(
    accel_des: &Vec6,
    reference_rate: &Vec6,
    jac: &JacobianSet,
    rates: &JacobianRates,
    qd: &Vec8,
    sigma_accel: &Vec2,
) -> JointAccel {
    let zd = zeta_of(qd);
    let sd = sigma_of(qd);
    let rhs = jac.task_euler_map * accel_des + rates.task_euler_map * reference_rate
        - rates.zeta * zd
        - jac.sigma * sigma_accel
        - rates.sigma * sd;
    let (inv, damped) = robust_inverse(&jac.zeta);
    JointAccel {
        zeta: inv * rhs,
        damped,
    }
}

/// Plain inverse, or `(JᵀJ + λ²I)⁻¹Jᵀ` when `J` is nearly singular.
pub fn robust_inverse(j: &Mat6) -> (Mat6, bool) {
    let sv = j.singular_values();
    if sv.min() >= SINGULAR_THRESHOLD {
        if let Some(inv) = j.try_inverse() {
            return (inv, false);
        }
    }
    let jt = j.transpose();
    let damped = (jt * j + Mat6::identity() * DLS_DAMPING * DLS_DAMPING)
        .try_inverse()
        .expect("damped normal matrix is positive definite");
    (damped * jt, true)
}

/// PD attitude gains and the setpoint guards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttitudeGains {
    pub kp: [f64; 2],
    pub kd: [f64; 2],
    /// Smallest vertical force for which the setpoint is computed [N].
    pub thrust_guard_n: f64,
    /// Pitch/roll setpoint clamp [rad].
    pub tilt_limit_rad: f64,
}

impl Default for AttitudeGains {
    /// Poles at about −5.3 and −39.7 rad/s, tuned together with
    /// [`DobGains::default`](crate::dob::DobGains::default). See
    /// [`AttitudeGains::reference`].
    fn default() -> Self {
        Self {
            kp: [210.0, 210.0],
            kd: [45.0, 45.0],
            thrust_guard_n: 1.0,
            tilt_limit_rad: 0.5,
        }
    }
}

impl AttitudeGains {
    /// `K_p = K_d = 20`: the reference gains. The resulting attitude loop
    /// `s² + 20 s + 20` has a pole at about -1.06 rad/s, slower than the
    /// horizontal impedance it has to realize, and the closed horizontal
    /// loop is unstable with them: in the default scenario the `x`/`y`
    /// error oscillates with growing amplitude and reaches about 1 m within
    /// 9 s.
    pub fn reference() -> Self {
        Self {
            kp: [20.0, 20.0],
            kd: [20.0, 20.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .kp
            .iter()
            .chain(&self.kd)
            .chain([&self.thrust_guard_n, &self.tilt_limit_rad]);
        if all.into_iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(
                "attitude gains and guards must be positive".into(),
            ));
        }
        if self.tilt_limit_rad >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidConfig(
                "tilt limit must stay below π/2".into(),
            ));
        }
        Ok(())
    }
}

/// Pitch and roll that point the thrust along the demanded horizontal
/// force:
///
/// ```text
/// (θ_r, φ_r) = (1/τ_z) [[cos ψ, sin ψ], [sin ψ, -cos ψ]] (τ_x, τ_y)
/// ```
///
/// clamped to `±tilt_limit_rad`. Fails when `|τ_z|` is at or below the
/// guard; the caller should hold the previous setpoint.
pub fn attitude_setpoint(tau_zeta: &Vec6, yaw: f64, gains: &AttitudeGains) -> Result<Vec2> {
    let fz = tau_zeta[2];
    if !(fz.abs() > gains.thrust_guard_n) {
        return Err(Error::VerticalThrustTooSmall(fz));
    }
    let (s, c) = yaw.sin_cos();
    let (fx, fy) = (tau_zeta[0], tau_zeta[1]);
    let lim = gains.tilt_limit_rad;
    Ok(Vec2::new(
        ((c * fx + s * fy) / fz).clamp(-lim, lim),
        ((s * fx - c * fy) / fz).clamp(-lim, lim),
    ))
}

/// `σ̈^des = K_p (σ_r - σ) - K_d σ̇`.
pub fn attitude_pd(
    setpoint: &Vec2,
    sigma: &Vec2,
    sigma_rate: &Vec2,
    gains: &AttitudeGains,
) -> Vec2 {
    (setpoint - sigma).component_mul(&Vec2::from(gains.kp))
        - sigma_rate.component_mul(&Vec2::from(gains.kd))
}

/// Actuator command before and after saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub raw: ActuatorInput,
    pub applied: ActuatorInput,
    pub saturated: bool,
}

/// Solves `B6 u = (τ_z, τ_ψ, τ_θ, τ_φ, τ_θ1, τ_θ2)` and clamps `u` to the
/// actuator limits.
pub fn allocate(tau_zeta: &Vec6, tau_sigma: &Vec2, b6: &Mat6) -> Result<Allocation> {
    let wrench = allocation_wrench(tau_zeta, tau_sigma);
    let lu = b6.lu();
    if !lu.is_invertible() {
        return Err(Error::AllocationSingular);
    }
    let u = lu.solve(&wrench).ok_or(Error::AllocationSingular)?;
    let raw = ActuatorInput(u);
    let (applied, saturated) = raw.saturate();
    Ok(Allocation {
        raw,
        applied,
        saturated,
    })
}

/// The generalized forces allocation must produce, in `B6` row order.
pub fn allocation_wrench(tau_zeta: &Vec6, tau_sigma: &Vec2) -> Vec6 {
    Vec6::from([
        tau_zeta[2],
        tau_zeta[3],
        tau_sigma[0],
        tau_sigma[1],
        tau_zeta[4],
        tau_zeta[5],
    ])
}

/// Actuator limits as `(lower, upper)` per input.
pub fn actuator_limits() -> [(f64, f64); 6] {
    let [t1, t2] = MAX_JOINT_TORQUE;
    [
        (0.0, MAX_THRUST),
        (0.0, MAX_THRUST),
        (0.0, MAX_THRUST),
        (0.0, MAX_THRUST),
        (-t1, t1),
        (-t2, t2),
    ]
}

/// Eigen-analysis of the task error dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Largest real part: the decay rate of the slowest mode.
    pub slowest_real: f64,
}

/// Builds `A_e = [[0, I], [-S_cd, -D_cd]]` and checks it is Hurwitz.
pub fn error_dynamics_check(params: &ImpedanceParams) -> Result<SpectralReport> {
    let mut a = SMatrix::<f64, 12, 12>::zeros();
    for i in 0..6 {
        a[(i, 6 + i)] = 1.0;
        a[(6 + i, i)] = -params.stiffness[i];
        a[(6 + i, 6 + i)] = -params.damping[i];
    }
    let eigenvalues: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    let slowest_real = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(slowest_real < 0.0) {
        return Err(Error::UnstableImpedanceConfig(slowest_real));
    }
    Ok(SpectralReport {
        eigenvalues,
        slowest_real,
    })
}

/// Task rates from joint rates: `χ̇_e = Q_e⁻¹ J q̇`.
pub fn task_rate(jac: &JacobianSet, qd: &Vec8) -> Result<Vec6> {
    Ok(invert_euler_map(&jac.task_euler_map, jac.task_pose.orientation)? * jac.geometric() * qd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::control_matrices;

    #[test]
    fn impedance_examples() {
        let p = ImpedanceParams::default();
        let r = TaskReference {
            accel: Vec6::from([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            ..Default::default()
        };
        assert_eq!(
            impedance_accel(&r, &Vec6::zeros(), &Vec6::zeros(), &Vec6::zeros(), &p),
            r.accel
        );
        let r = TaskReference::default();
        let chi = Vec6::from([-0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let a = impedance_accel(&r, &chi, &Vec6::zeros(), &Vec6::zeros(), &p);
        assert!((a[0] - 2.0).abs() < 1e-12);
        let f = Vec6::from([0.5, -0.2, 0.1, 0.0, 0.3, 0.0]);
        assert_eq!(
            impedance_accel(&r, &Vec6::zeros(), &Vec6::zeros(), &f, &p),
            -f
        );
    }

    #[test]
    fn static_hover_needs_no_acceleration() {
        let params = RobotParams::default();
        let q = Vec8::zeros();
        let jac = jacobians(&q, &params).unwrap();
        let rates = jacobian_rates(&q, &Vec8::zeros(), &params, 1e-6).unwrap();
        let out = task_to_joint(
            &Vec6::zeros(),
            &Vec6::zeros(),
            &jac,
            &rates,
            &Vec8::zeros(),
            &Vec2::zeros(),
        );
        assert_eq!(out.zeta, Vec6::zeros());
        assert!(!out.damped);
    }

    #[test]
    fn vertical_command_maps_to_z() {
        let params = RobotParams::default();
        let q = Vec8::zeros();
        let jac = jacobians(&q, &params).unwrap();
        let rates = jacobian_rates(&q, &Vec8::zeros(), &params, 1e-6).unwrap();
        let a = Vec6::from([0.0, 0.0, 1.5, 0.0, 0.0, 0.0]);
        let out = task_to_joint(
            &a,
            &Vec6::zeros(),
            &jac,
            &rates,
            &Vec8::zeros(),
            &Vec2::zeros(),
        );
        assert!((out.zeta - Vec6::from([0.0, 0.0, 1.5, 0.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn damped_inverse_near_singularity() {
        let mut j = Mat6::identity();
        j[(5, 5)] = 1e-5;
        let (inv, damped) = robust_inverse(&j);
        assert!(damped);
        assert!(inv.norm().is_finite() && inv[(5, 5)] < 1.0);
    }

    #[test]
    fn attitude_setpoint_examples() {
        let g = AttitudeGains::default();
        let s = attitude_setpoint(&Vec6::from([1.0, 0.0, 10.0, 0.0, 0.0, 0.0]), 0.0, &g).unwrap();
        assert!((s - Vec2::new(0.1, 0.0)).norm() < 1e-15);
        let s = attitude_setpoint(&Vec6::from([0.0, 1.0, 10.0, 0.0, 0.0, 0.0]), 0.0, &g).unwrap();
        assert!((s - Vec2::new(0.0, -0.1)).norm() < 1e-15);
        let s = attitude_setpoint(
            &Vec6::from([1.0, 0.0, 10.0, 0.0, 0.0, 0.0]),
            std::f64::consts::FRAC_PI_2,
            &g,
        )
        .unwrap();
        assert!((s - Vec2::new(0.0, 0.1)).norm() < 1e-15);
        assert!(matches!(
            attitude_setpoint(&Vec6::from([1.0, 0.0, 0.5, 0.0, 0.0, 0.0]), 0.0, &g),
            Err(Error::VerticalThrustTooSmall(_))
        ));
        let s = attitude_setpoint(&Vec6::from([100.0, 0.0, 10.0, 0.0, 0.0, 0.0]), 0.0, &g).unwrap();
        assert_eq!(s[0], 0.5);
    }

    #[test]
    fn attitude_pd_examples() {
        let g = AttitudeGains::reference();
        assert_eq!(
            attitude_pd(&Vec2::zeros(), &Vec2::zeros(), &Vec2::zeros(), &g),
            Vec2::zeros()
        );
        let a = attitude_pd(&Vec2::new(0.1, 0.0), &Vec2::zeros(), &Vec2::zeros(), &g);
        assert!((a[0] - 2.0).abs() < 1e-12);
        let a = attitude_pd(&Vec2::zeros(), &Vec2::zeros(), &Vec2::new(1.0, 0.0), &g);
        assert_eq!(a[0], -20.0);
    }

    #[test]
    fn allocation_examples() {
        let params = RobotParams::default();
        let b6 = control_matrices(&Vec8::zeros(), &params).b6;
        let hover = Vec6::from([
            0.0,
            0.0,
            params.total_mass() * crate::GRAVITY,
            0.0,
            0.0,
            0.0,
        ]);
        let a = allocate(&hover, &Vec2::zeros(), &b6).unwrap();
        assert!((a.raw.0.iter().take(4).sum::<f64>() - 11.74257).abs() < 1e-9);
        assert!(!a.saturated);
        let zero = allocate(&Vec6::zeros(), &Vec2::zeros(), &b6).unwrap();
        assert_eq!(zero.raw.0, Vec6::zeros());
        assert!(matches!(
            allocate(&hover, &Vec2::zeros(), &Mat6::zeros()),
            Err(Error::AllocationSingular)
        ));
    }

    #[test]
    fn error_dynamics_examples() {
        let r = error_dynamics_check(&ImpedanceParams::default()).unwrap();
        // yaw: s² + 100 s + 50
        let expected = (-100.0 + (100.0f64 * 100.0 - 200.0).sqrt()) / 2.0;
        assert!((r.slowest_real - expected).abs() < 1e-9);
        let mut p = ImpedanceParams::default();
        p.stiffness[2] = 0.0;
        assert!(matches!(
            error_dynamics_check(&p),
            Err(Error::UnstableImpedanceConfig(_))
        ));
        let p = ImpedanceParams {
            stiffness: [4.0; 6],
            damping: [5.0; 6],
            ..ImpedanceParams::default()
        };
        let r = error_dynamics_check(&p).unwrap();
        assert!((r.slowest_real + 1.0).abs() < 1e-9);
    }
}
