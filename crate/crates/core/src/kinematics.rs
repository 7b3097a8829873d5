//! Rotations, forward kinematics and Jacobians of the quadrotor/arm chain.
//!
//! Frames: the world frame has `z` up. The body frame sits at the vehicle's
//! centre of mass. The arm hangs below the body:
//!
//! | joint | axis (body frame, at `q = 0`) | offset before joint | link after joint |
//! |-------|-------------------------------|---------------------|------------------|
//! | 1     | `x_b`                         | `L0` along `-z_b`   | `L1` along `-z`  |
//! | 2     | `y_b` (rotated by joint 1)    | —                   | `L2` along `-z`  |
//!
//! so the end-effector frame relative to the body is `Rx(θ1)·Ry(θ2)` and the
//! arm points straight down at `q = 0`. Euler angles are ZYX
//! `(yaw, pitch, roll)` throughout.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::{coord, Error, Mat3, Mat6, Result, RobotParams, Vec3, Vec6, Vec8};

pub type Mat6x2 = SMatrix<f64, 6, 2>;
pub type Mat6x4 = SMatrix<f64, 6, 4>;
pub type Mat6x8 = SMatrix<f64, 6, 8>;

/// Operations that invert an Euler-rate matrix refuse pitch angles closer
/// than this to ±π/2 [rad].
pub const GIMBAL_MARGIN: f64 = 0.05;

/// ZYX yaw-pitch-roll angles [rad].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerZYX {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerZYX {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn from_vector(v: &Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vec3 {
        Vec3::new(self.yaw, self.pitch, self.roll)
    }

    /// Body attitude stored in `q[3..6]`.
    pub fn of_body(q: &Vec8) -> Self {
        Self::new(q[coord::YAW], q[coord::PITCH], q[coord::ROLL])
    }

    pub fn check_gimbal(&self) -> Result<()> {
        if self.pitch.abs() > std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN {
            Err(Error::GimbalSingularity {
                pitch: self.pitch,
                margin: GIMBAL_MARGIN,
            })
        } else {
            Ok(())
        }
    }
}

/// Skew-symmetric matrix with `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Body-to-world rotation `Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn rotation_from_euler(e: EulerZYX) -> Mat3 {
    let (sps, cps) = e.yaw.sin_cos();
    let (sth, cth) = e.pitch.sin_cos();
    let (sph, cph) = e.roll.sin_cos();
    Matrix3::new(
        cps * cth,
        sph * sth * cps - sps * cph,
        sps * sph + cps * sth * cph,
        sps * cth,
        cps * cph + sps * sth * sph,
        sps * sth * cph - cps * sph,
        -sth,
        cth * sph,
        cth * cph,
    )
}

/// ZYX angles of a rotation matrix, with `|pitch| <= π/2`.
pub fn euler_from_rotation(r: &Mat3) -> Result<EulerZYX> {
    let pitch = (-r[(2, 0)]).atan2((r[(0, 0)].powi(2) + r[(1, 0)].powi(2)).sqrt());
    let e = EulerZYX::new(
        r[(1, 0)].atan2(r[(0, 0)]),
        pitch,
        r[(2, 1)].atan2(r[(2, 2)]),
    );
    e.check_gimbal()?;
    Ok(e)
}

/// Matrix mapping Euler-angle rates to world angular velocity, without the
/// gimbal check. Finite everywhere; only its inverse is singular.
pub fn euler_rate_matrix_unchecked(e: EulerZYX) -> Mat3 {
    let (sps, cps) = e.yaw.sin_cos();
    let (sth, cth) = e.pitch.sin_cos();
    Matrix3::new(0.0, -sps, cps * cth, 0.0, cps, sps * cth, 1.0, 0.0, -sth)
}

/// `ω = T(Φ)·Φ̇`.
pub fn euler_rate_matrix(e: EulerZYX) -> Result<Mat3> {
    e.check_gimbal()?;
    Ok(euler_rate_matrix_unchecked(e))
}

fn block_diag3(a: &Mat3, b: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(b);
    m
}

/// Arm geometry expressed in the body frame.
#[derive(Debug, Clone)]
pub struct ArmPose {
    /// Joint-1 pivot.
    pub joint1: Vec3,
    /// Joint-2 pivot.
    pub joint2: Vec3,
    /// End-effector position.
    pub end_effector: Vec3,
    /// Rotation of link 1 relative to the body, `Rx(θ1)`.
    pub link1_rotation: Mat3,
    /// End-effector orientation relative to the body, `Rx(θ1)·Ry(θ2)`.
    pub end_effector_rotation: Mat3,
    pub axis1: Vec3,
    pub axis2: Vec3,
    /// Body-frame manipulator Jacobian `[ṗ; ω] = J·Θ̇`.
    pub jacobian: Mat6x2,
}

impl ArmPose {
    pub fn new(joint1_angle: f64, joint2_angle: f64, params: &RobotParams) -> Self {
        let down = -Vector3::z();
        let joint1 = down * params.link0_length_m;
        let r1 = rot_x(joint1_angle);
        let joint2 = joint1 + r1 * down * params.link1_length_m;
        let re = r1 * rot_y(joint2_angle);
        let end_effector = joint2 + re * down * params.link2_length_m;
        let axis1 = Vector3::x();
        let axis2 = r1 * Vector3::y();

        let mut jacobian = Mat6x2::zeros();
        jacobian
            .fixed_view_mut::<3, 1>(0, 0)
            .copy_from(&axis1.cross(&(end_effector - joint1)));
        jacobian.fixed_view_mut::<3, 1>(3, 0).copy_from(&axis1);
        jacobian
            .fixed_view_mut::<3, 1>(0, 1)
            .copy_from(&axis2.cross(&(end_effector - joint2)));
        jacobian.fixed_view_mut::<3, 1>(3, 1).copy_from(&axis2);

        Self {
            joint1,
            joint2,
            end_effector,
            link1_rotation: r1,
            end_effector_rotation: re,
            axis1,
            axis2,
            jacobian,
        }
    }

    pub fn of_state(q: &Vec8, params: &RobotParams) -> Self {
        Self::new(q[coord::JOINT1], q[coord::JOINT2], params)
    }
}

/// End-effector pose `χ_e = (p_e, Φ_e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskPose {
    pub position: Vec3,
    pub orientation: EulerZYX,
}

impl TaskPose {
    pub fn to_vector(&self) -> Vec6 {
        let o = self.orientation.to_vector();
        Vec6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            o.x,
            o.y,
            o.z,
        )
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into_owned(),
            orientation: EulerZYX::from_vector(&v.fixed_rows::<3>(3).into_owned()),
        }
    }
}

pub fn body_position(q: &Vec8) -> Vec3 {
    q.fixed_rows::<3>(0).into_owned()
}

/// End-effector world position and rotation.
pub fn end_effector_frame(q: &Vec8, params: &RobotParams) -> (Vec3, Mat3) {
    let rb = rotation_from_euler(EulerZYX::of_body(q));
    let arm = ArmPose::of_state(q, params);
    (
        body_position(q) + rb * arm.end_effector,
        rb * arm.end_effector_rotation,
    )
}

pub fn forward_kinematics(q: &Vec8, params: &RobotParams) -> Result<TaskPose> {
    let (position, re) = end_effector_frame(q, params);
    Ok(TaskPose {
        position,
        orientation: euler_from_rotation(&re)?,
    })
}

/// The Jacobians of the chain at one configuration.
#[derive(Debug, Clone)]
pub struct JacobianSet {
    /// Manipulator Jacobian in the body frame.
    pub manipulator_body: Mat6x2,
    /// `[[I, -Skew(R_b p_eb)], [0, I]]`.
    pub body: Mat6,
    /// Manipulator Jacobian rotated into the world frame.
    pub manipulator: Mat6x2,
    /// First four columns of `J_b Q_b` (x, y, z, yaw).
    pub eta: Mat6x4,
    /// Last two columns of `J_b Q_b` (pitch, roll).
    pub sigma: Mat6x2,
    /// `[J_eta | J_eb]`, acting on `(x, y, z, yaw, θ1, θ2)` rates.
    pub zeta: Mat6,
    pub body_euler_map: Mat6,
    /// `diag(I, T(Φ_e))`.
    pub task_euler_map: Mat6,
    pub euler_rate: Mat3,
    pub task_pose: TaskPose,
}

impl JacobianSet {
    /// Maps `q̇` to world twist `v_e = [ṗ_e; ω_e]`.
    pub fn geometric(&self) -> Mat6x8 {
        let mut j = Mat6x8::zeros();
        j.fixed_view_mut::<6, 6>(0, 0)
            .copy_from(&(self.body * self.body_euler_map));
        j.fixed_view_mut::<6, 2>(0, 6).copy_from(&self.manipulator);
        j
    }

    /// Maps `q̇` to `χ̇_e`; the `J` of the contact model.
    pub fn analytic(&self) -> Result<Mat6x8> {
        let inv = invert_euler_map(&self.task_euler_map, self.task_pose.orientation)?;
        Ok(inv * self.geometric())
    }
}

pub(crate) fn invert_euler_map(map: &Mat6, e: EulerZYX) -> Result<Mat6> {
    e.check_gimbal()?;
    let t_inv = map
        .fixed_view::<3, 3>(3, 3)
        .into_owned()
        .try_inverse()
        .ok_or(Error::GimbalSingularity {
            pitch: e.pitch,
            margin: GIMBAL_MARGIN,
        })?;
    Ok(block_diag3(&Mat3::identity(), &t_inv))
}

pub fn jacobians(q: &Vec8, params: &RobotParams) -> Result<JacobianSet> {
    let body_euler = EulerZYX::of_body(q);
    let rb = rotation_from_euler(body_euler);
    let arm = ArmPose::of_state(q, params);

    let mut body = Mat6::identity();
    body.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-skew(&(rb * arm.end_effector))));
    let manipulator = block_diag3(&rb, &rb) * arm.jacobian;

    let euler_rate = euler_rate_matrix_unchecked(body_euler);
    let body_euler_map = block_diag3(&Mat3::identity(), &euler_rate);
    let jbq = body * body_euler_map;

    let mut zeta = Mat6::zeros();
    zeta.fixed_view_mut::<6, 4>(0, 0)
        .copy_from(&jbq.fixed_view::<6, 4>(0, 0));
    zeta.fixed_view_mut::<6, 2>(0, 4).copy_from(&manipulator);

    let task_pose = TaskPose {
        position: body_position(q) + rb * arm.end_effector,
        orientation: euler_from_rotation(&(rb * arm.end_effector_rotation))?,
    };
    let task_euler_map = block_diag3(
        &Mat3::identity(),
        &euler_rate_matrix_unchecked(task_pose.orientation),
    );

    Ok(JacobianSet {
        manipulator_body: arm.jacobian,
        body,
        manipulator,
        eta: jbq.fixed_view::<6, 4>(0, 0).into_owned(),
        sigma: jbq.fixed_view::<6, 2>(0, 4).into_owned(),
        zeta,
        body_euler_map,
        task_euler_map,
        euler_rate,
        task_pose,
    })
}

/// `ζ̇` extracted from `q̇`.
pub fn zeta_of(v: &Vec8) -> Vec6 {
    Vec6::from_fn(|i, _| v[coord::ZETA[i]])
}

pub fn sigma_of(v: &Vec8) -> crate::Vec2 {
    crate::Vec2::new(v[coord::PITCH], v[coord::ROLL])
}

/// `χ̇_e = Q_e⁻¹ (J_ζ ζ̇ + J_σ σ̇_b)`.
pub fn task_rates(q: &Vec8, qd: &Vec8, params: &RobotParams) -> Result<Vec6> {
    let jac = jacobians(q, params)?;
    task_rates_with(&jac, qd)
}

pub fn task_rates_with(jac: &JacobianSet, qd: &Vec8) -> Result<Vec6> {
    let twist = jac.zeta * zeta_of(qd) + jac.sigma * sigma_of(qd);
    Ok(invert_euler_map(&jac.task_euler_map, jac.task_pose.orientation)? * twist)
}
