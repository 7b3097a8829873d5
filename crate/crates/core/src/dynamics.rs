//! Equations of motion `M(q)q̈ + C(q,q̇)q̇ + G(q) + τ_w + τ_l = B(q)u`.
//!
//! The body is a rigid body with diagonal inertia. Each arm link is a
//! uniform thin rod hinged at its upper end (link 0 is rigidly fixed to the
//! body). Kinetic and potential energy are assembled per body from velocity
//! Jacobians, so `M` and `G` come out as sums of per-parameter terms: the
//! model is linear in [`InertialParams`] by construction, which is what the
//! regressor in [`crate::ftrls`] relies on.
//!
//! `C` is built from Christoffel symbols of the first kind, with the partial
//! derivatives of `M` taken by central differences. That keeps `Ṁ - 2C`
//! skew-symmetric regardless of the finite-difference error.

use nalgebra::{SMatrix, Vector3};

use crate::kinematics::{
    euler_rate_matrix_unchecked, rotation_from_euler, skew, ArmPose, EulerZYX, Mat6x8,
};
use crate::params::{InertialParams, N_INERTIAL};
use crate::{coord, Error, Mat3, Mat6, Mat8, Result, RobotParams, Vec3, Vec6, Vec8, GRAVITY};

pub type Mat8x6 = SMatrix<f64, 8, 6>;
pub type Mat3x8 = SMatrix<f64, 3, 8>;
pub type Mat8xI = SMatrix<f64, 8, N_INERTIAL>;

/// Step used for the partial derivatives of the mass matrix.
pub const MASS_DERIVATIVE_STEP: f64 = 1e-6;

/// Maximum thrust of one rotor [N].
pub const MAX_THRUST: f64 = 6.0;
/// Joint servo torque limits [N·m].
pub const MAX_JOINT_TORQUE: [f64; 2] = [0.7, 0.4];

/// Generalized coordinates and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneralizedState {
    pub q: Vec8,
    pub qd: Vec8,
}

impl GeneralizedState {
    pub fn new(q: Vec8, qd: Vec8) -> Self {
        Self { q, qd }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// `(F1, F2, F3, F4, τ_m1, τ_m2)` in N and N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorInput(pub Vec6);

impl ActuatorInput {
    /// Clamps to the rotor and servo limits. Returns whether anything was
    /// clipped.
    pub fn saturate(&self) -> (ActuatorInput, bool) {
        let mut u = self.0;
        for j in 0..4 {
            u[j] = u[j].clamp(0.0, MAX_THRUST);
        }
        for (k, lim) in MAX_JOINT_TORQUE.iter().enumerate() {
            u[4 + k] = u[4 + k].clamp(-lim, *lim);
        }
        (ActuatorInput(u), u != self.0)
    }
}

/// Thrust and drag moment `(F_j, M_j)` of each rotor at speed `ω_j` [rad/s].
pub fn rotor_wrench(omega: [f64; 4], params: &RobotParams) -> Result<[(f64, f64); 4]> {
    let mut out = [(0.0, 0.0); 4];
    for (j, &w) in omega.iter().enumerate() {
        if w < 0.0 {
            return Err(Error::NegativeSpeed(w));
        }
        out[j] = (params.thrust_coeff[j] * w * w, params.drag_coeff[j] * w * w);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ControlMatrices {
    /// Actuator inputs to body-frame forces/torques and joint torques.
    pub n: Mat8x6,
    /// Body-frame to generalized forces.
    pub h: Mat8,
    /// `H·N`.
    pub b: Mat8x6,
    /// Rows `(z, yaw, pitch, roll, θ1, θ2)` of `B`.
    pub b6: Mat6,
}

/// The rotor layout is a plus configuration: rotor 1 on `+x_b`, 2 on `-y_b`,
/// 3 on `-x_b`, 4 on `+y_b`. Rows 4–6 of `N` are the body torques about
/// `z_b`, `y_b`, `x_b` (yaw, pitch, roll order), which the permutation inside
/// `H` reorders before rotating them.
pub fn control_matrices(q: &Vec8, params: &RobotParams) -> ControlMatrices {
    let g = params.drag_ratio();
    let d = params.arm_length_m;
    #[rustfmt::skip]
    let n = Mat8x6::from_row_slice(&[
        0.0,   0.0,   0.0,  0.0,   0.0, 0.0,
        0.0,   0.0,   0.0,  0.0,   0.0, 0.0,
        1.0,   1.0,   1.0,  1.0,   0.0, 0.0,
        g[0], -g[1],  g[2], -g[3], 0.0, 0.0,
        -d,    0.0,   d,    0.0,   0.0, 0.0,
        0.0,  -d,     0.0,  d,     0.0, 0.0,
        0.0,   0.0,   0.0,  0.0,   1.0, 0.0,
        0.0,   0.0,   0.0,  0.0,   0.0, 1.0,
    ]);
    let e = EulerZYX::of_body(q);
    let rb = rotation_from_euler(e);
    let tb = euler_rate_matrix_unchecked(e);
    let reorder = Mat3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    let mut h = Mat8::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&rb);
    h.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(tb.transpose() * rb * reorder));
    h[(6, 6)] = 1.0;
    h[(7, 7)] = 1.0;
    let b = h * n;
    let b6 = b.fixed_view::<6, 6>(2, 0).into_owned();
    ControlMatrices { n, h, b, b6 }
}

/// 2-norm condition number.
pub fn condition_number(m: &Mat6) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Per-parameter mass-matrix and gravity terms at one configuration:
/// `M(q) = Σ h_k mass[k]`, `G(q) = Σ h_k gravity[k]`.
#[derive(Debug, Clone)]
pub struct InertialBasis {
    pub mass: [Mat8; N_INERTIAL],
    pub gravity: [Vec8; N_INERTIAL],
    pub potential_height: [f64; N_INERTIAL],
}

struct Link {
    pivot: Vec3,
    pivot_jacobian: Mat3x8,
    direction: Vec3,
    angular_jacobian: Mat3x8,
}

fn outer(a: &Mat3x8, w: &Mat3, b: &Mat3x8) -> Mat8 {
    a.transpose() * w * b
}

struct Geometry {
    rotation: Mat3,
    position: Vec3,
    body_lin: Mat3x8,
    body_ang: Mat3x8,
    links: [Link; 3],
}

impl Geometry {
    fn at(q: &Vec8, params: &RobotParams) -> Self {
        let e = EulerZYX::of_body(q);
        let rb = rotation_from_euler(e);
        let tb = euler_rate_matrix_unchecked(e);
        let arm = ArmPose::of_state(q, params);
        let pb = Vec3::new(q[0], q[1], q[2]);
        let down = -Vector3::z();

        let mut body_lin = Mat3x8::zeros();
        body_lin
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&Mat3::identity());
        let mut body_ang = Mat3x8::zeros();
        body_ang.fixed_view_mut::<3, 3>(0, 3).copy_from(&tb);

        let point_jacobian = |r_body: &Vec3| {
            let mut j = body_lin;
            j.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(-skew(&(rb * r_body)) * tb));
            j
        };
        let axis1 = rb * arm.axis1;
        let axis2 = rb * arm.axis2;

        let link0 = Link {
            pivot: pb,
            pivot_jacobian: body_lin,
            direction: rb * down,
            angular_jacobian: body_ang,
        };
        let mut ang1 = body_ang;
        ang1.set_column(coord::JOINT1, &axis1);
        let link1 = Link {
            pivot: pb + rb * arm.joint1,
            pivot_jacobian: point_jacobian(&arm.joint1),
            direction: rb * arm.link1_rotation * down,
            angular_jacobian: ang1,
        };
        let mut lin2 = point_jacobian(&arm.joint2);
        lin2.set_column(
            coord::JOINT1,
            &axis1.cross(&(rb * (arm.joint2 - arm.joint1))),
        );
        let mut ang2 = ang1;
        ang2.set_column(coord::JOINT2, &axis2);
        let link2 = Link {
            pivot: pb + rb * arm.joint2,
            pivot_jacobian: lin2,
            direction: rb * arm.end_effector_rotation * down,
            angular_jacobian: ang2,
        };

        Self {
            rotation: rb,
            position: pb,
            body_lin,
            body_ang,
            links: [link0, link1, link2],
        }
    }
}

/// Mass matrix and gravity vector for one parameter set, without building
/// the per-parameter basis.
fn weighted_mass_gravity(q: &Vec8, params: &RobotParams, h: &InertialParams) -> (Mat8, Vec8) {
    let g = Geometry::at(q, params);
    let h = &h.0;
    let inertia =
        g.rotation * Mat3::from_diagonal(&Vec3::new(h[1], h[2], h[3])) * g.rotation.transpose();
    let mut mass =
        g.body_lin.transpose() * g.body_lin * h[0] + outer(&g.body_ang, &inertia, &g.body_ang);
    let mut gravity = g.body_lin.row(2).transpose() * (GRAVITY * h[0]);
    let id = Mat3::identity();
    for (k, link) in g.links.iter().enumerate() {
        let (m, s, j) = (h[4 + 3 * k], h[5 + 3 * k], h[6 + 3 * k]);
        let u = link.direction;
        let su = -skew(&u);
        let mut jac = Mat6x8::zeros();
        jac.fixed_view_mut::<3, 8>(0, 0)
            .copy_from(&link.pivot_jacobian);
        jac.fixed_view_mut::<3, 8>(3, 0)
            .copy_from(&link.angular_jacobian);
        let mut w = Mat6::zeros();
        w.fixed_view_mut::<3, 3>(0, 0).copy_from(&(id * m));
        w.fixed_view_mut::<3, 3>(0, 3).copy_from(&(su * s));
        w.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(su.transpose() * s));
        w.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&((id - u * u.transpose()) * j));
        mass += jac.transpose() * w * jac;
        gravity += (link.pivot_jacobian.row(2) * m + (su * link.angular_jacobian).row(2) * s)
            .transpose()
            * GRAVITY;
    }
    (mass, gravity)
}

impl InertialBasis {
    pub fn at(q: &Vec8, params: &RobotParams) -> Self {
        let Geometry {
            rotation: rb,
            position: pb,
            body_lin,
            body_ang,
            links,
        } = Geometry::at(q, params);
        let [link0, link1, link2] = links;

        let id = Mat3::identity();
        let mut mass = [Mat8::zeros(); N_INERTIAL];
        let mut gravity = [Vec8::zeros(); N_INERTIAL];
        let mut potential_height = [0.0; N_INERTIAL];

        mass[0] = outer(&body_lin, &id, &body_lin);
        gravity[0] = body_lin.row(2).transpose() * GRAVITY;
        potential_height[0] = pb.z;
        for a in 0..3 {
            let r = rb.column(a);
            mass[1 + a] = outer(&body_ang, &(r * r.transpose()), &body_ang);
        }

        for (k, link) in [link0, link1, link2].iter().enumerate() {
            let base = 4 + 3 * k;
            let u = link.direction;
            let su = -skew(&u);
            let lin = &link.pivot_jacobian;
            let ang = &link.angular_jacobian;
            mass[base] = outer(lin, &id, lin);
            let a = outer(lin, &su, ang);
            mass[base + 1] = a + a.transpose();
            mass[base + 2] = outer(ang, &(id - u * u.transpose()), ang);
            gravity[base] = lin.row(2).transpose() * GRAVITY;
            gravity[base + 1] = (su * ang).row(2).transpose() * GRAVITY;
            potential_height[base] = link.pivot.z;
            potential_height[base + 1] = u.z;
        }

        Self {
            mass,
            gravity,
            potential_height,
        }
    }

    pub fn mass_matrix(&self, h: &InertialParams) -> Mat8 {
        self.mass
            .iter()
            .zip(h.0.iter())
            .fold(Mat8::zeros(), |acc, (m, &w)| acc + m * w)
    }

    pub fn gravity(&self, h: &InertialParams) -> Vec8 {
        self.gravity
            .iter()
            .zip(h.0.iter())
            .fold(Vec8::zeros(), |acc, (g, &w)| acc + g * w)
    }

    pub fn potential(&self, h: &InertialParams) -> f64 {
        GRAVITY
            * self
                .potential_height
                .iter()
                .zip(h.0.iter())
                .map(|(z, w)| z * w)
                .sum::<f64>()
    }
}

/// Central-difference partials `∂M_p/∂q_k` of every basis term. Translations
/// are skipped: the inertia of a free-floating system does not depend on
/// where it is.
fn basis_derivatives(q: &Vec8, params: &RobotParams) -> [[Mat8; N_INERTIAL]; 8] {
    let mut out = [[Mat8::zeros(); N_INERTIAL]; 8];
    let h = MASS_DERIVATIVE_STEP;
    for (k, slot) in out.iter_mut().enumerate().skip(3) {
        let mut qp = *q;
        let mut qm = *q;
        qp[k] += h;
        qm[k] -= h;
        let bp = InertialBasis::at(&qp, params);
        let bm = InertialBasis::at(&qm, params);
        for p in 0..N_INERTIAL {
            slot[p] = (bp.mass[p] - bm.mass[p]) / (2.0 * h);
        }
    }
    out
}

/// `C = ½(Σ_k q̇_k ∂_k M + W - Wᵀ)` with column `j` of `W` equal to `∂_j M q̇`.
fn christoffel(dm: &[Mat8; 8], qd: &Vec8) -> Mat8 {
    let mut sum = Mat8::zeros();
    let mut w = Mat8::zeros();
    for k in 0..8 {
        sum += dm[k] * qd[k];
        w.set_column(k, &(dm[k] * qd));
    }
    (sum + w - w.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub mass: Mat8,
    pub coriolis: Mat8,
    pub gravity: Vec8,
}

impl DynamicsTerms {
    /// `τ_int = M q̈ + C q̇ + G`.
    pub fn internal_force(&self, qd: &Vec8, qdd: &Vec8) -> Vec8 {
        self.mass * qdd + self.coriolis * qd + self.gravity
    }
}

pub fn dynamics_terms(q: &Vec8, qd: &Vec8, params: &RobotParams) -> DynamicsTerms {
    dynamics_terms_with(q, qd, params, &params.inertial())
}

/// Dynamics terms for arbitrary inertial parameters on the geometry of
/// `params`.
pub fn dynamics_terms_with(
    q: &Vec8,
    qd: &Vec8,
    params: &RobotParams,
    inertial: &InertialParams,
) -> DynamicsTerms {
    let (mass, gravity) = weighted_mass_gravity(q, params, inertial);
    let step = MASS_DERIVATIVE_STEP;
    let mut dm = [Mat8::zeros(); 8];
    for (k, slot) in dm.iter_mut().enumerate().skip(3) {
        let mut qp = *q;
        let mut qm = *q;
        qp[k] += step;
        qm[k] -= step;
        *slot = (weighted_mass_gravity(&qp, params, inertial).0
            - weighted_mass_gravity(&qm, params, inertial).0)
            / (2.0 * step);
    }
    DynamicsTerms {
        mass,
        coriolis: christoffel(&dm, qd),
        gravity,
    }
}

/// Regressor of the internal dynamics: `τ_int = Y_i(q, q̇, q̈)·h_i`.
pub fn inertial_regressor(q: &Vec8, qd: &Vec8, qdd: &Vec8, params: &RobotParams) -> Mat8xI {
    let basis = InertialBasis::at(q, params);
    let dm = basis_derivatives(q, params);
    let mut y = Mat8xI::zeros();
    for p in 0..N_INERTIAL {
        let dmp: [Mat8; 8] = std::array::from_fn(|k| dm[k][p]);
        let col = basis.mass[p] * qdd + christoffel(&dmp, qd) * qd + basis.gravity[p];
        y.set_column(p, &col);
    }
    y
}

/// Scale factors applied to the true plant (parameter-uncertainty tests).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantScaling {
    /// Multiplies `M` (and, through it, `C`).
    pub inertia: f64,
    /// Multiplies `N`, i.e. actuator effectiveness.
    pub actuation: f64,
}

impl Default for PlantScaling {
    fn default() -> Self {
        Self {
            inertia: 1.0,
            actuation: 1.0,
        }
    }
}

/// `q̈ = M⁻¹(τ - C q̇ - G - τ_w - τ_l)` for a given generalized force `τ`.
pub fn accelerations(
    q: &Vec8,
    qd: &Vec8,
    tau: &Vec8,
    external: &Vec8,
    params: &RobotParams,
    inertia_scale: f64,
) -> Result<Vec8> {
    let terms = dynamics_terms(q, qd, params);
    let rhs = tau - (terms.coriolis * qd) * inertia_scale - terms.gravity - external;
    let chol = (terms.mass * inertia_scale)
        .cholesky()
        .ok_or(Error::SolveFailure)?;
    Ok(chol.solve(&rhs))
}

pub fn forward_dynamics(
    q: &Vec8,
    qd: &Vec8,
    u: &ActuatorInput,
    wind: &Vec8,
    contact: &Vec8,
    params: &RobotParams,
) -> Result<Vec8> {
    let tau = control_matrices(q, params).b * u.0;
    accelerations(q, qd, &tau, &(wind + contact), params, 1.0)
}

/// Kinetic plus potential energy [J].
pub fn total_energy(q: &Vec8, qd: &Vec8, params: &RobotParams) -> f64 {
    let h = params.inertial();
    let basis = InertialBasis::at(q, params);
    0.5 * qd.dot(&(basis.mass_matrix(&h) * qd)) + basis.potential(&h)
}
