//! Fixed-step closed-loop simulation.
//!
//! One control tick (1 kHz by default) runs, in order:
//!
//! 1. measurement: noisy `q` and `q̇`,
//! 2. velocity filtering inside the observer bank,
//! 3. one estimator update and the contact-force reconstruction,
//! 4. the impedance law and its mapping to `ζ̈^des`,
//! 5. the ζ observers, attitude-setpoint extraction, attitude PD and the σ
//!    observers,
//! 6. allocation and saturation,
//!
//! after which the plant is integrated with RK4 over `physics_substeps`
//! sub-steps holding the actuator command constant. The plant uses the true
//! parameters (scaled after the uncertainty step), the controller only ever
//! sees measurements and nominal values.

pub mod measure;
pub mod trajectory;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::config::ScenarioConfig;
pub use measure::{apply_uncertainty, measure};
pub use trajectory::generate_reference;

use crate::dob::{DobBank, LowPass};
use crate::dynamics::{
    accelerations, control_matrices, dynamics_terms, ActuatorInput, GeneralizedState, PlantScaling,
};
use crate::environment::{contact_force, wind_generalized};
use crate::ftrls::{build_regressor, reconstruct_force, stack_parameters, FtrlsState, ParamVec};
use crate::impedance::{
    allocate, attitude_pd, attitude_setpoint, impedance_accel, jacobian_rates, task_to_joint,
    SigmaFeedforward,
};
use crate::kinematics::{jacobians, rotation_from_euler, sigma_of, zeta_of, ArmPose, EulerZYX};
use crate::{coord, Error, Result, Vec2, Vec3, Vec6, Vec8};

/// Step used for the directional Jacobian derivatives.
const JACOBIAN_RATE_STEP: f64 = 1e-6;

/// One control tick. Plant quantities are the true values at the start of
/// the tick; controller quantities are what the controller computed from
/// its measurements during the tick.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub q: Vec8,
    pub qd: Vec8,
    /// True end-effector pose `χ_e`.
    pub task_pose: Vec6,
    pub task_rate: Vec6,
    pub reference: Vec6,
    /// `q̈^des` handed to the observers (ζ from the impedance loop, σ from
    /// the attitude PD).
    pub accel_des: Vec8,
    /// Observer outputs `τ`.
    pub tau: Vec8,
    pub tau_dis: Vec8,
    /// Applied (saturated) actuator command.
    pub input: Vec6,
    pub force_est: Vec6,
    pub force_true: Vec6,
    pub params: ParamVec,
    pub forgetting: f64,
    pub saturated: bool,
    pub covariance_reset: bool,
    pub damped_inverse: bool,
    pub setpoint_held: bool,
}

/// How often the guard rails fired during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    pub saturations: usize,
    pub covariance_resets: usize,
    pub damped_inverses: usize,
    pub setpoint_holds: usize,
}

/// Uniformly sampled record of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub dt: f64,
    pub records: Vec<LogRecord>,
}

impl SimLog {
    pub fn events(&self) -> EventCounts {
        let mut e = EventCounts::default();
        for r in &self.records {
            e.saturations += r.saturated as usize;
            e.covariance_resets += r.covariance_reset as usize;
            e.damped_inverses += r.damped_inverse as usize;
            e.setpoint_holds += r.setpoint_held as usize;
        }
        e
    }
}

/// A run that stopped early, with everything logged up to that point.
#[derive(Debug)]
pub struct SimAbort {
    pub error: Error,
    pub partial: SimLog,
}

impl fmt::Display for SimAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} ticks",
            self.error,
            self.partial.records.len()
        )
    }
}

impl std::error::Error for SimAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Vehicle state that puts the end-effector at the start of the reference,
/// with the arm hanging down and the body translating with the reference
/// velocity (the orientation reference starts at rest).
pub fn initial_state(cfg: &ScenarioConfig) -> GeneralizedState {
    let r = generate_reference(&cfg.trajectory, 0.0);
    let yaw = r.pose[3];
    let (j1, j2) = (r.pose[5], r.pose[4]);
    let rb = rotation_from_euler(EulerZYX::new(yaw, 0.0, 0.0));
    let arm = ArmPose::new(j1, j2, &cfg.robot);
    let body = Vec3::new(r.pose[0], r.pose[1], r.pose[2]) - rb * arm.end_effector;
    let q = Vec8::from([body.x, body.y, body.z, yaw, 0.0, 0.0, j1, j2]);
    let qd = Vec8::from([r.rate[0], r.rate[1], r.rate[2], 0.0, 0.0, 0.0, 0.0, 0.0]);
    GeneralizedState::new(q, qd)
}

/// Two cascaded first-order filters.
#[derive(Debug, Clone, Copy)]
struct SecondOrder([LowPass; 2]);

impl SecondOrder {
    fn new(cutoff: f64, dt: f64) -> Self {
        Self([LowPass::new(cutoff, dt); 2])
    }
    fn step(&mut self, x: f64) -> f64 {
        let y = self.0[0].step(x);
        self.0[1].step(y)
    }
}

/// The closed loop and its plant.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ScenarioConfig,
    rng: ChaCha8Rng,
    bank: DobBank,
    estimator: FtrlsState,
    state: GeneralizedState,
    tick: u64,
    prev_filtered_qd: Option<Vec8>,
    accel_filter: [LowPass; 8],
    tau_filter: [SecondOrder; 8],
    /// `B u` of the previous period, after saturation: the torque both the
    /// observers and the estimator take as applied.
    applied_prev: Vec8,
    sigma_accel_prev: Vec2,
    setpoint_prev: Vec2,
}

impl Simulator {
    /// Validates the scenario and places the vehicle at the start of the
    /// reference.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let state = initial_state(cfg);
        Self::with_state(cfg, state)
    }

    pub fn with_state(cfg: &ScenarioConfig, state: GeneralizedState) -> Result<Self> {
        cfg.validate_fields()?;
        let dt = cfg.simulation.control_dt_s;
        let gv = cfg.observer.velocity_cutoff_radps;
        let initial = stack_parameters(&cfg.robot.inertial(), &[0.0; 12], &[0.0; 4]);
        // start as if the vehicle had been flying at the initial state: the
        // observers and the estimator's torque filters see the nominal weight
        let weight = dynamics_terms(&state.q, &Vec8::zeros(), &cfg.robot).gravity;
        let mut bank = DobBank::new(&cfg.observer, dt)?;
        bank.preload(&weight, &state.qd);
        let mut tau_filter = [SecondOrder::new(gv, dt); 8];
        for (f, w) in tau_filter.iter_mut().zip(weight.iter()) {
            f.0.iter_mut().for_each(|lp| lp.reset(*w));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.simulation.seed),
            bank,
            estimator: FtrlsState::new(initial, cfg.estimator.clone())?,
            state,
            tick: 0,
            prev_filtered_qd: None,
            accel_filter: [LowPass::new(gv, dt); 8],
            tau_filter,
            applied_prev: weight,
            sigma_accel_prev: Vec2::zeros(),
            setpoint_prev: Vec2::zeros(),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn state(&self) -> &GeneralizedState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.simulation.control_dt_s
    }

    pub fn estimator(&self) -> &FtrlsState {
        &self.estimator
    }

    pub fn observers(&self) -> &DobBank {
        &self.bank
    }

    /// Runs the whole scenario.
    pub fn run(mut self) -> std::result::Result<SimLog, SimAbort> {
        let dt = self.cfg.simulation.control_dt_s;
        let n = (self.cfg.simulation.duration_s / dt).round() as usize;
        let mut log = SimLog {
            dt,
            records: Vec::with_capacity(n),
        };
        for _ in 0..n {
            match self.step() {
                Ok(r) => log.records.push(r),
                Err(error) => {
                    return Err(SimAbort {
                        error,
                        partial: log,
                    })
                }
            }
        }
        Ok(log)
    }

    /// One control tick followed by the plant integration over it.
    pub fn step(&mut self) -> Result<LogRecord> {
        let cfg = &self.cfg;
        let robot = &cfg.robot;
        let dt = cfg.simulation.control_dt_s;
        let t = self.time();
        let features = &cfg.features;

        // measurement
        let (qm, qdm) = if features.noise {
            measure(&self.state.q, &self.state.qd, &mut self.rng, &cfg.noise)
        } else {
            (self.state.q, self.state.qd)
        };
        let qd_f = self.bank.observe(&qdm);

        let jac = jacobians(&qm, robot)?;
        let analytic = jac.analytic()?;
        let chi = jac.task_pose.to_vector();
        let chi_dot = analytic * qd_f;

        // estimator: acceleration by differencing the filtered rates, and the
        // applied torque delayed through the matching filters
        let qdd_raw = self
            .prev_filtered_qd
            .map_or(Vec8::zeros(), |p| (qd_f - p) / dt);
        self.prev_filtered_qd = Some(qd_f);
        let qdd_f = Vec8::from_fn(|i, _| self.accel_filter[i].step(qdd_raw[i]));
        let tau_f = Vec8::from_fn(|i, _| self.tau_filter[i].step(self.applied_prev[i]));
        let y = build_regressor(
            &qm,
            &qd_f,
            &qdd_f,
            &chi,
            &chi_dot,
            &analytic,
            robot,
            &cfg.environment,
        );
        let est = self.estimator.step(&y, &tau_f, dt);
        let force_est =
            reconstruct_force(&self.estimator, &chi, &chi_dot, &analytic, &cfg.environment).force;

        // impedance and task-to-joint mapping
        let reference = generate_reference(&cfg.trajectory, t);
        let feedback = if features.force_feedback {
            force_est
        } else {
            Vec6::zeros()
        };
        let accel_task = impedance_accel(&reference, &chi, &chi_dot, &feedback, &cfg.impedance);
        let rates = jacobian_rates(&qm, &qd_f, robot, JACOBIAN_RATE_STEP)?;
        let sigma_ff = match cfg.impedance.sigma_feedforward {
            SigmaFeedforward::None => Vec2::zeros(),
            SigmaFeedforward::PreviousCommand => self.sigma_accel_prev,
        };
        let joint = task_to_joint(&accel_task, &reference.rate, &jac, &rates, &qd_f, &sigma_ff);

        // observers: ζ first, then σ once its setpoint is known
        let mut accel_des = Vec8::zeros();
        let mut tau = Vec8::zeros();
        let mut tau_dis = Vec8::zeros();
        for (k, &i) in coord::ZETA.iter().enumerate() {
            accel_des[i] = joint.zeta[k];
            (tau[i], tau_dis[i]) =
                self.bank.channels[i].command(joint.zeta[k], self.applied_prev[i]);
        }
        let tau_zeta = zeta_of(&tau);
        let (setpoint, held) = match attitude_setpoint(&tau_zeta, qm[coord::YAW], &cfg.attitude) {
            Ok(s) => (s, false),
            Err(Error::VerticalThrustTooSmall(_)) => (self.setpoint_prev, true),
            Err(e) => return Err(e),
        };
        self.setpoint_prev = setpoint;
        let sigma_accel = attitude_pd(&setpoint, &sigma_of(&qm), &sigma_of(&qd_f), &cfg.attitude);
        for (k, &i) in coord::SIGMA.iter().enumerate() {
            accel_des[i] = sigma_accel[k];
            (tau[i], tau_dis[i]) =
                self.bank.channels[i].command(sigma_accel[k], self.applied_prev[i]);
        }
        self.sigma_accel_prev = sigma_accel;

        let nominal = control_matrices(&qm, robot);
        let alloc = allocate(&tau_zeta, &sigma_of(&tau), &nominal.b6)?;
        let u = alloc.applied;
        self.applied_prev = nominal.b * u.0;

        // plant
        let scaling = if features.uncertainty {
            apply_uncertainty(t, &cfg.uncertainty)
        } else {
            PlantScaling::default()
        };
        let true_jac = jacobians(&self.state.q, robot)?;
        let true_analytic = true_jac.analytic()?;
        let task_rate = true_analytic * self.state.qd;
        let record = LogRecord {
            time: t,
            q: self.state.q,
            qd: self.state.qd,
            task_pose: true_jac.task_pose.to_vector(),
            task_rate,
            reference: reference.pose,
            accel_des,
            tau,
            tau_dis,
            input: u.0,
            force_est,
            force_true: contact_force(
                &true_jac.task_pose.to_vector(),
                &task_rate,
                &cfg.environment,
            ),
            params: self.estimator.estimate,
            forgetting: est.forgetting,
            saturated: alloc.saturated,
            covariance_reset: est.reset,
            damped_inverse: joint.damped,
            setpoint_held: held,
        };

        let substeps = cfg.simulation.physics_substeps;
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            self.state = rk4(&self.state, h, |s| self.plant_rates(s, &u, scaling))?;
        }
        self.tick += 1;

        let limit = self.cfg.simulation.divergence_limit;
        let bad = |v: &Vec8| v.iter().any(|x| !x.is_finite() || x.abs() > limit);
        if bad(&self.state.q) || bad(&self.state.qd) {
            return Err(Error::DivergenceDetected { time: self.time() });
        }
        Ok(record)
    }

    /// `(q̇, q̈)` of the true plant under a held actuator command.
    fn plant_rates(
        &self,
        s: &GeneralizedState,
        u: &ActuatorInput,
        scaling: PlantScaling,
    ) -> Result<(Vec8, Vec8)> {
        let cfg = &self.cfg;
        let tau = control_matrices(&s.q, &cfg.robot).b * u.0 * scaling.actuation;
        let mut external = Vec8::zeros();
        if cfg.features.wind {
            external += wind_generalized(&s.q, &cfg.wind);
        }
        if cfg.features.contact {
            let jac = jacobians(&s.q, &cfg.robot)?;
            let j = jac.analytic()?;
            let force = contact_force(&jac.task_pose.to_vector(), &(j * s.qd), &cfg.environment);
            external += j.transpose() * force;
        }
        let qdd = accelerations(&s.q, &s.qd, &tau, &external, &cfg.robot, scaling.inertia)?;
        Ok((s.qd, qdd))
    }
}

/// Classic fourth-order Runge–Kutta step for `(q, q̇)`.
pub fn rk4<F>(s: &GeneralizedState, h: f64, f: F) -> Result<GeneralizedState>
where
    F: Fn(&GeneralizedState) -> Result<(Vec8, Vec8)>,
{
    let shift = |k: &(Vec8, Vec8), c: f64| GeneralizedState::new(s.q + k.0 * c, s.qd + k.1 * c);
    let k1 = f(s)?;
    let k2 = f(&shift(&k1, h / 2.0))?;
    let k3 = f(&shift(&k2, h / 2.0))?;
    let k4 = f(&shift(&k3, h))?;
    Ok(GeneralizedState::new(
        s.q + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0),
        s.qd + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (h / 6.0),
    ))
}

/// Runs a scenario from its configuration.
pub fn run_scenario(cfg: &ScenarioConfig) -> std::result::Result<SimLog, SimAbort> {
    match Simulator::new(cfg) {
        Ok(sim) => sim.run(),
        Err(error) => Err(SimAbort {
            error,
            partial: SimLog {
                dt: cfg.simulation.control_dt_s,
                records: vec![],
            },
        }),
    }
}
