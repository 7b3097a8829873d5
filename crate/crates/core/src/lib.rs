//! Simulation and control of a quadrotor carrying a two-joint manipulator.
//!
//! The crate is organised around the closed loop the vehicle runs at 1 kHz:
//!
//! - [`kinematics`]: rotations, forward kinematics and every Jacobian of the
//!   quadrotor/arm chain.
//! - [`dynamics`]: mass matrix, Coriolis and gravity terms of the full
//!   8-coordinate model, the actuation matrices and the rotor model.
//! - [`environment`]: spring/damper contact with the environment and the
//!   altitude-dependent wind force.
//! - [`dob`]: per-coordinate disturbance observers that turn the plant into a
//!   bank of decoupled double integrators.
//! - [`ftrls`]: recursive least squares with an error-driven forgetting
//!   factor, used to recover the contact force without a force sensor.
//! - [`impedance`]: the task-space impedance law, its mapping back to
//!   quadrotor/joint accelerations, the attitude loop and control allocation.
//! - [`sim`]: the fixed-step scenario runner, reference trajectories, noise
//!   and parameter-uncertainty injection.
//! - [`config`], [`log`] and [`summary`]: scenario files, CSV logs and run
//!   metrics consumed by the `aeromanip` command-line tool.
//!
//! The accompanying book (`book/`) explains the models chapter by chapter;
//! its code listings are compiled as doc-tests of this crate.

pub mod config;
pub mod dob;
pub mod dynamics;
pub mod environment;
mod error;
pub mod ftrls;
pub mod impedance;
pub mod kinematics;
pub mod log;
pub mod params;
pub mod sim;
pub mod summary;

pub use error::{Error, Result};
pub use params::RobotParams;

use nalgebra::{SMatrix, SVector};

/// Generalized-coordinate vector `(x, y, z, yaw, pitch, roll, joint1, joint2)`.
pub type Vec8 = SVector<f64, 8>;
pub type Vec6 = SVector<f64, 6>;
pub type Vec3 = SVector<f64, 3>;
pub type Vec2 = SVector<f64, 2>;
pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat3 = SMatrix<f64, 3, 3>;

/// Gravitational acceleration [m/s²].
pub const GRAVITY: f64 = 9.81;

/// Indices into the generalized-coordinate vector.
pub mod coord {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const YAW: usize = 3;
    pub const PITCH: usize = 4;
    pub const ROLL: usize = 5;
    pub const JOINT1: usize = 6;
    pub const JOINT2: usize = 7;

    /// Directly controlled coordinates `(x, y, z, yaw, joint1, joint2)`.
    pub const ZETA: [usize; 6] = [X, Y, Z, YAW, JOINT1, JOINT2];
    /// Intermediate attitude coordinates `(pitch, roll)`.
    pub const SIGMA: [usize; 2] = [PITCH, ROLL];
}

// Book chapters are compiled as doc-tests so the listings never drift from
// the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/dob.md")]
    mod dob {}
    #[doc = include_str!("../../../book/src/ftrls.md")]
    mod ftrls {}
    #[doc = include_str!("../../../book/src/impedance.md")]
    mod impedance {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
