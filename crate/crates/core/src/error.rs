use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Pitch (of the body or the end-effector) too close to ±π/2 for the
    /// Euler-rate matrix to be inverted.
    #[error("gimbal singularity: pitch {pitch:.6} rad exceeds the ±(π/2 - {margin}) margin")]
    GimbalSingularity { pitch: f64, margin: f64 },

    #[error("negative rotor speed {0} rad/s")]
    NegativeSpeed(f64),

    #[error("mass matrix is not positive definite")]
    SolveFailure,

    #[error("robustness constraint violated on channel(s): {0}")]
    ConstraintViolation(String),

    #[error("covariance lost positive definiteness")]
    CovarianceBreakdown,

    #[error("vertical force {0:.4} N below the attitude-extraction guard")]
    VerticalThrustTooSmall(f64),

    #[error("allocation matrix is singular")]
    AllocationSingular,

    #[error("impedance error dynamics not Hurwitz (max real part {0:.6})")]
    UnstableImpedanceConfig(f64),

    #[error("simulation diverged at t = {time:.4} s")]
    DivergenceDetected { time: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV failure: {0}")]
    Csv(#[from] csv::Error),
}
