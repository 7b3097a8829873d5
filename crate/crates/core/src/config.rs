//! Scenario files.
//!
//! A scenario is a TOML document whose keys carry their units
//! (`duration_s`, `helix_radius_m`, …). Every table is optional and every
//! omitted key takes its default, so an empty file is the reference
//! scenario. Unknown keys are rejected to catch typos.
//!
//! ```toml
//! [simulation]
//! duration_s = 30.0
//! seed = 7
//!
//! [trajectory]
//! helix_radius_m = 0.5
//!
//! [observer]
//! cutoff_zeta_radps = [20.0, 20.0, 25.0, 18.0, 4.0, 5.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dob::{inertia_bounds, validate_bank, DobBank, DobGains, RobustnessReport};
use crate::environment::{EnvImpedance, WindParams};
use crate::ftrls::FtrlsConfig;
use crate::impedance::{error_dynamics_check, AttitudeGains, ImpedanceParams, SpectralReport};
use crate::{Error, Result, RobotParams};

/// Time stepping and run length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration_s: f64,
    pub control_dt_s: f64,
    /// Plant integration steps per control period.
    pub physics_substeps: u32,
    pub seed: u64,
    /// Any state component above this magnitude aborts the run.
    pub divergence_limit: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            control_dt_s: 1e-3,
            physics_substeps: 4,
            seed: 7,
            divergence_limit: 1e6,
        }
    }
}

/// Additive Gaussian noise on every measured position and velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub mean: f64,
    pub std_dev: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            mean: 1e-3,
            std_dev: 5e-3,
        }
    }
}

/// Step change of the plant parameters that the controller is not told
/// about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub time_s: f64,
    /// Relative size of the change.
    pub factor: f64,
    /// `+1` makes the plant heavier (`M` and `C` scaled by `1 + factor`).
    pub inertia_sign: f64,
    /// `-1` models actuator losses (`N` scaled by `1 - factor`).
    pub actuation_sign: f64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            time_s: 15.0,
            factor: 0.10,
            inertia_sign: 1.0,
            actuation_sign: -1.0,
        }
    }
}

/// End-effector reference: a helix for the position and quintic segments
/// through orientation waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub helix_radius_m: f64,
    pub helix_rate_radps: f64,
    pub climb_rate_mps: f64,
    pub helix_center_m: [f64; 3],
    /// End-effector `(yaw, pitch, roll)` waypoints, visited in order.
    pub orientation_waypoints_rad: Vec<[f64; 3]>,
    pub segment_duration_s: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            helix_radius_m: 0.5,
            helix_rate_radps: 0.4,
            climb_rate_mps: 0.05,
            helix_center_m: [0.0, 0.0, 1.0],
            orientation_waypoints_rad: vec![
                [0.0, 0.0, 0.0],
                [0.4, 0.15, -0.1],
                [-0.2, -0.1, 0.15],
                [0.0, 0.0, 0.0],
            ],
            segment_duration_s: 10.0,
        }
    }
}

/// Which disturbances act and whether the estimate is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureFlags {
    pub wind: bool,
    pub contact: bool,
    pub noise: bool,
    pub uncertainty: bool,
    /// Feed `F̂_e` into the impedance law.
    pub force_feedback: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self {
            wind: true,
            contact: true,
            noise: true,
            uncertainty: true,
            force_feedback: true,
        }
    }
}

/// A complete scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub simulation: SimulationConfig,
    pub noise: NoiseConfig,
    pub uncertainty: UncertaintyConfig,
    pub trajectory: TrajectoryConfig,
    pub features: FeatureFlags,
    pub robot: RobotParams,
    pub environment: EnvImpedance,
    pub wind: WindParams,
    pub observer: DobGains,
    pub estimator: FtrlsConfig,
    pub impedance: ImpedanceParams,
    pub attitude: AttitudeGains,
}

/// Results of the pre-flight checks.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub robustness: [RobustnessReport; 8],
    pub impedance: SpectralReport,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(single_line(&e.to_string())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Field-level checks only (signs, ranges).
    pub fn validate_fields(&self) -> Result<()> {
        let s = &self.simulation;
        if !(s.control_dt_s.is_finite() && s.control_dt_s > 0.0) {
            return Err(Error::InvalidConfig("control_dt_s must be positive".into()));
        }
        if !(s.duration_s.is_finite() && s.duration_s >= 0.0) {
            return Err(Error::InvalidConfig(
                "duration_s must be nonnegative".into(),
            ));
        }
        if s.physics_substeps == 0 {
            return Err(Error::InvalidConfig(
                "physics_substeps must be at least 1".into(),
            ));
        }
        if !(s.divergence_limit > 0.0) {
            return Err(Error::InvalidConfig(
                "divergence_limit must be positive".into(),
            ));
        }
        if !(self.noise.std_dev >= 0.0 && self.noise.mean.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise std_dev must be nonnegative".into(),
            ));
        }
        let u = &self.uncertainty;
        if !(u.factor >= 0.0
            && u.time_s >= 0.0
            && u.inertia_sign.is_finite()
            && u.actuation_sign.is_finite())
        {
            return Err(Error::InvalidConfig(
                "uncertainty factor and time must be nonnegative".into(),
            ));
        }
        if !(1.0 + u.factor * u.inertia_sign > 0.0 && 1.0 + u.factor * u.actuation_sign > 0.0) {
            return Err(Error::InvalidConfig(
                "uncertainty must keep the plant scalings positive".into(),
            ));
        }
        let t = &self.trajectory;
        if t.orientation_waypoints_rad.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one orientation waypoint is required".into(),
            ));
        }
        if !(t.segment_duration_s > 0.0 && t.helix_radius_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "segment duration must be positive and radius nonnegative".into(),
            ));
        }
        self.robot.validate()?;
        self.environment.validate()?;
        self.wind.validate()?;
        self.observer.validate()?;
        self.estimator.validate()?;
        self.impedance.validate()?;
        self.attitude.validate()?;
        Ok(())
    }

    /// Field checks plus the observer robustness bound and the stability of
    /// the impedance error dynamics.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.validate_fields()?;
        let bank = DobBank::new(&self.observer, self.simulation.control_dt_s)?;
        let (lo, _) = inertia_bounds(&self.robot);
        let robustness = validate_bank(&bank, &lo)?;
        let impedance = error_dynamics_check(&self.impedance)?;
        Ok(ValidationReport {
            robustness,
            impedance,
        })
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(
            ScenarioConfig::from_toml_str("").unwrap(),
            ScenarioConfig::default()
        );
    }

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = ScenarioConfig::default();
        cfg.simulation.seed = 99;
        cfg.trajectory.helix_radius_m = 0.3;
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioConfig::from_toml_str("[simulation]\nduration = 3.0\n").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(ref m) if !m.contains('\n')));
    }

    #[test]
    fn defaults_pass_validation() {
        let r = ScenarioConfig::default().validate().unwrap();
        assert!(r.impedance.slowest_real < 0.0);
    }

    #[test]
    fn fast_observer_violates_robustness() {
        let mut cfg = ScenarioConfig::default();
        cfg.observer.cutoff_zeta_radps = [200.0; 6];
        cfg.observer.cutoff_sigma_radps = [200.0; 2];
        assert!(matches!(cfg.validate(), Err(Error::ConstraintViolation(_))));
    }
}
