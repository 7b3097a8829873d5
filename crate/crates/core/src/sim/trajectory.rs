//! End-effector reference trajectories.

use crate::config::TrajectoryConfig;
use crate::impedance::TaskReference;
use crate::{Vec3, Vec6};

/// Helix position `c + (r cos ωt, r sin ωt, v_z t)` with its first two
/// derivatives.
pub fn helix(cfg: &TrajectoryConfig, t: f64) -> (Vec3, Vec3, Vec3) {
    let r = cfg.helix_radius_m;
    let w = cfg.helix_rate_radps;
    let (s, c) = (w * t).sin_cos();
    let center = Vec3::from(cfg.helix_center_m);
    (
        center + Vec3::new(r * c, r * s, cfg.climb_rate_mps * t),
        Vec3::new(-r * w * s, r * w * c, cfg.climb_rate_mps),
        Vec3::new(-r * w * w * c, -r * w * w * s, 0.0),
    )
}

/// Quintic blend `10τ³ - 15τ⁴ + 6τ⁵` on `[0, 1]` and its derivatives with
/// respect to `τ`. Zero velocity and acceleration at both ends.
pub fn quintic(tau: f64) -> (f64, f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let t2 = t * t;
    let t3 = t2 * t;
    (
        t3 * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - 2.0 * t + t2),
        60.0 * t * (1.0 - 3.0 * t + 2.0 * t2),
    )
}

/// Orientation through the waypoints, one quintic segment per pair, holding
/// the last waypoint afterwards.
pub fn orientation(cfg: &TrajectoryConfig, t: f64) -> (Vec3, Vec3, Vec3) {
    let wp = &cfg.orientation_waypoints_rad;
    let seg = cfg.segment_duration_s;
    let last = Vec3::from(*wp.last().expect("validated: at least one waypoint"));
    if wp.len() < 2 || t >= seg * (wp.len() - 1) as f64 {
        return (last, Vec3::zeros(), Vec3::zeros());
    }
    let t = t.max(0.0);
    let k = ((t / seg).floor() as usize).min(wp.len() - 2);
    let a = Vec3::from(wp[k]);
    let b = Vec3::from(wp[k + 1]);
    let (s, sd, sdd) = quintic((t - k as f64 * seg) / seg);
    (
        a + (b - a) * s,
        (b - a) * (sd / seg),
        (b - a) * (sdd / (seg * seg)),
    )
}

/// The full task reference at time `t`.
pub fn generate_reference(cfg: &TrajectoryConfig, t: f64) -> TaskReference {
    let (p, pd, pdd) = helix(cfg, t);
    let (o, od, odd) = orientation(cfg, t);
    let join = |a: Vec3, b: Vec3| Vec6::from([a.x, a.y, a.z, b.x, b.y, b.z]);
    TaskReference {
        pose: join(p, o),
        rate: join(pd, od),
        accel: join(pdd, odd),
    }
}
