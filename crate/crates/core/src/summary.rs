//! Run metrics computed from a [`SimLog`] alone.
//!
//! Errors are `reference − actual` for tracking and `F̂_e − F_e` for the
//! force estimate, per task axis `(x, y, z, ψ, θ, φ)`. The uncertainty step
//! splits the run: the pre-step window is the 5 s before it, the post-step
//! window the 5 s after it. The steady-state window is the final 25% of the
//! run.

use serde::{Deserialize, Serialize};

use crate::sim::{LogRecord, SimLog};
use crate::Vec6;

/// Width of the windows on either side of the uncertainty step [s].
pub const STEP_WINDOW_S: f64 = 5.0;
/// Window over which the attitude-error recovery RMS is taken [s].
pub const RECOVERY_WINDOW_S: f64 = 1.0;
/// Smallest force-error band counted as "settled" [N].
pub const SETTLE_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventSummary {
    pub saturations: usize,
    pub covariance_resets: usize,
    pub damped_inverses: usize,
    pub setpoint_holds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSummary {
    /// Largest `|F̂ − F|` per axis during the first 3 s.
    pub peak_first_3s: [f64; 6],
    /// Largest `|F̂ − F|` per axis from 10 s on.
    pub max_after_10s: [f64; 6],
    pub steady_rms: [f64; 6],
    pub steady_max: [f64; 6],
    /// Last instant before 10 s at which `‖F̂ − F‖` was outside the settled
    /// band (twice the steady-state RMS of the norm, at least
    /// [`SETTLE_FLOOR`]); 0 if it never was.
    pub settle_time_s: f64,
    pub settle_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub step_time_s: f64,
    pub rms_pre_step: [f64; 6],
    pub rms_post_step: [f64; 6],
    pub peak_pre_step: [f64; 6],
    pub peak_post_step: [f64; 6],
    pub steady_rms: [f64; 6],
    /// RMS of the position-error norm over the final 5 s [m].
    pub terminal_position_rms_m: f64,
    /// Seconds after the step until the `(θ, φ)` error RMS over a 1 s window
    /// first drops to its pre-step RMS; infinite if it never does.
    pub attitude_recovery_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub duration_s: f64,
    pub ticks: usize,
    /// Wall-clock time of the run [s], when known.
    pub wall_clock_s: Option<f64>,
    pub events: EventSummary,
    pub force: ForceSummary,
    pub tracking: TrackingSummary,
}

impl RunSummary {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

fn tracking_error(r: &LogRecord) -> Vec6 {
    r.reference - r.task_pose
}

fn force_error(r: &LogRecord) -> Vec6 {
    r.force_est - r.force_true
}

fn window<'a>(log: &'a SimLog, from: f64, to: f64) -> impl Iterator<Item = &'a LogRecord> + Clone {
    log.records
        .iter()
        .filter(move |r| r.time >= from && r.time < to)
}

fn rms_per_axis<'a>(
    records: impl Iterator<Item = &'a LogRecord>,
    f: fn(&LogRecord) -> Vec6,
) -> [f64; 6] {
    let mut sum = [0.0; 6];
    let mut n = 0usize;
    for r in records {
        let e = f(r);
        for k in 0..6 {
            sum[k] += e[k] * e[k];
        }
        n += 1;
    }
    if n == 0 {
        return [0.0; 6];
    }
    sum.map(|s| (s / n as f64).sqrt())
}

fn peak_per_axis<'a>(
    records: impl Iterator<Item = &'a LogRecord>,
    f: fn(&LogRecord) -> Vec6,
) -> [f64; 6] {
    let mut peak = [0.0f64; 6];
    for r in records {
        let e = f(r);
        for k in 0..6 {
            peak[k] = peak[k].max(e[k].abs());
        }
    }
    peak
}

fn rms_norm<'a>(
    records: impl Iterator<Item = &'a LogRecord>,
    f: impl Fn(&LogRecord) -> f64,
) -> f64 {
    let (sum, n) = records.fold((0.0, 0usize), |(s, n), r| (s + f(r).powi(2), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// First offset after `step` at which the RMS of axis `k` over
/// [`RECOVERY_WINDOW_S`] is at most `target`.
fn recovery_time(log: &SimLog, step: f64, k: usize, target: f64) -> f64 {
    let start = log.records.partition_point(|r| r.time < step);
    let width = (RECOVERY_WINDOW_S / log.dt).round().max(1.0) as usize;
    let tail = &log.records[start..];
    if tail.len() < width {
        return f64::INFINITY;
    }
    let sq: Vec<f64> = tail.iter().map(|r| tracking_error(r)[k].powi(2)).collect();
    let mut sum: f64 = sq[..width].iter().sum();
    for i in 0..=sq.len() - width {
        if i > 0 {
            sum += sq[i + width - 1] - sq[i - 1];
        }
        // The running sum drifts by rounding; allow for it.
        if (sum.max(0.0) / width as f64).sqrt() <= target * (1.0 + 1e-9) {
            return tail[i].time - step;
        }
    }
    f64::INFINITY
}

/// Computes the summary; `step_time_s` is when the plant parameters change.
pub fn analyze(log: &SimLog, step_time_s: f64) -> RunSummary {
    let end = log.records.last().map_or(0.0, |r| r.time + log.dt);
    let steady_from = end * 0.75;
    let e = log.events();
    let events = EventSummary {
        saturations: e.saturations,
        covariance_resets: e.covariance_resets,
        damped_inverses: e.damped_inverses,
        setpoint_holds: e.setpoint_holds,
    };

    let steady = window(log, steady_from, f64::INFINITY);
    let steady_norm = rms_norm(steady.clone(), |r| force_error(r).norm());
    let settle_band = (2.0 * steady_norm).max(SETTLE_FLOOR);
    let settle_time_s = window(log, 0.0, 10.0)
        .filter(|r| force_error(r).norm() > settle_band)
        .map(|r| r.time)
        .fold(0.0, f64::max);
    let force = ForceSummary {
        peak_first_3s: peak_per_axis(window(log, 0.0, 3.0), force_error),
        max_after_10s: peak_per_axis(window(log, 10.0, f64::INFINITY), force_error),
        steady_rms: rms_per_axis(steady.clone(), force_error),
        steady_max: peak_per_axis(steady.clone(), force_error),
        settle_time_s,
        settle_band,
    };

    let pre = window(log, step_time_s - STEP_WINDOW_S, step_time_s);
    let post = window(log, step_time_s, step_time_s + STEP_WINDOW_S);
    let rms_pre_step = rms_per_axis(pre.clone(), tracking_error);
    let attitude_recovery_s = [4, 5].map(|k| recovery_time(log, step_time_s, k, rms_pre_step[k]));
    let tracking = TrackingSummary {
        step_time_s,
        rms_pre_step,
        rms_post_step: rms_per_axis(post.clone(), tracking_error),
        peak_pre_step: peak_per_axis(pre, tracking_error),
        peak_post_step: peak_per_axis(post, tracking_error),
        steady_rms: rms_per_axis(steady, tracking_error),
        terminal_position_rms_m: rms_norm(window(log, end - 5.0, f64::INFINITY), |r| {
            tracking_error(r).fixed_rows::<3>(0).norm()
        }),
        attitude_recovery_s,
    };

    RunSummary {
        duration_s: end,
        ticks: log.records.len(),
        wall_clock_s: None,
        events,
        force,
        tracking,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftrls::ParamVec;
    use crate::Vec8;

    fn record(time: f64, err: Vec6, ferr: Vec6) -> LogRecord {
        LogRecord {
            time,
            q: Vec8::zeros(),
            qd: Vec8::zeros(),
            task_pose: Vec6::zeros(),
            task_rate: Vec6::zeros(),
            reference: err,
            accel_des: Vec8::zeros(),
            tau: Vec8::zeros(),
            tau_dis: Vec8::zeros(),
            input: Vec6::zeros(),
            force_est: ferr,
            force_true: Vec6::zeros(),
            params: ParamVec::zeros(),
            forgetting: 1.0,
            saturated: false,
            covariance_reset: false,
            damped_inverse: false,
            setpoint_held: false,
        }
    }

    fn synthetic(f: impl Fn(f64) -> (Vec6, Vec6)) -> SimLog {
        let dt = 1e-2;
        let records = (0..3000).map(|k| {
            let t = k as f64 * dt;
            let (e, fe) = f(t);
            record(t, e, fe)
        });
        SimLog {
            dt,
            records: records.collect(),
        }
    }

    #[test]
    fn constant_errors_give_constant_metrics() {
        let log = synthetic(|_| (Vec6::from_element(0.5), Vec6::from_element(-0.2)));
        let s = analyze(&log, 15.0);
        assert!((s.duration_s - 30.0).abs() < 1e-9);
        for k in 0..6 {
            assert!((s.tracking.rms_pre_step[k] - 0.5).abs() < 1e-12);
            assert!((s.tracking.rms_post_step[k] - 0.5).abs() < 1e-12);
            assert!((s.force.steady_rms[k] - 0.2).abs() < 1e-12);
            assert!((s.force.max_after_10s[k] - 0.2).abs() < 1e-12);
        }
        assert_eq!(s.tracking.attitude_recovery_s, [0.0, 0.0]);
        assert!((s.tracking.terminal_position_rms_m - 0.5 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn settle_time_marks_last_excursion() {
        let log = synthetic(|t| {
            (
                Vec6::zeros(),
                Vec6::from_element(if t < 2.5 { 1.0 } else { 0.001 }),
            )
        });
        let s = analyze(&log, 15.0);
        assert!((s.force.settle_time_s - 2.49).abs() < 1e-9);
        assert_eq!(s.force.settle_band, SETTLE_FLOOR);
        assert_eq!(s.force.peak_first_3s, [1.0; 6]);
    }

    #[test]
    fn recovery_waits_for_the_transient() {
        let log = synthetic(|t| {
            let bump = if (15.0..17.0).contains(&t) { 1.0 } else { 0.01 };
            (Vec6::from_element(bump), Vec6::zeros())
        });
        let s = analyze(&log, 15.0);
        for r in s.tracking.attitude_recovery_s {
            assert!((r - 2.0).abs() < 0.02, "{r}");
        }
    }

    #[test]
    fn summary_serializes() {
        let log = synthetic(|t| (Vec6::from_element(t.sin()), Vec6::zeros()));
        let text = analyze(&log, 15.0).to_toml_string();
        assert!(text.contains("[tracking]"));
    }
}
