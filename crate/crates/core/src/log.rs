//! CSV logs and run metadata.
//!
//! A run directory holds three files, each written atomically (to a
//! temporary sibling, then renamed):
//!
//! - `log.csv`: one row per control tick. Every column name carries its unit
//!   in brackets, e.g. `x [m]` or `F_est_x [N]`. Floats are written in the
//!   shortest form that parses back to the same bits, so reading the file
//!   reproduces the in-memory [`SimLog`] exactly.
//! - `run.toml`: the fully resolved scenario, the seed and the code version.
//! - `summary.toml`: the [`RunSummary`](crate::summary::RunSummary).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::ftrls::N_PARAMS;
use crate::sim::{LogRecord, SimLog};
use crate::summary::RunSummary;
use crate::{Error, Result};

pub const LOG_FILE: &str = "log.csv";
pub const METADATA_FILE: &str = "run.toml";
pub const SUMMARY_FILE: &str = "summary.toml";

const COORDS: [(&str, &str, &str); 8] = [
    ("x", "m", "N"),
    ("y", "m", "N"),
    ("z", "m", "N"),
    ("yaw", "rad", "N*m"),
    ("pitch", "rad", "N*m"),
    ("roll", "rad", "N*m"),
    ("joint1", "rad", "N*m"),
    ("joint2", "rad", "N*m"),
];
const TASK: [(&str, &str, &str); 6] = [
    ("x", "m", "N"),
    ("y", "m", "N"),
    ("z", "m", "N"),
    ("yaw", "rad", "N*m"),
    ("pitch", "rad", "N*m"),
    ("roll", "rad", "N*m"),
];
const INPUTS: [(&str, &str); 6] = [
    ("rotor1", "N"),
    ("rotor2", "N"),
    ("rotor3", "N"),
    ("rotor4", "N"),
    ("joint1", "N*m"),
    ("joint2", "N*m"),
];
const FLAGS: [&str; 4] = [
    "saturated",
    "covariance_reset",
    "damped_inverse",
    "setpoint_held",
];

/// Column names of `log.csv`, in order.
pub fn columns() -> Vec<String> {
    let mut c = vec!["time [s]".to_string()];
    let rate = |u: &str| {
        if u == "m" {
            "m/s".to_string()
        } else {
            "rad/s".to_string()
        }
    };
    let accel = |u: &str| {
        if u == "m" {
            "m/s^2".to_string()
        } else {
            "rad/s^2".to_string()
        }
    };
    c.extend(COORDS.iter().map(|(n, u, _)| format!("q_{n} [{u}]")));
    c.extend(
        COORDS
            .iter()
            .map(|(n, u, _)| format!("qd_{n} [{}]", rate(u))),
    );
    c.extend(TASK.iter().map(|(n, u, _)| format!("ee_{n} [{u}]")));
    c.extend(
        TASK.iter()
            .map(|(n, u, _)| format!("ee_rate_{n} [{}]", rate(u))),
    );
    c.extend(TASK.iter().map(|(n, u, _)| format!("ref_{n} [{u}]")));
    c.extend(
        COORDS
            .iter()
            .map(|(n, u, _)| format!("qdd_des_{n} [{}]", accel(u))),
    );
    c.extend(COORDS.iter().map(|(n, _, f)| format!("tau_{n} [{f}]")));
    c.extend(COORDS.iter().map(|(n, _, f)| format!("tau_dis_{n} [{f}]")));
    c.extend(INPUTS.iter().map(|(n, u)| format!("u_{n} [{u}]")));
    c.extend(TASK.iter().map(|(n, _, f)| format!("F_est_{n} [{f}]")));
    c.extend(TASK.iter().map(|(n, _, f)| format!("F_true_{n} [{f}]")));
    c.extend((0..N_PARAMS).map(|k| format!("h_{k:02} [SI]")));
    c.push("forgetting [-]".to_string());
    c.extend(FLAGS.iter().map(|n| format!("{n} [bool]")));
    c
}

fn push<const N: usize>(row: &mut Vec<String>, v: &nalgebra::SVector<f64, N>) {
    row.extend(v.iter().map(|x| x.to_string()));
}

fn record_row(r: &LogRecord) -> Vec<String> {
    let mut row = vec![r.time.to_string()];
    push(&mut row, &r.q);
    push(&mut row, &r.qd);
    push(&mut row, &r.task_pose);
    push(&mut row, &r.task_rate);
    push(&mut row, &r.reference);
    push(&mut row, &r.accel_des);
    push(&mut row, &r.tau);
    push(&mut row, &r.tau_dis);
    push(&mut row, &r.input);
    push(&mut row, &r.force_est);
    push(&mut row, &r.force_true);
    push(&mut row, &r.params);
    row.push(r.forgetting.to_string());
    for flag in [
        r.saturated,
        r.covariance_reset,
        r.damped_inverse,
        r.setpoint_held,
    ] {
        row.push(if flag { "1" } else { "0" }.to_string());
    }
    row
}

struct Cursor<'a> {
    fields: &'a csv::StringRecord,
    at: usize,
    line: u64,
}

impl Cursor<'_> {
    fn scalar(&mut self) -> Result<f64> {
        let text = self.fields.get(self.at).unwrap_or("");
        self.at += 1;
        text.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!(
                "log line {}: column {} is not a number: {text:?}",
                self.line, self.at
            ))
        })
    }

    fn vector<const N: usize>(&mut self) -> Result<nalgebra::SVector<f64, N>> {
        let mut v = nalgebra::SVector::<f64, N>::zeros();
        for k in 0..N {
            v[k] = self.scalar()?;
        }
        Ok(v)
    }

    fn flag(&mut self) -> Result<bool> {
        Ok(self.scalar()? != 0.0)
    }
}

fn parse_row(fields: &csv::StringRecord, line: u64) -> Result<LogRecord> {
    let mut c = Cursor {
        fields,
        at: 0,
        line,
    };
    Ok(LogRecord {
        time: c.scalar()?,
        q: c.vector::<8>()?,
        qd: c.vector::<8>()?,
        task_pose: c.vector::<6>()?,
        task_rate: c.vector::<6>()?,
        reference: c.vector::<6>()?,
        accel_des: c.vector::<8>()?,
        tau: c.vector::<8>()?,
        tau_dis: c.vector::<8>()?,
        input: c.vector::<6>()?,
        force_est: c.vector::<6>()?,
        force_true: c.vector::<6>()?,
        params: c.vector::<N_PARAMS>()?,
        forgetting: c.scalar()?,
        saturated: c.flag()?,
        covariance_reset: c.flag()?,
        damped_inverse: c.flag()?,
        setpoint_held: c.flag()?,
    })
}

/// Writes the header and one row per record.
pub fn write_csv<W: Write>(log: &SimLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns())?;
    for r in &log.records {
        w.write_record(record_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_csv`]. The sampling period is not stored in the CSV
/// and has to be supplied (it is in `run.toml`).
pub fn read_csv<R: Read>(input: R, dt: f64) -> Result<SimLog> {
    let mut rdr = csv::Reader::from_reader(input);
    let expected = columns();
    let header = rdr.headers()?.clone();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::InvalidConfig(format!(
            "log header has {} columns, expected {} with the documented names",
            header.len(),
            expected.len()
        )));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        records.push(parse_row(&row, line)?);
    }
    Ok(SimLog { dt, records })
}

/// Contents of `run.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub code_version: String,
    pub seed: u64,
    pub control_dt_s: f64,
    pub ticks: usize,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
    pub config: ScenarioConfig,
}

impl RunMetadata {
    pub fn new(config: &ScenarioConfig, log: &SimLog, aborted: Option<&Error>) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.simulation.seed,
            control_dt_s: config.simulation.control_dt_s,
            ticks: log.records.len(),
            aborted: aborted.map(|e| e.to_string()),
            config: config.clone(),
        }
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "path has no file name",
        ))
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Paths written by [`write_log`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub log: PathBuf,
    pub metadata: PathBuf,
    pub summary: PathBuf,
}

/// Writes the log, the metadata and the summary into `dir` (created if
/// missing).
pub fn write_log(
    dir: &Path,
    log: &SimLog,
    metadata: &RunMetadata,
    summary: &RunSummary,
) -> Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let files = RunFiles {
        log: dir.join(LOG_FILE),
        metadata: dir.join(METADATA_FILE),
        summary: dir.join(SUMMARY_FILE),
    };
    let mut csv_bytes = Vec::new();
    write_csv(log, &mut csv_bytes)?;
    write_atomic(&files.log, &csv_bytes)?;
    let meta = toml::to_string(metadata).expect("metadata serializes");
    write_atomic(&files.metadata, meta.as_bytes())?;
    write_atomic(&files.summary, summary.to_toml_string().as_bytes())?;
    Ok(files)
}

/// Reads a run directory written by [`write_log`].
pub fn read_log(dir: &Path) -> Result<(SimLog, RunMetadata)> {
    let meta_text = std::fs::read_to_string(dir.join(METADATA_FILE))?;
    let metadata: RunMetadata = toml::from_str(&meta_text).map_err(|e| {
        Error::InvalidConfig(
            e.to_string()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" "),
        )
    })?;
    let file = std::fs::File::open(dir.join(LOG_FILE))?;
    let log = read_csv(std::io::BufReader::new(file), metadata.control_dt_s)?;
    Ok((log, metadata))
}

/// Accepts either a run directory or a path to its `log.csv`.
pub fn resolve_run_dir(path: &Path) -> PathBuf {
    if path.is_file() {
        path.parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    } else {
        path.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftrls::ParamVec;
    use crate::{Vec6, Vec8};

    fn sample(n: usize) -> SimLog {
        let records = (0..n)
            .map(|k| {
                let t = k as f64 * 1e-3;
                LogRecord {
                    time: t,
                    q: Vec8::from_fn(|i, _| (i as f64 + t).sin() / 3.0),
                    qd: Vec8::from_fn(|i, _| 1e-17 * i as f64 - t),
                    task_pose: Vec6::from_element(std::f64::consts::PI),
                    task_rate: Vec6::from_element(-0.1),
                    reference: Vec6::from_element(1.0 / 7.0),
                    accel_des: Vec8::from_element(2.5e300),
                    tau: Vec8::from_element(-0.0),
                    tau_dis: Vec8::from_element(f64::MIN_POSITIVE),
                    input: Vec6::from_element(3.0),
                    force_est: Vec6::from_element(0.2),
                    force_true: Vec6::from_element(0.3),
                    params: ParamVec::from_element(0.1 + t),
                    forgetting: 0.999,
                    saturated: k % 2 == 0,
                    covariance_reset: false,
                    damped_inverse: k % 3 == 0,
                    setpoint_held: true,
                }
            })
            .collect();
        SimLog { dt: 1e-3, records }
    }

    #[test]
    fn empty_log_is_header_only() {
        let mut buf = Vec::new();
        write_csv(
            &SimLog {
                dt: 1e-3,
                records: vec![],
            },
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(
            text.lines().next().unwrap().split(',').count(),
            columns().len()
        );
    }

    #[test]
    fn every_column_has_a_unit() {
        for c in columns() {
            assert!(c.ends_with(']') && c.contains(" ["), "{c}");
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let log = sample(50);
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), log.dt).unwrap();
        assert_eq!(back, log);
        for line in String::from_utf8(buf).unwrap().lines() {
            assert_eq!(line.split(',').count(), columns().len());
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "time [s],x\n0,1\n";
        assert!(read_csv(text.as_bytes(), 1e-3).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
