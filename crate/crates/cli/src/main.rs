//! `aeromanip`: run, check and inspect quadrotor-manipulator scenarios.
//!
//! Exit codes: 0 success, 1 the simulation diverged or failed at run time,
//! 2 the configuration is invalid, 3 a file could not be read or written.
//! Failures print a single `error: kind=<kind> code=<n> message=<text>` line
//! on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aeromanip::config::ScenarioConfig;
use aeromanip::log::{read_log, resolve_run_dir, write_atomic, write_log, RunMetadata};
use aeromanip::sim::{run_scenario, SimLog};
use aeromanip::summary::analyze;
use aeromanip::Error;
use clap::{Parser, Subcommand};

const OUT_DIR_ENV: &str = "AEROMANIP_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "aeromanip",
    version,
    about = "Quadrotor-manipulator impedance control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write log.csv, run.toml and summary.toml.
    Simulate {
        /// Scenario file (TOML). Omitted keys take their defaults.
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = OUT_DIR_ENV, default_value = "aeromanip-out")]
        out: PathBuf,
        /// Override the random seed of the scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulated duration [s].
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Check a scenario: field ranges, observer robustness bound and
    /// stability of the impedance error dynamics.
    Validate {
        /// Scenario file (TOML).
        config: PathBuf,
    },
    /// Print the summary of a finished run as TOML.
    Analyze {
        /// Run directory, or its log.csv.
        log: PathBuf,
    },
    /// Write a matplotlib script and the data files it plots.
    Plots {
        /// Run directory, or its log.csv.
        log: PathBuf,
        /// Where to put the script and data (default: the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default scenario as TOML.
    Defaults,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidConfig(_) => (2, "invalid-config"),
            Error::ConstraintViolation(_) => (2, "constraint-violation"),
            Error::UnstableImpedanceConfig(_) => (2, "unstable-impedance"),
            Error::Io(_) | Error::Csv(_) => (3, "io"),
            Error::DivergenceDetected { .. } => (1, "divergence"),
            _ => (1, "runtime"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        kind: "io",
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(ScenarioConfig::from_toml_str(&text)?)
}

fn simulate(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    duration: Option<f64>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.simulation.seed = seed;
    }
    if let Some(d) = duration {
        cfg.simulation.duration_s = d;
    }
    cfg.validate()?;
    let started = Instant::now();
    let (log, aborted): (SimLog, Option<Error>) = match run_scenario(&cfg) {
        Ok(log) => (log, None),
        Err(abort) => (abort.partial, Some(abort.error)),
    };
    let mut summary = analyze(&log, cfg.uncertainty.time_s);
    summary.wall_clock_s = Some(started.elapsed().as_secs_f64());
    let metadata = RunMetadata::new(&cfg, &log, aborted.as_ref());
    let files = write_log(out, &log, &metadata, &summary)?;
    println!(
        "wrote {} ({} ticks)",
        files.log.display(),
        log.records.len()
    );
    match aborted {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn validate(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let report = cfg.validate()?;
    let names = ["x", "y", "z", "yaw", "pitch", "roll", "joint1", "joint2"];
    for (name, r) in names.iter().zip(report.robustness.iter()) {
        println!(
            "observer {name:<6} alpha*g = {:8.3} rad/s  limit {:6.1}  damping ratio {:.3}",
            r.effective_cutoff, r.limit, r.damping_ratio
        );
    }
    println!(
        "impedance slowest real part {:.4} 1/s",
        report.impedance.slowest_real
    );
    println!("ok");
    Ok(())
}

fn analyze_run(path: &Path) -> Result<(), Failure> {
    let (log, metadata) = read_log(&resolve_run_dir(path))?;
    let summary = analyze(&log, metadata.config.uncertainty.time_s);
    print!("{}", summary.to_toml_string());
    Ok(())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots a run written by `aeromanip simulate`: force-estimation error,
end-effector tracking error and the estimated versus true contact force."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

AXES = ["x", "y", "z", "yaw", "pitch", "roll"]
UNITS = ["N", "N", "N", "N*m", "N*m", "N*m"]
TASK_UNITS = ["m", "m", "m", "rad", "rad", "rad"]

here = os.path.dirname(os.path.abspath(__file__))
log_path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "LOG_NAME")
with open(log_path, newline="") as f:
    rows = list(csv.DictReader(f))
t = [float(r["time [s]"]) for r in rows]


def column(name):
    return [float(r[name]) for r in rows]


def figure(title, series, units, path):
    fig, axs = plt.subplots(3, 2, sharex=True, figsize=(10, 8))
    for k, ax in enumerate(axs.T.flat):
        for label, values in series(k):
            ax.plot(t, values, label=label, linewidth=0.8)
        ax.set_ylabel(f"{AXES[k]} [{units[k]}]")
        ax.grid(True, alpha=0.3)
    axs[0, 0].legend(loc="upper right")
    for ax in axs[-1]:
        ax.set_xlabel("time [s]")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(os.path.join(here, path), dpi=120)


def force_error(k):
    est = column(f"F_est_{AXES[k]} [{UNITS[k]}]")
    true = column(f"F_true_{AXES[k]} [{UNITS[k]}]")
    return [("estimate - true", [a - b for a, b in zip(est, true)])]


def force(k):
    return [
        ("true", column(f"F_true_{AXES[k]} [{UNITS[k]}]")),
        ("estimate", column(f"F_est_{AXES[k]} [{UNITS[k]}]")),
    ]


def tracking(k):
    ref = column(f"ref_{AXES[k]} [{TASK_UNITS[k]}]")
    act = column(f"ee_{AXES[k]} [{TASK_UNITS[k]}]")
    return [("reference - actual", [a - b for a, b in zip(ref, act)])]


figure("Contact-force estimation error", force_error, UNITS, "force_error.png")
figure("Contact force", force, UNITS, "force.png")
figure("End-effector tracking error", tracking, TASK_UNITS, "tracking_error.png")
print("wrote force_error.png, force.png, tracking_error.png")
"#;

fn plots(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let run_dir = resolve_run_dir(path);
    // Parse the log first so a broken run is reported here rather than by
    // the script.
    let (log, metadata) = read_log(&run_dir)?;
    let out = out.unwrap_or(&run_dir);
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let summary = analyze(&log, metadata.config.uncertainty.time_s);
    let same_dir = std::fs::canonicalize(out).ok() == std::fs::canonicalize(&run_dir).ok();
    if !same_dir {
        let mut csv_bytes = Vec::new();
        aeromanip::log::write_csv(&log, &mut csv_bytes)?;
        write_atomic(&out.join(aeromanip::log::LOG_FILE), &csv_bytes)?;
    }
    write_atomic(
        &out.join(aeromanip::log::SUMMARY_FILE),
        summary.to_toml_string().as_bytes(),
    )?;
    let script = PLOT_SCRIPT.replace("LOG_NAME", aeromanip::log::LOG_FILE);
    let script_path = out.join("plot.py");
    write_atomic(&script_path, script.as_bytes())?;
    println!(
        "wrote {}; run it with python3 to render the figures",
        script_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            duration,
        } => simulate(&config, &out, seed, duration),
        Command::Validate { config } => validate(&config),
        Command::Analyze { log } => analyze_run(&log),
        Command::Plots { log, out } => plots(&log, out.as_deref()),
        Command::Defaults => {
            print!("{}", ScenarioConfig::default().to_toml_string());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "error: kind={} code={} message={}",
                f.kind,
                f.code,
                single_line(&f.message)
            );
            ExitCode::from(f.code)
        }
    }
}
