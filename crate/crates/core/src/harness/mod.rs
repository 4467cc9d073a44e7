//! Experiment plumbing: scenario files, single runs, parameter sweeps, and
//! their output files.

mod config;
mod report;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Millis;
use crate::par;
use crate::runtime::{run, RunReport};
use crate::scenario::ClockMode;

pub use config::{Config, EventDef, JobDef, OperatorDef, SourceDef, CONFIG_VERSION};
pub use report::{
    read_latencies, write_latencies, write_outputs, write_summary, write_trace, GroupSummary, JobSummary, LatencyRow,
    LatencyStats, OverheadSummary, Summary, LATENCIES_CSV, SUMMARY_JSON, TRACE_CSV,
};

pub const SWEEP_CSV: &str = "sweep.csv";

/// Runs the scenario of `cfg` once and returns the report.
pub fn execute(cfg: &Config, seed: u64) -> Result<RunReport> {
    run(&cfg.scenario(seed)?)
}

/// Runs `cfg` and writes the report files into `out`. A trace file is
/// written when the config asks for tracing.
pub fn run_to_dir(cfg: &Config, seed: u64, out: &Path) -> Result<Summary> {
    let report = execute(cfg, seed)?;
    write_outputs(out, &report, seed, cfg.runtime.trace)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Scheduling quantum in milliseconds.
    Quantum,
    /// Tuples per message at a constant tuple rate.
    Batch,
    Workers,
    /// Messages per second per source of the BA groups (all groups when
    /// the scenario has none).
    Ingestion,
    /// Standard deviation of the noise on measured costs, in milliseconds.
    PerturbationSigma,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Quantum => "quantum",
            SweepAxis::Batch => "batch",
            SweepAxis::Workers => "workers",
            SweepAxis::Ingestion => "ingestion",
            SweepAxis::PerturbationSigma => "perturbation_sigma",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(SweepAxis::Quantum),
            "batch" => Ok(SweepAxis::Batch),
            "workers" => Ok(SweepAxis::Workers),
            "ingestion" => Ok(SweepAxis::Ingestion),
            "perturbation_sigma" | "perturbation-sigma" => Ok(SweepAxis::PerturbationSigma),
            other => Err(Error::InvalidSweep(format!("unknown axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    /// Returns a copy of `cfg` with the axis set to `value`.
    pub fn apply(self, cfg: &Config, value: f64) -> Result<Config> {
        let bad = |why: &str| Err(Error::InvalidSweep(format!("{self} = {value}: {why}")));
        if !value.is_finite() {
            return bad("not a finite number");
        }
        let integral = value.fract() == 0.0;
        let mut c = cfg.clone();
        match self {
            SweepAxis::Quantum => {
                if value < 0.0 || !integral {
                    return bad("expected a non-negative integer");
                }
                c.scheduler.quantum_ms = value as Millis;
            }
            SweepAxis::Workers => {
                if value < 1.0 || !integral {
                    return bad("expected a positive integer");
                }
                c.scheduler.workers = value as usize;
            }
            SweepAxis::Batch => {
                if value < 1.0 || !integral {
                    return bad("expected a positive integer");
                }
                if c.groups.is_empty() {
                    return bad("the scenario has no generated groups");
                }
                for g in &mut c.groups {
                    g.source = g.source.with_batch(value as u64);
                }
            }
            SweepAxis::Ingestion => {
                if value <= 0.0 {
                    return bad("expected a positive rate");
                }
                let targets = c.ingestion_targets();
                if targets.is_empty() {
                    return bad("the scenario has no generated groups");
                }
                for g in targets {
                    g.source.rate = value;
                }
            }
            SweepAxis::PerturbationSigma => {
                if value < 0.0 {
                    return bad("expected a non-negative deviation");
                }
                c.runtime.cost_noise_sigma_ms = value;
            }
        }
        Ok(c)
    }
}

/// One line of the combined sweep table: a group's statistics at one axis
/// value. The group `*` covers every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub group: String,
    pub outputs: usize,
    pub median_ms: Option<Millis>,
    pub p95_ms: Option<Millis>,
    pub p99_ms: Option<Millis>,
    pub stddev_ms: Option<f64>,
    pub success_rate: Option<f64>,
    pub throughput: f64,
    pub overhead_share: f64,
}

fn sweep_rows(axis: SweepAxis, value: f64, s: &Summary) -> Vec<SweepRow> {
    let row = |group: &str, l: &LatencyStats, throughput: f64| SweepRow {
        axis: axis.to_string(),
        value,
        group: group.to_string(),
        outputs: l.outputs,
        median_ms: l.median_ms,
        p95_ms: l.p95_ms,
        p99_ms: l.p99_ms,
        stddev_ms: l.stddev_ms,
        success_rate: l.success_rate,
        throughput,
        overhead_share: s.overhead.share,
    };
    let mut rows = vec![row("*", &s.overall, s.throughput)];
    rows.extend(s.groups.iter().map(|(name, g)| row(name, &g.latency, g.throughput)));
    rows
}

/// Runs `cfg` once per value with the same seed. Virtual-mode runs are
/// independent and may run in parallel; wall-mode runs go one at a time so
/// they do not compete for cores.
pub fn sweep(cfg: &Config, axis: SweepAxis, values: &[f64], seed: u64) -> Result<Vec<(f64, Summary)>> {
    if values.is_empty() {
        return Err(Error::InvalidSweep("no values given".into()));
    }
    let configs = values.iter().map(|&v| axis.apply(cfg, v)).collect::<Result<Vec<_>>>()?;
    let job = |c: &Config| execute(c, seed).map(|r| Summary::from_report(&r, seed));
    let summaries = if cfg.runtime.mode == ClockMode::Wall {
        par::map_sequential(&configs, job)
    } else {
        par::map(&configs, job)
    };
    values
        .iter()
        .copied()
        .zip(summaries)
        .map(|(v, s)| s.map(|s| (v, s)))
        .collect()
}

/// [`sweep`] that also writes each run's files to `out/<axis>-<value>/`
/// and the combined table to `out/sweep.csv`.
pub fn sweep_to_dir(cfg: &Config, axis: SweepAxis, values: &[f64], seed: u64, out: &Path) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidSweep("no values given".into()));
    }
    let runs = values
        .iter()
        .map(|&v| axis.apply(cfg, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let job = |(v, c): &(f64, Config)| -> Result<Summary> {
        let report = execute(c, seed)?;
        write_outputs(&out.join(format!("{axis}-{v}")), &report, seed, c.runtime.trace)
    };
    let summaries = if cfg.runtime.mode == ClockMode::Wall {
        par::map_sequential(&runs, job)
    } else {
        par::map(&runs, job)
    };
    let mut rows = Vec::new();
    for (&v, s) in values.iter().zip(summaries) {
        rows.extend(sweep_rows(axis, v, &s?));
    }
    let mut w = csv::Writer::from_path(out.join(SWEEP_CSV))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}
