//! Summary statistics and the files a run leaves behind.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Millis, OutputRecord};
use crate::runtime::{Overhead, RunReport};
use crate::workload::nearest_rank;

pub const LATENCIES_CSV: &str = "latencies.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRACE_CSV: &str = "trace.csv";

/// Latency statistics over a set of outputs. Percentiles are nearest-rank;
/// the standard deviation is the population one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub outputs: usize,
    pub median_ms: Option<Millis>,
    pub p90_ms: Option<Millis>,
    pub p95_ms: Option<Millis>,
    pub p99_ms: Option<Millis>,
    pub max_ms: Option<Millis>,
    pub mean_ms: Option<f64>,
    pub stddev_ms: Option<f64>,
    /// Fraction of outputs meeting their deadline.
    pub success_rate: Option<f64>,
}

impl LatencyStats {
    /// `records` as (latency, deadline met) pairs in output order.
    pub fn from_pairs(records: &[(Millis, bool)]) -> Self {
        let lat: Vec<Millis> = records.iter().map(|r| r.0).collect();
        let n = lat.len();
        let (mean, stddev, success) = if n == 0 {
            (None, None, None)
        } else {
            let mean = lat.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
            let var = lat.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            let met = records.iter().filter(|r| r.1).count();
            (Some(mean), Some(var.sqrt()), Some(met as f64 / n as f64))
        };
        LatencyStats {
            outputs: n,
            median_ms: nearest_rank(&lat, 50.0),
            p90_ms: nearest_rank(&lat, 90.0),
            p95_ms: nearest_rank(&lat, 95.0),
            p99_ms: nearest_rank(&lat, 99.0),
            max_ms: lat.iter().copied().max(),
            mean_ms: mean,
            stddev_ms: stddev,
            success_rate: success,
        }
    }

    pub fn from_outputs<'a>(outputs: impl IntoIterator<Item = &'a OutputRecord>) -> Self {
        let pairs: Vec<_> = outputs.into_iter().map(|o| (o.latency, o.deadline_met)).collect();
        LatencyStats::from_pairs(&pairs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub job_id: u32,
    pub name: String,
    pub group: String,
    pub latency_constraint_ms: Millis,
    pub tuples_ingested: u64,
    /// Ingested tuples per second of run time.
    pub throughput: f64,
    #[serde(flatten)]
    pub latency: LatencyStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub jobs: usize,
    pub tuples_ingested: u64,
    pub throughput: f64,
    #[serde(flatten)]
    pub latency: LatencyStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadSummary {
    pub unit: String,
    pub scheduling: u64,
    pub priority_generation: u64,
    pub execution: u64,
    /// Scheduling plus priority generation over the total.
    pub share: f64,
}

impl From<&Overhead> for OverheadSummary {
    fn from(o: &Overhead) -> Self {
        OverheadSummary {
            unit: o.unit.clone(),
            scheduling: o.scheduling,
            priority_generation: o.priority_generation,
            execution: o.execution,
            share: o.share(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheduler: String,
    pub policy: String,
    pub mode: String,
    pub workers: usize,
    pub seed: u64,
    pub duration_ms: Millis,
    pub throughput: f64,
    pub utilization: f64,
    pub messages_executed: u64,
    pub windows_triggered: u64,
    pub late_messages: u64,
    pub fifo_violations: u64,
    pub overall: LatencyStats,
    pub groups: BTreeMap<String, GroupSummary>,
    pub jobs: Vec<JobSummary>,
    pub overhead: OverheadSummary,
}

fn per_second(tuples: u64, span: Millis) -> f64 {
    tuples as f64 * 1000.0 / span.max(1) as f64
}

impl Summary {
    pub fn from_report(report: &RunReport, seed: u64) -> Self {
        let st = &report.stats;
        let span = st.end_time - st.start_time;
        let mut jobs = Vec::with_capacity(report.jobs.len());
        let mut groups: BTreeMap<String, (usize, u64, Vec<(Millis, bool)>)> = BTreeMap::new();
        for info in &report.jobs {
            let outs: Vec<&OutputRecord> = report.outputs.iter().filter(|o| o.job_id == info.job_id).collect();
            jobs.push(JobSummary {
                job_id: info.job_id.0,
                name: info.name.clone(),
                group: info.group.clone(),
                latency_constraint_ms: info.latency_constraint,
                tuples_ingested: info.tuples_ingested,
                throughput: per_second(info.tuples_ingested, span),
                latency: LatencyStats::from_outputs(outs),
            });
            let g = groups.entry(info.group.clone()).or_default();
            g.0 += 1;
            g.1 += info.tuples_ingested;
        }
        // Group samples keep output order so they match a recomputation
        // from latencies.csv.
        for o in &report.outputs {
            if let Some(info) = report.job(o.job_id) {
                if let Some(g) = groups.get_mut(&info.group) {
                    g.2.push((o.latency, o.deadline_met));
                }
            }
        }
        let groups = groups
            .into_iter()
            .map(|(name, (n, tuples, pairs))| {
                let s = GroupSummary {
                    jobs: n,
                    tuples_ingested: tuples,
                    throughput: per_second(tuples, span),
                    latency: LatencyStats::from_pairs(&pairs),
                };
                (name, s)
            })
            .collect();
        Summary {
            scheduler: report.scheduler.to_string(),
            policy: report.policy.to_string(),
            mode: st.mode.clone(),
            workers: report.workers,
            seed,
            duration_ms: span,
            throughput: per_second(st.tuples_ingested, span),
            utilization: st.utilization(report.workers),
            messages_executed: st.messages_executed,
            windows_triggered: st.windows_triggered,
            late_messages: st.late_messages,
            fifo_violations: st.fifo_violations,
            overall: LatencyStats::from_outputs(&report.outputs),
            groups,
            jobs,
            overhead: OverheadSummary::from(&st.overhead),
        }
    }

    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.get(name)
    }
}

/// One row of `latencies.csv`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub job_id: u32,
    pub sink_id: u32,
    pub p_out: i64,
    pub emit_time: Millis,
    pub latency_ms: Millis,
    pub deadline_met: bool,
}

impl From<&OutputRecord> for LatencyRow {
    fn from(o: &OutputRecord) -> Self {
        LatencyRow {
            job_id: o.job_id.0,
            sink_id: o.sink_id.0,
            p_out: o.p_out,
            emit_time: o.emit_time,
            latency_ms: o.latency,
            deadline_met: o.deadline_met,
        }
    }
}

pub fn write_latencies(path: &Path, outputs: &[OutputRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if outputs.is_empty() {
        w.write_record(["job_id", "sink_id", "p_out", "emit_time", "latency_ms", "deadline_met"])?;
    }
    for o in outputs {
        w.serialize(LatencyRow::from(o))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_latencies(path: &Path) -> Result<Vec<LatencyRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<LatencyRow>, _>>()?;
    Ok(rows)
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if report.trace.is_empty() {
        w.write_record(["time", "worker", "operator", "job", "message", "local", "global"])?;
    }
    for row in &report.trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `latencies.csv`, `summary.json`, and with `trace` set
/// `trace.csv` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, report: &RunReport, seed: u64, trace: bool) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    let summary = Summary::from_report(report, seed);
    write_latencies(&dir.join(LATENCIES_CSV), &report.outputs)?;
    write_summary(&dir.join(SUMMARY_JSON), &summary)?;
    if trace {
        write_trace(&dir.join(TRACE_CSV), report)?;
    }
    Ok(summary)
}
