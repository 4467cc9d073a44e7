//! Execution of a scenario on either clock, and the report both produce.

mod operator;
mod sim;
mod wall;

use serde::Serialize;

use crate::context::{ConvertOptions, Converter};
use crate::error::Result;
use crate::model::{JobId, Millis, OutputRecord, Sender};
use crate::policy::{PolicyKind, TokenBucket};
use crate::scenario::{ClockMode, JobSetup, Scenario};
use crate::scheduler::{SchedCounters, SchedulerKind};

pub use operator::{profile_update, window_ends, CostProfile, Emitted, Execution, OperatorState, DEFAULT_PROFILE_BETA};
pub use sim::simulate;
pub use wall::run_wall;

/// Runs `scenario` on the clock its runtime config selects.
pub fn run(scenario: &Scenario) -> Result<RunReport> {
    match scenario.runtime.mode {
        ClockMode::Virtual => simulate(scenario),
        ClockMode::Wall => run_wall(scenario),
    }
}

/// One dispatch decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub time: Millis,
    pub worker: usize,
    pub operator: u32,
    pub job: u32,
    pub message: u64,
    pub local: Option<i64>,
    pub global: Option<i64>,
}

/// Where worker time went. Counts of operations in virtual mode,
/// nanoseconds in wall mode.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Overhead {
    pub unit: String,
    /// Ready-queue maintenance: enqueue and dispatch.
    pub scheduling: u64,
    /// Context conversion and reply handling.
    pub priority_generation: u64,
    pub execution: u64,
}

impl Overhead {
    pub fn total(&self) -> u64 {
        self.scheduling + self.priority_generation + self.execution
    }

    /// Share of scheduling plus priority generation in the total.
    pub fn share(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            (self.scheduling + self.priority_generation) as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub mode: String,
    pub start_time: Millis,
    pub end_time: Millis,
    pub events_ingested: u64,
    pub tuples_ingested: u64,
    pub messages_executed: u64,
    pub late_messages: u64,
    pub windows_triggered: u64,
    /// Window results emitted by windowed operators; equals
    /// `windows_triggered` on a correct run.
    pub window_outputs: u64,
    pub fifo_violations: u64,
    pub work_conservation_violations: u64,
    /// Messages still queued or in flight when a time cap stopped the run.
    pub dropped_at_cutoff: u64,
    pub busy_ms: Vec<Millis>,
    pub total_cost_ms: Millis,
    pub sched: SchedCounters,
    pub overhead: Overhead,
}

impl RunStats {
    /// Busy time over available worker time between the first arrival and
    /// the last completion.
    pub fn utilization(&self, workers: usize) -> f64 {
        let span = (self.end_time - self.start_time).max(1) as f64;
        self.busy_ms.iter().sum::<Millis>() as f64 / (workers as f64 * span)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobInfo {
    pub job_id: JobId,
    pub name: String,
    pub group: String,
    pub latency_constraint: Millis,
    pub tuples_ingested: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scheduler: SchedulerKind,
    pub policy: PolicyKind,
    pub workers: usize,
    pub jobs: Vec<JobInfo>,
    pub outputs: Vec<OutputRecord>,
    pub trace: Vec<TraceRow>,
    pub stats: RunStats,
    /// Final critical-path estimate held by each operator's converter,
    /// indexed by operator id. Zero under baselines, which send no replies.
    pub rc_aggregates: Vec<Millis>,
}

impl RunReport {
    pub fn job(&self, id: JobId) -> Option<&JobInfo> {
        self.jobs.iter().find(|j| j.job_id == id)
    }

    /// Latencies of outputs from jobs in `group`.
    pub fn group_latencies(&self, group: &str) -> Vec<Millis> {
        let ids: Vec<JobId> = self
            .jobs
            .iter()
            .filter(|j| j.group == group)
            .map(|j| j.job_id)
            .collect();
        self.outputs
            .iter()
            .filter(|o| ids.contains(&o.job_id))
            .map(|o| o.latency)
            .collect()
    }
}

/// Per-operator wiring derived from the scenario, shared by both clocks.
pub(crate) struct Wiring {
    pub job_of: Vec<usize>,
    pub states: Vec<OperatorState>,
    /// Outgoing converter of every operator.
    pub converters: Vec<Converter>,
    /// Converter of the client feeding each source operator.
    pub ingress: Vec<Option<Converter>>,
}

impl Wiring {
    pub fn new(scenario: &Scenario) -> Self {
        let n = scenario.operator_count();
        let mut job_of = vec![0; n];
        let mut states = Vec::with_capacity(n);
        let mut converters = Vec::with_capacity(n);
        let mut ingress: Vec<Option<Converter>> = vec![None; n];
        let rt = &scenario.runtime;
        let policy = scenario.scheduler.policy;
        let mut slots: Vec<Option<(OperatorState, Converter)>> = (0..n).map(|_| None).collect();
        for (ji, job) in scenario.jobs.iter().enumerate() {
            let g = &job.graph;
            let sources = g.sources();
            for op in &g.operators {
                job_of[op.id.index()] = ji;
                let upstream: Vec<(Sender, bool)> = if sources.contains(&op.id) {
                    vec![(Sender::Ingress(op.id), false)]
                } else {
                    g.upstream(op.id)
                        .into_iter()
                        .map(|u| (Sender::Operator(u), g.operator(u).is_some_and(|s| s.kind.is_windowed())))
                        .collect()
                };
                let state = OperatorState::new(op.clone(), g.job_id, upstream, rt.profile_beta);
                let opts = ConvertOptions {
                    policy,
                    domain: g.time_domain,
                    sender_slide: op.kind.slide(),
                    semantics_aware: rt.semantics_aware,
                };
                let conv = Converter::new(opts, g.latency_constraint).with_model_capacity(rt.regression_capacity);
                slots[op.id.index()] = Some((state, conv));
            }
            for (k, &src) in sources.iter().enumerate() {
                let opts = ConvertOptions {
                    policy,
                    domain: g.time_domain,
                    sender_slide: 1,
                    semantics_aware: rt.semantics_aware,
                };
                let mut conv = Converter::new(opts, g.latency_constraint).with_model_capacity(rt.regression_capacity);
                if let Some(bucket) = token_bucket(job, k, sources.len(), rt.token_interval_ms) {
                    conv = conv.with_token_bucket(bucket);
                }
                ingress[src.index()] = Some(conv);
            }
        }
        for slot in slots {
            let (s, c) = slot.expect("validated scenarios have dense operator ids");
            states.push(s);
            converters.push(c);
        }
        Wiring {
            job_of,
            states,
            converters,
            ingress,
        }
    }
}

/// Source `k` of `n` gets an even share of the job's tokens; the first
/// `rate % n` sources get one extra.
fn token_bucket(job: &JobSetup, k: usize, n: usize, interval: Millis) -> Option<TokenBucket> {
    let rate = job.token_rate?;
    let share = rate / n as u32 + u32::from((k as u32) < rate % n as u32);
    Some(TokenBucket::new(job.graph.job_id, share, interval))
}

pub(crate) fn job_infos(scenario: &Scenario, tuples: &[u64]) -> Vec<JobInfo> {
    scenario
        .jobs
        .iter()
        .enumerate()
        .map(|(i, j)| JobInfo {
            job_id: j.graph.job_id,
            name: j.graph.name.clone(),
            group: j.graph.group.clone(),
            latency_constraint: j.graph.latency_constraint,
            tuples_ingested: tuples[i],
        })
        .collect()
}
