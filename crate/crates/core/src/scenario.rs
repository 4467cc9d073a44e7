//! A runnable scenario: validated job graphs over one dense operator index,
//! their input streams, and scheduler and runtime settings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataflowGraph, Event, JobId, Millis, OperatorId, OperatorSpec};
use crate::progress::DEFAULT_REGRESSION_CAPACITY;
use crate::runtime::DEFAULT_PROFILE_BETA;
use crate::scheduler::SchedulerConfig;
use crate::workload::SourceProfile;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Virtual,
    Wall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub mode: ClockMode,
    /// Delay on every operator-to-operator hop.
    pub channel_delay_ms: Millis,
    /// Delay before an acknowledgement reaches its sender.
    pub ack_delay_ms: Millis,
    /// Worker time charged per acknowledgement received. Accumulated per
    /// operator and charged in whole milliseconds on its next invocation.
    pub ack_cost_us: u64,
    pub profile_beta: f64,
    /// Standard deviation of Gaussian noise added to each measured cost
    /// before it enters the profile.
    pub cost_noise_sigma_ms: f64,
    /// Extend deadlines of messages headed to windowed operators to the
    /// window's frontier.
    pub semantics_aware: bool,
    pub regression_capacity: usize,
    pub token_interval_ms: Millis,
    /// Stop the simulation at this time, dropping whatever is left.
    pub until_ms: Option<Millis>,
    pub trace: bool,
    /// Wall mode: real microseconds spun per configured millisecond of cost.
    pub wall_us_per_ms: f64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            mode: ClockMode::Virtual,
            channel_delay_ms: 0,
            ack_delay_ms: 0,
            ack_cost_us: 0,
            profile_beta: DEFAULT_PROFILE_BETA,
            cost_noise_sigma_ms: 0.0,
            semantics_aware: true,
            regression_capacity: DEFAULT_REGRESSION_CAPACITY,
            token_interval_ms: 1000,
            until_ms: None,
            trace: false,
            wall_us_per_ms: 1.0,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channel_delay_ms < 0 || self.ack_delay_ms < 0 {
            return Err(Error::Config("delays must not be negative".into()));
        }
        if !(self.profile_beta > 0.0 && self.profile_beta <= 1.0) {
            return Err(Error::Config("profile_beta must be in (0, 1]".into()));
        }
        if self.cost_noise_sigma_ms.is_nan() || self.cost_noise_sigma_ms < 0.0 {
            return Err(Error::Config("cost_noise_sigma_ms must not be negative".into()));
        }
        if self.regression_capacity < 2 {
            return Err(Error::Config("regression_capacity must be at least 2".into()));
        }
        if self.token_interval_ms <= 0 {
            return Err(Error::Config("token_interval_ms must be positive".into()));
        }
        if self.wall_us_per_ms.is_nan() || self.wall_us_per_ms < 0.0 {
            return Err(Error::Config("wall_us_per_ms must not be negative".into()));
        }
        Ok(())
    }
}

/// Where a source's events come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalSpec {
    /// Scripted events; `source` fields are overwritten with the operator.
    Events(Vec<Event>),
    /// Generated lazily, seeded from the scenario seed and the operator id.
    Profile(SourceProfile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSetup {
    pub operator: OperatorId,
    pub arrivals: ArrivalSpec,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobSetup {
    pub graph: DataflowGraph,
    /// Tokens per interval under the token policy, split evenly across the
    /// job's sources.
    pub token_rate: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub jobs: Vec<JobSetup>,
    pub sources: Vec<SourceSetup>,
    pub scheduler: SchedulerConfig,
    pub runtime: RuntimeConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn new(jobs: Vec<JobSetup>, sources: Vec<SourceSetup>) -> Self {
        Scenario {
            jobs,
            sources,
            scheduler: SchedulerConfig::default(),
            runtime: RuntimeConfig::default(),
            seed: 0,
        }
    }

    pub fn with_scheduler(mut self, scheduler: SchedulerConfig) -> Self {
        self.scheduler = scheduler;
        self
    }

    pub fn with_runtime(mut self, runtime: RuntimeConfig) -> Self {
        self.runtime = runtime;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Size of the dense operator index.
    pub fn operator_count(&self) -> usize {
        self.operators().map(|op| op.id.index() + 1).max().unwrap_or(0)
    }

    pub fn operators(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.jobs.iter().flat_map(|j| j.graph.operators.iter())
    }

    pub fn job(&self, id: JobId) -> Option<&JobSetup> {
        self.jobs.iter().find(|j| j.graph.job_id == id)
    }

    /// Checks every graph, id uniqueness across jobs, density of the
    /// operator index, and that sources feed source operators.
    pub fn validate(&self) -> Result<()> {
        self.scheduler.validate()?;
        self.runtime.validate()?;
        let mut job_ids = BTreeSet::new();
        for job in &self.jobs {
            if !job_ids.insert(job.graph.job_id) {
                return Err(Error::DuplicateJob(job.graph.job_id.to_string()));
            }
            let violations = job.graph.validate();
            if !violations.is_empty() {
                return Err(Error::InvalidGraph {
                    job: job.graph.name.clone(),
                    violations,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for op in self.operators() {
            if !seen.insert(op.id) {
                return Err(Error::Config(format!("operator {} appears in two jobs", op.id)));
            }
        }
        if let Some(gap) = (0..seen.len() as u32).map(OperatorId).find(|id| !seen.contains(id)) {
            return Err(Error::Config(format!("operator ids must be dense; {gap} is missing")));
        }
        let mut fed = BTreeSet::new();
        for src in &self.sources {
            let job = self
                .jobs
                .iter()
                .find(|j| j.graph.contains(src.operator))
                .ok_or(Error::UnknownOperator(src.operator))?;
            if !job.graph.sources().contains(&src.operator) {
                return Err(Error::Config(format!("{} is not a source operator", src.operator)));
            }
            if !fed.insert(src.operator) {
                return Err(Error::Config(format!("{} has two input streams", src.operator)));
            }
            if let ArrivalSpec::Profile(p) = &src.arrivals {
                p.validate()?;
            }
        }
        Ok(())
    }
}
