//! Scenario files.
//!
//! A scenario file is TOML with a `version` field. Jobs come from
//! generated tenant groups (`[[group]]`), from explicit graphs (`[[job]]`),
//! or both. Explicit jobs number their operators locally from zero; the
//! loader moves them after all generated operators.
//!
//! ```toml
//! version = 1
//! seed = 7
//!
//! [scheduler]
//! kind = "cameo"
//! policy = "llf"
//! workers = 2
//!
//! [runtime]
//! channel_delay_ms = 1
//!
//! [[group]]
//! kind = "ls"
//! jobs = 2
//! parallelism = [4, 2, 1, 1]
//! source = { rate = 2.0, end_ms = 10000 }
//!
//! [[job]]
//! name = "probe"
//! latency_constraint_ms = 50
//!
//! [[job.operator]]
//! id = 0
//! downstream = [1]
//! cost = { base_ms = 2.0 }
//!
//! [[job.operator]]
//! id = 1
//! kind = { type = "tumbling_window", size = 100 }
//!
//! [[job.source]]
//! operator = 0
//! events = [{ p = 10, t = 10 }, { p = 120, t = 120 }]
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    DataflowGraph, Event, JobId, Millis, OperatorId, OperatorKind, OperatorSpec, SyntheticCost, Tick, TimeDomain,
};
use crate::scenario::{ArrivalSpec, JobSetup, RuntimeConfig, Scenario, SourceSetup};
use crate::scheduler::SchedulerConfig;
use crate::workload::{build_scenario, GroupKind, SourceProfile, TenantGroupSpec};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub runtime: RuntimeConfig,
    /// Each table is layered over the defaults of its `kind`.
    #[serde(default, rename = "group", deserialize_with = "groups_over_defaults")]
    pub groups: Vec<TenantGroupSpec>,
    #[serde(default, rename = "job")]
    pub jobs: Vec<JobDef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobDef {
    /// Defaults to the lowest id not taken by any other job.
    pub id: Option<u32>,
    pub name: String,
    #[serde(default = "default_group")]
    pub group: String,
    pub latency_constraint_ms: Millis,
    #[serde(default = "default_domain")]
    pub time_domain: TimeDomain,
    pub token_rate: Option<u32>,
    #[serde(rename = "operator")]
    pub operators: Vec<OperatorDef>,
    #[serde(default, rename = "source")]
    pub sources: Vec<SourceDef>,
}

fn groups_over_defaults<'de, D>(de: D) -> std::result::Result<Vec<TenantGroupSpec>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    use serde::de::Error as _;
    let tables = Vec::<toml::Table>::deserialize(de)?;
    tables
        .into_iter()
        .map(|t| {
            let kind = match t.get("kind") {
                None => GroupKind::Ls,
                Some(v) => v.clone().try_into::<GroupKind>().map_err(D::Error::custom)?,
            };
            let base = match kind {
                GroupKind::Ls => TenantGroupSpec::ls(),
                GroupKind::Ba => TenantGroupSpec::ba(),
            };
            let mut merged = toml::Table::try_from(base).map_err(D::Error::custom)?;
            merged.extend(t);
            merged.try_into::<TenantGroupSpec>().map_err(D::Error::custom)
        })
        .collect()
}

fn default_group() -> String {
    "default".into()
}

fn default_domain() -> TimeDomain {
    TimeDomain::IngestionTime
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDef {
    /// Job-local id.
    pub id: u32,
    pub name: Option<String>,
    #[serde(default)]
    pub stage: u32,
    #[serde(default = "default_kind")]
    pub kind: OperatorKind,
    #[serde(default)]
    pub downstream: Vec<u32>,
    pub cost_hint: Option<Millis>,
    #[serde(default)]
    pub cost: SyntheticCost,
    #[serde(default = "default_output_tuples")]
    pub output_tuples: u64,
}

fn default_kind() -> OperatorKind {
    OperatorKind::Regular
}

fn default_output_tuples() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDef {
    /// Job-local id of a source operator.
    pub operator: u32,
    pub events: Option<Vec<EventDef>>,
    pub profile: Option<SourceProfile>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDef {
    pub p: Tick,
    pub t: Millis,
    #[serde(default = "default_tuples")]
    pub tuples: u64,
}

fn default_tuples() -> u64 {
    1
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    /// Parses and checks the version. Syntax and type errors carry the
    /// 1-based line and column of the offending input.
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            Error::ConfigParse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds and validates the scenario with `seed`.
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let mut s = build_scenario(&self.groups, self.scheduler.clone(), self.runtime.clone(), seed)?;
        let mut taken: BTreeSet<u32> = s.jobs.iter().map(|j| j.graph.job_id.0).collect();
        for job in &self.jobs {
            if let Some(id) = job.id {
                if !taken.insert(id) {
                    return Err(Error::DuplicateJob(JobId(id).to_string()));
                }
            }
        }
        let mut next_op = s.operator_count() as u32;
        let mut next_job = 0u32;
        for job in &self.jobs {
            let id = match job.id {
                Some(id) => id,
                None => {
                    while taken.contains(&next_job) {
                        next_job += 1;
                    }
                    taken.insert(next_job);
                    next_job
                }
            };
            let (setup, sources, used) = job.materialize(JobId(id), next_op)?;
            next_op += used;
            s.jobs.push(setup);
            s.sources.extend(sources);
        }
        s.validate()?;
        Ok(s)
    }

    /// Groups that the `ingestion` sweep axis scales: the BA groups, or
    /// every group when there are none.
    pub fn ingestion_targets(&mut self) -> Vec<&mut TenantGroupSpec> {
        let any_ba = self.groups.iter().any(|g| g.kind == GroupKind::Ba);
        self.groups
            .iter_mut()
            .filter(|g| !any_ba || g.kind == GroupKind::Ba)
            .collect()
    }
}

impl JobDef {
    /// Returns the job, its sources, and the number of operator ids used.
    fn materialize(&self, id: JobId, offset: u32) -> Result<(JobSetup, Vec<SourceSetup>, u32)> {
        let local: BTreeSet<u32> = self.operators.iter().map(|o| o.id).collect();
        if local.len() != self.operators.len() {
            return Err(Error::Config(format!("job {}: duplicate operator ids", self.name)));
        }
        // Remap sparse local ids onto a dense block.
        let dense = |l: u32| -> Result<OperatorId> {
            local
                .iter()
                .position(|&x| x == l)
                .map(|i| OperatorId(offset + i as u32))
                .ok_or_else(|| Error::Config(format!("job {}: unknown operator {l}", self.name)))
        };
        let mut ops = Vec::with_capacity(self.operators.len());
        for o in &self.operators {
            let oid = dense(o.id)?;
            let mut spec = OperatorSpec::windowed(
                oid,
                o.name.clone().unwrap_or_else(|| format!("{}.{}", self.name, o.id)),
                o.kind,
            )
            .with_stage(o.stage)
            .with_cost(o.cost)
            .with_downstream(o.downstream.iter().map(|&d| dense(d)).collect::<Result<Vec<_>>>()?);
            spec.cost_hint = o.cost_hint;
            spec.output_tuples = o.output_tuples;
            ops.push(spec);
        }
        let graph = DataflowGraph::new(id, self.name.clone(), ops, self.latency_constraint_ms, self.time_domain)
            .with_group(self.group.clone());
        let mut sources = Vec::with_capacity(self.sources.len());
        for src in &self.sources {
            let operator = dense(src.operator)?;
            let arrivals = match (&src.events, &src.profile) {
                (Some(ev), None) => ArrivalSpec::Events(
                    ev.iter()
                        .map(|e| Event {
                            source: operator,
                            p: e.p,
                            t: e.t,
                            tuples: e.tuples,
                        })
                        .collect(),
                ),
                (None, Some(p)) => ArrivalSpec::Profile(p.clone()),
                _ => {
                    return Err(Error::Config(format!(
                        "job {}: source {} needs exactly one of `events` or `profile`",
                        self.name, src.operator
                    )))
                }
            };
            sources.push(SourceSetup { operator, arrivals });
        }
        let setup = JobSetup {
            graph,
            token_rate: self.token_rate,
        };
        Ok((setup, sources, local.len() as u32))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}
