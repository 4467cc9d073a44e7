//! Synthetic multi-tenant workloads: per-source arrival streams, tenant
//! groups of windowed aggregation pipelines, and latency-constraint
//! calibration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    DataflowGraph, Event, JobId, Millis, OperatorId, OperatorKind, OperatorSpec, SyntheticCost, TimeDomain,
};
use crate::runtime::simulate;
use crate::scenario::{ArrivalSpec, JobSetup, RuntimeConfig, Scenario, SourceSetup};
use crate::scheduler::SchedulerConfig;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ArrivalProcess {
    /// Evenly spaced messages, each landing on the last tick of its period.
    Constant,
    /// Exponential inter-arrival gaps.
    Poisson,
    /// Constant spacing; per-message tuple counts scaled by a Pareto draw
    /// normalized to mean 1.
    Pareto { shape: f64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceProfile {
    /// Messages per second before skew.
    pub rate: f64,
    pub tuples_per_message: u64,
    pub process: ArrivalProcess,
    /// Rate multiplier of this source.
    pub skew: f64,
    pub start_ms: Millis,
    /// Exclusive end of generation.
    pub end_ms: Millis,
    /// Gap between an event's logical time and its observation, for
    /// event-time streams.
    pub event_delay_ms: Millis,
}

impl Default for SourceProfile {
    fn default() -> Self {
        SourceProfile {
            rate: 1.0,
            tuples_per_message: 1000,
            process: ArrivalProcess::Constant,
            skew: 1.0,
            start_ms: 0,
            end_ms: 60_000,
            event_delay_ms: 0,
        }
    }
}

impl SourceProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDistribution(m.to_string()));
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad("rate must be positive");
        }
        if !(self.skew > 0.0 && self.skew.is_finite()) {
            return bad("skew must be positive");
        }
        if self.tuples_per_message == 0 {
            return bad("tuples_per_message must be positive");
        }
        if self.end_ms <= self.start_ms {
            return bad("horizon must be positive");
        }
        if self.event_delay_ms < 0 {
            return bad("event delay must not be negative");
        }
        if let ArrivalProcess::Pareto { shape, scale } = self.process {
            if shape.is_nan() || shape <= 1.0 {
                return bad("pareto shape must exceed 1 for a finite mean");
            }
            if scale.is_nan() || scale <= 0.0 {
                return bad("pareto scale must be positive");
            }
        }
        Ok(())
    }

    /// Mean gap between messages in milliseconds.
    pub fn period_ms(&self) -> f64 {
        1000.0 / (self.rate * self.skew)
    }

    /// Same tuple rate carried in batches of `batch` tuples.
    pub fn with_batch(&self, batch: u64) -> SourceProfile {
        let tuple_rate = self.rate * self.tuples_per_message as f64;
        SourceProfile {
            rate: tuple_rate / batch as f64,
            tuples_per_message: batch,
            ..self.clone()
        }
    }
}

/// Lazily generated event stream of one source.
#[derive(Clone, Debug)]
pub struct ArrivalStream {
    profile: SourceProfile,
    source: OperatorId,
    rng: ChaCha8Rng,
    k: u64,
    clock: f64,
    last: Millis,
    exp: Option<Exp<f64>>,
    pareto: Option<(Pareto<f64>, f64)>,
}

impl ArrivalStream {
    pub fn new(profile: SourceProfile, source: OperatorId, seed: u64) -> Result<Self> {
        profile.validate()?;
        let period = profile.period_ms();
        let exp = match profile.process {
            ArrivalProcess::Poisson => {
                Some(Exp::new(1.0 / period).map_err(|e| Error::InvalidDistribution(e.to_string()))?)
            }
            _ => None,
        };
        let pareto = match profile.process {
            ArrivalProcess::Pareto { shape, scale } => {
                let d = Pareto::new(scale, shape).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
                Some((d, scale * shape / (shape - 1.0)))
            }
            _ => None,
        };
        Ok(ArrivalStream {
            clock: profile.start_ms as f64,
            last: Millis::MIN,
            profile,
            source,
            rng: ChaCha8Rng::seed_from_u64(seed),
            k: 0,
            exp,
            pareto,
        })
    }
}

impl Iterator for ArrivalStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let generated = match &self.exp {
            Some(exp) => {
                self.clock += exp.sample(&mut self.rng);
                self.clock.floor() as Millis
            }
            None => {
                let end = self.profile.start_ms as f64 + (self.k + 1) as f64 * self.profile.period_ms();
                end.floor() as Millis - 1
            }
        }
        .max(self.last);
        if generated >= self.profile.end_ms {
            return None;
        }
        self.k += 1;
        self.last = generated;
        let tuples = match &self.pareto {
            Some((d, mean)) => {
                let x: f64 = d.sample(&mut self.rng);
                ((self.profile.tuples_per_message as f64 * x / mean).round() as u64).max(1)
            }
            None => self.profile.tuples_per_message,
        };
        Some(Event {
            source: self.source,
            p: generated,
            t: generated + self.profile.event_delay_ms,
            tuples,
        })
    }
}

/// Events of `profile` over `horizon` milliseconds from its start.
pub fn generate_arrivals(profile: &SourceProfile, horizon: Millis, seed: u64) -> Result<ArrivalStream> {
    if horizon <= 0 {
        return Err(Error::InvalidDistribution("horizon must be positive".into()));
    }
    let profile = SourceProfile {
        end_ms: profile.start_ms + horizon,
        ..profile.clone()
    };
    ArrivalStream::new(profile, OperatorId(0), seed)
}

/// Per-source seed derived from a run seed.
pub fn source_seed(seed: u64, source: OperatorId) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (source.0 as u64).wrapping_add(0xD1B5_4A32_D192_ED03).rotate_left(17)
}

/// `n` draws from Pareto(scale, shape).
pub fn pareto_samples(shape: f64, scale: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let d = Pareto::new(scale, shape).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| d.sample(&mut rng)).collect())
}

/// Gaussian noise source for cost perturbation.
pub fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let d = rand_distr::Normal::new(0.0, sigma).expect("finite sigma");
    d.sample(rng)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// Latency-sensitive tenants.
    Ls,
    /// Bulk-analytics tenants.
    Ba,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TenantGroupSpec {
    pub kind: GroupKind,
    /// Statistics label; defaults to `LS` or `BA`.
    pub name: String,
    pub jobs: usize,
    /// Operators per stage, source stage first.
    pub parallelism: Vec<usize>,
    pub window_ms: Millis,
    /// Slide of the first window stage; tumbling when absent.
    pub slide_ms: Option<Millis>,
    pub latency_constraint_ms: Millis,
    pub source: SourceProfile,
    /// Rate multipliers assigned round-robin to a job's sources.
    pub skew: Vec<f64>,
    /// Cost of each stage, source stage first.
    pub stage_costs: Vec<SyntheticCost>,
    /// Tuples carried by each window result.
    pub output_tuples: u64,
    pub time_domain: TimeDomain,
    pub token_rate: Option<u32>,
    /// Job `j` of the group starts `j * stagger_ms` after the source start.
    pub stagger_ms: Millis,
    /// Explicit job ids; assigned sequentially when empty.
    pub job_ids: Vec<u32>,
}

impl Default for TenantGroupSpec {
    fn default() -> Self {
        TenantGroupSpec::ls()
    }
}

impl TenantGroupSpec {
    pub fn ls() -> Self {
        TenantGroupSpec {
            kind: GroupKind::Ls,
            name: "LS".into(),
            jobs: 4,
            parallelism: vec![64, 8, 2, 1],
            window_ms: 1000,
            slide_ms: None,
            latency_constraint_ms: 800,
            source: SourceProfile::default(),
            skew: vec![1.0],
            stage_costs: vec![
                SyntheticCost {
                    per_ktuple_ms: 1.0,
                    ..Default::default()
                },
                SyntheticCost {
                    base_ms: 1.0,
                    trigger_ms: 4.0,
                    ..Default::default()
                },
                SyntheticCost {
                    base_ms: 1.0,
                    trigger_ms: 4.0,
                    ..Default::default()
                },
                SyntheticCost::fixed(1.0),
            ],
            output_tuples: 100,
            time_domain: TimeDomain::IngestionTime,
            token_rate: None,
            stagger_ms: 0,
            job_ids: Vec::new(),
        }
    }

    pub fn ba() -> Self {
        TenantGroupSpec {
            kind: GroupKind::Ba,
            name: "BA".into(),
            jobs: 8,
            window_ms: 10_000,
            latency_constraint_ms: 7_200_000,
            ..TenantGroupSpec::ls()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config(format!("group {} has no jobs", self.name)));
        }
        if self.parallelism.len() != 4 || self.parallelism.contains(&0) {
            return Err(Error::Config(format!(
                "group {}: parallelism must list four positive stage sizes",
                self.name
            )));
        }
        if self.stage_costs.len() != 4 {
            return Err(Error::Config(format!(
                "group {}: stage_costs needs four entries",
                self.name
            )));
        }
        if self.window_ms <= 0 || self.slide_ms.is_some_and(|s| s <= 0) {
            return Err(Error::Config(format!(
                "group {}: window and slide must be positive",
                self.name
            )));
        }
        if self.latency_constraint_ms <= 0 {
            return Err(Error::Config(format!(
                "group {}: latency constraint must be positive",
                self.name
            )));
        }
        if self.skew.is_empty() {
            return Err(Error::Config(format!("group {}: skew list is empty", self.name)));
        }
        if !self.job_ids.is_empty() && self.job_ids.len() != self.jobs {
            return Err(Error::Config(format!(
                "group {}: job_ids must list one id per job",
                self.name
            )));
        }
        self.source.validate()
    }

    pub fn sources_per_job(&self) -> usize {
        self.parallelism[0]
    }
}

/// Builds one windowed aggregation pipeline with operator ids starting at
/// `first_op`: regular sources, two window stages, and a regular sink.
pub fn pipeline(spec: &TenantGroupSpec, job: JobId, name: String, first_op: u32) -> DataflowGraph {
    let slide = spec.slide_ms.unwrap_or(spec.window_ms);
    let kinds = [
        OperatorKind::Regular,
        match spec.slide_ms {
            Some(s) if s != spec.window_ms => OperatorKind::SlidingWindow {
                size: spec.window_ms,
                slide: s,
            },
            _ => OperatorKind::TumblingWindow { size: spec.window_ms },
        },
        OperatorKind::TumblingWindow { size: slide },
        OperatorKind::Regular,
    ];
    let mut offsets = Vec::with_capacity(4);
    let mut next = first_op;
    for &n in &spec.parallelism {
        offsets.push(next);
        next += n as u32;
    }
    let mut ops = Vec::with_capacity((next - first_op) as usize);
    for (stage, &n) in spec.parallelism.iter().enumerate() {
        for i in 0..n {
            let id = OperatorId(offsets[stage] + i as u32);
            let mut op = OperatorSpec::windowed(id, format!("{name}.s{stage}.{i}"), kinds[stage])
                .with_stage(stage as u32)
                .with_cost(spec.stage_costs[stage]);
            op.output_tuples = spec.output_tuples;
            if let Some(&m) = spec.parallelism.get(stage + 1) {
                let j = i * m / n;
                op.downstream = vec![OperatorId(offsets[stage + 1] + j as u32)];
            }
            ops.push(op);
        }
    }
    DataflowGraph::new(job, name, ops, spec.latency_constraint_ms, spec.time_domain).with_group(spec.name.clone())
}

/// Materializes tenant groups into a scenario. Jobs get consecutive ids
/// unless a group lists its own; operator ids are dense across all jobs.
pub fn build_scenario(
    groups: &[TenantGroupSpec],
    scheduler: SchedulerConfig,
    runtime: RuntimeConfig,
    seed: u64,
) -> Result<Scenario> {
    let mut jobs = Vec::new();
    let mut sources = Vec::new();
    let mut next_op = 0u32;
    let mut next_job = 0u32;
    let mut used = std::collections::BTreeSet::new();
    for group in groups {
        group.validate()?;
        for j in 0..group.jobs {
            let id = match group.job_ids.get(j) {
                Some(&id) => id,
                None => {
                    while used.contains(&next_job) {
                        next_job += 1;
                    }
                    next_job
                }
            };
            if !used.insert(id) {
                return Err(Error::DuplicateJob(JobId(id).to_string()));
            }
            let graph = pipeline(group, JobId(id), format!("{}{}", group.name, j), next_op);
            next_op += group.parallelism.iter().sum::<usize>() as u32;
            let start = group.source.start_ms + j as Millis * group.stagger_ms;
            for (k, src) in graph.sources().into_iter().enumerate() {
                sources.push(SourceSetup {
                    operator: src,
                    arrivals: ArrivalSpec::Profile(SourceProfile {
                        skew: group.source.skew * group.skew[k % group.skew.len()],
                        start_ms: start,
                        ..group.source.clone()
                    }),
                });
            }
            jobs.push(JobSetup {
                graph,
                token_rate: group.token_rate,
            });
        }
    }
    let scenario = Scenario {
        jobs,
        sources,
        scheduler,
        runtime,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Nearest-rank percentile of an unsorted sample; `q` in (0, 100].
pub fn nearest_rank(values: &[Millis], q: f64) -> Option<Millis> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

pub const CALIBRATION_UTILIZATION: f64 = 0.5;

/// Latency constraint for `group`'s job shape: run `k` instances of the job
/// alone, growing `k` until modeled worker utilization reaches one half,
/// and return twice the 95th percentile latency.
///
/// A zero-cost job never loads the workers; a single instance is used.
/// The result is at least 1 ms.
pub fn calibrate_constraint(
    group: &TenantGroupSpec,
    scheduler: &SchedulerConfig,
    runtime: &RuntimeConfig,
    seed: u64,
    max_instances: usize,
) -> Result<Millis> {
    let run = |k: usize| -> Result<(f64, Vec<Millis>)> {
        let spec = TenantGroupSpec {
            jobs: k,
            job_ids: Vec::new(),
            token_rate: None,
            stagger_ms: 0,
            ..group.clone()
        };
        let scenario = build_scenario(&[spec], scheduler.clone(), runtime.clone(), seed)?;
        let report = simulate(&scenario)?;
        let util = report.stats.utilization(scheduler.workers);
        Ok((util, report.outputs.iter().map(|o| o.latency).collect()))
    };
    let (util, mut latencies) = run(1)?;
    if util > CALIBRATION_UTILIZATION + 0.1 {
        return Err(Error::CalibrationUnreachable(format!(
            "one instance already loads the workers to {:.0}%",
            util * 100.0
        )));
    }
    if util > 0.0 && util < CALIBRATION_UTILIZATION {
        // Utilization grows linearly in k; jump near the target and walk up.
        let mut k = ((CALIBRATION_UTILIZATION / util).floor() as usize).max(1);
        loop {
            if k > max_instances {
                return Err(Error::CalibrationUnreachable(format!(
                    "more than {max_instances} instances needed"
                )));
            }
            let (u, l) = run(k)?;
            if u >= CALIBRATION_UTILIZATION {
                latencies = l;
                break;
            }
            k += 1;
        }
    }
    let p95 = nearest_rank(&latencies, 95.0)
        .ok_or_else(|| Error::CalibrationUnreachable("the job produced no outputs".into()))?;
    Ok((2 * p95).max(1))
}
