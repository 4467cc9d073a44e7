//! Ready-made scenarios used by the acceptance suite, the benches, and the
//! exploration example.

use crate::error::Result;
use crate::model::{DataflowGraph, Event, JobId, Millis, OperatorId, OperatorSpec, SyntheticCost, TimeDomain};
use crate::policy::PolicyKind;
use crate::scenario::{ArrivalSpec, JobSetup, RuntimeConfig, Scenario, SourceSetup};
use crate::scheduler::{SchedulerConfig, SchedulerKind};
use crate::workload::build_scenario;
use crate::workload::{ArrivalProcess, SourceProfile, TenantGroupSpec};

fn single(id: u32, name: &str, cost: f64) -> OperatorSpec {
    let mut op = OperatorSpec::regular(OperatorId(id), name).with_cost(SyntheticCost::fixed(cost));
    op.cost_hint = Some(cost as Millis);
    op
}

fn scripted(op: u32, events: &[(Millis, u64)]) -> SourceSetup {
    SourceSetup {
        operator: OperatorId(op),
        arrivals: ArrivalSpec::Events(
            events
                .iter()
                .map(|&(t, tuples)| Event {
                    source: OperatorId(op),
                    p: t,
                    t,
                    tuples,
                })
                .collect(),
        ),
    }
}

/// Job 1 is a lax batch operator (L = 1000) with four 25 ms messages at
/// t = 0..3. Job 2 is a two-operator chain (10 ms each, L = 50) fed at
/// t = 5 and t = 30. One worker.
pub fn two_job_example(kind: SchedulerKind) -> Scenario {
    let j1 = DataflowGraph::new(
        JobId(1),
        "batch",
        vec![single(0, "agg", 25.0)],
        1000,
        TimeDomain::IngestionTime,
    )
    .with_group("BA");
    let j2 = DataflowGraph::new(
        JobId(2),
        "alert",
        vec![
            single(1, "filter", 10.0).with_downstream([OperatorId(2)]),
            single(2, "detect", 10.0),
        ],
        50,
        TimeDomain::IngestionTime,
    )
    .with_group("LS");
    Scenario::new(
        vec![
            JobSetup {
                graph: j1,
                token_rate: None,
            },
            JobSetup {
                graph: j2,
                token_rate: None,
            },
        ],
        vec![
            scripted(0, &[(0, 1), (1, 1), (2, 1), (3, 1)]),
            scripted(1, &[(5, 1), (30, 1)]),
        ],
    )
    .with_scheduler(SchedulerConfig {
        kind,
        workers: 1,
        ..Default::default()
    })
}

/// The desk-scale multi-tenant mix: 4 LS and 8 BA jobs on four workers,
/// with BA sources sending `ba_rate` messages per second.
pub fn tenant_mix(kind: SchedulerKind, ba_rate: f64, horizon: Millis, seed: u64) -> Result<Scenario> {
    tenant_mix_with(kind, ba_rate, horizon, seed, RuntimeConfig::default())
}

pub fn tenant_mix_with(
    kind: SchedulerKind,
    ba_rate: f64,
    horizon: Millis,
    seed: u64,
    runtime: RuntimeConfig,
) -> Result<Scenario> {
    let mut ls = TenantGroupSpec::ls();
    ls.source.end_ms = horizon;
    let mut ba = TenantGroupSpec::ba();
    ba.source.end_ms = horizon;
    ba.source.rate = ba_rate;
    let sched = SchedulerConfig {
        kind,
        workers: 4,
        ..Default::default()
    };
    build_scenario(&[ls, ba], sched, runtime, seed)
}

/// Three two-operator jobs sharing one worker under the token policy with
/// 12, 24 and 24 tokens per second. Each job offers 100 messages per
/// second costing 20 ms in total, starting `stagger` apart.
pub fn token_sharing(stagger: Millis, horizon: Millis) -> Scenario {
    let rates = [12u32, 24, 24];
    let mut jobs = Vec::new();
    let mut sources = Vec::new();
    for (j, &rate) in rates.iter().enumerate() {
        let src = 2 * j as u32;
        let graph = DataflowGraph::new(
            JobId(j as u32),
            format!("tenant{j}"),
            vec![
                single(src, "parse", 10.0).with_downstream([OperatorId(src + 1)]),
                single(src + 1, "store", 10.0),
            ],
            1000,
            TimeDomain::IngestionTime,
        )
        .with_group(format!("tenant{j}"));
        jobs.push(JobSetup {
            graph,
            token_rate: Some(rate),
        });
        sources.push(SourceSetup {
            operator: OperatorId(src),
            arrivals: ArrivalSpec::Profile(SourceProfile {
                rate: 100.0,
                tuples_per_message: 1,
                process: ArrivalProcess::Constant,
                start_ms: j as Millis * stagger,
                end_ms: horizon,
                ..Default::default()
            }),
        });
    }
    Scenario::new(jobs, sources)
        .with_scheduler(SchedulerConfig {
            kind: SchedulerKind::Priority,
            policy: PolicyKind::Token,
            workers: 1,
            ..Default::default()
        })
        .with_runtime(RuntimeConfig {
            trace: true,
            ..Default::default()
        })
}

/// `tenants` two-operator jobs of zero synthetic cost, each fed one
/// message of `tuples` tuples per second for `horizon`. One worker, wall
/// clock.
pub fn noop_tenants(tenants: usize, tuples: u64, horizon: Millis, kind: SchedulerKind) -> Scenario {
    let mut jobs = Vec::with_capacity(tenants);
    let mut sources = Vec::with_capacity(tenants);
    for j in 0..tenants {
        let src = 2 * j as u32;
        let graph = DataflowGraph::new(
            JobId(j as u32),
            format!("noop{j}"),
            vec![
                OperatorSpec::regular(OperatorId(src), "ingest").with_downstream([OperatorId(src + 1)]),
                OperatorSpec::regular(OperatorId(src + 1), "emit"),
            ],
            1000,
            TimeDomain::IngestionTime,
        )
        .with_group("noop");
        jobs.push(JobSetup {
            graph,
            token_rate: None,
        });
        sources.push(SourceSetup {
            operator: OperatorId(src),
            arrivals: ArrivalSpec::Profile(SourceProfile {
                tuples_per_message: tuples,
                end_ms: horizon,
                ..Default::default()
            }),
        });
    }
    Scenario::new(jobs, sources)
        .with_scheduler(SchedulerConfig {
            kind,
            workers: 1,
            ..Default::default()
        })
        .with_runtime(RuntimeConfig {
            mode: crate::scenario::ClockMode::Wall,
            ..Default::default()
        })
}

/// Window-semantics mix on two workers: 2 LS jobs plus 8 BA jobs, half with
/// 2 s and half with 10 s tumbling windows. Every source sends bursty
/// (Pareto-sized) batches; BA sources send `ba_rate` messages per second.
pub fn semantics_mix(kind: SchedulerKind, ba_rate: f64, semantics_aware: bool, seed: u64) -> Result<Scenario> {
    let horizon = 60_000;
    let source = SourceProfile {
        process: ArrivalProcess::Pareto { shape: 2.0, scale: 1.0 },
        end_ms: horizon,
        ..Default::default()
    };
    let ls = TenantGroupSpec {
        jobs: 2,
        source: source.clone(),
        ..TenantGroupSpec::ls()
    };
    let ba = |window_ms| TenantGroupSpec {
        jobs: 4,
        window_ms,
        source: SourceProfile {
            rate: ba_rate,
            ..source.clone()
        },
        ..TenantGroupSpec::ba()
    };
    let sched = SchedulerConfig {
        kind,
        workers: 2,
        ..Default::default()
    };
    let runtime = RuntimeConfig {
        semantics_aware,
        ..Default::default()
    };
    build_scenario(&[ls, ba(2_000), ba(10_000)], sched, runtime, seed)
}
