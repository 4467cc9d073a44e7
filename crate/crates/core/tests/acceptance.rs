//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the test harness, so the report is printed on every
//! `cargo test`. Every criterion must pass except those listed in
//! `HOST_SENSITIVE`, which are reported but do not fail the build.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use priostream::context::{DataflowField, PriorityContext};
use priostream::harness::{write_outputs, Summary, LATENCIES_CSV, SUMMARY_JSON};
use priostream::model::{
    DataflowGraph, Event, JobId, Message, MessageId, Millis, OperatorId, OperatorKind, OperatorSpec, Sender,
    SyntheticCost, TimeDomain,
};
use priostream::par;
use priostream::policy::{edf_deadline, llf_deadline, Priority};
use priostream::presets::{noop_tenants, semantics_mix, tenant_mix, tenant_mix_with, token_sharing, two_job_example};
use priostream::progress::{frontier, progress_map_event, transform, RegressionModel};
use priostream::runtime::run;
use priostream::scenario::{ArrivalSpec, JobSetup, RuntimeConfig, Scenario, SourceSetup};
use priostream::scheduler::{Dispatcher, PriorityDispatcher, SchedulerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria measured on the wall clock. Their margin depends on the host
/// (core count, load), so a miss is printed but not fatal.
const HOST_SENSITIVE: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn summary(sc: &Scenario) -> Summary {
    Summary::from_report(&run(sc).expect("run"), sc.seed)
}

// 1. Formula exactness.

fn formulas() -> Outcome {
    let start = Instant::now();
    let worked = llf_deadline(30, 50, 20, 0);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut diff_ok = 0;
    for _ in 0..10_000 {
        let t_f = rng.random_range(-1_000_000..1_000_000);
        let l = rng.random_range(1..1_000_000);
        let c_op = rng.random_range(0..100_000);
        let c_path = rng.random_range(0..100_000);
        if edf_deadline(t_f, l, c_path) - llf_deadline(t_f, l, c_op, c_path) == c_op {
            diff_ok += 1;
        }
    }

    // A 2 s ingest delay fitted from history maps frontier progress
    // 1, 11, 21 to frontier times 3, 13, 23.
    let mut model = RegressionModel::default();
    for p in [1, 11, 21] {
        model.update(p, p + 2);
    }
    let mapped: Vec<Millis> = [1, 11, 21]
        .iter()
        .map(|&p| progress_map_event(&model, p).unwrap())
        .collect();
    // Messages inside three consecutive 10-unit windows are lifted to the
    // closing progress of their window and mapped with the same delay.
    let window = OperatorSpec::windowed(OperatorId(1), "w", OperatorKind::TumblingWindow { size: 10 });
    let lifted: Vec<(Millis, Millis)> = [4, 14, 24]
        .iter()
        .map(|&p| frontier(p, p + 2, 1, &window, &model, TimeDomain::EventTime).unwrap())
        .collect();
    let transformed: Vec<Millis> = [0, 9, 10].iter().map(|&p| transform(p, 1, 10).unwrap()).collect();
    let elapsed = start.elapsed();

    let pass = worked == 60
        && diff_ok == 10_000
        && mapped == [3, 13, 23]
        && lifted == [(10, 12), (20, 22), (30, 32)]
        && transformed == [10, 10, 20]
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("llf(30,50,20,0)={worked}; edf-llf=c_op on {diff_ok}/10000; map(1,11,21)={mapped:?}; {elapsed:.2?}"),
    )
}

// 2. Scheduler against a naive min-scan oracle.

fn message(seq: u64, target: u32, sender: u32, channel_seq: u64, local: i64, global: i64) -> Message {
    Message {
        id: MessageId(seq),
        job: JobId(0),
        target: OperatorId(target),
        sender: Sender::Operator(OperatorId(sender)),
        seq,
        channel_seq,
        p: local,
        t: 0,
        tuples: 1,
        pc: Some(PriorityContext {
            id: MessageId(seq),
            pri: Priority::new(local, global),
            field: DataflowField {
                p: local,
                t: 0,
                latency_constraint: 1,
            },
        }),
    }
}

fn key(m: &Message) -> (i64, i64, u64) {
    let pri = m.pc.as_ref().unwrap().pri;
    (pri.global, pri.local, m.seq)
}

/// Each operator offers the message with the smallest (local, seq); the
/// operator whose offer has the smallest (global, local, seq) wins.
fn oracle_pick(pending: &mut Vec<Message>) -> Option<Message> {
    let mut heads: BTreeMap<OperatorId, usize> = BTreeMap::new();
    for (i, m) in pending.iter().enumerate() {
        let order = |m: &Message| (key(m).1, m.seq);
        heads
            .entry(m.target)
            .and_modify(|h| {
                if order(m) < order(&pending[*h]) {
                    *h = i;
                }
            })
            .or_insert(i);
    }
    let best = heads.values().copied().min_by_key(|&i| key(&pending[i]))?;
    Some(pending.swap_remove(best))
}

/// One randomized workload: interleaved enqueues and dispatches on one
/// worker with quantum 0. Keys are random across channels and
/// non-decreasing in `local` within a channel, as conversions produce them.
fn oracle_run(seed: u64, messages: usize) -> (bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = rng.random_range(1..24u32);
    let senders = rng.random_range(1..4u32);
    let mut d = PriorityDispatcher::new(ops as usize, 1, 0, None);
    let mut pending = Vec::new();
    let mut channel: HashMap<(u32, u32), (u64, i64)> = HashMap::new();
    let mut last_dispatched: HashMap<(Sender, OperatorId), u64> = HashMap::new();
    let (mut sent, mut seq, mut now) = (0, 0u64, 0);
    let (mut same, mut fifo) = (true, true);
    while sent < messages || !pending.is_empty() {
        if sent < messages && (pending.is_empty() || rng.random_bool(0.55)) {
            let (target, sender) = (rng.random_range(0..ops), rng.random_range(0..senders));
            let ch = channel.entry((sender, target)).or_insert((0, 0));
            ch.1 += rng.random_range(0..5);
            let m = message(seq, target, sender, ch.0, ch.1, rng.random_range(0..1_000));
            ch.0 += 1;
            seq += 1;
            sent += 1;
            pending.push(m.clone());
            d.enqueue(m, None, now).unwrap();
        } else {
            now += rng.random_range(0..3);
            let got = d.next_for(0, now);
            let want = oracle_pick(&mut pending);
            same &= got.as_ref().map(|m| m.id) == want.as_ref().map(|m| m.id);
            if let Some(m) = got {
                if let Some(prev) = last_dispatched.insert((m.sender, m.target), m.channel_seq) {
                    fifo &= prev < m.channel_seq;
                }
            }
        }
    }
    (same, fifo)
}

fn scheduler_oracle() -> Outcome {
    let runs = 40;
    let results = par::map(&(0..runs).collect::<Vec<u64>>(), |&seed| {
        oracle_run(
            seed,
            if seed % 8 == 0 {
                10_000
            } else {
                1_000 + 200 * seed as usize
            },
        )
    });
    let same = results.iter().filter(|r| r.0).count();
    let fifo = results.iter().filter(|r| r.1).count();

    // Whole runs through the simulator on one worker with quantum 0.
    let sims = par::map(&(0..8).collect::<Vec<u64>>(), |&seed| {
        let mut sc = tenant_mix(SchedulerKind::Priority, 2.0, 5_000, seed).unwrap();
        sc.scheduler.workers = 1;
        sc.scheduler.quantum_ms = 0;
        run(&sc).unwrap().stats.fifo_violations
    });
    let sim_fifo = sims.iter().filter(|&&v| v == 0).count();
    outcome(
        same == runs as usize && fifo == runs as usize && sim_fifo == sims.len(),
        format!(
            "order matches oracle in {same}/{runs} runs; channel FIFO in {fifo}/{runs} runs and {sim_fifo}/{} simulations",
            sims.len()
        ),
    )
}

// 3. Reply-context aggregation against the static critical path.

fn random_dag(rng: &mut ChaCha8Rng, job: u32) -> (DataflowGraph, HashMap<OperatorId, Millis>) {
    let n = rng.random_range(1..=8u32);
    let mut costs = HashMap::new();
    let mut ops = Vec::new();
    for i in 0..n {
        let cost = rng.random_range(1..20);
        costs.insert(OperatorId(i), cost);
        let downstream: Vec<OperatorId> = (i + 1..n).filter(|_| rng.random_bool(0.4)).map(OperatorId).collect();
        ops.push(
            OperatorSpec::regular(OperatorId(i), format!("op{i}"))
                .with_cost(SyntheticCost::fixed(cost as f64))
                .with_downstream(downstream),
        );
    }
    let graph = DataflowGraph::new(JobId(job), format!("dag{job}"), ops, 10_000, TimeDomain::IngestionTime);
    (graph, costs)
}

fn critical_path_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut exact = 0;
    let mut checked_ops = 0;
    for d in 0..100 {
        let (graph, costs) = random_dag(&mut rng, d);
        let sources = graph
            .sources()
            .into_iter()
            .map(|s| SourceSetup {
                operator: s,
                arrivals: ArrivalSpec::Events(
                    (0..20)
                        .map(|k| Event {
                            source: s,
                            p: 100 * k,
                            t: 100 * k,
                            tuples: 1,
                        })
                        .collect(),
                ),
            })
            .collect();
        let want: Vec<Millis> = graph
            .operators
            .iter()
            .map(|op| graph.static_critical_path(op.id, &costs).unwrap())
            .collect();
        let sc = Scenario::new(
            vec![JobSetup {
                graph,
                token_rate: None,
            }],
            sources,
        );
        let report = run(&sc).unwrap();
        checked_ops += want.len();
        if report.rc_aggregates == want {
            exact += 1;
        }
    }
    outcome(
        exact == 100,
        format!("{exact}/100 DAGs exact ({checked_ops} operators)"),
    )
}

// 4. The two-job example and a brute-force feasibility oracle.

#[derive(Clone, Copy)]
struct Task {
    release: Millis,
    cost: Millis,
    after: Option<usize>,
    /// Deadline on completion, when this task emits an output.
    deadline: Option<Millis>,
}

/// Depth-first search over non-preemptive single-worker orders, each task
/// started as early as its release and predecessor allow.
fn feasible(tasks: &[Task], done: &mut Vec<Option<Millis>>, free: Millis) -> bool {
    if done.iter().all(Option::is_some) {
        return true;
    }
    for i in 0..tasks.len() {
        if done[i].is_some() {
            continue;
        }
        let t = tasks[i];
        let ready = match t.after {
            Some(p) => match done[p] {
                Some(end) => end,
                None => continue,
            },
            None => t.release,
        };
        let end = free.max(ready) + t.cost;
        if t.deadline.is_some_and(|d| end > d) {
            continue;
        }
        done[i] = Some(end);
        if feasible(tasks, done, end) {
            return true;
        }
        done[i] = None;
    }
    false
}

fn two_job() -> Outcome {
    let start = Instant::now();
    let mut tasks: Vec<Task> = (0..4)
        .map(|t| Task {
            release: t,
            cost: 25,
            after: None,
            deadline: Some(t + 1000),
        })
        .collect();
    for t in [5, 30] {
        let first = tasks.len();
        tasks.push(Task {
            release: t,
            cost: 10,
            after: None,
            deadline: None,
        });
        tasks.push(Task {
            release: t,
            cost: 10,
            after: Some(first),
            deadline: Some(t + 50),
        });
    }
    let exists = feasible(&tasks, &mut vec![None; tasks.len()], 0);

    let violations = |kind| {
        let r = run(&two_job_example(kind)).unwrap();
        r.outputs.iter().filter(|o| !o.deadline_met).count()
    };
    let (cameo, fifo, local) = (
        violations(SchedulerKind::Priority),
        violations(SchedulerKind::Fifo),
        violations(SchedulerKind::LocalFirst),
    );
    let elapsed = start.elapsed();
    outcome(
        exists && cameo == 0 && fifo >= 1 && local >= 1 && elapsed < Duration::from_secs(5),
        format!(
            "zero-violation schedule exists: {exists}; violations cameo {cameo}, fifo {fifo}, local-first {local}; {elapsed:.2?}"
        ),
    )
}

// 5. Multi-tenant overload.

fn overload() -> Outcome {
    let start = Instant::now();
    let rates = [2.0, 4.0, 6.0, 8.0];
    let kinds = [SchedulerKind::Priority, SchedulerKind::Fifo, SchedulerKind::LocalFirst];
    let cells: Vec<(f64, SchedulerKind)> = rates.iter().flat_map(|&r| kinds.map(|k| (r, k))).collect();
    let results = par::map(&cells, |&(rate, kind)| {
        let s = summary(&tenant_mix(kind, rate, 30_000, 11).unwrap());
        (s.group("LS").unwrap().latency.p99_ms.unwrap(), s.utilization)
    });
    let mut pass = true;
    let mut lines = Vec::new();
    let mut last_ratio = 0.0;
    for (i, &rate) in rates.iter().enumerate() {
        let [(cameo, util), (fifo, _), (local, _)] = [results[3 * i], results[3 * i + 1], results[3 * i + 2]];
        let overloaded = util >= 0.95;
        if overloaded {
            pass &= cameo <= fifo && cameo <= local;
            last_ratio = fifo.min(local) as f64 / cameo.max(1) as f64;
        }
        lines.push(format!(
            "ba {rate}: util {util:.2} p99 {cameo}/{fifo}/{local}{}",
            if overloaded { "" } else { " (not overloaded)" }
        ));
    }
    let elapsed = start.elapsed();
    pass &= last_ratio >= 1.5 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "LS p99 cameo/fifo/local-first: {}; improvement at highest {last_ratio:.1}x; {elapsed:.2?}",
            lines.join(", ")
        ),
    )
}

// 6. Token fair sharing.

fn token_shares() -> Outcome {
    let report = run(&token_sharing(10_000, 60_000)).unwrap();
    let mut counts = [0u64; 3];
    for row in &report.trace {
        // Each job is a two-operator chain; odd operator ids are sinks.
        if row.operator % 2 == 1 && (25_000..60_000).contains(&row.time) {
            counts[row.job as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect();
    let pass = shares
        .iter()
        .zip([0.2, 0.4, 0.4])
        .all(|(s, want)| (s - want).abs() <= 0.05);
    outcome(
        pass,
        format!(
            "steady-state shares {:.3}/{:.3}/{:.3} over {total} completions",
            shares[0], shares[1], shares[2]
        ),
    )
}

// 7. Perturbation robustness.

fn perturbation() -> Outcome {
    // LS windows are 1000 ms: sigma 0, window/10 and window.
    let sigmas = [0.0, 100.0, 1000.0];
    let stats = par::map(&sigmas, |&sigma| {
        let rt = RuntimeConfig {
            cost_noise_sigma_ms: sigma,
            ..Default::default()
        };
        let s = summary(&tenant_mix_with(SchedulerKind::Priority, 4.0, 30_000, 5, rt).unwrap());
        let ls = &s.group("LS").unwrap().latency;
        (ls.median_ms.unwrap(), ls.p90_ms.unwrap())
    });
    let (m0, p0) = stats[0];
    let median_change = (stats[1].0 - m0).abs() as f64 / m0 as f64;
    let p90_ratio = stats[2].1 as f64 / p0 as f64;
    outcome(
        median_change < 0.10 && p90_ratio < 2.0,
        format!(
            "LS median {}/{}/{} ms (change at window/10 {:.1}%); p90 {}/{}/{} ms (x{p90_ratio:.2} at window)",
            stats[0].0,
            stats[1].0,
            stats[2].0,
            100.0 * median_change,
            stats[0].1,
            stats[1].1,
            stats[2].1
        ),
    )
}

// 8. Semantics-awareness ablation.

fn semantics() -> Outcome {
    let rates = [0.5, 1.0, 1.5, 2.0];
    let variants = [
        (SchedulerKind::Priority, true),
        (SchedulerKind::Priority, false),
        (SchedulerKind::Fifo, true),
    ];
    let cells: Vec<(f64, SchedulerKind, bool)> = rates.iter().flat_map(|&r| variants.map(|(k, s)| (r, k, s))).collect();
    let medians = par::map(&cells, |&(rate, kind, aware)| {
        let s = summary(&semantics_mix(kind, rate, aware, 3).unwrap());
        (
            s.group("BA").unwrap().latency.median_ms.unwrap(),
            s.group("LS").unwrap().latency.median_ms.unwrap(),
        )
    });
    let mut never_improves = true;
    let mut beats_fifo = true;
    let mut worse_at_1 = 0.0;
    let mut lines = Vec::new();
    for (i, &rate) in rates.iter().enumerate() {
        let (with, without, fifo) = (medians[3 * i], medians[3 * i + 1], medians[3 * i + 2]);
        never_improves &= without.0 >= with.0;
        beats_fifo &= without.1 < fifo.1;
        let worse = without.0 as f64 / with.0 as f64 - 1.0;
        if rate == 1.0 {
            worse_at_1 = worse;
        }
        lines.push(format!(
            "r {rate}: BA {}/{} LS {}/{}",
            with.0, without.0, without.1, fifo.1
        ));
    }
    outcome(
        never_improves && worse_at_1 >= 0.10 && beats_fifo,
        format!(
            "BA p50 with/without semantics, LS p50 without/fifo: {}; +{:.0}% at r 1.0",
            lines.join(", "),
            100.0 * worse_at_1
        ),
    )
}

// 9. Overhead report in wall mode.

fn overhead() -> Outcome {
    let mut runs: Vec<Summary> = (0..3)
        .map(|_| summary(&noop_tenants(320, 1000, 30_000, SchedulerKind::Priority)))
        .collect();
    runs.sort_by(|a, b| a.overhead.share.total_cmp(&b.overhead.share));
    let o = &runs[1].overhead;
    let separated = o.unit == "ns" && o.scheduling > 0 && o.priority_generation > 0 && o.execution > 0;
    let total = (o.scheduling + o.priority_generation + o.execution) as f64;
    outcome(
        separated && o.share < 0.25,
        format!(
            "median of 3 runs: scheduling {:.1}%, priority generation {:.1}%, combined {:.1}% of total",
            100.0 * o.scheduling as f64 / total,
            100.0 * o.priority_generation as f64 / total,
            100.0 * o.share
        ),
    )
}

// 10. Determinism.

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = [
        tenant_mix(SchedulerKind::Priority, 6.0, 10_000, 21).unwrap(),
        tenant_mix(SchedulerKind::LocalFirst, 6.0, 10_000, 21).unwrap(),
        semantics_mix(SchedulerKind::Priority, 1.0, true, 8).unwrap(),
        token_sharing(5_000, 20_000),
    ];
    let mut identical = 0;
    for (i, sc) in scenarios.iter().enumerate() {
        let outs: Vec<_> = (0..2)
            .map(|k| {
                let out = dir.path().join(format!("{i}-{k}"));
                write_outputs(&out, &run(sc).unwrap(), sc.seed, false).unwrap();
                out
            })
            .collect();
        let same = [LATENCIES_CSV, SUMMARY_JSON]
            .iter()
            .all(|f| std::fs::read(outs[0].join(f)).unwrap() == std::fs::read(outs[1].join(f)).unwrap());
        identical += usize::from(same);
    }
    outcome(
        identical == scenarios.len(),
        format!(
            "{identical}/{} scenarios byte-identical across repeats",
            scenarios.len()
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "formula exactness", formulas),
        (2, "scheduler oracle", scheduler_oracle),
        (3, "critical-path oracle", critical_path_oracle),
        (4, "two-job example", two_job),
        (5, "multi-tenant overload", overload),
        (6, "token fair sharing", token_shares),
        (7, "perturbation robustness", perturbation),
        (8, "semantics ablation", semantics),
        (9, "overhead report", overhead),
        (10, "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (n, name, check) in criteria {
        let o = check();
        println!(
            "criterion {n:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass && !HOST_SENSITIVE.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria failed: {unexpected:?}");
        std::process::exit(1);
    }
}
