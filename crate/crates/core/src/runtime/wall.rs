//! Wall-clock execution on real threads, used to measure scheduling and
//! priority-generation overhead against execution time.
//!
//! Every source event is injected up front, so the run starts saturated
//! and no feeder thread competes with the workers for cores. Worker
//! threads pull from one shared dispatcher. Operator state is locked per
//! operator, and single activation guarantees the lock is uncontended
//! except against acknowledgements.

use std::collections::HashMap;
use std::hint::black_box;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::context::{ContextHandler, Converter};
use crate::error::{Error, Result};
use crate::model::{Event, Message, MessageId, Millis, OperatorId, OperatorSpec, OutputRecord, Sender};
use crate::scenario::{ArrivalSpec, Scenario};
use crate::scheduler::{build_dispatcher, Dispatcher, SchedulerKind};
use crate::workload::{source_seed, ArrivalStream};

use super::{job_infos, OperatorState, Overhead, RunReport, RunStats, Wiring};

struct Queue {
    dispatcher: Box<dyn Dispatcher>,
    send_seq: u64,
    channels: HashMap<(Sender, OperatorId), u64>,
    feeding: bool,
    in_flight: usize,
    failure: Option<Error>,
}

impl Queue {
    fn stamp(&mut self, msg: &mut Message) {
        msg.seq = self.send_seq;
        self.send_seq += 1;
        let ch = self.channels.entry((msg.sender, msg.target)).or_insert(0);
        msg.channel_seq = *ch;
        *ch += 1;
    }
}

#[derive(Default)]
struct Clocks {
    scheduling: AtomicU64,
    generation: AtomicU64,
    execution: AtomicU64,
}

impl Clocks {
    /// Charges the time since `mark` to `counter` and moves `mark` to now,
    /// so back-to-back regions share one clock read.
    fn lap(counter: &AtomicU64, mark: &mut Instant) {
        let now = Instant::now();
        counter.fetch_add((now - *mark).as_nanos() as u64, Ordering::Relaxed);
        *mark = now;
    }
}

struct Shared<'a> {
    sc: &'a Scenario,
    queue: Mutex<Queue>,
    ready: Condvar,
    states: Vec<Mutex<OperatorState>>,
    specs: Vec<OperatorSpec>,
    converters: Vec<Mutex<Converter>>,
    ingress: Vec<Mutex<Option<Converter>>>,
    job_of: Vec<usize>,
    outputs: Mutex<Vec<OutputRecord>>,
    clocks: Clocks,
    next_id: AtomicU64,
    executed: AtomicU64,
    busy_ns: Vec<AtomicU64>,
    prioritized: bool,
    start: Instant,
}

impl Shared<'_> {
    fn at(&self, instant: Instant) -> Millis {
        (instant - self.start).as_millis() as Millis
    }

    fn fresh_id(&self) -> MessageId {
        MessageId(self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn fail(&self, e: Error) {
        let mut q = self.queue.lock().expect("queue lock");
        q.failure.get_or_insert(e);
        self.ready.notify_all();
    }
}

/// Runs `scenario` on real threads. Latencies are measured against the wall
/// clock from the moment each event is injected.
pub fn run_wall(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let workers = scenario.scheduler.workers;
    let Wiring {
        job_of,
        states,
        converters,
        ingress,
    } = Wiring::new(scenario);
    let mut events = Vec::new();
    for src in &scenario.sources {
        match &src.arrivals {
            ArrivalSpec::Events(list) => events.extend(list.iter().cloned().map(|mut e| {
                e.source = src.operator;
                e
            })),
            ArrivalSpec::Profile(p) => events.extend(ArrivalStream::new(
                p.clone(),
                src.operator,
                source_seed(scenario.seed, src.operator),
            )?),
        }
    }
    events.sort_by_key(|e| (e.t, e.source));

    let shared = Shared {
        sc: scenario,
        queue: Mutex::new(Queue {
            dispatcher: build_dispatcher(&scenario.scheduler, scenario.operator_count()),
            send_seq: 0,
            channels: HashMap::new(),
            feeding: true,
            in_flight: 0,
            failure: None,
        }),
        ready: Condvar::new(),
        specs: states.iter().map(|s| s.spec.clone()).collect(),
        states: states.into_iter().map(Mutex::new).collect(),
        converters: converters.into_iter().map(Mutex::new).collect(),
        ingress: ingress.into_iter().map(Mutex::new).collect(),
        job_of,
        outputs: Mutex::new(Vec::new()),
        clocks: Clocks::default(),
        next_id: AtomicU64::new(0),
        executed: AtomicU64::new(0),
        busy_ns: (0..workers).map(|_| AtomicU64::new(0)).collect(),
        prioritized: scenario.scheduler.kind == SchedulerKind::Priority,
        start: Instant::now(),
    };

    let mut job_tuples = vec![0u64; scenario.jobs.len()];
    let mut tuples = 0;
    for e in &events {
        job_tuples[shared.job_of[e.source.index()]] += e.tuples;
        tuples += e.tuples;
    }
    let n_events = events.len() as u64;

    feed(&shared, events);
    thread::scope(|s| {
        for w in 0..workers {
            let shared = &shared;
            s.spawn(move || worker(shared, w));
        }
    });

    let q = shared.queue.into_inner().expect("queue lock");
    if let Some(e) = q.failure {
        return Err(e);
    }
    let end = shared.start.elapsed().as_millis() as Millis;
    let mut outputs = shared.outputs.into_inner().expect("outputs lock");
    outputs.sort_by_key(|o| (o.emit_time, o.job_id, o.sink_id, o.p_out));
    let busy_ms: Vec<Millis> = shared
        .busy_ns
        .iter()
        .map(|b| (b.load(Ordering::Relaxed) / 1_000_000) as Millis)
        .collect();
    let rc_aggregates = shared
        .converters
        .into_iter()
        .map(|c| c.into_inner().expect("converter lock").rc.aggregate())
        .collect();
    let states: Vec<OperatorState> = shared
        .states
        .into_iter()
        .map(|m| m.into_inner().expect("state lock"))
        .collect();
    let stats = RunStats {
        mode: "wall".into(),
        start_time: 0,
        end_time: end,
        events_ingested: n_events,
        tuples_ingested: tuples,
        messages_executed: shared.executed.load(Ordering::Relaxed),
        late_messages: states.iter().map(|s| s.late_messages).sum(),
        windows_triggered: states.iter().map(|s| s.windows_triggered).sum(),
        window_outputs: states
            .iter()
            .filter(|s| s.spec.kind.is_windowed())
            .map(|s| s.windows_triggered)
            .sum(),
        total_cost_ms: busy_ms.iter().sum(),
        busy_ms,
        sched: q.dispatcher.counters(),
        overhead: Overhead {
            unit: "ns".into(),
            scheduling: shared.clocks.scheduling.load(Ordering::Relaxed),
            priority_generation: shared.clocks.generation.load(Ordering::Relaxed),
            execution: shared.clocks.execution.load(Ordering::Relaxed),
        },
        ..Default::default()
    };
    Ok(RunReport {
        scheduler: scenario.scheduler.kind,
        policy: scenario.scheduler.policy,
        workers,
        jobs: job_infos(scenario, &job_tuples),
        outputs,
        trace: Vec::new(),
        stats,
        rc_aggregates,
    })
}

fn feed(shared: &Shared<'_>, events: Vec<Event>) {
    for mut event in events {
        let src = event.source;
        let ji = shared.job_of[src.index()];
        let mut mark = Instant::now();
        event.t = shared.at(mark);
        let id = shared.fresh_id();
        let pc = if shared.prioritized {
            let spec = &shared.specs[src.index()];
            let mut conv = shared.ingress[src.index()].lock().expect("ingress lock");
            let pc = conv
                .as_mut()
                .expect("source converter")
                .build_at_source(id, &event, spec);
            drop(conv);
            Clocks::lap(&shared.clocks.generation, &mut mark);
            match pc {
                Ok(pc) => Some(pc),
                Err(e) => return shared.fail(e),
            }
        } else {
            None
        };
        let mut msg = Message {
            id,
            job: shared.sc.jobs[ji].graph.job_id,
            target: src,
            sender: Sender::Ingress(src),
            seq: 0,
            channel_seq: 0,
            p: event.p,
            t: event.t,
            tuples: event.tuples,
            pc,
        };
        let mut q = shared.queue.lock().expect("queue lock");
        if q.failure.is_some() {
            return;
        }
        q.stamp(&mut msg);
        let mut mark = Instant::now();
        let res = q.dispatcher.enqueue(msg, None, event.t);
        Clocks::lap(&shared.clocks.scheduling, &mut mark);
        if let Err(e) = res {
            q.failure.get_or_insert(e);
        }
        shared.ready.notify_one();
    }
    let mut q = shared.queue.lock().expect("queue lock");
    q.feeding = false;
    shared.ready.notify_all();
}

fn worker(shared: &Shared<'_>, w: usize) {
    loop {
        let msg = {
            let mut q = shared.queue.lock().expect("queue lock");
            loop {
                if q.failure.is_some() {
                    return;
                }
                let mut mark = Instant::now();
                let next = q.dispatcher.next_for(w, shared.at(mark));
                Clocks::lap(&shared.clocks.scheduling, &mut mark);
                if let Some(m) = next {
                    q.in_flight += 1;
                    break m;
                }
                if !q.feeding && q.in_flight == 0 && q.dispatcher.pending() == 0 {
                    shared.ready.notify_all();
                    return;
                }
                q = shared
                    .ready
                    .wait_timeout(q, Duration::from_millis(5))
                    .expect("queue lock")
                    .0;
            }
        };
        let busy = Instant::now();
        if let Err(e) = step(shared, w, msg) {
            return shared.fail(e);
        }
        shared.busy_ns[w].fetch_add(busy.elapsed().as_nanos() as u64, Ordering::Relaxed);
    }
}

/// Spins for `us` microseconds.
fn spin(us: f64) {
    if us <= 0.0 {
        return;
    }
    let until = Instant::now() + Duration::from_nanos((us * 1000.0) as u64);
    while Instant::now() < until {
        std::hint::spin_loop();
    }
}

fn step(shared: &Shared<'_>, w: usize, msg: Message) -> Result<()> {
    let op = msg.target;
    let oi = op.index();
    let t0 = Instant::now();
    let mut mark = t0;
    let spec = &shared.specs[oi];
    let (exec, own) = {
        let mut state = shared.states[oi].lock().expect("state lock");
        let exec = state.execute(&msg)?;
        // Touch every tuple of the payload once.
        let touched = (0..msg.tuples).fold(0u64, |acc, x| acc.wrapping_mul(31).wrapping_add(black_box(x)));
        black_box(touched);
        spin(exec.cost as f64 * shared.sc.runtime.wall_us_per_ms);
        let measured = t0.elapsed().as_secs_f64() * 1000.0;
        state.profile.observe(measured);
        let own = state.profile.estimate(0);
        (exec, own)
    };
    Clocks::lap(&shared.clocks.execution, &mut mark);
    shared.executed.fetch_add(1, Ordering::Relaxed);

    let ji = shared.job_of[oi];
    let mut produced = Vec::new();
    for e in &exec.emitted {
        if spec.downstream.is_empty() {
            let now = shared.at(mark);
            let l = shared.sc.jobs[ji].graph.latency_constraint;
            shared.outputs.lock().expect("outputs lock").push(OutputRecord::new(
                msg.job,
                op,
                e.p,
                now.max(e.t),
                e.t,
                l,
            ));
            continue;
        }
        for &d in &spec.downstream {
            let id = shared.fresh_id();
            let pc = if shared.prioritized {
                let mut upstream = msg.clone();
                if let Some(pc) = upstream.pc.as_mut() {
                    pc.field.p = e.p;
                }
                let pc = shared.converters[oi]
                    .lock()
                    .expect("converter lock")
                    .build_at_operator(id, &upstream, &shared.specs[d.index()])?;
                Clocks::lap(&shared.clocks.generation, &mut mark);
                Some(pc)
            } else {
                None
            };
            produced.push(Message {
                id,
                job: msg.job,
                target: d,
                sender: Sender::Operator(op),
                seq: 0,
                channel_seq: 0,
                p: e.p,
                t: e.t,
                tuples: e.tuples,
                pc,
            });
        }
    }

    {
        let mut q = shared.queue.lock().expect("queue lock");
        for m in &mut produced {
            q.stamp(m);
        }
        mark = Instant::now();
        let now = shared.at(mark);
        for m in produced {
            q.dispatcher.enqueue(m, Some(w), now)?;
        }
        q.in_flight -= 1;
        Clocks::lap(&shared.clocks.scheduling, &mut mark);
        shared.ready.notify_all();
    }

    if shared.prioritized {
        mark = Instant::now();
        let rc = shared.converters[oi]
            .lock()
            .expect("converter lock")
            .prepare_reply(spec, own);
        match msg.sender {
            Sender::Ingress(s) => {
                if let Some(conv) = shared.ingress[s.index()].lock().expect("ingress lock").as_mut() {
                    conv.process_reply(op, rc);
                }
            }
            Sender::Operator(u) => shared.converters[u.index()]
                .lock()
                .expect("converter lock")
                .process_reply(op, rc),
        }
        Clocks::lap(&shared.clocks.generation, &mut mark);
    }
    Ok(())
}
