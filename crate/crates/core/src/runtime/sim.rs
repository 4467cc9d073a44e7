//! Deterministic virtual-time simulation.
//!
//! Everything happens on one timeline driven by an event heap ordered by
//! `(time, insertion sequence)`. All events due at an instant are applied
//! before idle workers are offered work, so same-instant arrivals compete
//! fairly. Workers are modeled resources: a dispatched message occupies its
//! worker for the message's synthetic cost.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::context::{ContextHandler, ReplyContext};
use crate::error::Result;
use crate::model::{Event, Message, MessageId, Millis, OperatorId, OutputRecord, Sender};
use crate::scenario::{ArrivalSpec, Scenario};
use crate::scheduler::{build_dispatcher, Dispatcher, SchedulerKind};
use crate::workload::{gaussian, source_seed, ArrivalStream};

use super::{job_infos, Execution, Overhead, RunReport, RunStats, TraceRow, Wiring};

enum Action {
    Arrival(usize, Event),
    Deliver(Message, Option<usize>),
    Done(usize),
    Ack {
        to: Sender,
        from: OperatorId,
        rc: Option<ReplyContext>,
    },
}

struct Pending {
    time: Millis,
    seq: u64,
    action: Action,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct Running {
    msg: Message,
    exec: Execution,
    cost: Millis,
}

enum Stream {
    Scripted(std::vec::IntoIter<Event>),
    Generated(ArrivalStream),
}

impl Iterator for Stream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        match self {
            Stream::Scripted(it) => it.next(),
            Stream::Generated(it) => it.next(),
        }
    }
}

struct Sim<'a> {
    sc: &'a Scenario,
    now: Millis,
    heap: BinaryHeap<Reverse<Pending>>,
    heap_seq: u64,
    wiring: Wiring,
    streams: Vec<(OperatorId, Stream)>,
    dispatcher: Box<dyn Dispatcher>,
    running: Vec<Option<Running>>,
    send_seq: u64,
    next_id: u64,
    sent: HashMap<(Sender, OperatorId), u64>,
    received: HashMap<(Sender, OperatorId), u64>,
    acks: Vec<u64>,
    ack_debt_us: Vec<u64>,
    noise: ChaCha8Rng,
    prioritized: bool,
    outputs: Vec<OutputRecord>,
    trace: Vec<TraceRow>,
    stats: RunStats,
    job_tuples: Vec<u64>,
    conversions: u64,
}

/// Runs `scenario` on the virtual clock. Identical scenarios and seeds give
/// identical reports.
pub fn simulate(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario)?;
    sim.run()?;
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let n = sc.operator_count();
        let workers = sc.scheduler.workers;
        let mut streams = Vec::with_capacity(sc.sources.len());
        for src in &sc.sources {
            let stream = match &src.arrivals {
                ArrivalSpec::Events(events) => {
                    let mut events = events.clone();
                    events.iter_mut().for_each(|e| e.source = src.operator);
                    Stream::Scripted(events.into_iter())
                }
                ArrivalSpec::Profile(p) => Stream::Generated(ArrivalStream::new(
                    p.clone(),
                    src.operator,
                    source_seed(sc.seed, src.operator),
                )?),
            };
            streams.push((src.operator, stream));
        }
        Ok(Sim {
            sc,
            now: 0,
            heap: BinaryHeap::new(),
            heap_seq: 0,
            wiring: Wiring::new(sc),
            streams,
            dispatcher: build_dispatcher(&sc.scheduler, n),
            running: (0..workers).map(|_| None).collect(),
            send_seq: 0,
            next_id: 0,
            sent: HashMap::new(),
            received: HashMap::new(),
            acks: vec![0; n],
            ack_debt_us: vec![0; n],
            noise: ChaCha8Rng::seed_from_u64(sc.seed ^ 0x5EED_C057),
            prioritized: sc.scheduler.kind == SchedulerKind::Priority,
            outputs: Vec::new(),
            trace: Vec::new(),
            stats: RunStats {
                mode: "virtual".into(),
                start_time: Millis::MAX,
                busy_ms: vec![0; workers],
                ..Default::default()
            },
            job_tuples: vec![0; sc.jobs.len()],
            conversions: 0,
        })
    }

    fn push(&mut self, time: Millis, action: Action) {
        self.heap.push(Reverse(Pending {
            time,
            seq: self.heap_seq,
            action,
        }));
        self.heap_seq += 1;
    }

    fn pull(&mut self, stream: usize) {
        if let Some(e) = self.streams[stream].1.next() {
            self.push(e.t, Action::Arrival(stream, e));
        }
    }

    fn run(&mut self) -> Result<()> {
        for i in 0..self.streams.len() {
            self.pull(i);
        }
        while let Some(Reverse(head)) = self.heap.peek() {
            let t = head.time;
            if self.sc.runtime.until_ms.is_some_and(|until| t > until) {
                break;
            }
            self.now = t;
            while self.heap.peek().is_some_and(|Reverse(p)| p.time == t) {
                let Reverse(p) = self.heap.pop().expect("peeked");
                self.apply(p.action)?;
            }
            self.dispatch_idle()?;
        }
        self.stats.dropped_at_cutoff =
            self.dispatcher.pending() as u64 + self.running.iter().filter(|r| r.is_some()).count() as u64;
        Ok(())
    }

    fn apply(&mut self, action: Action) -> Result<()> {
        match action {
            Action::Arrival(stream, event) => {
                self.ingest(event)?;
                self.pull(stream);
            }
            Action::Deliver(msg, origin) => self.dispatcher.enqueue(msg, origin, self.now)?,
            Action::Done(worker) => self.complete(worker)?,
            Action::Ack { to, from, rc } => self.receive_ack(to, from, rc),
        }
        Ok(())
    }

    fn fresh_id(&mut self) -> MessageId {
        self.next_id += 1;
        MessageId(self.next_id - 1)
    }

    fn stamp(&mut self, msg: &mut Message) {
        msg.seq = self.send_seq;
        self.send_seq += 1;
        let ch = self.sent.entry((msg.sender, msg.target)).or_insert(0);
        msg.channel_seq = *ch;
        *ch += 1;
    }

    fn ingest(&mut self, event: Event) -> Result<()> {
        let src = event.source;
        let ji = self.wiring.job_of[src.index()];
        self.stats.events_ingested += 1;
        self.stats.tuples_ingested += event.tuples;
        self.job_tuples[ji] += event.tuples;
        self.stats.start_time = self.stats.start_time.min(self.now);
        let id = self.fresh_id();
        let pc = if self.prioritized {
            self.conversions += 1;
            let spec = &self.wiring.states[src.index()].spec;
            let conv = self.wiring.ingress[src.index()]
                .as_mut()
                .expect("every fed operator is a source");
            Some(conv.build_at_source(id, &event, spec)?)
        } else {
            None
        };
        let mut msg = Message {
            id,
            job: self.sc.jobs[ji].graph.job_id,
            target: src,
            sender: Sender::Ingress(src),
            seq: 0,
            channel_seq: 0,
            p: event.p,
            t: event.t,
            tuples: event.tuples,
            pc,
        };
        self.stamp(&mut msg);
        self.dispatcher.enqueue(msg, None, self.now)
    }

    fn dispatch_idle(&mut self) -> Result<()> {
        for w in 0..self.running.len() {
            if self.running[w].is_some() {
                continue;
            }
            let Some(msg) = self.dispatcher.next_for(w, self.now) else {
                continue;
            };
            let key = (msg.sender, msg.target);
            let expected = self.received.entry(key).or_insert(0);
            if msg.channel_seq != *expected {
                self.stats.fifo_violations += 1;
            }
            *expected = msg.channel_seq + 1;

            let op = msg.target.index();
            let exec = self.wiring.states[op].execute(&msg)?;
            let debt_ms = (self.ack_debt_us[op] / 1000) as Millis;
            self.ack_debt_us[op] %= 1000;
            let cost = exec.cost + debt_ms;
            if self.sc.runtime.trace {
                let pri = msg.pc.map(|pc| pc.pri);
                self.trace.push(TraceRow {
                    time: self.now,
                    worker: w,
                    operator: msg.target.0,
                    job: msg.job.0,
                    message: msg.id.0,
                    local: pri.map(|p| p.local),
                    global: pri.map(|p| p.global),
                });
            }
            self.stats.busy_ms[w] += cost;
            self.stats.total_cost_ms += cost;
            self.stats.messages_executed += 1;
            self.running[w] = Some(Running { msg, exec, cost });
            self.push(self.now + cost, Action::Done(w));
        }
        let idle = self.running.iter().any(Option::is_none);
        if idle && self.dispatcher.has_available() {
            self.stats.work_conservation_violations += 1;
        }
        Ok(())
    }

    fn complete(&mut self, worker: usize) -> Result<()> {
        let Running { msg, exec, cost } = self.running[worker].take().expect("done event for a busy worker");
        let op = msg.target;
        let oi = op.index();
        let ji = self.wiring.job_of[oi];
        let observed = cost as f64 + gaussian(&mut self.noise, self.sc.runtime.cost_noise_sigma_ms);
        self.wiring.states[oi].profile.observe(observed);
        if exec.late {
            self.stats.late_messages += 1;
        }
        let windowed = self.wiring.states[oi].spec.kind.is_windowed();
        self.stats.windows_triggered += exec.triggered as u64;
        if windowed {
            self.stats.window_outputs += exec.emitted.len() as u64;
        }

        let downstream = self.wiring.states[oi].spec.downstream.clone();
        let latency_constraint = self.sc.jobs[ji].graph.latency_constraint;
        for e in &exec.emitted {
            if downstream.is_empty() {
                self.outputs
                    .push(OutputRecord::new(msg.job, op, e.p, self.now, e.t, latency_constraint));
                continue;
            }
            for &d in &downstream {
                let id = self.fresh_id();
                let pc = if self.prioritized {
                    self.conversions += 1;
                    let mut upstream = msg.clone();
                    if let Some(pc) = upstream.pc.as_mut() {
                        pc.field.p = e.p;
                    }
                    let target = &self.wiring.states[d.index()].spec;
                    Some(self.wiring.converters[oi].build_at_operator(id, &upstream, target)?)
                } else {
                    None
                };
                let mut out = Message {
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
                };
                self.stamp(&mut out);
                let delay = self.sc.runtime.channel_delay_ms;
                if delay == 0 {
                    self.dispatcher.enqueue(out, Some(worker), self.now)?;
                } else {
                    self.push(self.now + delay, Action::Deliver(out, Some(worker)));
                }
            }
        }

        self.acks[oi] += 1;
        let rc = self.acks[oi]
            .is_multiple_of(self.sc.scheduler.rc_every_n as u64)
            .then(|| {
                let state = &self.wiring.states[oi];
                let own = state.profile.estimate(state.spec.cost_hint.unwrap_or(0));
                self.wiring.converters[oi].prepare_reply(&state.spec, own)
            });
        let delay = self.sc.runtime.ack_delay_ms;
        if delay == 0 {
            self.receive_ack(msg.sender, op, rc);
        } else {
            self.push(
                self.now + delay,
                Action::Ack {
                    to: msg.sender,
                    from: op,
                    rc,
                },
            );
        }
        self.stats.end_time = self.stats.end_time.max(self.now);
        Ok(())
    }

    fn receive_ack(&mut self, to: Sender, from: OperatorId, rc: Option<ReplyContext>) {
        if let Sender::Operator(u) = to {
            self.ack_debt_us[u.index()] += self.sc.runtime.ack_cost_us;
        }
        let Some(rc) = rc else {
            return;
        };
        let conv = match to {
            Sender::Ingress(s) => self.wiring.ingress[s.index()].as_mut(),
            Sender::Operator(u) => Some(&mut self.wiring.converters[u.index()]),
        };
        if let Some(conv) = conv {
            conv.process_reply(from, rc);
        }
    }

    fn finish(mut self) -> RunReport {
        if self.stats.start_time == Millis::MAX {
            self.stats.start_time = 0;
        }
        self.stats.sched = self.dispatcher.counters();
        self.stats.overhead = Overhead {
            unit: "count".into(),
            scheduling: self.stats.sched.enqueued + self.stats.sched.dispatched,
            priority_generation: self.conversions,
            execution: self.stats.messages_executed,
        };
        self.outputs
            .sort_by_key(|o| (o.emit_time, o.job_id, o.sink_id, o.p_out));
        RunReport {
            scheduler: self.sc.scheduler.kind,
            policy: self.sc.scheduler.policy,
            workers: self.sc.scheduler.workers,
            jobs: job_infos(self.sc, &self.job_tuples),
            outputs: self.outputs,
            trace: self.trace,
            stats: self.stats,
            rc_aggregates: self.wiring.converters.iter().map(|c| c.rc.aggregate()).collect(),
        }
    }
}
