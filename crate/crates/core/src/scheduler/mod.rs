//! Operator scheduling: the two-level priority dispatcher, baselines, and
//! the worker loop shared by both clocks.
//!
//! A dispatcher hands whole operators to workers. While a worker holds an
//! operator, nobody else runs it; the worker asks for the next message at
//! each message boundary and the dispatcher decides whether to continue or
//! swap.

mod baselines;
mod ready_queue;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Message, MessageId, Millis, OperatorId};
use crate::policy::PolicyKind;

pub use baselines::{FifoQueue, LocalFirstQueue};
pub use ready_queue::{HeadKey, IndexedHeap, ReadyQueue};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// Two-level priority scheduling with quantum-based peek-and-swap.
    #[serde(rename = "cameo")]
    Priority,
    Fifo,
    LocalFirst,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Priority => "cameo",
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::LocalFirst => "local-first",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cameo" => Ok(SchedulerKind::Priority),
            "fifo" => Ok(SchedulerKind::Fifo),
            "local-first" => Ok(SchedulerKind::LocalFirst),
            other => Err(format!("unknown scheduler `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub policy: PolicyKind,
    /// Minimum span an operator runs before the dispatcher peeks for a
    /// better one. Zero checks at every message boundary.
    pub quantum_ms: Millis,
    pub workers: usize,
    /// Attach a reply context to every n-th acknowledgement only.
    pub rc_every_n: u32,
    /// Starvation guard; `None` disables it.
    pub aging_ms: Option<Millis>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            kind: SchedulerKind::Priority,
            policy: PolicyKind::Llf,
            quantum_ms: 1,
            workers: 1,
            rc_every_n: 1,
            aging_ms: None,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.quantum_ms < 0 {
            return Err(Error::Config("quantum_ms must not be negative".into()));
        }
        if self.rc_every_n == 0 {
            return Err(Error::Config("rc_every_n must be positive".into()));
        }
        if self.aging_ms.is_some_and(|a| a <= 0) {
            return Err(Error::Config("aging_ms must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedCounters {
    pub enqueued: u64,
    pub dispatched: u64,
    pub swaps: u64,
    pub steals: u64,
    pub aged: u64,
}

/// What a worker currently holds and since when.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Turn {
    pub held: Option<OperatorId>,
    pub since: Millis,
}

pub trait Dispatcher: Send {
    /// `origin` is the worker whose execution produced `msg`, if any.
    fn enqueue(&mut self, msg: Message, origin: Option<usize>, now: Millis) -> Result<()>;

    /// Called by a free worker at a message boundary. Returns the next
    /// message to execute, keeping or swapping the held operator.
    fn next_for(&mut self, worker: usize, now: Millis) -> Option<Message>;

    /// The worker gives up whatever operator it holds.
    fn release(&mut self, worker: usize, now: Millis);

    fn pending(&self) -> usize;

    /// True when an idle worker would get work from `next_for`.
    fn has_available(&self) -> bool;

    fn counters(&self) -> SchedCounters;

    /// Removes every pending message and forgets all held operators.
    fn drain(&mut self) -> Vec<Message>;
}

/// Priority dispatch over a [`ReadyQueue`] with per-worker turns.
#[derive(Clone, Debug)]
pub struct PriorityDispatcher {
    rq: ReadyQueue,
    turns: Vec<Turn>,
    quantum: Millis,
    counters: SchedCounters,
}

impl PriorityDispatcher {
    pub fn new(operators: usize, workers: usize, quantum: Millis, aging: Option<Millis>) -> Self {
        let rq = match aging {
            Some(limit) => ReadyQueue::new(operators).with_aging(limit),
            None => ReadyQueue::new(operators),
        };
        PriorityDispatcher {
            rq,
            turns: vec![Turn::default(); workers],
            quantum,
            counters: SchedCounters::default(),
        }
    }

    pub fn ready_queue(&self) -> &ReadyQueue {
        &self.rq
    }
}

impl Dispatcher for PriorityDispatcher {
    fn enqueue(&mut self, msg: Message, _origin: Option<usize>, now: Millis) -> Result<()> {
        self.rq.enqueue_at(msg, now)?;
        self.counters.enqueued += 1;
        Ok(())
    }

    fn next_for(&mut self, worker: usize, now: Millis) -> Option<Message> {
        let turn = self.turns[worker];
        if let Some(op) = turn.held {
            if !self.rq.has_messages(op) {
                self.rq.release(op, now);
                self.turns[worker].held = None;
            } else if now - turn.since >= self.quantum && self.rq.should_swap(op, now) {
                self.rq.release(op, now);
                self.turns[worker].held = None;
                self.counters.swaps += 1;
            } else {
                self.counters.dispatched += 1;
                return self.rq.take_head(op);
            }
        }
        let op = self.rq.acquire(now)?;
        self.turns[worker] = Turn {
            held: Some(op),
            since: now,
        };
        self.counters.dispatched += 1;
        self.counters.aged = self.rq.aged_picks();
        self.rq.take_head(op)
    }

    fn release(&mut self, worker: usize, now: Millis) {
        if let Some(op) = self.turns[worker].held.take() {
            self.rq.release(op, now);
        }
    }

    fn pending(&self) -> usize {
        self.rq.len()
    }

    fn has_available(&self) -> bool {
        self.rq.ready_operators() > 0
    }

    fn counters(&self) -> SchedCounters {
        self.counters
    }

    fn drain(&mut self) -> Vec<Message> {
        self.turns.iter_mut().for_each(|t| t.held = None);
        self.rq.drain()
    }
}

pub fn build_dispatcher(config: &SchedulerConfig, operators: usize) -> Box<dyn Dispatcher> {
    match config.kind {
        SchedulerKind::Priority => Box::new(PriorityDispatcher::new(
            operators,
            config.workers,
            config.quantum_ms,
            config.aging_ms,
        )),
        SchedulerKind::Fifo => Box::new(FifoQueue::new(operators, config.workers, config.quantum_ms)),
        SchedulerKind::LocalFirst => Box::new(LocalFirstQueue::new(operators, config.workers)),
    }
}

/// One message execution by [`run_worker`].
#[derive(Debug)]
pub struct Completion {
    pub worker: usize,
    pub operator: OperatorId,
    pub message: MessageId,
    pub start: Millis,
    pub end: Millis,
    /// Number of messages produced, or the executor's error.
    pub outcome: Result<usize>,
}

/// Runs one worker on a virtual clock until the dispatcher has nothing for
/// it. The executor returns the message's cost and any messages it
/// produces, which are enqueued at completion. Executor errors are recorded
/// and the loop continues.
pub fn run_worker<E>(dispatcher: &mut dyn Dispatcher, worker: usize, start: Millis, mut exec: E) -> Vec<Completion>
where
    E: FnMut(&Message, Millis) -> Result<(Millis, Vec<Message>)>,
{
    let mut now = start;
    let mut done = Vec::new();
    while let Some(msg) = dispatcher.next_for(worker, now) {
        let begin = now;
        let outcome = match exec(&msg, now) {
            Ok((cost, outputs)) => {
                now += cost.max(0);
                let n = outputs.len();
                let mut res = Ok(n);
                for out in outputs {
                    if let Err(e) = dispatcher.enqueue(out, Some(worker), now) {
                        res = Err(e);
                    }
                }
                res
            }
            Err(e) => Err(e),
        };
        done.push(Completion {
            worker,
            operator: msg.target,
            message: msg.id,
            start: begin,
            end: now,
            outcome,
        });
    }
    dispatcher.release(worker, now);
    done
}
