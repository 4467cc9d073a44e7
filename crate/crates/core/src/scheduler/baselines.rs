//! Baseline run queues: a global FIFO of operators, and thread-local-first
//! dispatch with work stealing.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Message, Millis, OperatorId};

use super::{Dispatcher, SchedCounters, Turn};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Slot {
    Idle,
    Queued,
    Held,
}

/// Operators are run in the order they became ready. A turn ends once the
/// quantum has elapsed, and the operator goes to the back of the queue.
#[derive(Clone, Debug)]
pub struct FifoQueue {
    messages: Vec<VecDeque<Message>>,
    slot: Vec<Slot>,
    run: VecDeque<OperatorId>,
    turns: Vec<Turn>,
    quantum: Millis,
    len: usize,
    counters: SchedCounters,
}

impl FifoQueue {
    pub fn new(operators: usize, workers: usize, quantum: Millis) -> Self {
        FifoQueue {
            messages: vec![VecDeque::new(); operators],
            slot: vec![Slot::Idle; operators],
            run: VecDeque::new(),
            turns: vec![Turn::default(); workers],
            quantum,
            len: 0,
            counters: SchedCounters::default(),
        }
    }
}

impl Dispatcher for FifoQueue {
    fn enqueue(&mut self, msg: Message, _origin: Option<usize>, _now: Millis) -> Result<()> {
        let op = msg.target;
        let q = self.messages.get_mut(op.index()).ok_or(Error::UnknownOperator(op))?;
        q.push_back(msg);
        self.len += 1;
        self.counters.enqueued += 1;
        if self.slot[op.index()] == Slot::Idle {
            self.slot[op.index()] = Slot::Queued;
            self.run.push_back(op);
        }
        Ok(())
    }

    fn next_for(&mut self, worker: usize, now: Millis) -> Option<Message> {
        let turn = self.turns[worker];
        if let Some(op) = turn.held {
            let i = op.index();
            if self.messages[i].is_empty() {
                self.slot[i] = Slot::Idle;
                self.turns[worker].held = None;
            } else if now - turn.since >= self.quantum && !self.run.is_empty() {
                self.slot[i] = Slot::Queued;
                self.run.push_back(op);
                self.turns[worker].held = None;
                self.counters.swaps += 1;
            } else {
                self.len -= 1;
                self.counters.dispatched += 1;
                return self.messages[i].pop_front();
            }
        }
        let op = self.run.pop_front()?;
        self.slot[op.index()] = Slot::Held;
        self.turns[worker] = Turn {
            held: Some(op),
            since: now,
        };
        self.len -= 1;
        self.counters.dispatched += 1;
        self.messages[op.index()].pop_front()
    }

    fn release(&mut self, worker: usize, _now: Millis) {
        if let Some(op) = self.turns[worker].held.take() {
            if self.messages[op.index()].is_empty() {
                self.slot[op.index()] = Slot::Idle;
            } else {
                self.slot[op.index()] = Slot::Queued;
                self.run.push_back(op);
            }
        }
    }

    fn pending(&self) -> usize {
        self.len
    }

    fn has_available(&self) -> bool {
        !self.run.is_empty()
    }

    fn counters(&self) -> SchedCounters {
        self.counters
    }

    fn drain(&mut self) -> Vec<Message> {
        self.run.clear();
        self.slot.iter_mut().for_each(|s| *s = Slot::Idle);
        self.turns.iter_mut().for_each(|t| t.held = None);
        self.len = 0;
        self.messages.iter_mut().flat_map(|q| q.drain(..)).collect()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum LocalSlot {
    Idle,
    Local(usize),
    Global,
    Held,
}

/// Each worker prefers operators readied by its own output, newest first.
/// External arrivals go to a global FIFO. An idle worker with nothing local
/// or global steals the oldest entry from another worker. A worker keeps
/// its operator until that operator runs dry.
#[derive(Clone, Debug)]
pub struct LocalFirstQueue {
    messages: Vec<VecDeque<Message>>,
    slot: Vec<LocalSlot>,
    locals: Vec<VecDeque<OperatorId>>,
    global: VecDeque<OperatorId>,
    turns: Vec<Turn>,
    len: usize,
    counters: SchedCounters,
}

impl LocalFirstQueue {
    pub fn new(operators: usize, workers: usize) -> Self {
        LocalFirstQueue {
            messages: vec![VecDeque::new(); operators],
            slot: vec![LocalSlot::Idle; operators],
            locals: vec![VecDeque::new(); workers],
            global: VecDeque::new(),
            turns: vec![Turn::default(); workers],
            len: 0,
            counters: SchedCounters::default(),
        }
    }

    fn acquire(&mut self, worker: usize) -> Option<OperatorId> {
        if let Some(op) = self.locals[worker].pop_back() {
            return Some(op);
        }
        if let Some(op) = self.global.pop_front() {
            return Some(op);
        }
        let n = self.locals.len();
        for k in 1..n {
            if let Some(op) = self.locals[(worker + k) % n].pop_front() {
                self.counters.steals += 1;
                return Some(op);
            }
        }
        None
    }
}

impl Dispatcher for LocalFirstQueue {
    fn enqueue(&mut self, msg: Message, origin: Option<usize>, _now: Millis) -> Result<()> {
        let op = msg.target;
        let q = self.messages.get_mut(op.index()).ok_or(Error::UnknownOperator(op))?;
        q.push_back(msg);
        self.len += 1;
        self.counters.enqueued += 1;
        if self.slot[op.index()] == LocalSlot::Idle {
            match origin {
                Some(w) if w < self.locals.len() => {
                    self.slot[op.index()] = LocalSlot::Local(w);
                    self.locals[w].push_back(op);
                }
                _ => {
                    self.slot[op.index()] = LocalSlot::Global;
                    self.global.push_back(op);
                }
            }
        }
        Ok(())
    }

    fn next_for(&mut self, worker: usize, now: Millis) -> Option<Message> {
        if let Some(op) = self.turns[worker].held {
            if !self.messages[op.index()].is_empty() {
                self.len -= 1;
                self.counters.dispatched += 1;
                return self.messages[op.index()].pop_front();
            }
            self.slot[op.index()] = LocalSlot::Idle;
            self.turns[worker].held = None;
        }
        let op = self.acquire(worker)?;
        self.slot[op.index()] = LocalSlot::Held;
        self.turns[worker] = Turn {
            held: Some(op),
            since: now,
        };
        self.len -= 1;
        self.counters.dispatched += 1;
        self.messages[op.index()].pop_front()
    }

    fn release(&mut self, worker: usize, _now: Millis) {
        if let Some(op) = self.turns[worker].held.take() {
            if self.messages[op.index()].is_empty() {
                self.slot[op.index()] = LocalSlot::Idle;
            } else {
                self.slot[op.index()] = LocalSlot::Local(worker);
                self.locals[worker].push_back(op);
            }
        }
    }

    fn pending(&self) -> usize {
        self.len
    }

    fn has_available(&self) -> bool {
        !self.global.is_empty() || self.locals.iter().any(|l| !l.is_empty())
    }

    fn counters(&self) -> SchedCounters {
        self.counters
    }

    fn drain(&mut self) -> Vec<Message> {
        self.global.clear();
        self.locals.iter_mut().for_each(VecDeque::clear);
        self.slot.iter_mut().for_each(|s| *s = LocalSlot::Idle);
        self.turns.iter_mut().for_each(|t| t.held = None);
        self.len = 0;
        self.messages.iter_mut().flat_map(|q| q.drain(..)).collect()
    }
}
