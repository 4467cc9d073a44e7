//! Two-level ready queue: per-operator message queues ordered by local key,
//! and an indexed min-heap of operators keyed by their head message.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Message, Millis, OperatorId};

/// Ordering key of an operator: its head message's `(global, local, seq)`.
pub type HeadKey = (i64, i64, u64);

const ABSENT: usize = usize::MAX;

/// Binary min-heap over dense operator ids with a position index, so keys
/// can be changed or removed in O(log n).
#[derive(Clone, Debug, Default)]
pub struct IndexedHeap {
    heap: Vec<(HeadKey, OperatorId)>,
    pos: Vec<usize>,
}

impl IndexedHeap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, op: OperatorId) -> bool {
        self.pos.get(op.index()).is_some_and(|&p| p != ABSENT)
    }

    pub fn key(&self, op: OperatorId) -> Option<HeadKey> {
        let &p = self.pos.get(op.index())?;
        (p != ABSENT).then(|| self.heap[p].0)
    }

    pub fn peek(&self) -> Option<(HeadKey, OperatorId)> {
        self.heap.first().copied()
    }

    /// Inserts `op` or moves it to `key`.
    pub fn upsert(&mut self, op: OperatorId, key: HeadKey) {
        if self.pos.len() <= op.index() {
            self.pos.resize(op.index() + 1, ABSENT);
        }
        match self.pos[op.index()] {
            ABSENT => {
                self.heap.push((key, op));
                let i = self.heap.len() - 1;
                self.pos[op.index()] = i;
                self.sift_up(i);
            }
            i => {
                let old = self.heap[i].0;
                self.heap[i].0 = key;
                match key.cmp(&old) {
                    Ordering::Less => self.sift_up(i),
                    Ordering::Greater => self.sift_down(i),
                    Ordering::Equal => {}
                }
            }
        }
    }

    pub fn remove(&mut self, op: OperatorId) -> Option<HeadKey> {
        let i = *self.pos.get(op.index())?;
        if i == ABSENT {
            return None;
        }
        let last = self.heap.len() - 1;
        self.swap(i, last);
        let (key, _) = self.heap.pop().expect("nonempty heap");
        self.pos[op.index()] = ABSENT;
        if i < self.heap.len() {
            self.sift_down(i);
            self.sift_up(i);
        }
        Some(key)
    }

    pub fn pop(&mut self) -> Option<(HeadKey, OperatorId)> {
        let (_, op) = self.peek()?;
        self.remove(op).map(|k| (k, op))
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.pos[self.heap[a].1.index()] = a;
        self.pos[self.heap[b].1.index()] = b;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[i].0 >= self.heap[parent].0 {
                break;
            }
            self.swap(i, parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut min = i;
            if l < n && self.heap[l].0 < self.heap[min].0 {
                min = l;
            }
            if r < n && self.heap[r].0 < self.heap[min].0 {
                min = r;
            }
            if min == i {
                break;
            }
            self.swap(i, min);
            i = min;
        }
    }
}

#[derive(Clone, Debug)]
struct Pending {
    global: i64,
    local: i64,
    msg: Message,
}

impl Pending {
    fn order(&self) -> (i64, u64) {
        (self.local, self.msg.seq)
    }

    fn head_key(&self) -> HeadKey {
        (self.global, self.local, self.msg.seq)
    }
}

/// FIFO of operators by the time they became ready, with lazy removal.
#[derive(Clone, Debug)]
struct Aging {
    limit: Millis,
    since: Vec<Millis>,
    epoch: Vec<u64>,
    order: VecDeque<(OperatorId, u64)>,
}

impl Aging {
    fn grow(&mut self, n: usize) {
        if self.since.len() < n {
            self.since.resize(n, 0);
            self.epoch.resize(n, 0);
        }
    }

    fn entered(&mut self, op: OperatorId, now: Millis) {
        let i = op.index();
        self.epoch[i] += 1;
        self.since[i] = now;
        self.order.push_back((op, self.epoch[i]));
    }

    fn left(&mut self, op: OperatorId) {
        self.epoch[op.index()] += 1;
    }

    fn overdue(&mut self, now: Millis) -> Option<OperatorId> {
        while let Some(&(op, e)) = self.order.front() {
            if self.epoch[op.index()] != e {
                self.order.pop_front();
                continue;
            }
            return (now - self.since[op.index()] >= self.limit).then_some(op);
        }
        None
    }
}

/// Pending messages of one operator, ascending by `(local, seq)`. Keys
/// mostly arrive in order, so inserts are usually an append.
#[derive(Clone, Debug, Default)]
struct OpQueue(VecDeque<Pending>);

impl OpQueue {
    fn push(&mut self, p: Pending) {
        let key = p.order();
        if self.0.back().is_none_or(|b| b.order() <= key) {
            self.0.push_back(p);
        } else {
            let at = self.0.partition_point(|q| q.order() <= key);
            self.0.insert(at, p);
        }
    }

    fn peek(&self) -> Option<&Pending> {
        self.0.front()
    }

    fn pop(&mut self) -> Option<Pending> {
        self.0.pop_front()
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The two-level structure. Operators that a worker has checked out stay
/// out of the heap until released, so each runs on at most one worker.
#[derive(Clone, Debug, Default)]
pub struct ReadyQueue {
    queues: Vec<OpQueue>,
    heap: IndexedHeap,
    checked_out: Vec<bool>,
    len: usize,
    aging: Option<Aging>,
    aged_picks: u64,
}

impl ReadyQueue {
    pub fn new(operators: usize) -> Self {
        ReadyQueue {
            queues: (0..operators).map(|_| OpQueue::default()).collect(),
            checked_out: vec![false; operators],
            ..Default::default()
        }
    }

    /// Bounds how long a ready operator can be bypassed: once it has waited
    /// `limit`, it is picked ahead of the heap minimum.
    pub fn with_aging(mut self, limit: Millis) -> Self {
        let mut aging = Aging {
            limit,
            since: Vec::new(),
            epoch: Vec::new(),
            order: VecDeque::new(),
        };
        aging.grow(self.queues.len());
        self.aging = Some(aging);
        self
    }

    pub fn operators(&self) -> usize {
        self.queues.len()
    }

    /// Pending messages, including those of checked-out operators.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Operators an idle worker could pick right now.
    pub fn ready_operators(&self) -> usize {
        self.heap.len()
    }

    pub fn aged_picks(&self) -> u64 {
        self.aged_picks
    }

    pub fn has_messages(&self, op: OperatorId) -> bool {
        self.queues.get(op.index()).is_some_and(|q| !q.is_empty())
    }

    pub fn head_key(&self, op: OperatorId) -> Option<HeadKey> {
        self.queues.get(op.index())?.peek().map(Pending::head_key)
    }

    pub fn peek(&self) -> Option<(HeadKey, OperatorId)> {
        self.heap.peek()
    }

    pub fn enqueue(&mut self, msg: Message) -> Result<()> {
        self.enqueue_at(msg, 0)
    }

    pub fn enqueue_at(&mut self, msg: Message, now: Millis) -> Result<()> {
        let op = msg.target;
        if op.index() >= self.queues.len() {
            return Err(Error::UnknownOperator(op));
        }
        let pri = msg.context()?.pri;
        self.queues[op.index()].push(Pending {
            global: pri.global,
            local: pri.local,
            msg,
        });
        self.len += 1;
        if !self.checked_out[op.index()] {
            self.rekey(op, now);
        }
        Ok(())
    }

    fn rekey(&mut self, op: OperatorId, now: Millis) {
        match self.head_key(op) {
            Some(key) => {
                let fresh = !self.heap.contains(op);
                self.heap.upsert(op, key);
                if fresh {
                    if let Some(a) = &mut self.aging {
                        a.entered(op, now);
                    }
                }
            }
            None => {
                if self.heap.remove(op).is_some() {
                    if let Some(a) = &mut self.aging {
                        a.left(op);
                    }
                }
            }
        }
    }

    fn pick(&mut self, now: Millis) -> Option<OperatorId> {
        if let Some(op) = self.aging.as_mut().and_then(|a| a.overdue(now)) {
            if self.heap.peek().map(|(_, top)| top) != Some(op) {
                self.aged_picks += 1;
            }
            return Some(op);
        }
        self.heap.peek().map(|(_, op)| op)
    }

    /// Removes and returns the head message of the best operator, leaving
    /// that operator in the heap under its next head.
    pub fn next_dispatch(&mut self) -> Option<(OperatorId, Message)> {
        self.next_dispatch_at(0)
    }

    pub fn next_dispatch_at(&mut self, now: Millis) -> Option<(OperatorId, Message)> {
        let op = self.pick(now)?;
        let msg = self.pop_head(op)?;
        self.rekey(op, now);
        Some((op, msg))
    }

    fn pop_head(&mut self, op: OperatorId) -> Option<Message> {
        let p = self.queues.get_mut(op.index())?.pop()?;
        self.len -= 1;
        Some(p.msg)
    }

    /// Checks out the best ready operator for a worker.
    pub fn acquire(&mut self, now: Millis) -> Option<OperatorId> {
        let op = self.pick(now)?;
        self.heap.remove(op);
        if let Some(a) = &mut self.aging {
            a.left(op);
        }
        self.checked_out[op.index()] = true;
        Some(op)
    }

    /// Head message of a checked-out operator.
    pub fn take_head(&mut self, op: OperatorId) -> Option<Message> {
        debug_assert!(self.checked_out[op.index()]);
        self.pop_head(op)
    }

    /// Whether a worker holding `op` should hand it back: another ready
    /// operator has a strictly smaller key, or one is overdue.
    pub fn should_swap(&mut self, op: OperatorId, now: Millis) -> bool {
        let Some(head) = self.head_key(op) else {
            return true;
        };
        if self.aging.as_mut().and_then(|a| a.overdue(now)).is_some() {
            return true;
        }
        self.heap.peek().is_some_and(|(key, _)| key < head)
    }

    /// Returns a checked-out operator to the heap if it still has work.
    pub fn release(&mut self, op: OperatorId, now: Millis) {
        if std::mem::replace(&mut self.checked_out[op.index()], false) {
            self.rekey(op, now);
        }
    }

    /// Empties the queue, returning every pending message in no particular
    /// order. Checked-out marks are cleared.
    pub fn drain(&mut self) -> Vec<Message> {
        let mut out = Vec::with_capacity(self.len);
        for q in &mut self.queues {
            out.extend(q.0.drain(..).map(|p| p.msg));
        }
        self.heap = IndexedHeap::new();
        self.checked_out.iter_mut().for_each(|c| *c = false);
        if let Some(a) = &mut self.aging {
            a.order.clear();
            a.epoch.iter_mut().for_each(|e| *e += 1);
        }
        self.len = 0;
        out
    }
}
