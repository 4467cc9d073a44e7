//! Operator execution semantics: pass-through for regular operators, window
//! buffering and triggering for windowed ones, and cost profiling.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{JobId, Message, Millis, OperatorKind, OperatorSpec, Sender, SyntheticCost, Tick};

pub const DEFAULT_PROFILE_BETA: f64 = 0.2;

/// Exponentially weighted moving average; the first observation seeds it.
pub fn profile_update(profile: Option<f64>, observed: f64, beta: f64) -> f64 {
    let observed = observed.max(0.0);
    match profile {
        None => observed,
        Some(p) => (1.0 - beta) * p + beta * observed,
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CostProfile {
    pub beta: f64,
    pub value: Option<f64>,
}

impl CostProfile {
    pub fn new(beta: f64) -> Self {
        CostProfile { beta, value: None }
    }

    pub fn observe(&mut self, cost: f64) {
        self.value = Some(profile_update(self.value, cost, self.beta));
    }

    /// Current estimate in whole milliseconds, or `fallback` before the
    /// first observation.
    pub fn estimate(&self, fallback: Millis) -> Millis {
        self.value.map_or(fallback, |v| v.round() as Millis)
    }
}

impl SyntheticCost {
    /// Cost of one invocation on `tuples` tuples that completes
    /// `triggers` windows.
    pub fn evaluate(&self, tuples: u64, triggers: usize) -> Millis {
        let ms = self.base_ms + self.per_ktuple_ms * tuples as f64 / 1000.0 + self.trigger_ms * triggers as f64;
        ms.max(0.0).round() as Millis
    }
}

/// A result produced by one invocation, before routing.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Emitted {
    pub p: Tick,
    /// Latest physical arrival among the events behind this result.
    pub t: Millis,
    pub tuples: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Execution {
    pub emitted: Vec<Emitted>,
    pub triggered: usize,
    /// Some part of the input fell into an already-triggered window.
    pub late: bool,
    pub cost: Millis,
}

#[derive(Copy, Clone, Debug)]
struct Channel {
    sender: Sender,
    /// Messages on this channel are window results: `p` is an exclusive
    /// end, so the last covered tick is `p - 1`.
    from_window: bool,
    covered: Tick,
}

#[derive(Copy, Clone, Debug, Default)]
struct WindowBuf {
    tuples: u64,
    max_t: Millis,
    messages: u64,
}

/// Runtime state of one operator instance.
#[derive(Clone, Debug)]
pub struct OperatorState {
    pub spec: OperatorSpec,
    pub job: JobId,
    channels: Vec<Channel>,
    buffers: BTreeMap<Tick, WindowBuf>,
    pub profile: CostProfile,
    pub windows_triggered: u64,
    pub late_messages: u64,
    pub invocations: u64,
    last_end: Option<Tick>,
}

impl OperatorState {
    /// `upstream` lists every channel feeding the operator and whether the
    /// sender is itself windowed.
    pub fn new(spec: OperatorSpec, job: JobId, upstream: impl IntoIterator<Item = (Sender, bool)>, beta: f64) -> Self {
        OperatorState {
            spec,
            job,
            channels: upstream
                .into_iter()
                .map(|(sender, from_window)| Channel {
                    sender,
                    from_window,
                    covered: Tick::MIN,
                })
                .collect(),
            buffers: BTreeMap::new(),
            profile: CostProfile::new(beta),
            windows_triggered: 0,
            late_messages: 0,
            invocations: 0,
            last_end: None,
        }
    }

    /// Least covered tick over all channels; `Tick::MIN` until every
    /// channel has delivered something.
    pub fn watermark(&self) -> Tick {
        self.channels.iter().map(|c| c.covered).min().unwrap_or(Tick::MIN)
    }

    pub fn open_windows(&self) -> usize {
        self.buffers.len()
    }

    /// Applies `msg` and returns what it produces. The cost is charged from
    /// the operator's synthetic cost model.
    pub fn execute(&mut self, msg: &Message) -> Result<Execution> {
        self.invocations += 1;
        let mut exec = match self.spec.kind {
            OperatorKind::Regular => Execution {
                emitted: vec![Emitted {
                    p: msg.p,
                    t: msg.t,
                    tuples: msg.tuples,
                }],
                ..Default::default()
            },
            OperatorKind::TumblingWindow { size } => self.window(msg, size, size)?,
            OperatorKind::SlidingWindow { size, slide } => self.window(msg, size, slide)?,
        };
        exec.cost = self.spec.cost.evaluate(msg.tuples, exec.triggered);
        Ok(exec)
    }

    fn window(&mut self, msg: &Message, size: Tick, slide: Tick) -> Result<Execution> {
        if size <= 0 || slide <= 0 {
            return Err(Error::NonpositiveSlide(slide.min(size)));
        }
        let before = self.watermark();
        let ch = self
            .channels
            .iter_mut()
            .find(|c| c.sender == msg.sender)
            .ok_or(Error::UnknownOperator(match msg.sender {
                Sender::Ingress(o) | Sender::Operator(o) => o,
            }))?;
        let tick = if ch.from_window { msg.p - 1 } else { msg.p };
        ch.covered = ch.covered.max(tick);

        let mut exec = Execution::default();
        for end in window_ends(tick, size, slide) {
            if end - 1 <= before {
                exec.late = true;
                continue;
            }
            let buf = self.buffers.entry(end).or_default();
            buf.tuples += msg.tuples;
            buf.max_t = buf.max_t.max(msg.t);
            buf.messages += 1;
        }
        if exec.late {
            self.late_messages += 1;
        }

        let wm = self.watermark();
        while let Some(entry) = self.buffers.first_entry() {
            let end = *entry.key();
            if end - 1 > wm {
                break;
            }
            let buf = entry.remove();
            debug_assert!(self.last_end.is_none_or(|last| end > last));
            self.last_end = Some(end);
            self.windows_triggered += 1;
            exec.triggered += 1;
            exec.emitted.push(Emitted {
                p: end,
                t: buf.max_t,
                tuples: self.spec.output_tuples,
            });
        }
        Ok(exec)
    }
}

/// Exclusive ends of every window containing `tick`: multiples of `slide`
/// in `(tick, tick + size]`, skipping windows that would start before 0.
pub fn window_ends(tick: Tick, size: Tick, slide: Tick) -> impl Iterator<Item = Tick> {
    let first = (tick.div_euclid(slide) + 1) * slide;
    (0..)
        .map(move |k| first + k * slide)
        .take_while(move |&end| end - size <= tick)
        .filter(move |&end| end >= size)
}
