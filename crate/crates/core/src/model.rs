//! Domain types shared by every layer: events, messages, operators and
//! dataflow graphs, plus static graph checks and the latency metric.
//!
//! Logical time is an integer tick count. Physical time and durations are
//! integer milliseconds on an abstract clock.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::PriorityContext;
use crate::error::{Error, Result};

/// Logical time (stream progress), in ticks.
pub type Tick = i64;
/// Physical time or duration, in milliseconds.
pub type Millis = i64;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JobId(pub u32);

/// Dense, scenario-wide operator index.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OperatorId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MessageId(pub u64);

impl OperatorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}", self.0)
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// An input event observed at a source operator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub source: OperatorId,
    /// Logical time, nondecreasing per source.
    pub p: Tick,
    /// Physical time at which the event was observed at the source.
    pub t: Millis,
    pub tuples: u64,
}

/// Who sent a message: the external client feeding a source operator, or an
/// upstream operator.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sender {
    Ingress(OperatorId),
    Operator(OperatorId),
}

/// Unit of work delivered to an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub job: JobId,
    pub target: OperatorId,
    pub sender: Sender,
    /// Global send sequence; the scheduler's final tie-breaker.
    pub seq: u64,
    /// Position within the (sender, target) channel.
    pub channel_seq: u64,
    /// Logical time of the last event required to produce this message.
    pub p: Tick,
    /// Physical arrival time of the last event required to produce this
    /// message (true lineage, not an estimate).
    pub t: Millis,
    pub tuples: u64,
    pub pc: Option<PriorityContext>,
}

impl Message {
    pub fn context(&self) -> Result<&PriorityContext> {
        self.pc.as_ref().ok_or(Error::MissingContext(self.id))
    }
}

/// Window semantics of an operator.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum OperatorKind {
    Regular,
    /// Non-overlapping windows; the slide equals the size.
    TumblingWindow {
        size: Tick,
    },
    SlidingWindow {
        size: Tick,
        slide: Tick,
    },
}

impl OperatorKind {
    /// Slide size used by the frontier transform. Regular operators (and
    /// raw sources) advance one tick at a time.
    pub fn slide(&self) -> Tick {
        match *self {
            OperatorKind::Regular => 1,
            OperatorKind::TumblingWindow { size } => size,
            OperatorKind::SlidingWindow { slide, .. } => slide,
        }
    }

    pub fn window_size(&self) -> Option<Tick> {
        match *self {
            OperatorKind::Regular => None,
            OperatorKind::TumblingWindow { size } => Some(size),
            OperatorKind::SlidingWindow { size, .. } => Some(size),
        }
    }

    pub fn is_windowed(&self) -> bool {
        !matches!(self, OperatorKind::Regular)
    }
}

/// Synthetic execution cost used by the virtual-time runtime.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCost {
    /// Fixed cost per invocation.
    pub base_ms: f64,
    /// Additional cost per thousand tuples in the message.
    pub per_ktuple_ms: f64,
    /// Extra cost charged to the invocation that completes a window.
    pub trigger_ms: f64,
}

impl SyntheticCost {
    pub fn fixed(ms: f64) -> Self {
        SyntheticCost {
            base_ms: ms,
            ..Default::default()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SyntheticCost {
            base_ms: self.base_ms * factor,
            per_ktuple_ms: self.per_ktuple_ms * factor,
            trigger_ms: self.trigger_ms * factor,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.base_ms == 0.0 && self.per_ktuple_ms == 0.0 && self.trigger_ms == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: OperatorId,
    pub name: String,
    pub stage: u32,
    pub kind: OperatorKind,
    pub downstream: Vec<OperatorId>,
    /// Initial execution-cost estimate used before any profile exists.
    pub cost_hint: Option<Millis>,
    pub cost: SyntheticCost,
    /// Tuples carried by each window result. Regular operators forward the
    /// input tuple count.
    pub output_tuples: u64,
}

impl OperatorSpec {
    pub fn regular(id: OperatorId, name: impl Into<String>) -> Self {
        OperatorSpec {
            id,
            name: name.into(),
            stage: 0,
            kind: OperatorKind::Regular,
            downstream: Vec::new(),
            cost_hint: None,
            cost: SyntheticCost::default(),
            output_tuples: 1,
        }
    }

    pub fn windowed(id: OperatorId, name: impl Into<String>, kind: OperatorKind) -> Self {
        OperatorSpec {
            kind,
            ..OperatorSpec::regular(id, name)
        }
    }

    pub fn with_downstream(mut self, downstream: impl IntoIterator<Item = OperatorId>) -> Self {
        self.downstream = downstream.into_iter().collect();
        self
    }

    pub fn with_cost(mut self, cost: SyntheticCost) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_stage(mut self, stage: u32) -> Self {
        self.stage = stage;
        self
    }

    pub fn is_sink(&self) -> bool {
        self.downstream.is_empty()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDomain {
    EventTime,
    IngestionTime,
}

/// A structural problem found by [`DataflowGraph::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "violation")]
pub enum Violation {
    Cycle { operators: Vec<OperatorId> },
    Orphan { operator: OperatorId },
    NonpositiveWindow { operator: OperatorId },
    NonpositiveSlide { operator: OperatorId },
    DanglingEdge { from: OperatorId, to: OperatorId },
    DuplicateOperator { operator: OperatorId },
    MissingSource,
    MissingSink,
    NonpositiveLatencyConstraint,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { operators } => write!(f, "cycle through {operators:?}"),
            Violation::Orphan { operator } => write!(f, "orphan operator {operator}"),
            Violation::NonpositiveWindow { operator } => {
                write!(f, "nonpositive window at {operator}")
            }
            Violation::NonpositiveSlide { operator } => {
                write!(f, "nonpositive slide at {operator}")
            }
            Violation::DanglingEdge { from, to } => write!(f, "edge {from}->{to} to unknown operator"),
            Violation::DuplicateOperator { operator } => write!(f, "duplicate operator {operator}"),
            Violation::MissingSource => f.write_str("missing source"),
            Violation::MissingSink => f.write_str("missing sink"),
            Violation::NonpositiveLatencyConstraint => f.write_str("nonpositive latency constraint"),
        }
    }
}

/// DAG of operators belonging to one job.
#[derive(Clone, Debug, Serialize)]
pub struct DataflowGraph {
    pub job_id: JobId,
    pub name: String,
    /// Tenant group label used when aggregating statistics.
    pub group: String,
    pub operators: Vec<OperatorSpec>,
    pub latency_constraint: Millis,
    pub time_domain: TimeDomain,
    #[serde(skip)]
    index: HashMap<OperatorId, usize>,
}

impl DataflowGraph {
    pub fn new(
        job_id: JobId,
        name: impl Into<String>,
        operators: Vec<OperatorSpec>,
        latency_constraint: Millis,
        time_domain: TimeDomain,
    ) -> Self {
        let name = name.into();
        let index = operators.iter().enumerate().map(|(i, op)| (op.id, i)).collect();
        DataflowGraph {
            job_id,
            group: name.clone(),
            name,
            operators,
            latency_constraint,
            time_domain,
            index,
        }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = group.into();
        self
    }

    pub fn operator(&self, id: OperatorId) -> Option<&OperatorSpec> {
        self.index.get(&id).map(|&i| &self.operators[i])
    }

    pub fn contains(&self, id: OperatorId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (OperatorId, OperatorId)> + '_ {
        self.operators
            .iter()
            .flat_map(|op| op.downstream.iter().map(move |&d| (op.id, d)))
    }

    /// Operators with no upstream edge.
    pub fn sources(&self) -> Vec<OperatorId> {
        let mut has_upstream = vec![false; self.operators.len()];
        for (_, to) in self.edges() {
            if let Some(&i) = self.index.get(&to) {
                has_upstream[i] = true;
            }
        }
        self.operators
            .iter()
            .zip(has_upstream)
            .filter(|(_, up)| !up)
            .map(|(op, _)| op.id)
            .collect()
    }

    pub fn sinks(&self) -> Vec<OperatorId> {
        self.operators
            .iter()
            .filter(|op| op.is_sink())
            .map(|op| op.id)
            .collect()
    }

    pub fn upstream(&self, id: OperatorId) -> Vec<OperatorId> {
        self.edges().filter(|&(_, to)| to == id).map(|(from, _)| from).collect()
    }

    /// Kahn's algorithm; `None` when the graph has a cycle or a dangling edge.
    pub fn topological_order(&self) -> Option<Vec<OperatorId>> {
        let n = self.operators.len();
        let mut indegree = vec![0usize; n];
        for (_, to) in self.edges() {
            indegree[*self.index.get(&to)?] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(self.operators[i].id);
            for d in &self.operators[i].downstream {
                let j = self.index[d];
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Structural checks. Violations are data: an empty list means the graph
    /// is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.latency_constraint <= 0 {
            violations.push(Violation::NonpositiveLatencyConstraint);
        }
        if self.index.len() != self.operators.len() {
            let mut seen = HashMap::new();
            for op in &self.operators {
                if seen.insert(op.id, ()).is_some() {
                    violations.push(Violation::DuplicateOperator { operator: op.id });
                }
            }
        }
        for op in &self.operators {
            match op.kind {
                OperatorKind::Regular => {}
                OperatorKind::TumblingWindow { size } => {
                    if size <= 0 {
                        violations.push(Violation::NonpositiveSlide { operator: op.id });
                    }
                }
                OperatorKind::SlidingWindow { size, slide } => {
                    if size <= 0 {
                        violations.push(Violation::NonpositiveWindow { operator: op.id });
                    }
                    if slide <= 0 {
                        violations.push(Violation::NonpositiveSlide { operator: op.id });
                    }
                }
            }
        }
        let mut dangling = false;
        for (from, to) in self.edges() {
            if !self.contains(to) {
                dangling = true;
                violations.push(Violation::DanglingEdge { from, to });
            }
        }
        if dangling {
            return violations;
        }

        let sources = self.sources();
        if sources.is_empty() {
            violations.push(Violation::MissingSource);
        }
        if self.sinks().is_empty() {
            violations.push(Violation::MissingSink);
        }
        if self.topological_order().is_none() {
            violations.push(Violation::Cycle {
                operators: self.cyclic_operators(),
            });
        }

        // Every operator must be reachable from some source.
        let mut reached = vec![false; self.operators.len()];
        let mut stack: Vec<OperatorId> = sources;
        while let Some(id) = stack.pop() {
            let i = self.index[&id];
            if std::mem::replace(&mut reached[i], true) {
                continue;
            }
            stack.extend(self.operators[i].downstream.iter().copied());
        }
        for (op, reached) in self.operators.iter().zip(reached) {
            if !reached {
                violations.push(Violation::Orphan { operator: op.id });
            }
        }
        violations
    }

    /// Operators left over once Kahn's algorithm stalls: members of a cycle
    /// or downstream of one.
    fn cyclic_operators(&self) -> Vec<OperatorId> {
        let n = self.operators.len();
        let mut indegree = vec![0usize; n];
        for (_, to) in self.edges() {
            indegree[self.index[&to]] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut removed = vec![false; n];
        while let Some(i) = ready.pop() {
            removed[i] = true;
            for d in &self.operators[i].downstream {
                let j = self.index[d];
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
        let mut ops: Vec<OperatorId> = (0..n).filter(|&i| !removed[i]).map(|i| self.operators[i].id).collect();
        ops.sort();
        ops
    }

    /// Longest summed cost over any path from `op`'s successors to a sink.
    /// Zero for a sink.
    pub fn static_critical_path(&self, op: OperatorId, costs: &HashMap<OperatorId, Millis>) -> Result<Millis> {
        if !self.contains(op) {
            return Err(Error::UnknownOperator(op));
        }
        let mut memo = HashMap::new();
        self.critical_path_from(op, costs, &mut memo)
    }

    fn critical_path_from(
        &self,
        op: OperatorId,
        costs: &HashMap<OperatorId, Millis>,
        memo: &mut HashMap<OperatorId, Millis>,
    ) -> Result<Millis> {
        if let Some(&v) = memo.get(&op) {
            return Ok(v);
        }
        let spec = self.operator(op).ok_or(Error::UnknownOperator(op))?;
        let mut best = 0;
        for &d in &spec.downstream {
            let cost = *costs.get(&d).ok_or(Error::MissingCost(d))?;
            best = best.max(cost + self.critical_path_from(d, costs, memo)?);
        }
        memo.insert(op, best);
        Ok(best)
    }
}

/// One result emitted by a sink.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub job_id: JobId,
    pub sink_id: OperatorId,
    pub p_out: Tick,
    pub emit_time: Millis,
    pub last_input_arrival: Millis,
    pub latency: Millis,
    pub deadline_met: bool,
}

impl OutputRecord {
    pub fn new(
        job_id: JobId,
        sink_id: OperatorId,
        p_out: Tick,
        emit_time: Millis,
        last_input_arrival: Millis,
        latency_constraint: Millis,
    ) -> Self {
        let latency = emit_time - last_input_arrival;
        OutputRecord {
            job_id,
            sink_id,
            p_out,
            emit_time,
            last_input_arrival,
            latency,
            deadline_met: latency <= latency_constraint,
        }
    }
}

/// Emit time minus the latest arrival among the events that influenced the
/// output.
pub fn compute_latency(emit_time: Millis, influencing: &[Event]) -> Result<Millis> {
    let last_arrival = influencing.iter().map(|e| e.t).max().ok_or(Error::EmptyEventSet)?;
    if emit_time < last_arrival {
        return Err(Error::NegativeLatency {
            emit: emit_time,
            last_arrival,
        });
    }
    Ok(emit_time - last_arrival)
}
