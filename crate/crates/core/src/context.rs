//! Scheduling contexts and the context-handling API.
//!
//! A [`PriorityContext`] travels with every message and carries the keys
//! the scheduler orders by. A [`ReplyContext`] travels upstream on
//! acknowledgements and carries profiled costs, which senders aggregate in
//! an [`RcStore`] to estimate the downstream critical path.
//!
//! Priorities are computed only here, on the sending side. The scheduler
//! never derives a key itself.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Event, Message, MessageId, Millis, OperatorId, OperatorSpec, Tick, TimeDomain};
use crate::policy::{edf_deadline, llf_deadline, token_priority, PolicyKind, Priority, TokenBucket};
use crate::progress::{frontier, RegressionModel, DEFAULT_REGRESSION_CAPACITY};

/// Policy-defined payload of a priority context.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataflowField {
    /// Frontier progress after the latest conversion (stream progress
    /// before the first one).
    pub p: Tick,
    /// Frontier time after the latest conversion.
    pub t: Millis,
    /// The job's latency constraint; constant along the dataflow.
    pub latency_constraint: Millis,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityContext {
    pub id: MessageId,
    pub pri: Priority,
    pub field: DataflowField,
}

/// Queueing statistics piggybacked on replies. Reported, never used in
/// priorities.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyStats {
    pub queue_delay: Millis,
    pub queue_len: u64,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyContext {
    /// Profiled cost of the replying operator.
    pub c_m: Millis,
    /// Critical-path cost downstream of the replying operator.
    pub c_path: Millis,
    pub stats: Option<ReplyStats>,
}

impl ReplyContext {
    pub fn new(c_m: Millis, c_path: Millis) -> Self {
        ReplyContext {
            c_m: c_m.max(0),
            c_path: c_path.max(0),
            stats: None,
        }
    }

    pub fn path_cost(&self) -> Millis {
        self.c_m + self.c_path
    }
}

/// Latest reply from each downstream operator.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RcStore {
    entries: BTreeMap<OperatorId, ReplyContext>,
}

impl RcStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, from: OperatorId, reply: ReplyContext) {
        self.entries.insert(from, reply);
    }

    pub fn get(&self, op: OperatorId) -> Option<&ReplyContext> {
        self.entries.get(&op)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Max of `c_m + c_path` over downstream operators; 0 when empty.
    pub fn aggregate(&self) -> Millis {
        self.entries.values().map(ReplyContext::path_cost).max().unwrap_or(0)
    }

    /// `(c_op, c_path)` for a message headed to `target`. Before any reply
    /// arrives the operator's cost hint stands in for `c_op`.
    pub fn costs_for(&self, target: &OperatorSpec) -> (Millis, Millis) {
        match self.get(target.id) {
            Some(rc) => (rc.c_m, rc.c_path),
            None => (target.cost_hint.unwrap_or(0), 0),
        }
    }
}

/// Per-sender knobs that shape a conversion.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ConvertOptions {
    pub policy: PolicyKind,
    pub domain: TimeDomain,
    /// Slide size of the sending operator (1 for regular operators and
    /// external clients).
    pub sender_slide: Tick,
    /// When false, windowed targets are treated as regular ones: no
    /// frontier extension.
    pub semantics_aware: bool,
}

impl ConvertOptions {
    pub fn new(policy: PolicyKind, domain: TimeDomain) -> Self {
        ConvertOptions {
            policy,
            domain,
            sender_slide: 1,
            semantics_aware: true,
        }
    }
}

/// Recomputes a context for delivery to `target`.
///
/// The context's current `(p, t)` is lifted to the target's frontier, fed
/// to the progress model in event time, and the policy's keys are derived
/// from the frontier and the reply costs recorded for `target`.
pub fn cxt_convert(
    pc: &PriorityContext,
    rc: &RcStore,
    target: &OperatorSpec,
    model: &mut RegressionModel,
    opts: &ConvertOptions,
) -> Result<PriorityContext> {
    let DataflowField {
        p,
        t,
        latency_constraint,
    } = pc.field;
    let (p_f, t_f) = if opts.semantics_aware {
        frontier(p, t, opts.sender_slide, target, model, opts.domain)?
    } else {
        (p, t)
    };
    if opts.domain == TimeDomain::EventTime {
        model.update(p, t);
    }
    let (c_op, c_path) = rc.costs_for(target);
    let pri = match opts.policy {
        PolicyKind::Llf => Priority::new(p_f, llf_deadline(t_f, latency_constraint, c_op, c_path)),
        PolicyKind::Edf => Priority::new(p_f, edf_deadline(t_f, latency_constraint, c_path)),
        // Local order stays on stream progress so channels keep FIFO order.
        PolicyKind::Sjf => Priority::new(p_f, c_op),
        // Token keys are fixed at the source and ride along unchanged.
        PolicyKind::Token => pc.pri,
    };
    Ok(PriorityContext {
        id: pc.id,
        pri,
        field: DataflowField {
            p: p_f,
            t: t_f,
            latency_constraint,
        },
    })
}

/// Context for the message a source emits on observing `event`.
pub fn build_ctx_at_source(
    id: MessageId,
    event: &Event,
    latency_constraint: Millis,
    rc: &RcStore,
    target: &OperatorSpec,
    model: &mut RegressionModel,
    opts: &ConvertOptions,
) -> Result<PriorityContext> {
    let pc = PriorityContext {
        id,
        pri: Priority::new(event.p, event.t),
        field: DataflowField {
            p: event.p,
            t: event.t,
            latency_constraint,
        },
    };
    cxt_convert(&pc, rc, target, model, opts)
}

/// Context for a message produced by an operator that was invoked by
/// `upstream`. Inherits the upstream context, then converts it for
/// `target`.
pub fn build_ctx_at_operator(
    id: MessageId,
    upstream: &Message,
    rc: &RcStore,
    target: &OperatorSpec,
    model: &mut RegressionModel,
    opts: &ConvertOptions,
) -> Result<PriorityContext> {
    let inherited = upstream.context()?;
    let pc = PriorityContext { id, ..*inherited };
    cxt_convert(&pc, rc, target, model, opts)
}

pub fn process_ctx_from_reply(rc: &mut RcStore, from: OperatorId, reply: ReplyContext) {
    rc.update(from, reply);
}

/// Reply context an operator attaches to its acknowledgement: its own cost
/// plus the longest downstream path it knows of (nothing for a sink).
pub fn prepare_reply(replying: &OperatorSpec, own_cost: Millis, rc: &RcStore) -> ReplyContext {
    if replying.is_sink() {
        ReplyContext::new(own_cost, 0)
    } else {
        ReplyContext::new(own_cost, rc.aggregate())
    }
}

/// The pluggable policy seam: the four context-handling functions a
/// converter offers its operator.
pub trait ContextHandler {
    fn build_at_source(&mut self, id: MessageId, event: &Event, target: &OperatorSpec) -> Result<PriorityContext>;

    fn build_at_operator(
        &mut self,
        id: MessageId,
        upstream: &Message,
        target: &OperatorSpec,
    ) -> Result<PriorityContext>;

    fn process_reply(&mut self, from: OperatorId, reply: ReplyContext);

    fn prepare_reply(&self, replying: &OperatorSpec, own_cost: Millis) -> ReplyContext;
}

/// Context converter owned by one sender (an operator or a source's
/// ingress). Holds the sender's reply store, one progress model per
/// windowed target, and the token bucket under the token policy.
#[derive(Clone, Debug)]
pub struct Converter {
    pub opts: ConvertOptions,
    pub latency_constraint: Millis,
    pub rc: RcStore,
    models: BTreeMap<OperatorId, RegressionModel>,
    model_capacity: usize,
    bucket: Option<TokenBucket>,
    conversions: u64,
}

impl Converter {
    pub fn new(opts: ConvertOptions, latency_constraint: Millis) -> Self {
        Converter {
            opts,
            latency_constraint,
            rc: RcStore::new(),
            models: BTreeMap::new(),
            model_capacity: DEFAULT_REGRESSION_CAPACITY,
            bucket: None,
            conversions: 0,
        }
    }

    pub fn with_model_capacity(mut self, capacity: usize) -> Self {
        self.model_capacity = capacity;
        self
    }

    pub fn with_token_bucket(mut self, bucket: TokenBucket) -> Self {
        self.bucket = Some(bucket);
        self
    }

    pub fn model(&self, target: OperatorId) -> Option<&RegressionModel> {
        self.models.get(&target)
    }

    pub fn conversions(&self) -> u64 {
        self.conversions
    }

    fn model_mut(&mut self, target: OperatorId) -> &mut RegressionModel {
        let capacity = self.model_capacity;
        self.models
            .entry(target)
            .or_insert_with(|| RegressionModel::new(capacity))
    }
}

impl ContextHandler for Converter {
    fn build_at_source(&mut self, id: MessageId, event: &Event, target: &OperatorSpec) -> Result<PriorityContext> {
        self.conversions += 1;
        let opts = self.opts;
        let l = self.latency_constraint;
        let token = match (&mut self.bucket, opts.policy) {
            (Some(bucket), PolicyKind::Token) => {
                let interval = bucket.interval_id(event.t);
                Some(token_priority(bucket.issue(event.t), interval))
            }
            _ => None,
        };
        let rc = std::mem::take(&mut self.rc);
        let converted = build_ctx_at_source(id, event, l, &rc, target, self.model_mut(target.id), &opts);
        self.rc = rc;
        let mut pc = converted?;
        if let Some(pri) = token {
            pc.pri = pri;
        }
        Ok(pc)
    }

    fn build_at_operator(
        &mut self,
        id: MessageId,
        upstream: &Message,
        target: &OperatorSpec,
    ) -> Result<PriorityContext> {
        self.conversions += 1;
        let opts = self.opts;
        let rc = std::mem::take(&mut self.rc);
        let converted = build_ctx_at_operator(id, upstream, &rc, target, self.model_mut(target.id), &opts);
        self.rc = rc;
        converted
    }

    fn process_reply(&mut self, from: OperatorId, reply: ReplyContext) {
        process_ctx_from_reply(&mut self.rc, from, reply);
    }

    fn prepare_reply(&self, replying: &OperatorSpec, own_cost: Millis) -> ReplyContext {
        prepare_reply(replying, own_cost, &self.rc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JobId, OperatorKind, Sender};

    fn tumbling(id: u32, size: Tick) -> OperatorSpec {
        OperatorSpec::windowed(OperatorId(id), "w", OperatorKind::TumblingWindow { size })
    }

    fn sink(id: u32) -> OperatorSpec {
        OperatorSpec::regular(OperatorId(id), "sink")
    }

    fn store(entries: &[(u32, Millis, Millis)]) -> RcStore {
        let mut rc = RcStore::new();
        for &(op, c_m, c_path) in entries {
            rc.update(OperatorId(op), ReplyContext::new(c_m, c_path));
        }
        rc
    }

    fn event(p: Tick, t: Millis) -> Event {
        Event {
            source: OperatorId(0),
            p,
            t,
            tuples: 1,
        }
    }

    fn upstream_msg(pc: PriorityContext) -> Message {
        Message {
            id: pc.id,
            job: JobId(0),
            target: OperatorId(1),
            sender: Sender::Operator(OperatorId(0)),
            seq: 0,
            channel_seq: 0,
            p: pc.field.p,
            t: pc.field.t,
            tuples: 1,
            pc: Some(pc),
        }
    }

    fn ingestion(policy: PolicyKind) -> ConvertOptions {
        ConvertOptions::new(policy, TimeDomain::IngestionTime)
    }

    #[test]
    fn source_context_examples() {
        let mut model = RegressionModel::default();
        let pc = build_ctx_at_source(
            MessageId(1),
            &event(1, 1),
            100,
            &RcStore::new(),
            &sink(1),
            &mut model,
            &ingestion(PolicyKind::Llf),
        )
        .unwrap();
        assert_eq!(pc.pri.global, 101);

        let pc = build_ctx_at_source(
            MessageId(2),
            &event(3, 3),
            50,
            &store(&[(1, 20, 0)]),
            &tumbling(1, 10),
            &mut model,
            &ingestion(PolicyKind::Llf),
        )
        .unwrap();
        assert_eq!(pc.pri, Priority::new(10, 40));
        assert_eq!(pc.field.p, 10);
    }

    #[test]
    fn token_source_context_uses_tag() {
        let opts = ingestion(PolicyKind::Token);
        let mut conv = Converter::new(opts, 100).with_token_bucket(TokenBucket::new(JobId(0), 4, 1000));
        let pc = conv.build_at_source(MessageId(0), &event(250, 250), &sink(1)).unwrap();
        assert_eq!(pc.pri, Priority::new(0, 0));
        let pc = conv.build_at_source(MessageId(1), &event(250, 250), &sink(1)).unwrap();
        assert_eq!(pc.pri.global, 250);
    }

    #[test]
    fn convert_examples() {
        let mut model = RegressionModel::default();
        let pc = PriorityContext {
            id: MessageId(0),
            pri: Priority::new(3, 3),
            field: DataflowField {
                p: 3,
                t: 3,
                latency_constraint: 50,
            },
        };
        let rc = store(&[(1, 20, 0)]);
        let llf = cxt_convert(&pc, &rc, &tumbling(1, 10), &mut model, &ingestion(PolicyKind::Llf)).unwrap();
        assert_eq!(llf.pri, Priority::new(10, 40));
        let edf = cxt_convert(&pc, &rc, &tumbling(1, 10), &mut model, &ingestion(PolicyKind::Edf)).unwrap();
        assert_eq!(edf.pri.global, 60);

        let pc = PriorityContext {
            field: DataflowField {
                p: 5,
                t: 50,
                latency_constraint: 100,
            },
            ..pc
        };
        let regular = cxt_convert(&pc, &RcStore::new(), &sink(2), &mut model, &ingestion(PolicyKind::Llf)).unwrap();
        assert_eq!(regular.pri, Priority::new(5, 150));
    }

    #[test]
    fn operator_context_examples() {
        let mut model = RegressionModel::default();
        let upstream = PriorityContext {
            id: MessageId(0),
            pri: Priority::new(10, 0),
            field: DataflowField {
                p: 10,
                t: 10,
                latency_constraint: 50,
            },
        };
        let pc = build_ctx_at_operator(
            MessageId(1),
            &upstream_msg(upstream),
            &store(&[(2, 5, 0)]),
            &sink(2),
            &mut model,
            &ingestion(PolicyKind::Llf),
        )
        .unwrap();
        assert_eq!(pc.pri.global, 55);
        assert_eq!(pc.field.latency_constraint, 50);

        // Window-to-window with equal slides leaves progress untouched.
        let opts = ConvertOptions {
            sender_slide: 10,
            ..ingestion(PolicyKind::Llf)
        };
        let upstream = PriorityContext {
            field: DataflowField {
                p: 20,
                t: 20,
                latency_constraint: 50,
            },
            ..upstream
        };
        let pc = build_ctx_at_operator(
            MessageId(2),
            &upstream_msg(upstream),
            &RcStore::new(),
            &tumbling(3, 10),
            &mut model,
            &opts,
        )
        .unwrap();
        assert_eq!(pc.field.p, 20);

        let mut orphan = upstream_msg(upstream);
        orphan.pc = None;
        assert!(build_ctx_at_operator(MessageId(3), &orphan, &RcStore::new(), &sink(2), &mut model, &opts).is_err());
    }

    #[test]
    fn latency_constraint_survives_a_chain() {
        let mut conv = Converter::new(ingestion(PolicyKind::Llf), 75);
        let mut pc = conv.build_at_source(MessageId(0), &event(4, 4), &sink(1)).unwrap();
        for hop in 1..5 {
            pc = conv
                .build_at_operator(MessageId(hop), &upstream_msg(pc), &sink(hop as u32 + 1))
                .unwrap();
            assert_eq!(pc.field.latency_constraint, 75);
        }
    }

    #[test]
    fn semantics_unaware_skips_frontier() {
        let mut model = RegressionModel::default();
        let opts = ConvertOptions {
            semantics_aware: false,
            ..ingestion(PolicyKind::Llf)
        };
        let pc = build_ctx_at_source(
            MessageId(0),
            &event(3, 3),
            50,
            &RcStore::new(),
            &tumbling(1, 10),
            &mut model,
            &opts,
        )
        .unwrap();
        assert_eq!(pc.pri, Priority::new(3, 53));
    }

    #[test]
    fn event_time_conversion_trains_model() {
        let mut conv = Converter::new(ConvertOptions::new(PolicyKind::Llf, TimeDomain::EventTime), 100);
        let w = tumbling(1, 10);
        // Unfit: the window is treated like a regular operator.
        let first = conv.build_at_source(MessageId(0), &event(1, 3), &w).unwrap();
        assert_eq!(first.field.t, 3);
        conv.build_at_source(MessageId(1), &event(11, 13), &w).unwrap();
        let pc = conv.build_at_source(MessageId(2), &event(21, 23), &w).unwrap();
        assert_eq!((pc.field.p, pc.field.t), (30, 32));
        assert_eq!(conv.model(w.id).unwrap().len(), 3);
    }

    #[test]
    fn reply_store_aggregation() {
        let mut rc = RcStore::new();
        assert_eq!(rc.aggregate(), 0);
        process_ctx_from_reply(&mut rc, OperatorId(1), ReplyContext::new(7, 0));
        assert_eq!(rc.aggregate(), 7);

        let mut rc = store(&[(1, 5, 0)]);
        process_ctx_from_reply(&mut rc, OperatorId(2), ReplyContext::new(3, 10));
        assert_eq!(rc.aggregate(), 13);
        process_ctx_from_reply(&mut rc, OperatorId(2), ReplyContext::new(1, 1));
        assert_eq!(rc.aggregate(), 5);
    }

    #[test]
    fn prepare_reply_examples() {
        let s = sink(9);
        assert_eq!(prepare_reply(&s, 4, &store(&[(3, 100, 100)])), ReplyContext::new(4, 0));
        let mid = OperatorSpec::regular(OperatorId(5), "mid").with_downstream([OperatorId(9)]);
        assert_eq!(prepare_reply(&mid, 6, &store(&[(9, 13, 0)])), ReplyContext::new(6, 13));
        let fan = OperatorSpec::regular(OperatorId(5), "fan").with_downstream([OperatorId(8), OperatorId(9)]);
        assert_eq!(
            prepare_reply(&fan, 2, &store(&[(8, 13, 0), (9, 15, 5)])),
            ReplyContext::new(2, 20)
        );
    }
}
