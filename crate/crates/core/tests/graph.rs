use std::collections::HashMap;

use priostream::model::{
    compute_latency, DataflowGraph, Event, JobId, Millis, OperatorId, OperatorSpec, TimeDomain, Violation,
};
use proptest::prelude::*;

fn graph(n: u32, edges: &[(u32, u32)]) -> DataflowGraph {
    let ops = (0..n)
        .map(|i| {
            let down: Vec<OperatorId> = edges.iter().filter(|e| e.0 == i).map(|e| OperatorId(e.1)).collect();
            OperatorSpec::regular(OperatorId(i), format!("op{i}")).with_downstream(down)
        })
        .collect();
    DataflowGraph::new(JobId(0), "g", ops, 100, TimeDomain::IngestionTime)
}

/// Three-colour depth-first search.
fn has_cycle(n: u32, edges: &[(u32, u32)]) -> bool {
    fn visit(v: u32, edges: &[(u32, u32)], colour: &mut [u8]) -> bool {
        colour[v as usize] = 1;
        for &(a, b) in edges {
            if a != v {
                continue;
            }
            let c = colour[b as usize];
            if c == 1 || (c == 0 && visit(b, edges, colour)) {
                return true;
            }
        }
        colour[v as usize] = 2;
        false
    }
    let mut colour = vec![0u8; n as usize];
    (0..n).any(|v| colour[v as usize] == 0 && visit(v, edges, &mut colour))
}

/// Longest path cost by listing every path.
fn longest_by_enumeration(v: u32, edges: &[(u32, u32)], costs: &[Millis]) -> Millis {
    edges
        .iter()
        .filter(|e| e.0 == v)
        .map(|&(_, d)| costs[d as usize] + longest_by_enumeration(d, edges, costs))
        .max()
        .unwrap_or(0)
}

fn arb_graph() -> impl Strategy<Value = (u32, Vec<(u32, u32)>)> {
    (1u32..=8).prop_flat_map(|n| {
        let pairs: Vec<(u32, u32)> = (0..n)
            .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        let len = pairs.len();
        (Just(n), proptest::sample::subsequence(pairs, 0..=len.min(12)))
    })
}

fn arb_dag() -> impl Strategy<Value = (u32, Vec<(u32, u32)>, Vec<Millis>)> {
    (1u32..=8).prop_flat_map(|n| {
        let pairs: Vec<(u32, u32)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let len = pairs.len();
        (
            Just(n),
            proptest::sample::subsequence(pairs, 0..=len),
            proptest::collection::vec(0i64..50, n as usize),
        )
    })
}

proptest! {
    #[test]
    fn cycles_match_depth_first_search((n, edges) in arb_graph()) {
        let reported = graph(n, &edges).validate().iter().any(|v| matches!(v, Violation::Cycle { .. }));
        prop_assert_eq!(reported, has_cycle(n, &edges));
    }

    #[test]
    fn dags_have_a_topological_order((n, edges, _) in arb_dag()) {
        let g = graph(n, &edges);
        let order = g.topological_order().expect("acyclic");
        let pos: HashMap<OperatorId, usize> = order.iter().enumerate().map(|(i, &op)| (op, i)).collect();
        for (a, b) in g.edges() {
            prop_assert!(pos[&a] < pos[&b]);
        }
        prop_assert!(g.validate().is_empty());
    }

    #[test]
    fn critical_path_matches_enumeration((n, edges, costs) in arb_dag()) {
        let g = graph(n, &edges);
        let map: HashMap<OperatorId, Millis> = costs.iter().enumerate().map(|(i, &c)| (OperatorId(i as u32), c)).collect();
        for v in 0..n {
            prop_assert_eq!(g.static_critical_path(OperatorId(v), &map).unwrap(), longest_by_enumeration(v, &edges, &costs));
        }
    }

    #[test]
    fn latency_ignores_event_order(
        (times, shuffled) in proptest::collection::vec(0i64..10_000, 1..20)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        extra in 0i64..1_000,
    ) {
        let events = |ts: &[i64]| -> Vec<Event> { ts.iter().map(|&t| Event { source: OperatorId(0), p: t, t, tuples: 1 }).collect() };
        let emit = times.iter().max().unwrap() + extra;
        prop_assert_eq!(compute_latency(emit, &events(&times)).unwrap(), extra);
        prop_assert_eq!(compute_latency(emit, &events(&shuffled)).unwrap(), extra);
        prop_assert!(compute_latency(emit - extra - 1, &events(&times)).is_err());
    }
}

#[test]
fn empty_event_set_is_an_error() {
    assert!(compute_latency(10, &[]).is_err());
}
