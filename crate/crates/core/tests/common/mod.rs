#![allow(dead_code)]

use std::collections::BTreeSet;

use evgraph_core::{build_graph, EdgeKind, Event, EventGraph, EventId, TraversalKind};
use proptest::prelude::*;

pub fn id(s: &str) -> EventId {
    EventId::parse(s).unwrap()
}

fn arg_value() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,8}( [a-z]{1,6}){0,2}",
        Just("tear \"gas\"".to_string()),
        Just("back\\slash".to_string()),
        Just("café, naïve".to_string()),
        Just("line\nbreak".to_string()),
    ]
}

fn event_strategy(id: EventId) -> impl Strategy<Value = Event> {
    let roles = prop::collection::vec(
        (
            prop::sample::select(vec!["agent", "item", "place", "direction", "time"]),
            prop::collection::vec(arg_value(), 1..3),
        ),
        0..4,
    );
    (roles, prop::option::of("[A-Z][a-z ]{0,30}\\.")).prop_map(move |(roles, desc)| {
        let e = Event::new(id.clone(), roles);
        match desc {
            Some(d) => e.with_description(d),
            None => e,
        }
    })
}

fn ids(max: usize) -> impl Strategy<Value = Vec<EventId>> {
    prop::collection::vec(("[A-Z][a-z]{1,6}( [a-z]{2,5})?", prop::option::of(0u32..4)), 1..=max).prop_map(|raw| {
        let mut seen = BTreeSet::new();
        raw.into_iter()
            .map(|(b, i)| EventId::new(b, i).unwrap())
            .filter(|id| seen.insert(id.to_string().to_lowercase()))
            .collect()
    })
}

fn edge_kind() -> impl Strategy<Value = EdgeKind> {
    prop::sample::select(EdgeKind::ALL.to_vec())
}

/// Random valid graph with up to `max_nodes` events.
pub fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = EventGraph> {
    ids(max_nodes).prop_flat_map(|ids| {
        let n = ids.len();
        let events: Vec<_> = ids.iter().cloned().map(event_strategy).collect();
        let edges = prop::collection::vec((0..n, edge_kind(), 0..n), 0..=(3 * n));
        (events, edges).prop_map(move |(events, edges)| {
            let edges = edges
                .into_iter()
                .map(|(s, k, t)| (events[s].id.clone(), k, events[t].id.clone()))
                .collect();
            build_graph(events, edges).unwrap()
        })
    })
}

/// Reference traversal: scan the full edge list.
pub fn brute_force(g: &EventGraph, node: &EventId, kind: TraversalKind) -> BTreeSet<EventId> {
    let (edge_kind, outgoing) = match kind {
        TraversalKind::Children => (EdgeKind::Hierarchical, true),
        TraversalKind::Parent => (EdgeKind::Hierarchical, false),
        TraversalKind::TemporalAfter => (EdgeKind::Temporal, true),
        TraversalKind::TemporalBefore => (EdgeKind::Temporal, false),
        TraversalKind::CausedBy => (EdgeKind::Causal, true),
        TraversalKind::ResultedIn => (EdgeKind::Causal, false),
    };
    g.edges()
        .into_iter()
        .filter(|(s, k, t)| *k == edge_kind && if outgoing { s == node } else { t == node })
        .map(|(s, _, t)| if outgoing { t } else { s })
        .collect()
}

pub fn traverse_set(g: &EventGraph, node: &EventId, kind: TraversalKind) -> BTreeSet<EventId> {
    g.traverse(node, kind)
        .unwrap()
        .into_iter()
        .map(|e| e.id.clone())
        .collect()
}

pub const INVERSE_PAIRS: [(TraversalKind, TraversalKind); 3] = [
    (TraversalKind::Children, TraversalKind::Parent),
    (TraversalKind::TemporalAfter, TraversalKind::TemporalBefore),
    (TraversalKind::CausedBy, TraversalKind::ResultedIn),
];

pub fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

pub mod batch {
    use std::path::PathBuf;
    use std::sync::Arc;

    use evgraph_core::oracles::{OracleSuite, ScenarioScript, ScriptedOracle};
    use evgraph_core::pipeline::{load_dataset, QuestionRecord};

    pub fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/batch10")
    }

    pub fn records() -> Vec<QuestionRecord> {
        load_dataset(&dir().join("dataset.jsonl")).unwrap()
    }

    pub fn script() -> ScenarioScript {
        ScenarioScript::load(&dir().join("scenario.json")).unwrap()
    }

    pub fn oracle(script: ScenarioScript) -> (Arc<ScriptedOracle>, OracleSuite) {
        let o = Arc::new(ScriptedOracle::new(script).unwrap());
        let suite = OracleSuite::uniform(o.clone());
        (o, suite)
    }
}
