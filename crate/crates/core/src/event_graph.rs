//! Typed event graphs.
//!
//! Nodes are events carrying argument roles (agent, item, place, ...);
//! edges are directed and come in exactly three kinds: temporal, causal and
//! hierarchical. A graph is immutable once built. Densification produces a
//! new graph through [`crate::graph_io::merge_graphs`].

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {source_id} -[{kind}]-> {target}: {end} endpoint names no event")]
    DanglingEdge {
        source_id: EventId,
        kind: EdgeKind,
        target: EventId,
        end: EdgeEnd,
    },
    #[error("duplicate event id {0}")]
    DuplicateEventId(EventId),
    #[error("no event matches {0:?}")]
    NodeNotFound(String),
    #[error("unknown node {0}")]
    UnknownNode(EventId),
    #[error("invalid event id {0:?}: {1}")]
    InvalidEventId(String, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEnd {
    Source,
    Target,
}

impl fmt::Display for EdgeEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeEnd::Source => "source",
            EdgeEnd::Target => "target",
        })
    }
}

/// Event identifier: a base name plus an optional disambiguating index,
/// rendered as `base` or `base_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId {
    base: String,
    index: Option<u32>,
}

impl EventId {
    /// Builds an id from parts. The base may not itself end in `_<digits>`,
    /// otherwise the rendered form would not parse back to the same parts.
    pub fn new(base: impl Into<String>, index: Option<u32>) -> Result<Self, GraphError> {
        let base = base.into();
        let trimmed = base.trim();
        if trimmed.is_empty() {
            return Err(GraphError::InvalidEventId(base, "empty base name"));
        }
        if trimmed != base {
            return Err(GraphError::InvalidEventId(base, "surrounding whitespace"));
        }
        if split_index(&base).is_some() {
            return Err(GraphError::InvalidEventId(base, "base ends with an index suffix"));
        }
        Ok(Self { base, index })
    }

    /// Parses a rendered id (`Went_1`, `Count to ten`). Exact inverse of
    /// [`fmt::Display`].
    pub fn parse(rendered: &str) -> Result<Self, GraphError> {
        let s = rendered.trim();
        if s.is_empty() {
            return Err(GraphError::InvalidEventId(rendered.to_string(), "empty base name"));
        }
        match split_index(s) {
            Some((base, index)) => Ok(Self {
                base: base.to_string(),
                index: Some(index),
            }),
            None => Ok(Self {
                base: s.to_string(),
                index: None,
            }),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn index(&self) -> Option<u32> {
        self.index
    }
}

/// Splits `name_12` into (`name`, 12). The base part must be non-empty.
fn split_index(s: &str) -> Option<(&str, u32)> {
    let (base, digits) = s.rsplit_once('_')?;
    if base.trim().is_empty() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Leading zeros would not render back identically.
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok().map(|n| (base, n))
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(k) => write!(f, "{}_{}", self.base, k),
            None => f.write_str(&self.base),
        }
    }
}

impl FromStr for EventId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for EventId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        EventId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A single event node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    /// Role name to argument values. Values are non-empty and duplicate free.
    pub args: IndexMap<String, Vec<String>>,
    pub description: String,
}

impl Event {
    /// Builds an event, normalizing the argument map: empty value lists are
    /// dropped, duplicate values removed, and a `description` role (if any)
    /// becomes the description.
    pub fn new<I, R, V>(id: EventId, args: I) -> Self
    where
        I: IntoIterator<Item = (R, Vec<V>)>,
        R: Into<String>,
        V: Into<String>,
    {
        let mut map: IndexMap<String, Vec<String>> = IndexMap::new();
        let mut description = None;
        for (role, values) in args {
            let role = role.into();
            let values: Vec<String> = values.into_iter().map(Into::into).collect();
            if role == "description" {
                if let Some(first) = values.into_iter().next() {
                    description = Some(first);
                }
                continue;
            }
            let slot = map.entry(role).or_default();
            for v in values {
                if !slot.contains(&v) {
                    slot.push(v);
                }
            }
        }
        map.retain(|_, v| !v.is_empty());
        let mut event = Self {
            id,
            args: map,
            description: String::new(),
        };
        event.description = description.unwrap_or_else(|| event.default_description());
        event
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    /// `Went_1(agent: black car on the right; direction: right)`
    pub fn default_description(&self) -> String {
        if self.args.is_empty() {
            return self.id.to_string();
        }
        let roles: Vec<String> = self
            .args
            .iter()
            .map(|(role, values)| format!("{}: {}", role, values.join(", ")))
            .collect();
        format!("{}({})", self.id, roles.join("; "))
    }

    /// Iterates every argument value under every role, in role order.
    pub fn arg_values(&self) -> impl Iterator<Item = &str> {
        self.args.values().flatten().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Temporal,
    Causal,
    Hierarchical,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::Temporal, EdgeKind::Causal, EdgeKind::Hierarchical];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Temporal => "temporal",
            EdgeKind::Causal => "causal",
            EdgeKind::Hierarchical => "hierarchical",
        }
    }

    /// Case-insensitive lookup of a relation key.
    pub fn from_key(key: &str) -> Option<Self> {
        let k = key.trim();
        Self::ALL.into_iter().find(|kind| kind.as_str().eq_ignore_ascii_case(k))
    }

    fn slot(self) -> usize {
        match self {
            EdgeKind::Temporal => 0,
            EdgeKind::Causal => 1,
            EdgeKind::Hierarchical => 2,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalKind {
    Children,
    Parent,
    TemporalAfter,
    TemporalBefore,
    CausedBy,
    ResultedIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
}

impl TraversalKind {
    pub const ALL: [TraversalKind; 6] = [
        TraversalKind::Children,
        TraversalKind::Parent,
        TraversalKind::TemporalAfter,
        TraversalKind::TemporalBefore,
        TraversalKind::CausedBy,
        TraversalKind::ResultedIn,
    ];

    /// Edge kind and direction this traversal follows.
    pub fn edge(self) -> (EdgeKind, Direction) {
        match self {
            TraversalKind::Children => (EdgeKind::Hierarchical, Direction::Outgoing),
            TraversalKind::Parent => (EdgeKind::Hierarchical, Direction::Incoming),
            TraversalKind::TemporalAfter => (EdgeKind::Temporal, Direction::Outgoing),
            TraversalKind::TemporalBefore => (EdgeKind::Temporal, Direction::Incoming),
            // "events that happened due to the node": the node is the cause.
            TraversalKind::CausedBy => (EdgeKind::Causal, Direction::Outgoing),
            TraversalKind::ResultedIn => (EdgeKind::Causal, Direction::Incoming),
        }
    }

    /// Keyword used by the plan language.
    pub fn keyword(self) -> &'static str {
        match self {
            TraversalKind::Children => "children",
            TraversalKind::Parent => "parent",
            TraversalKind::TemporalAfter => "after",
            TraversalKind::TemporalBefore => "before",
            TraversalKind::CausedBy => "caused_by",
            TraversalKind::ResultedIn => "resulted_in",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == word)
    }
}

#[derive(Debug, Clone, Default)]
struct Adjacency {
    forward: HashMap<EventId, Vec<EventId>>,
    reverse: HashMap<EventId, Vec<EventId>>,
}

/// Directed, typed event graph. Events keep insertion order; successor lists
/// keep edge insertion order; predecessor lists follow the predecessors'
/// event order so they do not depend on how edges were fed in.
#[derive(Debug, Clone, Default)]
pub struct EventGraph {
    events: IndexMap<EventId, Event>,
    adjacency: [Adjacency; 3],
}

pub type Edge = (EventId, EdgeKind, EventId);

/// Validates events and edges and assembles a graph. Duplicate edges collapse.
pub fn build_graph(events: Vec<Event>, edges: Vec<Edge>) -> Result<EventGraph, GraphError> {
    let mut map = IndexMap::with_capacity(events.len());
    for event in events {
        if map.contains_key(&event.id) {
            return Err(GraphError::DuplicateEventId(event.id));
        }
        map.insert(event.id.clone(), event);
    }
    let mut adjacency: [Adjacency; 3] = Default::default();
    for (source, kind, target) in edges {
        let end = if !map.contains_key(&source) {
            Some(EdgeEnd::Source)
        } else if !map.contains_key(&target) {
            Some(EdgeEnd::Target)
        } else {
            None
        };
        if let Some(end) = end {
            return Err(GraphError::DanglingEdge {
                source_id: source,
                kind,
                target,
                end,
            });
        }
        let adj = &mut adjacency[kind.slot()];
        let succ = adj.forward.entry(source.clone()).or_default();
        if succ.contains(&target) {
            continue;
        }
        succ.push(target.clone());
        adj.reverse.entry(target).or_default().push(source);
    }
    for adj in &mut adjacency {
        for preds in adj.reverse.values_mut() {
            preds.sort_by_key(|id| map.get_index_of(id));
        }
    }
    Ok(EventGraph { events: map, adjacency })
}

impl EventGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency
            .iter()
            .map(|adj| adj.forward.values().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Every event exactly once, in insertion order.
    pub fn iterate_nodes(&self) -> impl Iterator<Item = &Event> {
        self.events.values()
    }

    pub fn get(&self, id: &EventId) -> Option<&Event> {
        self.events.get(id)
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.events.contains_key(id)
    }

    pub fn position(&self, id: &EventId) -> Option<usize> {
        self.events.get_index_of(id)
    }

    /// Direct successors of `id` along `kind`, in insertion order.
    pub fn successors(&self, id: &EventId, kind: EdgeKind) -> &[EventId] {
        self.adjacency[kind.slot()]
            .forward
            .get(id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Direct predecessors of `id` along `kind`, in event order.
    pub fn predecessors(&self, id: &EventId, kind: EdgeKind) -> &[EventId] {
        self.adjacency[kind.slot()]
            .reverse
            .get(id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All edges, grouped by source in event order, then by kind
    /// (temporal, causal, hierarchical), then successor order.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for id in self.events.keys() {
            for kind in EdgeKind::ALL {
                for target in self.successors(id, kind) {
                    out.push((id.clone(), kind, target.clone()));
                }
            }
        }
        out
    }

    pub fn edge_set(&self) -> BTreeSet<Edge> {
        self.edges().into_iter().collect()
    }

    /// Best-matching event for `name` with optional argument hints.
    ///
    /// A name that equals a rendered indexed id (`Went_1`, any case) selects
    /// that event only. Otherwise every event whose base name equals `name`
    /// (trimmed, case-insensitive) is a candidate, scored by how many hint
    /// values occur as a case-insensitive substring of any of its argument
    /// values. Role names in the hints are not used as filters. Ties go to the
    /// lower index, then to the earlier event.
    pub fn find_node(&self, name: &str, args: Option<&[(String, String)]>) -> Result<&Event, GraphError> {
        let wanted = name.trim();
        if wanted.is_empty() {
            return Err(GraphError::NodeNotFound(name.to_string()));
        }
        let exact: Vec<&Event> = self
            .events
            .values()
            .filter(|e| e.id.index.is_some() && e.id.to_string().eq_ignore_ascii_case(wanted))
            .collect();
        let candidates: Vec<&Event> = if !exact.is_empty() {
            exact
        } else {
            self.events
                .values()
                .filter(|e| e.id.base.trim().eq_ignore_ascii_case(wanted))
                .collect()
        };
        let hints: Vec<String> = args
            .unwrap_or(&[])
            .iter()
            .map(|(_, v)| v.trim().to_lowercase())
            .filter(|v| !v.is_empty())
            .collect();
        candidates
            .into_iter()
            .enumerate()
            .max_by(|(pa, a), (pb, b)| {
                let sa = match_score(a, &hints);
                let sb = match_score(b, &hints);
                // max_by keeps the last maximum, so reverse the tie-breaks.
                sa.cmp(&sb)
                    .then_with(|| b.id.index.cmp(&a.id.index))
                    .then_with(|| pb.cmp(pa))
            })
            .map(|(_, e)| e)
            .ok_or_else(|| GraphError::NodeNotFound(name.to_string()))
    }

    /// One-hop neighbors of `node` along `kind`.
    pub fn traverse(&self, node: &EventId, kind: TraversalKind) -> Result<Vec<&Event>, GraphError> {
        if !self.contains(node) {
            return Err(GraphError::UnknownNode(node.clone()));
        }
        let (edge, dir) = kind.edge();
        let ids = match dir {
            Direction::Outgoing => self.successors(node, edge),
            Direction::Incoming => self.predecessors(node, edge),
        };
        Ok(ids.iter().filter_map(|id| self.events.get(id)).collect())
    }

    /// Induced subgraph over every node within `hops` undirected hops of a
    /// seed, following edges of any kind.
    pub fn extract_subgraph(&self, seeds: &[EventId], hops: usize) -> Result<EventGraph, GraphError> {
        let mut seen: HashSet<&EventId> = HashSet::new();
        let mut queue: VecDeque<(&EventId, usize)> = VecDeque::new();
        for seed in seeds {
            let (key, _) = self
                .events
                .get_key_value(seed)
                .ok_or_else(|| GraphError::UnknownNode(seed.clone()))?;
            if seen.insert(key) {
                queue.push_back((key, 0));
            }
        }
        while let Some((id, depth)) = queue.pop_front() {
            if depth == hops {
                continue;
            }
            for kind in EdgeKind::ALL {
                for next in self.successors(id, kind).iter().chain(self.predecessors(id, kind)) {
                    if seen.insert(next) {
                        queue.push_back((next, depth + 1));
                    }
                }
            }
        }
        let events: Vec<Event> = self.events.values().filter(|e| seen.contains(&e.id)).cloned().collect();
        let edges: Vec<Edge> = self
            .edges()
            .into_iter()
            .filter(|(s, _, t)| seen.contains(s) && seen.contains(t))
            .collect();
        build_graph(events, edges)
    }
}

fn match_score(event: &Event, hints: &[String]) -> usize {
    let values: Vec<String> = event.arg_values().map(str::to_lowercase).collect();
    hints
        .iter()
        .filter(|hint| values.iter().any(|v| v.contains(hint.as_str())))
        .count()
}

/// Structural equality: same events (ids, args, descriptions) and the same
/// edge set. Event order is not compared.
impl PartialEq for EventGraph {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events && self.edge_set() == other.edge_set()
    }
}

impl Eq for EventGraph {}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn id(s: &str) -> EventId {
        EventId::parse(s).unwrap()
    }

    pub fn ev(name: &str, args: &[(&str, &[&str])]) -> Event {
        Event::new(
            id(name),
            args.iter()
                .map(|(r, vs)| (r.to_string(), vs.iter().map(|v| v.to_string()).collect::<Vec<_>>())),
        )
    }

    pub fn edge(s: &str, kind: EdgeKind, t: &str) -> Edge {
        (id(s), kind, id(t))
    }

    pub fn protest() -> EventGraph {
        use EdgeKind::*;
        build_graph(
            vec![
                ev("Protest", &[("agent", &["people"]), ("place", &["street"])]),
                ev("Marching", &[("agent", &["people"]), ("place", &["street"])]),
                ev("Fired", &[("agent", &["police"]), ("item", &["tear gas"])]),
                ev("Disperse", &[("item", &["crowd"])]),
            ],
            vec![
                edge("Protest", Hierarchical, "Marching"),
                edge("Protest", Hierarchical, "Fired"),
                edge("Protest", Hierarchical, "Disperse"),
                edge("Marching", Temporal, "Fired"),
                edge("Fired", Causal, "Disperse"),
                edge("Fired", Temporal, "Disperse"),
            ],
        )
        .unwrap()
    }

    pub fn traffic() -> EventGraph {
        use EdgeKind::*;
        build_graph(
            vec![
                ev(
                    "Waiting",
                    &[
                        ("agent", &["red car", "black car on the right", "middle black car"]),
                        ("place", &["traffic light"]),
                    ],
                ),
                ev("Turned", &[("agent", &["traffic light"]), ("color", &["green"])]),
                ev("Went_0", &[("agent", &["red car"]), ("direction", &["left"])]),
                ev(
                    "Went_1",
                    &[("agent", &["black car on the right"]), ("direction", &["right"])],
                ),
                ev(
                    "Went_2",
                    &[("agent", &["middle black car"]), ("direction", &["straight"])],
                ),
                ev("Drive", &[("agent", &["red tow truck"]), ("place", &["road"])]),
            ],
            vec![
                edge("Waiting", Temporal, "Turned"),
                edge("Turned", Causal, "Went_0"),
                edge("Turned", Causal, "Went_1"),
                edge("Turned", Causal, "Went_2"),
                edge("Turned", Causal, "Drive"),
                edge("Turned", Temporal, "Went_0"),
                edge("Turned", Temporal, "Went_1"),
                edge("Turned", Temporal, "Went_2"),
                edge("Went_0", Temporal, "Drive"),
                edge("Went_1", Temporal, "Drive"),
                edge("Went_2", Temporal, "Drive"),
            ],
        )
        .unwrap()
    }

    pub fn boxing() -> EventGraph {
        use EdgeKind::*;
        build_graph(
            vec![
                ev(
                    "Facing",
                    &[("agent", &["boxer in gold-white shorts", "boxer in orange-white shorts"])],
                ),
                ev(
                    "Throw",
                    &[("agent", &["boxer in gold-white shorts"]), ("action", &["left jab"])],
                ),
                ev(
                    "Knock down",
                    &[
                        ("agent", &["boxer in gold-white shorts"]),
                        ("target", &["boxer in orange-white shorts"]),
                    ],
                ),
                ev("Count to ten", &[("agent", &["refree"])]),
                ev(
                    "Raise",
                    &[("agent", &["boxer in gold-white shorts"]), ("item", &["hands"])],
                ),
                ev("Applaud", &[("agent", &["the crowd"])]),
                ev(
                    "Go",
                    &[
                        ("agent", &["boxer in gold-white shorts"]),
                        ("destination", &["big screen"]),
                    ],
                ),
                ev("Celebrate", &[("agent", &["boxer in gold-white shorts"])]),
                ev("Check", &[("agent", &["referee", "boxer's cornermen"])]),
            ],
            vec![
                edge("Facing", Temporal, "Throw"),
                edge("Throw", Causal, "Knock down"),
                edge("Knock down", Causal, "Count to ten"),
                edge("Knock down", Causal, "Raise"),
                edge("Knock down", Causal, "Check"),
                edge("Knock down", Causal, "Applaud"),
                edge("Knock down", Temporal, "Count to ten"),
                edge("Knock down", Temporal, "Raise"),
                edge("Knock down", Temporal, "Applaud"),
                edge("Count to ten", Temporal, "Go"),
                edge("Count to ten", Temporal, "Check"),
                edge("Raise", Temporal, "Go"),
                edge("Raise", Temporal, "Check"),
                edge("Applaud", Temporal, "Go"),
                edge("Applaud", Temporal, "Check"),
                edge("Go", Temporal, "Celebrate"),
            ],
        )
        .unwrap()
    }
}
