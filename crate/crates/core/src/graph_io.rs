//! Text wire format exchanged with the graph generator.
//!
//! A response holds two blocks, each introduced by a header and followed by
//! one object:
//!
//! ```text
//! Events:
//! { "Fired": {"agent": ["police"], "item": "tear gas", "description": "Police fired tear gas."} }
//!
//! Events-Events Relationships:
//! { "Fired": {"causal": ["Disperse"]} }
//! ```
//!
//! Model output is noisy, so parsing has a strict mode (tests, fixtures) and
//! a lenient mode (production) that repairs the common defects.

use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use crate::event_graph::{build_graph, Edge, EdgeKind, Event, EventGraph, EventId, GraphError};

pub const EVENTS_HEADER: &str = "Events:";
pub const RELATIONS_HEADER: &str = "Events-Events Relationships:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphParseError {
    #[error("missing {0:?} block")]
    MissingBlock(&'static str),
    #[error("malformed {block} object: {reason}")]
    MalformedObject { block: &'static str, reason: String },
    #[error("unknown relation kind {kind:?} on event {event}")]
    UnknownRelationKind { event: String, kind: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parsed graph plus the repairs and skips lenient mode performed.
#[derive(Debug, Clone)]
pub struct ParsedGraph {
    pub graph: EventGraph,
    pub warnings: Vec<String>,
}

fn events_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bevents[ \t]*:").unwrap())
}

fn relations_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bevents[ \t]*-[ \t]*events[ \t]+relationships[ \t]*:").unwrap())
}

/// Lenient parse of a live generator reply. Prompts end with the events
/// header, so replies that start directly with the object are accepted.
pub fn parse_generated(text: &str) -> Result<ParsedGraph, GraphParseError> {
    match parse_graph_response(text, ParseMode::Lenient) {
        Err(GraphParseError::MissingBlock(EVENTS_HEADER)) => {
            parse_graph_response(&format!("{EVENTS_HEADER}\n{text}"), ParseMode::Lenient)
        }
        other => other,
    }
}

/// Parses a graph-generator response.
pub fn parse_graph_response(text: &str, mode: ParseMode) -> Result<ParsedGraph, GraphParseError> {
    let rel = relations_header()
        .find(text)
        .ok_or(GraphParseError::MissingBlock(RELATIONS_HEADER))?;
    let ev = events_header()
        .find(&text[..rel.start()])
        .ok_or(GraphParseError::MissingBlock(EVENTS_HEADER))?;

    let mut warnings = Vec::new();
    let events_src = extract_object(&text[ev.end()..rel.start()], "events")?;
    let relations_src = extract_object(&text[rel.end()..], "relationships")?;
    let events_obj = decode_object(events_src, "events", mode, &mut warnings)?;
    let relations_obj = decode_object(relations_src, "relationships", mode, &mut warnings)?;

    let mut events: IndexMap<EventId, Event> = IndexMap::new();
    for (key, value) in events_obj {
        let id = match EventId::parse(&key) {
            Ok(id) => id,
            Err(e) => {
                fail_or_warn(mode, &mut warnings, malformed("events", e.to_string()))?;
                continue;
            }
        };
        let event = match event_from_value(id.clone(), &value, mode, &mut warnings) {
            Ok(event) => event,
            Err(e) => {
                fail_or_warn(mode, &mut warnings, e)?;
                continue;
            }
        };
        if events.contains_key(&id) {
            fail_or_warn(mode, &mut warnings, GraphError::DuplicateEventId(id).into())?;
            continue;
        }
        events.insert(id, event);
    }

    let mut raw_edges: Vec<(String, EdgeKind, String)> = Vec::new();
    let mut relation_sources: Vec<String> = Vec::new();
    for (source, value) in relations_obj {
        relation_sources.push(source.clone());
        let relations = match value {
            Value::Object(map) => map,
            Value::Array(items) if items.is_empty() => Default::default(),
            Value::Null if mode == ParseMode::Lenient => Default::default(),
            other => {
                fail_or_warn(
                    mode,
                    &mut warnings,
                    malformed(
                        "relationships",
                        format!("relations of {source:?} are not an object: {other}"),
                    ),
                )?;
                continue;
            }
        };
        for (kind_key, targets) in relations {
            let Some(kind) = EdgeKind::from_key(&kind_key) else {
                fail_or_warn(
                    mode,
                    &mut warnings,
                    GraphParseError::UnknownRelationKind {
                        event: source.clone(),
                        kind: kind_key.clone(),
                    },
                )?;
                continue;
            };
            match string_list(&targets, mode) {
                Some(list) => raw_edges.extend(list.into_iter().map(|t| (source.clone(), kind, t))),
                None => fail_or_warn(
                    mode,
                    &mut warnings,
                    malformed("relationships", format!("{source:?}.{kind_key} is not a list of names")),
                )?,
            }
        }
    }

    // Endpoints resolve to an existing event exactly, or else to the single
    // event whose rendered id matches case-insensitively ("marching" ->
    // "Marching"). Lenient mode materializes anything still unknown.
    let mut edges: Vec<Edge> = Vec::with_capacity(raw_edges.len());
    let resolve = |name: &str,
                   events: &mut IndexMap<EventId, Event>,
                   warnings: &mut Vec<String>|
     -> Result<Option<EventId>, GraphParseError> {
        let id = match EventId::parse(name) {
            Ok(id) => id,
            Err(e) => {
                fail_or_warn(mode, warnings, malformed("relationships", e.to_string()))?;
                return Ok(None);
            }
        };
        if events.contains_key(&id) {
            return Ok(Some(id));
        }
        let folded: Vec<&EventId> = events
            .keys()
            .filter(|k| k.to_string().eq_ignore_ascii_case(name.trim()))
            .collect();
        if folded.len() == 1 {
            return Ok(Some(folded[0].clone()));
        }
        match mode {
            ParseMode::Strict => Ok(Some(id)), // reported as dangling by build_graph
            ParseMode::Lenient => {
                warnings.push(format!("materialized event {id} referenced only by relationships"));
                events.insert(id.clone(), Event::new(id.clone(), Vec::<(String, Vec<String>)>::new()));
                Ok(Some(id))
            }
        }
    };
    for source in &relation_sources {
        resolve(source, &mut events, &mut warnings)?;
    }
    for (source, kind, target) in raw_edges {
        let s = resolve(&source, &mut events, &mut warnings)?;
        let t = resolve(&target, &mut events, &mut warnings)?;
        if let (Some(s), Some(t)) = (s, t) {
            edges.push((s, kind, t));
        }
    }

    let graph = build_graph(events.into_values().collect(), edges)?;
    Ok(ParsedGraph { graph, warnings })
}

fn malformed(block: &'static str, reason: impl Into<String>) -> GraphParseError {
    GraphParseError::MalformedObject {
        block,
        reason: reason.into(),
    }
}

fn fail_or_warn(mode: ParseMode, warnings: &mut Vec<String>, err: GraphParseError) -> Result<(), GraphParseError> {
    match mode {
        ParseMode::Strict => Err(err),
        ParseMode::Lenient => {
            warnings.push(format!("skipped: {err}"));
            Ok(())
        }
    }
}

/// First balanced `{...}` in `src`, string-aware. Escaped quotes (`\"`) are
/// treated as quotes so that listings with escaped JSON still balance.
fn extract_object<'a>(src: &'a str, block: &'static str) -> Result<&'a str, GraphParseError> {
    let start = src
        .find('{')
        .ok_or_else(|| malformed(block, "no object follows the header"))?;
    let bytes = src.as_bytes();
    let mut depth = 0usize;
    // Some(true) when the open string was started by an escaped quote.
    let mut string: Option<bool> = None;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        let escaped_quote = b == b'\\' && bytes.get(i + 1) == Some(&b'"');
        match string {
            Some(true) if escaped_quote => {
                string = None;
                i += 2;
                continue;
            }
            Some(_) if b == b'\\' => {
                i += 2;
                continue;
            }
            Some(false) if b == b'"' => string = None,
            Some(_) => {}
            None if escaped_quote => {
                string = Some(true);
                i += 2;
                continue;
            }
            None => match b {
                b'"' => string = Some(false),
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(&src[start..=i]);
                    }
                }
                _ => {}
            },
        }
        i += 1;
    }
    Err(malformed(block, "unbalanced braces"))
}

fn decode_object(
    src: &str,
    block: &'static str,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<serde_json::Map<String, Value>, GraphParseError> {
    let parsed: Result<Value, _> = match mode {
        ParseMode::Strict => serde_json::from_str(src),
        ParseMode::Lenient => match serde_json::from_str(src) {
            Ok(v) => Ok(v),
            Err(_) => {
                let repaired = repair_json(src, warnings);
                serde_json::from_str(&repaired)
            }
        },
    };
    match parsed {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(malformed(block, format!("expected an object, found {other}"))),
        Err(e) => Err(malformed(block, e.to_string())),
    }
}

/// Best-effort repair of model-written JSON: unescapes `\"` when the object
/// is written with escaped quotes, drops trailing commas, and accepts a
/// period used as a member separator.
fn repair_json(src: &str, warnings: &mut Vec<String>) -> String {
    let mut text = src.to_string();
    let first_quote = text.find('"');
    if first_quote.is_some_and(|i| i > 0 && text.as_bytes()[i - 1] == b'\\') {
        text = text.replace("\\\"", "\"");
        warnings.push("unescaped quote escapes".to_string());
    }

    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut i = 0;
    let mut last_sig: Option<char> = None;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            if c == '\\' {
                if let Some(&n) = chars.get(i + 1) {
                    out.push(n);
                    i += 1;
                }
            } else if c == '"' {
                in_string = false;
                last_sig = Some('"');
            }
            i += 1;
            continue;
        }
        let next_sig = chars[i + 1..].iter().copied().find(|ch| !ch.is_whitespace());
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' if matches!(next_sig, Some('}') | Some(']')) => {
                warnings.push("removed trailing comma".to_string());
            }
            '.' if last_sig == Some('"') || last_sig == Some(']') => {
                if next_sig == Some('"') {
                    warnings.push("replaced '.' member separator with ','".to_string());
                    out.push(',');
                } else {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
        if !c.is_whitespace() {
            last_sig = Some(c);
        }
        i += 1;
    }
    out
}

fn string_list(value: &Value, mode: ParseMode) -> Option<Vec<String>> {
    match value {
        Value::String(s) => Some(vec![s.clone()]),
        Value::Array(items) => items
            .iter()
            .map(|item| match item {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) if mode == ParseMode::Lenient => Some(n.to_string()),
                Value::Bool(b) if mode == ParseMode::Lenient => Some(b.to_string()),
                _ => None,
            })
            .collect(),
        Value::Number(n) if mode == ParseMode::Lenient => Some(vec![n.to_string()]),
        Value::Null if mode == ParseMode::Lenient => Some(Vec::new()),
        _ => None,
    }
}

fn event_from_value(
    id: EventId,
    value: &Value,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<Event, GraphParseError> {
    let Value::Object(roles) = value else {
        return Err(malformed("events", format!("event {id} is not an object")));
    };
    let mut args: Vec<(String, Vec<String>)> = Vec::with_capacity(roles.len());
    for (role, raw) in roles {
        match string_list(raw, mode) {
            Some(values) => args.push((role.clone(), values)),
            None => fail_or_warn(
                mode,
                warnings,
                malformed("events", format!("{id}.{role} is not a string or list of strings")),
            )?,
        }
    }
    Ok(Event::new(id, args))
}

/// Renders a graph in the wire format. Every event appears in both blocks.
pub fn serialize_graph(g: &EventGraph) -> String {
    let mut out = String::new();
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    write_object(
        &mut out,
        g.iterate_nodes().map(|e| {
            let mut obj = serde_json::Map::new();
            for (role, values) in &e.args {
                obj.insert(role.clone(), Value::from(values.clone()));
            }
            obj.insert("description".into(), Value::from(e.description.clone()));
            (e.id.to_string(), Value::Object(obj))
        }),
    );
    out.push('\n');
    out.push_str(RELATIONS_HEADER);
    out.push('\n');
    write_object(
        &mut out,
        g.iterate_nodes().map(|e| {
            let mut obj = serde_json::Map::new();
            for kind in EdgeKind::ALL {
                let targets = g.successors(&e.id, kind);
                if !targets.is_empty() {
                    let names: Vec<String> = targets.iter().map(ToString::to_string).collect();
                    obj.insert(kind.as_str().into(), Value::from(names));
                }
            }
            (e.id.to_string(), Value::Object(obj))
        }),
    );
    out
}

fn write_object(out: &mut String, entries: impl Iterator<Item = (String, Value)>) {
    let lines: Vec<String> = entries.map(|(k, v)| format!("{}: {}", Value::from(k), v)).collect();
    if lines.is_empty() {
        out.push_str("{}\n");
        return;
    }
    out.push_str("{\n");
    out.push_str(&lines.join(",\n"));
    out.push_str("\n}\n");
}

/// Union of two graphs. On id collision the base event wins: its description
/// stays, and only argument values it has not seen are appended per role.
/// Base events come first, then new delta events in delta order.
pub fn merge_graphs(base: &EventGraph, delta: &EventGraph) -> EventGraph {
    let mut events: IndexMap<EventId, Event> = base.iterate_nodes().map(|e| (e.id.clone(), e.clone())).collect();
    for e in delta.iterate_nodes() {
        match events.get_mut(&e.id) {
            Some(existing) => {
                for (role, values) in &e.args {
                    let slot = existing.args.entry(role.clone()).or_default();
                    for v in values {
                        if !slot.contains(v) {
                            slot.push(v.clone());
                        }
                    }
                }
            }
            None => {
                events.insert(e.id.clone(), e.clone());
            }
        }
    }
    let mut edges = base.edges();
    edges.extend(delta.edges());
    build_graph(events.into_values().collect(), edges).expect("union of valid graphs is valid")
}
