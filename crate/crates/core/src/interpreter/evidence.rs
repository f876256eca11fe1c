use serde::{Deserialize, Serialize};

use crate::event_graph::EventId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvidenceContent {
    Text(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvidenceEntry {
    pub label: String,
    pub content: EvidenceContent,
    /// Events the content was rendered from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_ids: Vec<EventId>,
}

/// Labelled facts handed to the reasoner, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceMap {
    entries: Vec<EvidenceEntry>,
}

impl EvidenceMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; returns false (and leaves the map unchanged) when the
    /// label is already present.
    pub fn push(&mut self, label: impl Into<String>, content: EvidenceContent, event_ids: Vec<EventId>) -> bool {
        let label = label.into();
        if self.get(&label).is_some() {
            return false;
        }
        self.entries.push(EvidenceEntry {
            label,
            content,
            event_ids,
        });
        true
    }

    pub fn get(&self, label: &str) -> Option<&EvidenceEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn entries(&self) -> &[EvidenceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Event ids referenced by any entry, first occurrence order.
    pub fn event_ids(&self) -> Vec<EventId> {
        let mut out: Vec<EventId> = Vec::new();
        for id in self.entries.iter().flat_map(|e| &e.event_ids) {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }

    /// One `label: content` line per entry; lists render as JSON arrays.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.label);
            out.push_str(": ");
            match &e.content {
                EvidenceContent::Text(t) => out.push_str(t),
                EvidenceContent::List(items) => out.push_str(&serde_json::to_string(items).expect("strings serialize")),
            }
            out.push('\n');
        }
        out
    }
}
