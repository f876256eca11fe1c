//! Per-question audit log.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::interpreter::{EvidenceMap, Letter};
use crate::oracles::{OracleError, OracleKind, OracleResponse};
use crate::orchestrator::ActivationStage;

/// Responses longer than this are cut in the trace.
pub const RESPONSE_EXCERPT_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatementRecord {
    pub line: u32,
    pub kind: String,
    pub text: String,
    pub result: String,
    pub graph_version: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub replay: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleCallRecord {
    pub oracle: OracleKind,
    pub stage: ActivationStage,
    pub prompt_hash: String,
    pub truncated_response: String,
    pub latency_ms: Option<u64>,
    pub graph_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActivationRecord {
    pub stage: ActivationStage,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trace {
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    pub statements: Vec<StatementRecord>,
    pub oracle_calls: Vec<OracleCallRecord>,
    pub stages: BTreeSet<ActivationStage>,
    pub activations: Vec<ActivationRecord>,
    pub warnings: Vec<String>,
    pub captions: Vec<String>,
    pub evidence: EvidenceMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_graph: Option<String>,
    pub answer: Option<Letter>,
    pub unresolved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trace {
    pub fn new(question_id: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            ..Self::default()
        }
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(question = %self.question_id, "{message}");
        self.warnings.push(message);
    }

    /// Appends one oracle call, successful or not.
    pub fn record_call(
        &mut self,
        oracle: OracleKind,
        stage: ActivationStage,
        prompt: &str,
        result: Result<&OracleResponse, &OracleError>,
        graph_version: u32,
    ) {
        let (truncated_response, latency_ms, error) = match result {
            Ok(r) => (excerpt(&r.text), r.latency_ms, None),
            Err(e) => (String::new(), None, Some(e.to_string())),
        };
        self.oracle_calls.push(OracleCallRecord {
            oracle,
            stage,
            prompt_hash: prompt_hash(prompt),
            truncated_response,
            latency_ms,
            graph_version,
            error,
        });
    }

    pub fn calls_to(&self, oracle: OracleKind) -> usize {
        self.oracle_calls.iter().filter(|c| c.oracle == oracle).count()
    }

    /// Highest stage reached; `Base` when none was recorded.
    pub fn max_stage(&self) -> ActivationStage {
        self.stages.iter().next_back().copied().unwrap_or(ActivationStage::Base)
    }

    /// Copy with latency fields cleared, for byte comparisons across runs.
    pub fn masked(&self) -> Trace {
        let mut t = self.clone();
        for c in &mut t.oracle_calls {
            c.latency_ms = None;
        }
        t
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub fn excerpt(text: &str) -> String {
    let mut chars = text.chars();
    let head: String = chars.by_ref().take(RESPONSE_EXCERPT_CHARS).collect();
    if chars.next().is_some() {
        format!("{head}…")
    } else {
        head
    }
}
