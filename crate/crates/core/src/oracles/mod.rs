//! Model-backed functions behind one call interface.
//!
//! Every oracle takes a rendered prompt plus a few structured arguments
//! (video reference, event id, ...) and returns text. Two implementations
//! ship: [`ScriptedOracle`] for tests and reproducible runs, and
//! [`HttpChatOracle`] for an OpenAI-compatible chat endpoint.

mod http;
mod scripted;
mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{chat_complete, ChatCompletion, EndpointConfig, HttpChatOracle, RetryConfig};
pub use scripted::{CallRecord, Matcher, Rule, ScenarioScript, ScriptedOracle};
pub use templates::{
    format_choices, render_prompt, PromptTemplate, TemplateError, Templates, KNOWN_SLOTS, REFERENCE_CODE_GENERATOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum OracleKind {
    Captioner,
    GraphGenerator,
    PlanGenerator,
    Reasoner,
    SimpleQuery,
    NewInfo,
    ClipRetriever,
    MultimodalAnswerer,
}

impl OracleKind {
    pub const ALL: [OracleKind; 8] = [
        OracleKind::Captioner,
        OracleKind::GraphGenerator,
        OracleKind::PlanGenerator,
        OracleKind::Reasoner,
        OracleKind::SimpleQuery,
        OracleKind::NewInfo,
        OracleKind::ClipRetriever,
        OracleKind::MultimodalAnswerer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::Captioner => "captioner",
            OracleKind::GraphGenerator => "graphGenerator",
            OracleKind::PlanGenerator => "planGenerator",
            OracleKind::Reasoner => "reasoner",
            OracleKind::SimpleQuery => "simpleQuery",
            OracleKind::NewInfo => "newInfo",
            OracleKind::ClipRetriever => "clipRetriever",
            OracleKind::MultimodalAnswerer => "multimodalAnswerer",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured argument names passed alongside prompts.
pub mod arg {
    pub const QUESTION_ID: &str = "question_id";
    pub const VIDEO_REF: &str = "video_ref";
    pub const QUESTION: &str = "question";
    pub const TEMPLATE: &str = "template";
    pub const EVENT_ID: &str = "event_id";
    pub const STAGE: &str = "stage";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRequest {
    pub oracle: OracleKind,
    pub prompt: String,
    pub args: BTreeMap<String, String>,
}

impl OracleRequest {
    pub fn new(oracle: OracleKind, prompt: impl Into<String>) -> Self {
        Self {
            oracle,
            prompt: prompt.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, key: &str, value: impl Into<String>) -> Self {
        self.args.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResponse {
    pub text: String,
    pub latency_ms: Option<u64>,
}

impl OracleResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    NonSuccessStatus { status: u16, body: String },
    #[error("malformed response body: {0}")]
    MalformedResponseBody(String),
    #[error("no scripted rule matches {oracle} call: {prompt_excerpt:?}")]
    UnmatchedInvocation { oracle: OracleKind, prompt_excerpt: String },
    #[error("scripted failure from {oracle}: {message}")]
    Scripted { oracle: OracleKind, message: String },
    #[error("expected yes or no, got {0:?}")]
    UninterpretableYesNo(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("oracle configuration: {0}")]
    Config(String),
}

pub trait Oracle: Send + Sync {
    fn call(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError>;
}

impl<F> Oracle for F
where
    F: Fn(&OracleRequest) -> Result<OracleResponse, OracleError> + Send + Sync,
{
    fn call(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        self(request)
    }
}

/// One implementation per model-backed role.
#[derive(Clone)]
pub struct OracleSuite {
    pub captioner: Arc<dyn Oracle>,
    pub graph_generator: Arc<dyn Oracle>,
    pub plan_generator: Arc<dyn Oracle>,
    pub reasoner: Arc<dyn Oracle>,
    pub simple_query: Arc<dyn Oracle>,
    pub new_info: Arc<dyn Oracle>,
    pub clip_retriever: Arc<dyn Oracle>,
    pub multimodal_answerer: Arc<dyn Oracle>,
}

impl OracleSuite {
    /// Every role served by the same implementation, which dispatches on
    /// [`OracleRequest::oracle`].
    pub fn uniform(oracle: Arc<dyn Oracle>) -> Self {
        Self {
            captioner: oracle.clone(),
            graph_generator: oracle.clone(),
            plan_generator: oracle.clone(),
            reasoner: oracle.clone(),
            simple_query: oracle.clone(),
            new_info: oracle.clone(),
            clip_retriever: oracle.clone(),
            multimodal_answerer: oracle,
        }
    }

    pub fn get(&self, kind: OracleKind) -> &Arc<dyn Oracle> {
        match kind {
            OracleKind::Captioner => &self.captioner,
            OracleKind::GraphGenerator => &self.graph_generator,
            OracleKind::PlanGenerator => &self.plan_generator,
            OracleKind::Reasoner => &self.reasoner,
            OracleKind::SimpleQuery => &self.simple_query,
            OracleKind::NewInfo => &self.new_info,
            OracleKind::ClipRetriever => &self.clip_retriever,
            OracleKind::MultimodalAnswerer => &self.multimodal_answerer,
        }
    }

    pub fn call(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        self.get(request.oracle).call(request)
    }
}

impl fmt::Debug for OracleSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OracleSuite { .. }")
    }
}

/// True iff the reasoner said it is not sure.
pub fn detect_not_sure(reasoner_text: &str) -> bool {
    reasoner_text.to_lowercase().contains("not sure")
}

/// Maps a simple-query response by its first token.
pub fn interpret_yes_no(text: &str) -> Option<bool> {
    let first = text
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_ascii_lowercase();
    match first.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Builds the simple-query request for one event.
pub fn simple_query_request(event_description: &str, query: &str) -> Result<OracleRequest, OracleError> {
    let t = &Templates::builtin().simple_query;
    let prompt = render_prompt(t, [("event_description", event_description), ("query", query)])?;
    Ok(OracleRequest::new(OracleKind::SimpleQuery, prompt).arg(arg::TEMPLATE, t.id()))
}

/// Asks a yes/no question about an event.
pub fn ask_simple_query(oracle: &dyn Oracle, event_description: &str, query: &str) -> Result<bool, OracleError> {
    let response = oracle.call(&simple_query_request(event_description, query)?)?;
    interpret_yes_no(&response.text).ok_or(OracleError::UninterpretableYesNo(response.text))
}
