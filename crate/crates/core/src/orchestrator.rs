//! Staged self-correction: denser graph, denser caption, then multimodal.
//!
//! Stages escalate in cost. A question records every stage it attempted;
//! reports label it by the highest one.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::event_graph::{EventGraph, EventId, GraphError, TraversalKind};
use crate::graph_io::{merge_graphs, parse_generated, serialize_graph};
use crate::interpreter::{
    extract_answer_letter, EvidenceContent, EvidenceMap, InterpretError, Letter, RunContext, SeedSelection,
};
use crate::oracles::{arg, detect_not_sure, render_prompt, OracleKind, OracleRequest, Templates};
use crate::trace::{ActivationRecord, Trace};

/// Evidence label for the caption produced by escalation.
pub const DENSER_CAPTION_LABEL: &str = "denser caption";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActivationStage {
    Base,
    DenserGraph,
    DenserCaption,
    Multimodal,
}

impl ActivationStage {
    pub const ALL: [ActivationStage; 4] = [
        ActivationStage::Base,
        ActivationStage::DenserGraph,
        ActivationStage::DenserCaption,
        ActivationStage::Multimodal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationStage::Base => "Base",
            ActivationStage::DenserGraph => "DenserGraph",
            ActivationStage::DenserCaption => "DenserCaption",
            ActivationStage::Multimodal => "Multimodal",
        }
    }
}

impl fmt::Display for ActivationStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Adds `stage` to the trace's stage set and logs the activation.
pub fn record_activation(trace: &mut Trace, stage: ActivationStage, detail: &str) {
    trace.stages.insert(stage);
    trace.activations.push(ActivationRecord {
        stage,
        detail: detail.to_string(),
    });
}

/// A graph with at most one video clip reference per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultimodalGraph {
    pub base: EventGraph,
    clips: IndexMap<EventId, String>,
}

impl MultimodalGraph {
    pub fn new(base: EventGraph) -> Self {
        Self {
            base,
            clips: IndexMap::new(),
        }
    }

    /// Attaches a clip, replacing any previous one for that node.
    pub fn attach(&mut self, id: EventId, clip: impl Into<String>) -> Result<(), GraphError> {
        if !self.base.contains(&id) {
            return Err(GraphError::UnknownNode(id));
        }
        self.clips.insert(id, clip.into());
        Ok(())
    }

    pub fn clips(&self) -> &IndexMap<EventId, String> {
        &self.clips
    }

    /// Graph text followed by a `Clips:` object mapping event ids to clips.
    pub fn render(&self) -> String {
        let clips: serde_json::Map<String, serde_json::Value> = self
            .clips
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
            .collect();
        format!(
            "{}\nClips:\n{}\n",
            serialize_graph(&self.base),
            serde_json::to_string_pretty(&clips).expect("strings serialize")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DensifyOutcome {
    Merged {
        added_events: usize,
        added_edges: usize,
    },
    /// Reply unparseable even after one repair re-ask; graph unchanged.
    Failed(String),
}

fn excerpt(s: &str) -> String {
    let mut out: String = s.chars().take(80).collect();
    if s.chars().count() > 80 {
        out.push('…');
    }
    out
}

/// Asks the graph generator for a denser graph and merges it in.
pub fn densify_graph(
    ctx: &mut RunContext,
    node: Option<&EventId>,
    request: &str,
) -> Result<DensifyOutcome, InterpretError> {
    record_activation(&mut ctx.trace, ActivationStage::DenserGraph, &excerpt(request));
    let t = &Templates::builtin().denser_graph;
    let original = serialize_graph(&ctx.graph);
    let caption = ctx.caption();
    let choices = ctx.choices_text();
    let prompt = render_prompt(
        t,
        [
            ("caption", caption.as_str()),
            ("original_graph", original.as_str()),
            ("request", request),
            ("question", ctx.question.as_str()),
            ("choices", choices.as_str()),
        ],
    )
    .map_err(crate::oracles::OracleError::from)?;
    let mut req = OracleRequest::new(OracleKind::GraphGenerator, prompt.clone()).arg(arg::TEMPLATE, t.id());
    if let Some(id) = node {
        req = req.arg(arg::EVENT_ID, id.to_string());
    }
    let text = ctx.call(req.clone(), ActivationStage::DenserGraph)?;
    let parsed = match parse_generated(&text) {
        Ok(p) => p,
        Err(first) => {
            ctx.trace
                .warn(format!("denser graph reply unparseable ({first}); asking again"));
            req.prompt = repair_prompt(&prompt, &first.to_string());
            let text = ctx.call(req, ActivationStage::DenserGraph)?;
            match parse_generated(&text) {
                Ok(p) => p,
                Err(second) => {
                    let reason = second.to_string();
                    ctx.trace.warn(format!("densify failed: {reason}"));
                    return Ok(DensifyOutcome::Failed(reason));
                }
            }
        }
    };
    for w in parsed.warnings {
        ctx.trace.warn(format!("denser graph: {w}"));
    }
    let merged = merge_graphs(&ctx.graph, &parsed.graph);
    let outcome = DensifyOutcome::Merged {
        added_events: merged.len() - ctx.graph.len(),
        added_edges: merged.edge_count() - ctx.graph.edge_count(),
    };
    ctx.graph = merged;
    ctx.graph_version += 1;
    Ok(outcome)
}

/// Prompt for the single re-ask after an unparseable graph reply.
pub fn repair_prompt(prompt: &str, error: &str) -> String {
    format!(
        "{prompt}\n\nYour previous response could not be parsed ({error}). Respond again with an \"Events:\" block followed by an \"Events-Events Relationships:\" block.\n"
    )
}

/// Asks the captioner to revisit the video; appends the new caption to the
/// history and returns it.
pub fn densify_caption(ctx: &mut RunContext, request: &str) -> Result<String, InterpretError> {
    if request.trim().is_empty() {
        return Err(InterpretError::Precondition("denser caption request is empty".into()));
    }
    record_activation(&mut ctx.trace, ActivationStage::DenserCaption, &excerpt(request));
    let t = &Templates::builtin().denser_caption;
    let caption = ctx.caption();
    let choices = ctx.choices_text();
    let prompt = render_prompt(
        t,
        [
            ("request", request),
            ("caption", caption.as_str()),
            ("question", ctx.question.as_str()),
            ("choices", choices.as_str()),
        ],
    )
    .map_err(crate::oracles::OracleError::from)?;
    let req = OracleRequest::new(OracleKind::Captioner, prompt).arg(arg::TEMPLATE, t.id());
    let text = ctx.call(req, ActivationStage::DenserCaption)?;
    ctx.captions.push(text.clone());
    Ok(text)
}

/// Bindings an `ensure` block watches, re-evaluable against a new graph.
pub trait Replayable {
    /// Some watched binding is non-empty.
    fn satisfied(&self) -> bool;
    /// Re-evaluates the bindings against `ctx.graph`.
    fn replay(&mut self, ctx: &mut RunContext) -> Result<(), InterpretError>;
    /// Event the bindings are about, if any.
    fn focus(&self) -> Option<EventId> {
        None
    }
}

/// Densify until the watched bindings are non-empty.
///
/// One graph densification, then up to `retries` rounds of caption plus
/// graph densification, replaying the bindings after each graph update.
/// At most `retries + 1` graph requests and `retries` caption requests.
pub fn ensure_relations(
    ctx: &mut RunContext,
    re_eval: &mut dyn Replayable,
    graph_request: &str,
    caption_request: &str,
    retries: u32,
) -> Result<bool, InterpretError> {
    if retries == 0 {
        return Err(InterpretError::Precondition("ensure retries must be at least 1".into()));
    }
    if re_eval.satisfied() {
        return Ok(true);
    }
    let focus = re_eval.focus();
    densify_graph(ctx, focus.as_ref(), graph_request)?;
    re_eval.replay(ctx)?;
    for _ in 0..retries {
        if re_eval.satisfied() {
            break;
        }
        densify_caption(ctx, caption_request)?;
        let focus = re_eval.focus();
        densify_graph(ctx, focus.as_ref(), graph_request)?;
        re_eval.replay(ctx)?;
    }
    Ok(re_eval.satisfied())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerAttempt {
    pub letter: Letter,
    pub unsure: bool,
    /// Final reasoner reply.
    pub response: String,
}

fn ask_reasoner(ctx: &mut RunContext, evidence: &EvidenceMap) -> Result<String, InterpretError> {
    let t = &Templates::builtin().reasoner;
    let info = evidence.render();
    let choices = ctx.choices_text();
    let prompt = render_prompt(
        t,
        [
            ("question", ctx.question.as_str()),
            ("choices", choices.as_str()),
            ("info", info.as_str()),
        ],
    )
    .map_err(crate::oracles::OracleError::from)?;
    let stage = ctx.current_stage();
    let req = OracleRequest::new(OracleKind::Reasoner, prompt).arg(arg::TEMPLATE, t.id());
    ctx.call(req, stage)
}

/// Ask the reasoner; while it is unsure (and tries remain), fetch more
/// information about its stated concern and ask again.
pub fn answer_with_retry(
    ctx: &mut RunContext,
    evidence: &mut EvidenceMap,
    retries: u32,
) -> Result<AnswerAttempt, InterpretError> {
    if retries == 0 {
        return Err(InterpretError::Precondition("answer retries must be at least 1".into()));
    }
    let mut letter = None;
    let mut response = String::new();
    let mut unsure = true;
    for i in 0..retries {
        response = ask_reasoner(ctx, evidence)?;
        if let Some(l) = extract_answer_letter(&response) {
            letter = Some(l);
            ctx.note_letter(l);
        }
        unsure = detect_not_sure(&response);
        if unsure && i + 1 < retries {
            let info = new_info(ctx, &response)?;
            evidence.push(format!("new info {i}"), EvidenceContent::Text(info), Vec::new());
        } else {
            break;
        }
    }
    let letter = match letter {
        Some(l) => l,
        None => {
            ctx.trace.warn("reasoner gave no answer letter; guessing A");
            unsure = true;
            Letter::A
        }
    };
    Ok(AnswerAttempt {
        letter,
        unsure,
        response,
    })
}

fn new_info(ctx: &mut RunContext, concern: &str) -> Result<String, InterpretError> {
    let t = &Templates::builtin().new_info;
    let choices = ctx.choices_text();
    let prompt = render_prompt(
        t,
        [
            ("question", ctx.question.as_str()),
            ("choices", choices.as_str()),
            ("concern", concern),
        ],
    )
    .map_err(crate::oracles::OracleError::from)?;
    let stage = ctx.current_stage();
    let req = OracleRequest::new(OracleKind::NewInfo, prompt).arg(arg::TEMPLATE, t.id());
    ctx.call(req, stage)
}

/// Attaches clips around `seeds` and asks the multimodal answerer.
/// Returns the letter and whether it is a fallback to `previous`.
pub fn multimodal_fallback(
    ctx: &mut RunContext,
    seeds: &[EventId],
    previous: Letter,
) -> Result<(Letter, bool), InterpretError> {
    record_activation(
        &mut ctx.trace,
        ActivationStage::Multimodal,
        &format!("{} seed(s)", seeds.len()),
    );
    let seeds: Vec<EventId> = seeds.iter().filter(|s| ctx.graph.contains(s)).cloned().collect();
    let sub = ctx
        .graph
        .extract_subgraph(&seeds, ctx.budgets.multimodal_hops)
        .expect("seeds filtered to graph members");
    let mut mm = MultimodalGraph::new(sub);
    let nodes: Vec<(EventId, String)> = mm
        .base
        .iterate_nodes()
        .map(|e| (e.id.clone(), e.description.clone()))
        .collect();
    for (id, description) in nodes {
        let req = OracleRequest::new(OracleKind::ClipRetriever, format!("{id}: {description}"))
            .arg(arg::EVENT_ID, id.to_string());
        match ctx.call(req, ActivationStage::Multimodal) {
            Ok(clip) if !clip.trim().is_empty() => {
                mm.attach(id, clip.trim()).expect("node is in the subgraph");
            }
            Ok(_) => ctx.trace.warn(format!("no clip for {id}")),
            Err(InterpretError::Oracle(e)) => ctx.trace.warn(format!("clip retrieval failed for {id}: {e}")),
            Err(e) => return Err(e),
        }
    }
    let t = &Templates::builtin().multimodal;
    let rendered = mm.render();
    let choices = ctx.choices_text();
    let prompt = render_prompt(
        t,
        [
            ("question", ctx.question.as_str()),
            ("choices", choices.as_str()),
            ("original_graph", rendered.as_str()),
        ],
    )
    .map_err(crate::oracles::OracleError::from)?;
    let req = OracleRequest::new(OracleKind::MultimodalAnswerer, prompt).arg(arg::TEMPLATE, t.id());
    let text = ctx.call(req, ActivationStage::Multimodal)?;
    match extract_answer_letter(&text) {
        Some(l) => {
            ctx.note_letter(l);
            Ok((l, false))
        }
        None => {
            ctx.trace.warn(format!(
                "multimodal answer {:?} has no letter; keeping {previous}",
                excerpt(&text)
            ));
            Ok((previous, true))
        }
    }
}

/// Seeds for the multimodal stage under the context's selection policy.
pub fn multimodal_seeds(ctx: &RunContext, evidence: &EvidenceMap) -> Vec<EventId> {
    let ids = evidence.event_ids();
    match ctx.seed_selection {
        SeedSelection::Evidence => ids,
        SeedSelection::Parents => {
            let mut out: Vec<EventId> = Vec::new();
            for id in ids {
                let parents: Vec<EventId> = ctx
                    .graph
                    .traverse(&id, TraversalKind::Parent)
                    .map(|ps| ps.into_iter().map(|e| e.id.clone()).collect())
                    .unwrap_or_default();
                for p in if parents.is_empty() { vec![id] } else { parents } {
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
            out
        }
    }
}

/// Full answer phase: retrying reasoner, text escalation when graph and
/// caption densification have not both been tried, then multimodal.
/// Returns the letter and whether it is unresolved.
pub fn resolve_answer(
    ctx: &mut RunContext,
    evidence: &mut EvidenceMap,
    retries: u32,
) -> Result<(Letter, bool), InterpretError> {
    let mut attempt = answer_with_retry(ctx, evidence, retries)?;
    if !attempt.unsure {
        return Ok((attempt.letter, false));
    }
    let tried_text = ctx.trace.stages.contains(&ActivationStage::DenserGraph)
        && ctx.trace.stages.contains(&ActivationStage::DenserCaption);
    if !tried_text {
        let concern = attempt.response.clone();
        densify_graph(ctx, None, &concern)?;
        let caption = densify_caption(ctx, &concern)?;
        densify_graph(ctx, None, &concern)?;
        evidence.push(DENSER_CAPTION_LABEL, EvidenceContent::Text(caption), Vec::new());
        let response = ask_reasoner(ctx, evidence)?;
        let letter = extract_answer_letter(&response);
        if let Some(l) = letter {
            ctx.note_letter(l);
        }
        attempt = AnswerAttempt {
            letter: letter.unwrap_or(attempt.letter),
            unsure: letter.is_none() || detect_not_sure(&response),
            response,
        };
        if !attempt.unsure {
            return Ok((attempt.letter, false));
        }
    }
    let seeds = multimodal_seeds(ctx, evidence);
    multimodal_fallback(ctx, &seeds, attempt.letter)
}
