use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{cache_key, DirCache};
use super::config::Config;
use super::dataset::QuestionRecord;
use crate::event_graph::EventGraph;
use crate::graph_io::{parse_generated, serialize_graph};
use crate::interpreter::{interpret, Budgets, InterpretError, Letter, RunContext, SeedSelection};
use crate::oracles::{
    arg, format_choices, render_prompt, OracleError, OracleKind, OracleRequest, OracleResponse, OracleSuite,
    PromptTemplate, TemplateError, Templates,
};
use crate::orchestrator::{repair_prompt, ActivationStage};
use crate::plan::{parse_plan, PlanError};
use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Interpret(#[from] InterpretError),
    #[error("graph generation failed: {0}")]
    Graph(String),
    #[error("captioner returned an empty caption")]
    EmptyCaption,
    #[error("generated plan rejected: {0}")]
    Plan(#[from] PlanError),
}

impl From<OracleError> for RunError {
    fn from(e: OracleError) -> Self {
        RunError::Interpret(e.into())
    }
}

impl From<TemplateError> for RunError {
    fn from(e: TemplateError) -> Self {
        OracleError::from(e).into()
    }
}

/// Result of one question. Failures are folded in as unresolved guesses.
#[derive(Debug, Clone)]
pub struct QuestionRun {
    pub question_id: String,
    pub answer: Letter,
    pub stages: BTreeSet<ActivationStage>,
    pub unresolved: bool,
    pub error: Option<String>,
    pub trace: Trace,
}

impl QuestionRun {
    pub fn max_stage(&self) -> ActivationStage {
        self.stages.iter().next_back().copied().unwrap_or(ActivationStage::Base)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            id: self.question_id.clone(),
            answer: self.answer,
            stage: self.max_stage(),
            stages: self.stages.clone(),
            unresolved: self.unresolved,
            error: self.error.clone(),
        }
    }
}

/// What scoring needs from a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub id: String,
    pub answer: Letter,
    /// Highest activated stage.
    pub stage: ActivationStage,
    pub stages: BTreeSet<ActivationStage>,
    pub unresolved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Pipeline {
    pub suite: OracleSuite,
    pub budgets: Budgets,
    pub seed_selection: SeedSelection,
    pub cache: Option<DirCache>,
}

impl Pipeline {
    pub fn new(suite: OracleSuite, budgets: Budgets) -> Self {
        Self {
            suite,
            budgets,
            seed_selection: SeedSelection::default(),
            cache: None,
        }
    }

    pub fn from_config(suite: OracleSuite, cfg: &Config) -> std::io::Result<Self> {
        let cache = cfg.cache.dir.as_ref().map(DirCache::open).transpose()?;
        Ok(Self {
            suite,
            budgets: cfg.budgets,
            seed_selection: cfg.seed_selection,
            cache,
        })
    }

    pub fn with_cache(mut self, cache: DirCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Runs every question on a pool of `workers` threads; results are in
    /// input order.
    pub fn run_batch(&self, records: &[QuestionRecord], workers: usize) -> Vec<QuestionRun> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| records.par_iter().map(|r| self.run_question(r)).collect())
    }

    /// caption, graph, plan, interpret. Never fails: errors become an
    /// unresolved `A` with the error in the trace.
    pub fn run_question(&self, rec: &QuestionRecord) -> QuestionRun {
        let _span = tracing::info_span!("question", id = %rec.id).entered();
        let mut ctx = match RunContext::new(
            rec.id.clone(),
            rec.video_ref.clone(),
            EventGraph::new(),
            String::new(),
            rec.question.clone(),
            rec.choices_array(),
            self.suite.clone(),
            self.budgets,
        ) {
            Ok(c) => c.with_seed_selection(self.seed_selection),
            Err(e) => {
                let mut trace = Trace::new(rec.id.clone());
                trace.error = Some(e.to_string());
                return failed(rec, trace, e.to_string());
            }
        };
        ctx.captions.clear();
        match self.execute(rec, &mut ctx) {
            Ok(o) => QuestionRun {
                question_id: rec.id.clone(),
                answer: o.answer,
                stages: o.stages,
                unresolved: o.unresolved,
                error: None,
                trace: ctx.trace,
            },
            Err(e) => {
                let msg = e.to_string();
                tracing::warn!(error = %msg, "question failed");
                let mut trace = ctx.trace;
                trace.error = Some(msg.clone());
                trace.answer = Some(Letter::A);
                trace.unresolved = true;
                if trace.captions.is_empty() {
                    trace.captions = ctx.captions;
                }
                failed(rec, trace, msg)
            }
        }
    }

    fn execute(&self, rec: &QuestionRecord, ctx: &mut RunContext) -> Result<crate::interpreter::Outcome, RunError> {
        let t = Templates::builtin();
        let choices = format_choices(&ctx.choices);

        let mut slots = vec![("question", rec.question.as_str())];
        for (name, c) in ["a0", "a1", "a2", "a3", "a4"].into_iter().zip(&rec.choices) {
            slots.push((name, c.as_str()));
        }
        let prompt = render_prompt(&t.captioner, slots)?;
        let caption = self.base_call(
            ctx,
            rec,
            &t.captioner,
            OracleRequest::new(OracleKind::Captioner, prompt),
            |s| {
                if s.trim().is_empty() {
                    Err(RunError::EmptyCaption)
                } else {
                    Ok(())
                }
            },
            false,
        )?;
        ctx.captions = vec![caption.trim().to_string()];

        let caption = ctx.caption();
        let prompt = render_prompt(
            &t.graph_generator,
            [
                ("caption", caption.as_str()),
                ("question", rec.question.as_str()),
                ("choices", choices.as_str()),
            ],
        )?;
        let graph_text = self.base_call(
            ctx,
            rec,
            &t.graph_generator,
            OracleRequest::new(OracleKind::GraphGenerator, prompt),
            |s| {
                parse_generated(s)
                    .map(|_| ())
                    .map_err(|e| RunError::Graph(e.to_string()))
            },
            true,
        )?;
        let parsed = parse_generated(&graph_text).map_err(|e| RunError::Graph(e.to_string()))?;
        for w in parsed.warnings {
            ctx.trace.warn(format!("graph: {w}"));
        }
        ctx.graph = parsed.graph;

        let original_graph = serialize_graph(&ctx.graph);
        let prompt = render_prompt(
            &t.plan_generator,
            [
                ("original_graph", original_graph.as_str()),
                ("question", rec.question.as_str()),
                ("choices", choices.as_str()),
            ],
        )?;
        let req = OracleRequest::new(OracleKind::PlanGenerator, prompt).arg(arg::TEMPLATE, t.plan_generator.id());
        let plan_text = strip_code_fences(&ctx.call(req, ActivationStage::Base)?).to_string();
        ctx.trace.plan = Some(plan_text.clone());
        let plan = parse_plan(&plan_text)?;
        Ok(interpret(&plan, ctx)?)
    }

    /// A cacheable base-stage call. Hits are recorded in the trace exactly
    /// like misses; only the log says which it was. With `repair`, one
    /// re-ask is made when the reply is rejected by `accept`.
    fn base_call(
        &self,
        ctx: &mut RunContext,
        rec: &QuestionRecord,
        template: &PromptTemplate,
        req: OracleRequest,
        accept: impl Fn(&str) -> Result<(), RunError>,
        repair: bool,
    ) -> Result<String, RunError> {
        let mut req = req.arg(arg::TEMPLATE, template.id());
        let key = self
            .cache
            .as_ref()
            .map(|_| cache_key(&rec.video_ref, &rec.question, &rec.choices, template));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                if accept(&hit).is_ok() {
                    tracing::debug!(oracle = %req.oracle, key = %key, "cache hit");
                    let version = ctx.graph_version;
                    ctx.trace.record_call(
                        req.oracle,
                        ActivationStage::Base,
                        &req.prompt,
                        Ok(&OracleResponse::text(hit.clone())),
                        version,
                    );
                    return Ok(hit);
                }
                tracing::warn!(key = %key, "ignoring unusable cache entry");
            }
            tracing::debug!(oracle = %req.oracle, key = %key, "cache miss");
        }
        let prompt = req.prompt.clone();
        let mut text = ctx.call(req.clone(), ActivationStage::Base)?;
        if let Err(e) = accept(&text) {
            if !repair {
                return Err(e);
            }
            ctx.trace
                .warn(format!("{} reply rejected ({e}); asking again", req.oracle));
            req.prompt = repair_prompt(&prompt, &e.to_string());
            text = ctx.call(req, ActivationStage::Base)?;
            accept(&text)?;
        }
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Err(e) = cache.put(key, &text) {
                tracing::warn!(key = %key, error = %e, "cache write failed");
            }
        }
        Ok(text)
    }
}

fn failed(rec: &QuestionRecord, mut trace: Trace, error: String) -> QuestionRun {
    if trace.stages.is_empty() {
        trace.stages.insert(ActivationStage::Base);
    }
    QuestionRun {
        question_id: rec.id.clone(),
        answer: Letter::A,
        stages: trace.stages.clone(),
        unresolved: true,
        error: Some(error),
        trace,
    }
}

/// Drops a surrounding Markdown code fence, if any.
pub fn strip_code_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => return t,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fences() {
        assert_eq!(strip_code_fences("answer retries 1"), "answer retries 1");
        assert_eq!(strip_code_fences("```\nanswer retries 1\n```"), "answer retries 1");
        assert_eq!(
            strip_code_fences("```plan\nx = {}\nanswer retries 1\n```\n"),
            "x = {}\nanswer retries 1"
        );
        assert_eq!(strip_code_fences("```\nanswer retries 1"), "answer retries 1");
    }
}
