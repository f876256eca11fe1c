//! Executes reasoning plans against an event graph.

mod answer;
mod evidence;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use answer::{extract_answer_letter, Letter};
pub use evidence::{EvidenceContent, EvidenceEntry, EvidenceMap};

use crate::event_graph::{EventGraph, EventId, GraphError};
use crate::graph_io::serialize_graph;
use crate::oracles::{
    arg, format_choices, interpret_yes_no, simple_query_request, OracleError, OracleRequest, OracleSuite,
};
use crate::orchestrator::{self, ActivationStage, Replayable};
use crate::plan::{
    print_statement_head, validate_plan, Diagnostic, Expr, LoopSource, Plan, Statement, Stmt, VALUE_PLACEHOLDER,
};
use crate::trace::{StatementRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Cap on `ensure ... retries`.
    pub graph_retries: u32,
    /// Cap on `answer retries`.
    pub answer_retries: u32,
    pub multimodal_hops: usize,
    /// Maximum oracle calls per question.
    pub call_ceiling: usize,
    /// Plan retries above this draw a validation warning.
    pub iteration_ceiling: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            graph_retries: 3,
            answer_retries: 3,
            multimodal_hops: 1,
            call_ceiling: 50,
            iteration_ceiling: 4,
        }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("graph_retries", self.graph_retries as usize),
            ("answer_retries", self.answer_retries as usize),
            ("call_ceiling", self.call_ceiling),
            ("iteration_ceiling", self.iteration_ceiling as usize),
        ] {
            if v == 0 {
                return Err(format!("budgets.{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Which events the multimodal stage attaches clips around.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSelection {
    /// Events referenced by the evidence.
    #[default]
    Evidence,
    /// Parents of those events; events without a parent stand for themselves.
    Parents,
}

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("plan rejected: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Diagnostic>),
    #[error("oracle call ceiling of {ceiling} reached")]
    BudgetExhausted { ceiling: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid run context: {0}")]
    InvalidContext(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Everything one question run needs. The trace is append-only.
pub struct RunContext {
    pub question_id: String,
    pub video_ref: String,
    pub graph: EventGraph,
    /// Bumped on every successful densification.
    pub graph_version: u32,
    pub captions: Vec<String>,
    pub question: String,
    pub choices: [String; 5],
    pub oracles: OracleSuite,
    pub budgets: Budgets,
    pub seed_selection: SeedSelection,
    pub trace: Trace,
    best_guess: Option<Letter>,
}

impl RunContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        question_id: impl Into<String>,
        video_ref: impl Into<String>,
        graph: EventGraph,
        caption: impl Into<String>,
        question: impl Into<String>,
        choices: [String; 5],
        oracles: OracleSuite,
        budgets: Budgets,
    ) -> Result<Self, InterpretError> {
        budgets.validate().map_err(InterpretError::InvalidContext)?;
        let question_id = question_id.into();
        Ok(Self {
            trace: Trace::new(question_id.clone()),
            question_id,
            video_ref: video_ref.into(),
            graph,
            graph_version: 0,
            captions: vec![caption.into()],
            question: question.into(),
            choices,
            oracles,
            budgets,
            seed_selection: SeedSelection::default(),
            best_guess: None,
        })
    }

    /// Continues a trace started elsewhere (e.g. by the pipeline's base calls).
    pub fn with_trace(mut self, trace: Trace) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_seed_selection(mut self, seeds: SeedSelection) -> Self {
        self.seed_selection = seeds;
        self
    }

    /// Current caption: all caption versions, oldest first.
    pub fn caption(&self) -> String {
        self.captions.join("\n")
    }

    pub fn choices_text(&self) -> String {
        format_choices(&self.choices)
    }

    pub fn calls_made(&self) -> usize {
        self.trace.oracle_calls.len()
    }

    pub fn current_stage(&self) -> ActivationStage {
        self.trace.max_stage()
    }

    pub fn best_guess(&self) -> Option<Letter> {
        self.best_guess
    }

    pub(crate) fn note_letter(&mut self, letter: Letter) {
        self.best_guess = Some(letter);
    }

    /// Calls an oracle, enforcing the call ceiling and recording the call.
    pub fn call(&mut self, mut req: OracleRequest, stage: ActivationStage) -> Result<String, InterpretError> {
        if self.calls_made() >= self.budgets.call_ceiling {
            return Err(InterpretError::BudgetExhausted {
                ceiling: self.budgets.call_ceiling,
            });
        }
        req.args.insert(arg::QUESTION_ID.into(), self.question_id.clone());
        req.args.insert(arg::VIDEO_REF.into(), self.video_ref.clone());
        req.args.insert(arg::QUESTION.into(), self.question.clone());
        req.args.insert(arg::STAGE.into(), stage.as_str().into());
        let result = self.oracles.call(&req);
        self.trace
            .record_call(req.oracle, stage, &req.prompt, result.as_ref(), self.graph_version);
        Ok(result?.text)
    }

    fn describe(&self, id: &EventId) -> String {
        self.graph
            .get(id)
            .map(|e| e.description.clone())
            .unwrap_or_else(|| id.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Event(EventId),
    Text(String),
}

/// Runtime value of a plan variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    /// `find_node` found nothing.
    Missing {
        name: String,
    },
    Node(EventId),
    Set(Vec<Item>),
    Count(usize),
    /// An argument value, with the event it belongs to.
    Text {
        value: String,
        owner: EventId,
    },
}

impl Value {
    pub fn is_empty(&self) -> bool {
        match self {
            Value::Missing { .. } => true,
            Value::Set(items) => items.is_empty(),
            Value::Count(n) => *n == 0,
            Value::Node(_) | Value::Text { .. } => false,
        }
    }

    fn summary(&self) -> String {
        match self {
            Value::Missing { name } => format!("missing ({name})"),
            Value::Node(id) => format!("node {id}"),
            Value::Set(items) => format!("set of {}", items.len()),
            Value::Count(n) => format!("count {n}"),
            Value::Text { value, .. } => format!("text {value:?}"),
        }
    }
}

fn push_unique(items: &mut Vec<Item>, item: Item) {
    if !items.contains(&item) {
        items.push(item);
    }
}

/// Final result of a plan run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub answer: Letter,
    pub evidence: EvidenceMap,
    pub final_graph: EventGraph,
    pub final_caption: String,
    pub stages: BTreeSet<ActivationStage>,
    /// The answer is a forced guess.
    pub unresolved: bool,
}

impl Outcome {
    pub fn max_stage(&self) -> ActivationStage {
        self.stages.iter().next_back().copied().unwrap_or(ActivationStage::Base)
    }
}

/// Runs `plan`. Budget exhaustion yields an unresolved outcome carrying the
/// best guess so far; oracle failures return an error and leave `ctx.trace`
/// complete up to the failure.
pub fn interpret(plan: &Plan, ctx: &mut RunContext) -> Result<Outcome, InterpretError> {
    let diagnostics = validate_plan(plan, ctx.budgets.iteration_ceiling);
    let (errors, warnings): (Vec<_>, Vec<_>) = diagnostics.into_iter().partition(Diagnostic::is_error);
    for w in warnings {
        ctx.trace.warn(format!("plan {w}"));
    }
    if !errors.is_empty() {
        let err = InterpretError::InvalidPlan(errors);
        ctx.trace.error = Some(err.to_string());
        return Err(err);
    }

    let mut interp = Interp {
        plan,
        env: vec![BTreeMap::new()],
        evidence: EvidenceMap::new(),
    };
    let result = interp.run(ctx);
    let evidence = interp.evidence;

    let (answer, unresolved) = match result {
        Ok(r) => r,
        Err(InterpretError::BudgetExhausted { ceiling }) => {
            ctx.trace.warn(format!(
                "oracle call ceiling of {ceiling} reached; answering with best guess"
            ));
            (ctx.best_guess.unwrap_or(Letter::A), true)
        }
        Err(e) => {
            finish_trace(ctx, &evidence, None, true);
            ctx.trace.error = Some(e.to_string());
            return Err(e);
        }
    };
    finish_trace(ctx, &evidence, Some(answer), unresolved);
    Ok(Outcome {
        answer,
        evidence,
        final_graph: ctx.graph.clone(),
        final_caption: ctx.caption(),
        stages: ctx.trace.stages.clone(),
        unresolved,
    })
}

fn finish_trace(ctx: &mut RunContext, evidence: &EvidenceMap, answer: Option<Letter>, unresolved: bool) {
    if ctx.trace.stages.is_empty() {
        orchestrator::record_activation(&mut ctx.trace, ActivationStage::Base, "base graph sufficed");
    }
    ctx.trace.captions = ctx.captions.clone();
    ctx.trace.evidence = evidence.clone();
    ctx.trace.final_graph = Some(serialize_graph(&ctx.graph));
    ctx.trace.answer = answer;
    ctx.trace.unresolved = unresolved;
}

struct Interp<'p> {
    plan: &'p Plan,
    env: Vec<BTreeMap<String, Value>>,
    evidence: EvidenceMap,
}

impl<'p> Interp<'p> {
    fn run(&mut self, ctx: &mut RunContext) -> Result<(Letter, bool), InterpretError> {
        let plan = self.plan;
        for (idx, s) in plan.statements.iter().enumerate() {
            match &s.stmt {
                Stmt::Bind { .. } | Stmt::ForEach { .. } | Stmt::CollectWhen { .. } => self.exec(s, ctx, false)?,
                Stmt::EnsureRelations {
                    vars,
                    graph_request,
                    caption_request,
                    retries,
                } => {
                    let retries = self.clamp(ctx, *retries, ctx.budgets.graph_retries, "ensure");
                    let deps = dependency_prefix(&plan.statements[..idx], vars);
                    let mut scope = EnsureScope {
                        interp: self,
                        deps,
                        vars,
                    };
                    let before = scope.satisfied();
                    let ok = orchestrator::ensure_relations(ctx, &mut scope, graph_request, caption_request, retries)?;
                    let result = match (before, ok) {
                        (true, _) => "already satisfied".to_string(),
                        (false, true) => "satisfied after densification".to_string(),
                        (false, false) => "still empty after densification".to_string(),
                    };
                    record(ctx, s, result, false);
                }
                Stmt::Evidence { label, var } => {
                    let value = self.lookup(var).clone();
                    let (content, ids) = self.render(&value, ctx);
                    self.evidence.push(label.clone(), content, ids);
                    record(ctx, s, value.summary(), false);
                }
                Stmt::AnswerRetry { retries } => {
                    let retries = self.clamp(ctx, *retries, ctx.budgets.answer_retries, "answer");
                    record(ctx, s, format!("{} evidence entries", self.evidence.len()), false);
                    return orchestrator::resolve_answer(ctx, &mut self.evidence, retries);
                }
            }
        }
        Err(InterpretError::Precondition("plan has no answer statement".into()))
    }

    fn clamp(&self, ctx: &mut RunContext, asked: u32, cap: u32, what: &str) -> u32 {
        if asked > cap {
            ctx.trace
                .warn(format!("{what} retries {asked} clamped to budget {cap}"));
            cap
        } else {
            asked
        }
    }

    fn lookup(&self, name: &str) -> &Value {
        self.env
            .iter()
            .rev()
            .find_map(|scope| scope.get(name))
            .unwrap_or_else(|| panic!("validated plan reads unbound variable {name}"))
    }

    fn lookup_mut(&mut self, name: &str) -> &mut Value {
        self.env
            .iter_mut()
            .rev()
            .find_map(|scope| scope.get_mut(name))
            .unwrap_or_else(|| panic!("validated plan writes unbound variable {name}"))
    }

    fn bind(&mut self, name: &str, value: Value) {
        self.env.last_mut().expect("scope").insert(name.to_string(), value);
    }

    fn exec(&mut self, s: &Statement, ctx: &mut RunContext, replay: bool) -> Result<(), InterpretError> {
        match &s.stmt {
            Stmt::Bind { var, expr } => {
                let value = self.eval(expr, ctx);
                record(ctx, s, value.summary(), replay);
                self.bind(var, value);
            }
            Stmt::ForEach { var, source, body } => {
                let items: Vec<Value> = match source {
                    LoopSource::Nodes => ctx.graph.iterate_nodes().map(|e| Value::Node(e.id.clone())).collect(),
                    LoopSource::ArgsOf(of) => match self.lookup(of) {
                        Value::Node(id) => ctx
                            .graph
                            .get(id)
                            .map(|e| {
                                e.arg_values()
                                    .map(|v| Value::Text {
                                        value: v.to_string(),
                                        owner: id.clone(),
                                    })
                                    .collect()
                            })
                            .unwrap_or_default(),
                        _ => Vec::new(),
                    },
                };
                record(ctx, s, format!("{} iterations", items.len()), replay);
                for item in items {
                    self.env.push(BTreeMap::from([(var.clone(), item)]));
                    let result = body.iter().try_for_each(|b| self.exec(b, ctx, replay));
                    self.env.pop();
                    result?;
                }
            }
            Stmt::CollectWhen { ask, value, into } => {
                let v = self.lookup(value).clone();
                let (owner, item, text) = match &v {
                    Value::Node(id) => (id.clone(), Item::Event(id.clone()), ctx.describe(id)),
                    Value::Text { value, owner } => (owner.clone(), Item::Text(value.clone()), value.clone()),
                    other => {
                        record(ctx, s, format!("skipped {}", other.summary()), replay);
                        return Ok(());
                    }
                };
                let query = ask.replacen(VALUE_PLACEHOLDER, &text, 1);
                let mut req = simple_query_request(&ctx.describe(&owner), &query)?;
                req.args.insert(arg::EVENT_ID.into(), owner.to_string());
                let stage = ctx.current_stage();
                let response = ctx.call(req, stage)?;
                let yes = match interpret_yes_no(&response) {
                    Some(b) => b,
                    None => {
                        ctx.trace
                            .warn(format!("simple query {query:?} got {response:?}; treated as no"));
                        false
                    }
                };
                if yes {
                    if let Value::Set(items) = self.lookup_mut(into) {
                        push_unique(items, item);
                    }
                }
                let outcome = if yes { "yes, collected" } else { "no" };
                record(ctx, s, format!("{query}: {outcome}"), replay);
            }
            Stmt::EnsureRelations { .. } | Stmt::Evidence { .. } | Stmt::AnswerRetry { .. } => {
                unreachable!("validated plans keep these at top level")
            }
        }
        Ok(())
    }

    fn eval(&self, expr: &Expr, ctx: &mut RunContext) -> Value {
        match expr {
            Expr::FindNode { name, args } => {
                let hints = (!args.is_empty()).then_some(args.as_slice());
                match ctx.graph.find_node(name, hints) {
                    Ok(e) => Value::Node(e.id.clone()),
                    Err(_) => Value::Missing { name: name.clone() },
                }
            }
            Expr::Traverse { var, kind } => match self.lookup(var) {
                Value::Node(id) => match ctx.graph.traverse(id, *kind) {
                    Ok(events) => Value::Set(events.into_iter().map(|e| Item::Event(e.id.clone())).collect()),
                    Err(GraphError::UnknownNode(_)) | Err(_) => {
                        ctx.trace.warn(format!("{id} is not in the current graph"));
                        Value::Set(Vec::new())
                    }
                },
                _ => Value::Set(Vec::new()),
            },
            Expr::Union(vars) => {
                let mut items = Vec::new();
                for v in vars {
                    match self.lookup(v) {
                        Value::Node(id) => push_unique(&mut items, Item::Event(id.clone())),
                        Value::Set(xs) => xs.iter().for_each(|x| push_unique(&mut items, x.clone())),
                        Value::Text { value, .. } => push_unique(&mut items, Item::Text(value.clone())),
                        Value::Missing { .. } | Value::Count(_) => {}
                    }
                }
                Value::Set(items)
            }
            Expr::Count(var) => Value::Count(match self.lookup(var) {
                Value::Set(xs) => xs.len(),
                Value::Node(_) | Value::Text { .. } => 1,
                Value::Missing { .. } => 0,
                Value::Count(n) => *n,
            }),
            Expr::EmptySet => Value::Set(Vec::new()),
        }
    }

    fn render(&self, value: &Value, ctx: &RunContext) -> (EvidenceContent, Vec<EventId>) {
        match value {
            Value::Missing { name } => (EvidenceContent::Text(format!("no event matching {name:?}")), vec![]),
            Value::Node(id) => (EvidenceContent::Text(ctx.describe(id)), vec![id.clone()]),
            Value::Count(n) => (EvidenceContent::Text(n.to_string()), vec![]),
            Value::Text { value, .. } => (EvidenceContent::Text(value.clone()), vec![]),
            Value::Set(items) => {
                let mut ids = Vec::new();
                let list = items
                    .iter()
                    .map(|i| match i {
                        Item::Event(id) => {
                            ids.push(id.clone());
                            ctx.describe(id)
                        }
                        Item::Text(t) => t.clone(),
                    })
                    .collect();
                (EvidenceContent::List(list), ids)
            }
        }
    }
}

fn record(ctx: &mut RunContext, s: &Statement, result: String, replay: bool) {
    let rec = StatementRecord {
        line: s.span.line,
        kind: kind_name(&s.stmt).into(),
        text: print_statement_head(&s.stmt),
        result,
        graph_version: ctx.graph_version,
        replay,
    };
    ctx.trace.statements.push(rec);
}

fn kind_name(stmt: &Stmt) -> &'static str {
    match stmt {
        Stmt::Bind { .. } => "bind",
        Stmt::ForEach { .. } => "foreach",
        Stmt::CollectWhen { .. } => "collect",
        Stmt::EnsureRelations { .. } => "ensure",
        Stmt::Evidence { .. } => "evidence",
        Stmt::AnswerRetry { .. } => "answer",
    }
}

/// Indices of the earlier top-level statements that `vars` depend on.
fn dependency_prefix(prefix: &[Statement], vars: &[String]) -> Vec<usize> {
    let mut needed: BTreeSet<String> = vars.iter().cloned().collect();
    let mut keep = Vec::new();
    for (i, s) in prefix.iter().enumerate().rev() {
        if !matches!(s.stmt, Stmt::Bind { .. } | Stmt::ForEach { .. }) {
            continue;
        }
        if s.stmt.outer_defs().iter().any(|d| needed.contains(d)) {
            needed.extend(s.stmt.free_uses());
            keep.push(i);
        }
    }
    keep.reverse();
    keep
}

struct EnsureScope<'a, 'p> {
    interp: &'a mut Interp<'p>,
    deps: Vec<usize>,
    vars: &'a [String],
}

impl Replayable for EnsureScope<'_, '_> {
    fn satisfied(&self) -> bool {
        self.vars.iter().any(|v| !self.interp.lookup(v).is_empty())
    }

    fn replay(&mut self, ctx: &mut RunContext) -> Result<(), InterpretError> {
        let plan = self.interp.plan;
        for &i in &self.deps {
            self.interp.exec(&plan.statements[i], ctx, true)?;
        }
        Ok(())
    }

    fn focus(&self) -> Option<EventId> {
        self.deps
            .iter()
            .find_map(|&i| match &self.interp.plan.statements[i].stmt {
                Stmt::Bind {
                    var,
                    expr: Expr::FindNode { .. },
                } => match self.interp.lookup(var) {
                    Value::Node(id) => Some(id.clone()),
                    _ => None,
                },
                _ => None,
            })
    }
}
