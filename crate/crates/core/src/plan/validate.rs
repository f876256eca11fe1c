use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ast::{Expr, LoopSource, Plan, Span, Statement, Stmt};
use super::VALUE_PLACEHOLDER;

/// Default ceiling for `retries` counts before a warning is raised.
pub const DEFAULT_RETRY_CEILING: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    UnboundVariable,
    Reassignment,
    TypeMismatch,
    AnswerPlacement,
    MultipleValuePlaceholders,
    MisplacedStatement,
    VacuousEnsure,
    ZeroRetries,
    RetriesAboveCeiling,
    DuplicateEvidenceLabel,
    ReservedEvidenceLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    pub code: DiagnosticCode,
    pub message: String,
    /// Variable or label the diagnostic is about, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}: {}", self.span, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Node,
    Set,
    Count,
    Text,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Node => "node",
            Ty::Set => "set",
            Ty::Count => "count",
            Ty::Text => "text",
        }
    }
}

/// Labels the engine itself adds to the evidence map.
pub(crate) fn is_reserved_label(label: &str) -> bool {
    let l = label.trim().to_ascii_lowercase();
    l == "denser caption"
        || l.strip_prefix("new info ")
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Static checks over a plan. Never fails; returns diagnostics in source order
/// within each pass. `retry_ceiling` is the budget above which `retries`
/// counts only draw a warning.
pub fn validate_plan(plan: &Plan, retry_ceiling: u32) -> Vec<Diagnostic> {
    let mut v = Validator {
        out: Vec::new(),
        ceiling: retry_ceiling,
        labels: BTreeSet::new(),
    };

    let answers = count_answers(&plan.statements);
    let last_is_answer = matches!(plan.statements.last().map(|s| &s.stmt), Some(Stmt::AnswerRetry { .. }));
    let end_span = plan.statements.last().map(|s| s.span).unwrap_or_default();
    if answers == 0 {
        v.error(
            end_span,
            DiagnosticCode::AnswerPlacement,
            None,
            "plan has no `answer retries <n>` statement".into(),
        );
    } else if answers > 1 {
        v.error(
            end_span,
            DiagnosticCode::AnswerPlacement,
            None,
            format!("plan has {answers} answer statements; exactly one is allowed"),
        );
    } else if !last_is_answer {
        v.error(
            end_span,
            DiagnosticCode::AnswerPlacement,
            None,
            "`answer` must be the final statement".into(),
        );
    }

    let mut scope = BTreeMap::new();
    v.block(&plan.statements, &mut scope, false);
    v.out
}

fn count_answers(stmts: &[Statement]) -> usize {
    stmts
        .iter()
        .map(|s| match &s.stmt {
            Stmt::AnswerRetry { .. } => 1,
            Stmt::ForEach { body, .. } => count_answers(body),
            _ => 0,
        })
        .sum()
}

struct Validator {
    out: Vec<Diagnostic>,
    ceiling: u32,
    labels: BTreeSet<String>,
}

impl Validator {
    fn push(&mut self, severity: Severity, span: Span, code: DiagnosticCode, subject: Option<&str>, message: String) {
        self.out.push(Diagnostic {
            severity,
            span,
            code,
            message,
            subject: subject.map(String::from),
        });
    }

    fn error(&mut self, span: Span, code: DiagnosticCode, subject: Option<&str>, message: String) {
        self.push(Severity::Error, span, code, subject, message);
    }

    fn lookup(&mut self, scope: &BTreeMap<String, Ty>, name: &str, span: Span) -> Option<Ty> {
        let ty = scope.get(name).copied();
        if ty.is_none() {
            self.error(
                span,
                DiagnosticCode::UnboundVariable,
                Some(name),
                format!("variable `{name}` used before it is bound"),
            );
        }
        ty
    }

    fn expect(&mut self, scope: &BTreeMap<String, Ty>, name: &str, span: Span, allowed: &[Ty], what: &str) {
        if let Some(ty) = self.lookup(scope, name, span) {
            if !allowed.contains(&ty) {
                let names: Vec<_> = allowed.iter().map(|t| t.name()).collect();
                self.error(
                    span,
                    DiagnosticCode::TypeMismatch,
                    Some(name),
                    format!("{what} expects {}, but `{name}` is a {}", names.join(" or "), ty.name()),
                );
            }
        }
    }

    fn bind(&mut self, scope: &mut BTreeMap<String, Ty>, name: &str, ty: Ty, span: Span) {
        if scope.contains_key(name) {
            self.error(
                span,
                DiagnosticCode::Reassignment,
                Some(name),
                format!("variable `{name}` is already bound"),
            );
        } else {
            scope.insert(name.to_string(), ty);
        }
    }

    fn retries(&mut self, retries: u32, span: Span, what: &str) {
        if retries == 0 {
            self.error(
                span,
                DiagnosticCode::ZeroRetries,
                None,
                format!("{what} retries must be positive"),
            );
        } else if retries > self.ceiling {
            self.push(
                Severity::Warning,
                span,
                DiagnosticCode::RetriesAboveCeiling,
                None,
                format!(
                    "{what} retries {retries} exceed the budget ceiling {}; it will be clamped",
                    self.ceiling
                ),
            );
        }
    }

    fn block(&mut self, stmts: &[Statement], scope: &mut BTreeMap<String, Ty>, in_loop: bool) {
        for s in stmts {
            self.stmt(s, scope, in_loop);
        }
    }

    fn stmt(&mut self, s: &Statement, scope: &mut BTreeMap<String, Ty>, in_loop: bool) {
        let span = s.span;
        match &s.stmt {
            Stmt::Bind { var, expr } => {
                let ty = self.expr(expr, scope, span);
                self.bind(scope, var, ty, span);
            }
            Stmt::ForEach { var, source, body } => {
                let var_ty = match source {
                    LoopSource::Nodes => Ty::Node,
                    LoopSource::ArgsOf(x) => {
                        self.expect(scope, x, span, &[Ty::Node], "args(...)");
                        Ty::Text
                    }
                };
                let mut inner = scope.clone();
                self.bind(&mut inner, var, var_ty, span);
                self.block(body, &mut inner, true);
            }
            Stmt::CollectWhen { ask, value, into } => {
                if !in_loop {
                    self.error(
                        span,
                        DiagnosticCode::MisplacedStatement,
                        None,
                        "`when ask(...) collect` is only allowed inside foreach".into(),
                    );
                }
                if ask.matches(VALUE_PLACEHOLDER).count() > 1 {
                    self.error(
                        span,
                        DiagnosticCode::MultipleValuePlaceholders,
                        None,
                        format!("ask template contains more than one `{VALUE_PLACEHOLDER}`"),
                    );
                }
                self.expect(scope, value, span, &[Ty::Node, Ty::Text], "collect");
                self.expect(scope, into, span, &[Ty::Set], "collect ... into");
            }
            Stmt::EnsureRelations { vars, retries, .. } => {
                if in_loop {
                    self.error(
                        span,
                        DiagnosticCode::MisplacedStatement,
                        None,
                        "`ensure` is only allowed at top level".into(),
                    );
                }
                if vars.is_empty() {
                    self.push(
                        Severity::Warning,
                        span,
                        DiagnosticCode::VacuousEnsure,
                        None,
                        "`ensure` lists no variables and will never trigger densification".into(),
                    );
                }
                for var in vars {
                    self.lookup(scope, var, span);
                }
                self.retries(*retries, span, "ensure");
            }
            Stmt::Evidence { label, var } => {
                if in_loop {
                    self.error(
                        span,
                        DiagnosticCode::MisplacedStatement,
                        None,
                        "`evidence` is only allowed at top level".into(),
                    );
                }
                if is_reserved_label(label) {
                    self.error(
                        span,
                        DiagnosticCode::ReservedEvidenceLabel,
                        Some(label),
                        format!("evidence label \"{label}\" is reserved"),
                    );
                } else if !self.labels.insert(label.clone()) {
                    self.error(
                        span,
                        DiagnosticCode::DuplicateEvidenceLabel,
                        Some(label),
                        format!("evidence label \"{label}\" is used twice"),
                    );
                }
                self.lookup(scope, var, span);
            }
            Stmt::AnswerRetry { retries } => self.retries(*retries, span, "answer"),
        }
    }

    fn expr(&mut self, expr: &Expr, scope: &BTreeMap<String, Ty>, span: Span) -> Ty {
        match expr {
            Expr::FindNode { .. } => Ty::Node,
            Expr::Traverse { var, kind } => {
                self.expect(scope, var, span, &[Ty::Node], kind.keyword());
                Ty::Set
            }
            Expr::Union(vars) => {
                for var in vars {
                    self.expect(scope, var, span, &[Ty::Node, Ty::Set, Ty::Text], "union");
                }
                Ty::Set
            }
            Expr::Count(var) => {
                self.expect(scope, var, span, &[Ty::Node, Ty::Set], "count");
                Ty::Count
            }
            Expr::EmptySet => Ty::Set,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;

    fn codes(src: &str) -> Vec<(Severity, DiagnosticCode)> {
        let plan = parse_plan(src).unwrap();
        validate_plan(&plan, DEFAULT_RETRY_CEILING)
            .into_iter()
            .map(|d| (d.severity, d.code))
            .collect()
    }

    #[test]
    fn cat_plan_is_clean() {
        let src = "cats = {}\nforeach e in nodes {\n foreach v in args(e) {\n  when ask(\"Is {value} a cat?\") collect v into cats\n }\n}\nevidence \"all the cats in the video\" = cats\nanswer retries 3";
        assert!(codes(src).is_empty());
    }

    #[test]
    fn two_answers_is_one_error() {
        let plan = Plan {
            statements: vec![
                Stmt::AnswerRetry { retries: 3 }.into(),
                Stmt::AnswerRetry { retries: 3 }.into(),
            ],
        };
        let d = validate_plan(&plan, DEFAULT_RETRY_CEILING);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Error);
        assert_eq!(d[0].code, DiagnosticCode::AnswerPlacement);
    }

    #[test]
    fn answer_must_be_last_and_present() {
        let plan = Plan {
            statements: vec![
                Stmt::AnswerRetry { retries: 3 }.into(),
                Stmt::Bind {
                    var: "x".into(),
                    expr: Expr::EmptySet,
                }
                .into(),
            ],
        };
        assert_eq!(validate_plan(&plan, 4)[0].code, DiagnosticCode::AnswerPlacement);
        assert_eq!(
            validate_plan(&Plan::default(), 4)[0].code,
            DiagnosticCode::AnswerPlacement
        );
    }

    #[test]
    fn retries_above_ceiling_warns() {
        let d = codes(
            "n = find_node(\"x\")\nensure nonempty(n) else graph \"g\" caption \"c\" retries 10\nanswer retries 3",
        );
        assert_eq!(d, vec![(Severity::Warning, DiagnosticCode::RetriesAboveCeiling)]);
        let d = codes("answer retries 0");
        assert_eq!(d, vec![(Severity::Error, DiagnosticCode::ZeroRetries)]);
    }

    #[test]
    fn vacuous_ensure_warns() {
        let plan = Plan {
            statements: vec![
                Stmt::EnsureRelations {
                    vars: vec![],
                    graph_request: "g".into(),
                    caption_request: "c".into(),
                    retries: 3,
                }
                .into(),
                Stmt::AnswerRetry { retries: 3 }.into(),
            ],
        };
        let d = validate_plan(&plan, 4);
        assert_eq!(d.len(), 1);
        assert_eq!(
            (d[0].severity, d[0].code),
            (Severity::Warning, DiagnosticCode::VacuousEnsure)
        );
    }

    #[test]
    fn single_assignment_and_types() {
        assert_eq!(
            codes("x = {}\nx = {}\nanswer retries 1"),
            vec![(Severity::Error, DiagnosticCode::Reassignment)]
        );
        assert_eq!(
            codes("x = {}\ny = children(x)\nanswer retries 1"),
            vec![(Severity::Error, DiagnosticCode::TypeMismatch)]
        );
        assert_eq!(
            codes("n = find_node(\"a\")\nc = count(n)\nforeach e in nodes {\n when ask(\"?\") collect e into c\n}\nanswer retries 1"),
            vec![(Severity::Error, DiagnosticCode::TypeMismatch)]
        );
    }

    #[test]
    fn loop_locals_do_not_escape() {
        let plan = Plan {
            statements: vec![
                Stmt::ForEach {
                    var: "e".into(),
                    source: LoopSource::Nodes,
                    body: vec![Stmt::Bind {
                        var: "k".into(),
                        expr: Expr::Traverse {
                            var: "e".into(),
                            kind: crate::event_graph::TraversalKind::Children,
                        },
                    }
                    .into()],
                }
                .into(),
                Stmt::Evidence {
                    label: "k".into(),
                    var: "k".into(),
                }
                .into(),
                Stmt::AnswerRetry { retries: 1 }.into(),
            ],
        };
        let d = validate_plan(&plan, 4);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::UnboundVariable);
    }

    #[test]
    fn misplaced_and_labels() {
        assert_eq!(
            codes("s = {}\nforeach e in nodes {\n evidence \"x\" = s\n}\nanswer retries 1"),
            vec![(Severity::Error, DiagnosticCode::MisplacedStatement)]
        );
        assert_eq!(
            codes("s = {}\nevidence \"x\" = s\nevidence \"x\" = s\nanswer retries 1"),
            vec![(Severity::Error, DiagnosticCode::DuplicateEvidenceLabel)]
        );
        assert_eq!(
            codes("s = {}\nevidence \"new info 1\" = s\nanswer retries 1"),
            vec![(Severity::Error, DiagnosticCode::ReservedEvidenceLabel)]
        );
        assert_eq!(
            codes(
                "s = {}\nforeach e in nodes {\n when ask(\"{value} or {value}\") collect e into s\n}\nanswer retries 1"
            ),
            vec![(Severity::Error, DiagnosticCode::MultipleValuePlaceholders)]
        );
    }
}
