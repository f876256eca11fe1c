use thiserror::Error;

use super::ast::{Expr, LoopSource, Plan, Span, Statement, Stmt};
use super::lexer::{tokenize, Tok};
use super::validate::{validate_plan, DiagnosticCode, DEFAULT_RETRY_CEILING};
use crate::event_graph::TraversalKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("{span}: syntax error: {message}")]
    SyntaxError { span: Span, message: String },
    #[error(
        "{span}: unknown traversal `{name}` (expected one of children, parent, after, before, caused_by, resulted_in)"
    )]
    UnknownTraversal { span: Span, name: String },
    #[error("{span}: variable `{name}` used before it is bound")]
    UnboundVariable { span: Span, name: String },
}

impl PlanError {
    pub(crate) fn syntax(span: Span, message: impl Into<String>) -> Self {
        PlanError::SyntaxError {
            span,
            message: message.into(),
        }
    }

    pub fn span(&self) -> Span {
        match self {
            PlanError::SyntaxError { span, .. }
            | PlanError::UnknownTraversal { span, .. }
            | PlanError::UnboundVariable { span, .. } => *span,
        }
    }
}

/// Parses plan text. Only syntax, traversal names and variable binding are
/// checked here; [`validate_plan`] reports the remaining static issues.
pub fn parse_plan(text: &str) -> Result<Plan, PlanError> {
    let tokens = tokenize(text)?;
    let end = end_span(text);
    let mut p = Parser { tokens, pos: 0, end };
    let plan = p.program()?;
    if let Some(d) = validate_plan(&plan, DEFAULT_RETRY_CEILING)
        .into_iter()
        .find(|d| d.code == DiagnosticCode::UnboundVariable)
    {
        return Err(PlanError::UnboundVariable {
            span: d.span,
            name: d.subject.unwrap_or_default(),
        });
    }
    Ok(plan)
}

fn end_span(text: &str) -> Span {
    let line = text.lines().count().max(1) as u32;
    let column = text.lines().last().map_or(0, |l| l.chars().count()) as u32 + 1;
    Span { line, column }
}

struct Parser {
    tokens: Vec<(Tok, Span)>,
    pos: usize,
    end: Span,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|(t, _)| t)
    }

    fn span(&self) -> Span {
        self.tokens.get(self.pos).map_or(self.end, |(_, s)| *s)
    }

    fn peek_word(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn unexpected(&self, expected: &str) -> PlanError {
        let found = self.peek().map_or("end of input".to_string(), Tok::describe);
        PlanError::syntax(self.span(), format!("expected {expected}, found {found}"))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), PlanError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), PlanError> {
        if self.peek_word(word) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{word}`")))
        }
    }

    fn ident(&mut self) -> Result<String, PlanError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn string(&mut self) -> Result<String, PlanError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("string literal")),
        }
    }

    fn int(&mut self) -> Result<u32, PlanError> {
        let span = self.span();
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = u32::try_from(*n).map_err(|_| PlanError::syntax(span, "integer literal out of range"))?;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    fn at_answer(&self) -> bool {
        self.peek_word("answer") && matches!(self.peek_at(1), Some(Tok::Ident(w)) if w == "retries")
    }

    fn program(&mut self) -> Result<Plan, PlanError> {
        let mut statements = Vec::new();
        loop {
            if self.peek().is_none() {
                return Err(self.unexpected("`answer retries <n>`"));
            }
            if self.at_answer() {
                let span = self.span();
                self.pos += 2;
                let retries = self.int()?;
                statements.push(Statement {
                    stmt: Stmt::AnswerRetry { retries },
                    span,
                });
                if self.peek().is_some() {
                    return Err(self.unexpected("end of plan after `answer`"));
                }
                return Ok(Plan { statements });
            }
            statements.push(self.statement(false)?);
        }
    }

    fn statement(&mut self, in_loop: bool) -> Result<Statement, PlanError> {
        let span = self.span();
        let stmt = match self.peek() {
            Some(Tok::Ident(_)) if self.peek_at(1) == Some(&Tok::Eq) => {
                let var = self.ident()?;
                self.expect(Tok::Eq)?;
                let expr = self.expr()?;
                Stmt::Bind { var, expr }
            }
            Some(Tok::Ident(w)) => match w.as_str() {
                "foreach" => self.foreach()?,
                "ensure" => self.ensure()?,
                "evidence" => {
                    self.pos += 1;
                    let label = self.string()?;
                    self.expect(Tok::Eq)?;
                    let var = self.ident()?;
                    Stmt::Evidence { label, var }
                }
                "when" if in_loop => self.collect()?,
                "when" => {
                    return Err(PlanError::syntax(
                        span,
                        "`when ask(...) collect` is only allowed inside foreach",
                    ))
                }
                "answer" if in_loop => {
                    return Err(PlanError::syntax(span, "`answer` must be the last top-level statement"))
                }
                _ => return Err(self.unexpected("statement")),
            },
            _ => return Err(self.unexpected("statement")),
        };
        Ok(Statement { stmt, span })
    }

    fn foreach(&mut self) -> Result<Stmt, PlanError> {
        self.keyword("foreach")?;
        let var = self.ident()?;
        self.keyword("in")?;
        let source = if self.peek_word("nodes") {
            self.pos += 1;
            LoopSource::Nodes
        } else if self.peek_word("args") {
            self.pos += 1;
            self.expect(Tok::LParen)?;
            let of = self.ident()?;
            self.expect(Tok::RParen)?;
            LoopSource::ArgsOf(of)
        } else {
            return Err(self.unexpected("`nodes` or `args(<var>)`"));
        };
        self.expect(Tok::LBrace)?;
        let mut body = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            if self.peek().is_none() {
                return Err(self.unexpected("`}`"));
            }
            body.push(self.statement(true)?);
        }
        self.pos += 1;
        Ok(Stmt::ForEach { var, source, body })
    }

    fn collect(&mut self) -> Result<Stmt, PlanError> {
        self.keyword("when")?;
        self.keyword("ask")?;
        self.expect(Tok::LParen)?;
        let ask = self.string()?;
        self.expect(Tok::RParen)?;
        self.keyword("collect")?;
        let value = self.ident()?;
        self.keyword("into")?;
        let into = self.ident()?;
        Ok(Stmt::CollectWhen { ask, value, into })
    }

    fn ensure(&mut self) -> Result<Stmt, PlanError> {
        self.keyword("ensure")?;
        self.keyword("nonempty")?;
        self.expect(Tok::LParen)?;
        let mut vars = vec![self.ident()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            vars.push(self.ident()?);
        }
        self.expect(Tok::RParen)?;
        self.keyword("else")?;
        self.keyword("graph")?;
        let graph_request = self.string()?;
        self.keyword("caption")?;
        let caption_request = self.string()?;
        self.keyword("retries")?;
        let retries = self.int()?;
        Ok(Stmt::EnsureRelations {
            vars,
            graph_request,
            caption_request,
            retries,
        })
    }

    fn expr(&mut self) -> Result<Expr, PlanError> {
        let span = self.span();
        if self.peek() == Some(&Tok::LBrace) {
            self.pos += 1;
            self.expect(Tok::RBrace)?;
            return Ok(Expr::EmptySet);
        }
        let name = self.ident()?;
        if self.peek() != Some(&Tok::LParen) {
            self.pos -= 1;
            return Err(
                self.unexpected("expression (`find_node(...)`, a traversal, `union(...)`, `count(...)` or `{}`)")
            );
        }
        self.pos += 1;
        let expr = match name.as_str() {
            "find_node" => {
                let node_name = self.string()?;
                let mut args = Vec::new();
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    self.expect(Tok::LBrace)?;
                    loop {
                        let role = self.string()?;
                        self.expect(Tok::Colon)?;
                        let value = self.string()?;
                        args.push((role, value));
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    self.expect(Tok::RBrace)?;
                }
                Expr::FindNode { name: node_name, args }
            }
            "union" => {
                let mut vars = vec![self.ident()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    vars.push(self.ident()?);
                }
                Expr::Union(vars)
            }
            "count" => Expr::Count(self.ident()?),
            other => match TraversalKind::from_keyword(other) {
                Some(kind) => Expr::Traverse {
                    var: self.ident()?,
                    kind,
                },
                None => return Err(PlanError::UnknownTraversal { span, name }),
            },
        };
        self.expect(Tok::RParen)?;
        Ok(expr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CATS: &str = r#"
# How many cats are there in the video?
cats = {}
foreach e in nodes {
    foreach v in args(e) {
        when ask("Is {value} a cat?") collect v into cats
    }
}
evidence "all the cats in the video" = cats
answer retries 3
"#;

    #[test]
    fn cat_counting_plan() {
        let plan = parse_plan(CATS).unwrap();
        assert_eq!(plan.statements.len(), 4);
        assert!(matches!(
            plan.statements[0].stmt,
            Stmt::Bind {
                expr: Expr::EmptySet,
                ..
            }
        ));
        assert_eq!(plan.statements[1].span, Span { line: 4, column: 1 });
        match &plan.statements[1].stmt {
            Stmt::ForEach { body, .. } => match &body[0].stmt {
                Stmt::ForEach { source, body, .. } => {
                    assert_eq!(source, &LoopSource::ArgsOf("e".into()));
                    assert_eq!(
                        body[0].stmt,
                        Stmt::CollectWhen {
                            ask: "Is {value} a cat?".into(),
                            value: "v".into(),
                            into: "cats".into()
                        }
                    );
                }
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(plan.statements[3].stmt, Stmt::AnswerRetry { retries: 3 });
    }

    #[test]
    fn minimal_plan() {
        let plan = parse_plan("answer retries 3").unwrap();
        assert_eq!(plan.statements, vec![Statement::from(Stmt::AnswerRetry { retries: 3 })]);
    }

    #[test]
    fn unbound_variable() {
        let err = parse_plan("after = after(node)\nanswer retries 3").unwrap_err();
        assert_eq!(
            err,
            PlanError::UnboundVariable {
                span: Span { line: 1, column: 1 },
                name: "node".into()
            }
        );
    }

    #[test]
    fn keywords_are_contextual() {
        let plan = parse_plan(
            "node = find_node(\"stand up\", {\"agent\": \"man in blue\", \"item\": \"chair\"})\n\
             after = after(node)\nchildren = children(node)\nanswer = union(after, children)\n\
             evidence \"x\" = answer\nanswer retries 2",
        )
        .unwrap();
        assert_eq!(plan.statements.len(), 6);
        assert_eq!(
            plan.statements[0].stmt,
            Stmt::Bind {
                var: "node".into(),
                expr: Expr::FindNode {
                    name: "stand up".into(),
                    args: vec![("agent".into(), "man in blue".into()), ("item".into(), "chair".into())]
                }
            }
        );
    }

    #[test]
    fn unknown_traversal() {
        let err = parse_plan("n = find_node(\"x\")\na = temporal_after(n)\nanswer retries 1").unwrap_err();
        assert!(
            matches!(err, PlanError::UnknownTraversal { ref name, span } if name == "temporal_after" && span.line == 2)
        );
    }

    #[test]
    fn syntax_errors_have_locations() {
        let err = parse_plan("x = find_node(\"a\"\nanswer retries 1").unwrap_err();
        assert!(
            matches!(err, PlanError::SyntaxError { span, .. } if span.line == 2),
            "{err}"
        );
        assert!(matches!(parse_plan("").unwrap_err(), PlanError::SyntaxError { .. }));
        assert!(parse_plan("answer retries 1\nanswer retries 1").is_err());
        assert!(parse_plan("when ask(\"x\") collect a into b\nanswer retries 1").is_err());
        assert!(parse_plan("Node = {}\nanswer retries 1").is_err());
        assert!(parse_plan("s = \"unterminated\nanswer retries 1").is_err());
        assert!(parse_plan("answer retries 99999999999").is_err());
    }

    #[test]
    fn string_escapes() {
        let plan = parse_plan("n = find_node(\"say \\\"hi\\\"\\n\")\nanswer retries 1").unwrap();
        assert!(
            matches!(&plan.statements[0].stmt, Stmt::Bind { expr: Expr::FindNode { name, .. }, .. } if name == "say \"hi\"\n")
        );
        assert!(parse_plan("n = find_node(\"\\q\")\nanswer retries 1").is_err());
    }

    #[test]
    fn comments_inside_strings_are_text() {
        let plan = parse_plan("n = find_node(\"#1 fan\") # trailing\nanswer retries 1").unwrap();
        assert!(
            matches!(&plan.statements[0].stmt, Stmt::Bind { expr: Expr::FindNode { name, .. }, .. } if name == "#1 fan")
        );
    }
}
