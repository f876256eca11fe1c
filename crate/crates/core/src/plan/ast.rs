use std::collections::BTreeSet;

use crate::event_graph::TraversalKind;

/// 1-based source position; `0:0` for plans built in code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    pub statements: Vec<Statement>,
}

/// A statement with its source position. Equality ignores the position.
#[derive(Debug, Clone)]
pub struct Statement {
    pub stmt: Stmt,
    pub span: Span,
}

impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        self.stmt == other.stmt
    }
}

impl Eq for Statement {}

impl From<Stmt> for Statement {
    fn from(stmt: Stmt) -> Self {
        Self {
            stmt,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Bind {
        var: String,
        expr: Expr,
    },
    ForEach {
        var: String,
        source: LoopSource,
        body: Vec<Statement>,
    },
    CollectWhen {
        ask: String,
        value: String,
        into: String,
    },
    EnsureRelations {
        vars: Vec<String>,
        graph_request: String,
        caption_request: String,
        retries: u32,
    },
    Evidence {
        label: String,
        var: String,
    },
    AnswerRetry {
        retries: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoopSource {
    Nodes,
    ArgsOf(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    FindNode { name: String, args: Vec<(String, String)> },
    Traverse { var: String, kind: TraversalKind },
    Union(Vec<String>),
    Count(String),
    EmptySet,
}

impl Expr {
    pub fn vars(&self) -> Vec<&str> {
        match self {
            Expr::FindNode { .. } | Expr::EmptySet => Vec::new(),
            Expr::Traverse { var, .. } | Expr::Count(var) => vec![var.as_str()],
            Expr::Union(vars) => vars.iter().map(String::as_str).collect(),
        }
    }
}

impl Stmt {
    /// Variables this statement binds or accumulates into, visible after it.
    /// Loop variables and loop-local bindings are excluded.
    pub fn outer_defs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match self {
            Stmt::Bind { var, .. } => {
                out.insert(var.clone());
            }
            Stmt::CollectWhen { into, .. } => {
                out.insert(into.clone());
            }
            Stmt::ForEach { var, body, .. } => {
                let local = local_binds(body, var);
                for s in body {
                    out.extend(s.stmt.outer_defs().into_iter().filter(|v| !local.contains(v)));
                }
            }
            _ => {}
        }
        out
    }

    /// Free variables read by this statement.
    pub fn free_uses(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match self {
            Stmt::Bind { expr, .. } => out.extend(expr.vars().into_iter().map(String::from)),
            Stmt::CollectWhen { value, into, .. } => {
                out.insert(value.clone());
                out.insert(into.clone());
            }
            Stmt::ForEach { var, source, body } => {
                if let LoopSource::ArgsOf(x) = source {
                    out.insert(x.clone());
                }
                let local = local_binds(body, var);
                for s in body {
                    out.extend(s.stmt.free_uses().into_iter().filter(|v| !local.contains(v)));
                }
            }
            Stmt::EnsureRelations { vars, .. } => out.extend(vars.iter().cloned()),
            Stmt::Evidence { var, .. } => {
                out.insert(var.clone());
            }
            Stmt::AnswerRetry { .. } => {}
        }
        out
    }
}

/// Names scoped to a loop body: the loop variable, plus anything bound by
/// `=` directly in the body or in nested loops.
fn local_binds(body: &[Statement], loop_var: &str) -> BTreeSet<String> {
    let mut local = BTreeSet::new();
    local.insert(loop_var.to_string());
    for s in body {
        match &s.stmt {
            Stmt::Bind { var, .. } => {
                local.insert(var.clone());
            }
            Stmt::ForEach { var, body, .. } => {
                local.extend(local_binds(body, var));
            }
            _ => {}
        }
    }
    local
}
