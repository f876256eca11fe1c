//! Reasoning-plan language.
//!
//! Plans are the auditable replacement for generated general-purpose code:
//! a small, closed, straight-line language with loops over the graph,
//! yes/no collection, an "ensure these relations exist" block that drives
//! graph/caption densification, labelled evidence, and a final answer step.
//!
//! ```text
//! program   = { stmt } , answer ;
//! stmt      = bind | foreach | ensure | evidence ;
//! bind      = IDENT "=" expr ;
//! expr      = "find_node" "(" STRING [ "," argmap ] ")"
//!           | kind "(" IDENT ")" | "union" "(" IDENT { "," IDENT } ")"
//!           | "count" "(" IDENT ")" | "{}" ;
//! kind      = "children" | "parent" | "after" | "before"
//!           | "caused_by" | "resulted_in" ;
//! foreach   = "foreach" IDENT "in" ( "nodes" | "args" "(" IDENT ")" )
//!             "{" { stmt | collect } "}" ;
//! collect   = "when" "ask" "(" STRING ")" "collect" IDENT "into" IDENT ;
//! ensure    = "ensure" "nonempty" "(" IDENT { "," IDENT } ")"
//!             "else" "graph" STRING "caption" STRING "retries" INT ;
//! evidence  = "evidence" STRING "=" IDENT ;
//! answer    = "answer" "retries" INT ;
//! argmap    = "{" STRING ":" STRING { "," STRING ":" STRING } "}" ;
//! ```
//!
//! Keywords are contextual: `after = after(stand_up)` is a valid binding.

mod ast;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use ast::{Expr, LoopSource, Plan, Span, Statement, Stmt};
pub use parser::{parse_plan, PlanError};
pub use printer::{print_plan, print_statement_head};
pub use validate::{validate_plan, Diagnostic, DiagnosticCode, Severity, DEFAULT_RETRY_CEILING};

/// Placeholder substituted into `ask(...)` templates.
pub const VALUE_PLACEHOLDER: &str = "{value}";
