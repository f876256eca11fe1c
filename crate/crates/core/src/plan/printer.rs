use std::fmt::Write;

use super::ast::{Expr, LoopSource, Plan, Statement, Stmt};

/// Canonical rendering: four-space indentation, one statement per line.
/// `parse_plan(&print_plan(p))` yields a plan equal to `p`.
pub fn print_plan(plan: &Plan) -> String {
    let mut out = String::new();
    write_block(&mut out, &plan.statements, 0);
    out
}

/// First line of a statement's canonical form (a loop's header).
pub fn print_statement_head(stmt: &Stmt) -> String {
    let mut out = String::new();
    write_stmt(&mut out, stmt, 0);
    out.lines().next().unwrap_or_default().to_string()
}

fn write_block(out: &mut String, stmts: &[Statement], depth: usize) {
    for s in stmts {
        write_stmt(out, &s.stmt, depth);
    }
}

fn write_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match stmt {
        Stmt::Bind { var, expr } => {
            let _ = writeln!(out, "{pad}{var} = {}", expr_text(expr));
        }
        Stmt::ForEach { var, source, body } => {
            let src = match source {
                LoopSource::Nodes => "nodes".to_string(),
                LoopSource::ArgsOf(x) => format!("args({x})"),
            };
            let _ = writeln!(out, "{pad}foreach {var} in {src} {{");
            write_block(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        Stmt::CollectWhen { ask, value, into } => {
            let _ = writeln!(out, "{pad}when ask({}) collect {value} into {into}", quote(ask));
        }
        Stmt::EnsureRelations {
            vars,
            graph_request,
            caption_request,
            retries,
        } => {
            let _ = writeln!(
                out,
                "{pad}ensure nonempty({}) else graph {} caption {} retries {retries}",
                vars.join(", "),
                quote(graph_request),
                quote(caption_request)
            );
        }
        Stmt::Evidence { label, var } => {
            let _ = writeln!(out, "{pad}evidence {} = {var}", quote(label));
        }
        Stmt::AnswerRetry { retries } => {
            let _ = writeln!(out, "{pad}answer retries {retries}");
        }
    }
}

fn expr_text(expr: &Expr) -> String {
    match expr {
        Expr::FindNode { name, args } if args.is_empty() => format!("find_node({})", quote(name)),
        Expr::FindNode { name, args } => {
            let pairs: Vec<String> = args
                .iter()
                .map(|(k, v)| format!("{}: {}", quote(k), quote(v)))
                .collect();
            format!("find_node({}, {{{}}})", quote(name), pairs.join(", "))
        }
        Expr::Traverse { var, kind } => format!("{}({var})", kind.keyword()),
        Expr::Union(vars) => format!("union({})", vars.join(", ")),
        Expr::Count(var) => format!("count({var})"),
        Expr::EmptySet => "{}".to_string(),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
