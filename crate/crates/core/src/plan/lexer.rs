use super::ast::Span;
use super::parser::PlanError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Eq,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Int(n) => format!("integer {n}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
        }
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<(Tok, Span)>, PlanError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut col) = (1u32, 1u32);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let span = Span { line, column: col };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '(' | ')' | '{' | '}' | ',' | ':' | '=' => {
                bump!();
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    _ => Tok::Eq,
                };
                out.push((tok, span));
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None => return Err(PlanError::syntax(span, "unterminated string literal")),
                        Some('"') => break,
                        Some('\\') => {
                            let esc_span = Span { line, column: col - 1 };
                            match bump!() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(other) => {
                                    return Err(PlanError::syntax(esc_span, format!("unknown escape `\\{other}`")))
                                }
                                None => return Err(PlanError::syntax(span, "unterminated string literal")),
                            }
                        }
                        Some(ch) => s.push(ch),
                    }
                }
                out.push((Tok::Str(s), span));
            }
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    digits.push(d);
                    bump!();
                }
                let n = digits
                    .parse()
                    .map_err(|_| PlanError::syntax(span, "integer literal out of range"))?;
                out.push((Tok::Int(n), span));
            }
            'a'..='z' | '_' => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if !(d.is_ascii_lowercase() || d.is_ascii_digit() || d == '_') {
                        break;
                    }
                    ident.push(d);
                    bump!();
                }
                if let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() {
                        return Err(PlanError::syntax(
                            span,
                            "identifiers are lowercase letters, digits and `_`",
                        ));
                    }
                }
                out.push((Tok::Ident(ident), span));
            }
            other => return Err(PlanError::syntax(span, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}
