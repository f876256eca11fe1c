use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Placeholder names a template may use.
pub const KNOWN_SLOTS: &[&str] = &[
    "question",
    "a0",
    "a1",
    "a2",
    "a3",
    "a4",
    "request",
    "concern",
    "choices",
    "caption",
    "original_graph",
    "event_description",
    "query",
    "info",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template {template}: missing slot {{{slot}}}")]
    MissingSlot { template: String, slot: String },
    #[error("template {template}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// A prompt body with `{name}` placeholders.
///
/// `{{name}}` renders as a literal `{name}`. Any other brace is literal text,
/// so JSON examples inside a prompt need no escaping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    body: String,
    pieces: Vec<Piece>,
    required: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let id = id.into();
        let body = body.into();
        let pieces = scan(&body);
        let mut required = BTreeSet::new();
        for p in &pieces {
            if let Piece::Slot(name) = p {
                if !KNOWN_SLOTS.contains(&name.as_str()) {
                    return Err(TemplateError::UnknownPlaceholder {
                        template: id,
                        name: name.clone(),
                    });
                }
                required.insert(name.clone());
            }
        }
        Ok(Self {
            id,
            body,
            pieces,
            required,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_slots(&self) -> &BTreeSet<String> {
        &self.required
    }

    /// Hex sha256 of the body; part of cache keys so prompt edits invalidate them.
    pub fn body_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn scan(body: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let tail = &rest[open..];
        if let Some(inner) = tail.strip_prefix("{{") {
            if let Some(close) = inner.find("}}") {
                if is_ident(&inner[..close]) {
                    text.push('{');
                    text.push_str(&inner[..close]);
                    text.push('}');
                    rest = &inner[close + 2..];
                    continue;
                }
            }
        }
        if let Some(close) = tail[1..].find('}') {
            let name = &tail[1..1 + close];
            if is_ident(name) {
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(name.to_string()));
                rest = &tail[close + 2..];
                continue;
            }
        }
        text.push('{');
        rest = &tail[1..];
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    pieces
}

/// Substitutes slots in one pass. Substituted values are never rescanned.
/// Slots the template does not use are ignored.
pub fn render_prompt<'a, I>(t: &PromptTemplate, slots: I) -> Result<String, TemplateError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let slots: BTreeMap<&str, &str> = slots.into_iter().collect();
    if let Some(missing) = t.required.iter().find(|s| !slots.contains_key(s.as_str())) {
        return Err(TemplateError::MissingSlot {
            template: t.id.clone(),
            slot: missing.clone(),
        });
    }
    let mut out = String::with_capacity(t.body.len());
    for p in &t.pieces {
        match p {
            Piece::Text(s) => out.push_str(s),
            Piece::Slot(name) => out.push_str(slots[name.as_str()]),
        }
    }
    Ok(out)
}

/// Renders choices as `A. x B. y C. z D. w E. v`.
pub fn format_choices(choices: &[String; 5]) -> String {
    choices
        .iter()
        .zip(["A", "B", "C", "D", "E"])
        .map(|(c, l)| format!("{l}. {c}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The shipped prompt set.
#[derive(Debug, Clone)]
pub struct Templates {
    pub captioner: PromptTemplate,
    pub graph_generator: PromptTemplate,
    pub denser_graph: PromptTemplate,
    pub denser_caption: PromptTemplate,
    pub plan_generator: PromptTemplate,
    pub simple_query: PromptTemplate,
    pub reasoner: PromptTemplate,
    pub new_info: PromptTemplate,
    pub multimodal: PromptTemplate,
}

macro_rules! prompt {
    ($($file:literal),+) => {
        concat!($(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/prompts/", $file))),+)
    };
}

/// Original code-generator prompt, kept for reference. Plans are requested
/// with [`Templates::plan_generator`] instead.
pub const REFERENCE_CODE_GENERATOR: &str = prompt!("reference/code_generator.txt");

impl Templates {
    pub fn builtin() -> &'static Templates {
        static T: OnceLock<Templates> = OnceLock::new();
        T.get_or_init(|| {
            let t = |id: &str, body: &str| PromptTemplate::new(id, body).expect("shipped template is valid");
            Templates {
                captioner: t("captioner", prompt!("captioner.txt")),
                graph_generator: t(
                    "graph_generator",
                    prompt!("graph_instructions.txt", "graph_generator_tail.txt"),
                ),
                denser_graph: t(
                    "denser_graph",
                    prompt!("graph_instructions.txt", "denser_graph_tail.txt"),
                ),
                denser_caption: t("denser_caption", prompt!("denser_caption.txt")),
                plan_generator: t("plan_generator", prompt!("plan_generator.txt")),
                simple_query: t("simple_query", prompt!("simple_query.txt")),
                reasoner: t("reasoner", prompt!("reasoner.txt")),
                new_info: t("new_info", prompt!("new_info.txt")),
                multimodal: t("multimodal", prompt!("multimodal.txt")),
            }
        })
    }

    pub fn all(&self) -> [&PromptTemplate; 9] {
        [
            &self.captioner,
            &self.graph_generator,
            &self.denser_graph,
            &self.denser_caption,
            &self.plan_generator,
            &self.simple_query,
            &self.reasoner,
            &self.new_info,
            &self.multimodal,
        ]
    }
}
