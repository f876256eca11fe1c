use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Oracle, OracleError, OracleKind, OracleRequest, OracleResponse};

/// Conditions on a call. Every condition present must hold; an empty
/// matcher matches any call to the rule's oracle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    /// Match against this structured argument instead of the prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<String>,
    /// Only calls made for this question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub oracle: OracleKind,
    #[serde(default, rename = "match")]
    pub matcher: Matcher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Fail the call with this message instead of responding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Rule retires after this many matches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<u32>,
}

impl Rule {
    pub fn respond(oracle: OracleKind, response: impl Into<String>) -> Self {
        Self {
            oracle,
            matcher: Matcher::default(),
            response: Some(response.into()),
            error: None,
            times: None,
        }
    }

    pub fn fail(oracle: OracleKind, message: impl Into<String>) -> Self {
        Self {
            oracle,
            matcher: Matcher::default(),
            response: None,
            error: Some(message.into()),
            times: None,
        }
    }

    pub fn contains(mut self, needle: impl Into<String>) -> Self {
        self.matcher.contains = Some(needle.into());
        self
    }

    pub fn equals(mut self, text: impl Into<String>) -> Self {
        self.matcher.equals = Some(text.into());
        self
    }

    pub fn regex(mut self, pattern: impl Into<String>) -> Self {
        self.matcher.regex = Some(pattern.into());
        self
    }

    pub fn on_arg(mut self, name: impl Into<String>) -> Self {
        self.matcher.arg = Some(name.into());
        self
    }

    pub fn for_question(mut self, id: impl Into<String>) -> Self {
        self.matcher.question_id = Some(id.into());
        self
    }

    pub fn times(mut self, n: u32) -> Self {
        self.times = Some(n);
        self
    }
}

/// Ordered rules; the first live matching rule answers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioScript {
    pub rules: Vec<Rule>,
}

impl ScenarioScript {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        serde_json::from_str(text).map_err(|e| OracleError::Config(format!("scenario script: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallRecord {
    pub oracle: OracleKind,
    pub prompt: String,
    pub args: BTreeMap<String, String>,
    /// Index of the rule that answered, if any.
    pub rule: Option<usize>,
}

struct CompiledRule {
    rule: Rule,
    regex: Option<Regex>,
}

impl CompiledRule {
    fn matches(&self, req: &OracleRequest) -> bool {
        if self.rule.oracle != req.oracle {
            return false;
        }
        let m = &self.rule.matcher;
        if let Some(q) = &m.question_id {
            if req.args.get(super::arg::QUESTION_ID) != Some(q) {
                return false;
            }
        }
        let subject = match &m.arg {
            Some(name) => match req.args.get(name) {
                Some(v) => v.as_str(),
                None => return false,
            },
            None => req.prompt.as_str(),
        };
        m.contains.as_deref().is_none_or(|c| subject.contains(c))
            && m.equals.as_deref().is_none_or(|e| subject == e)
            && self.regex.as_ref().is_none_or(|r| r.is_match(subject))
    }
}

struct State {
    remaining: Vec<Option<u32>>,
    log: Vec<CallRecord>,
}

/// Deterministic oracle driven by a [`ScenarioScript`]. Serves every role;
/// rules select by [`OracleKind`].
pub struct ScriptedOracle {
    rules: Vec<CompiledRule>,
    state: Mutex<State>,
}

impl ScriptedOracle {
    pub fn new(script: ScenarioScript) -> Result<Self, OracleError> {
        let mut rules = Vec::with_capacity(script.rules.len());
        for (i, rule) in script.rules.into_iter().enumerate() {
            if rule.response.is_some() == rule.error.is_some() {
                return Err(OracleError::Config(format!(
                    "rule {i}: exactly one of `response` and `error` is required"
                )));
            }
            let regex = match &rule.matcher.regex {
                Some(p) => Some(Regex::new(p).map_err(|e| OracleError::Config(format!("rule {i}: {e}")))?),
                None => None,
            };
            rules.push(CompiledRule { rule, regex });
        }
        let remaining = rules.iter().map(|r| r.rule.times).collect();
        Ok(Self {
            rules,
            state: Mutex::new(State {
                remaining,
                log: Vec::new(),
            }),
        })
    }

    /// Resolves one call and appends it to the call log.
    pub fn lookup(&self, req: &OracleRequest) -> Result<String, OracleError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let hit = self
            .rules
            .iter()
            .enumerate()
            .find(|(i, r)| state.remaining[*i] != Some(0) && r.matches(req))
            .map(|(i, _)| i);
        if let Some(i) = hit {
            if let Some(n) = state.remaining[i].as_mut() {
                *n -= 1;
            }
        }
        state.log.push(CallRecord {
            oracle: req.oracle,
            prompt: req.prompt.clone(),
            args: req.args.clone(),
            rule: hit,
        });
        drop(state);

        let Some(i) = hit else {
            let excerpt: String = req.prompt.chars().take(120).collect();
            return Err(OracleError::UnmatchedInvocation {
                oracle: req.oracle,
                prompt_excerpt: excerpt,
            });
        };
        let rule = &self.rules[i].rule;
        match (&rule.response, &rule.error) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(e)) => Err(OracleError::Scripted {
                oracle: req.oracle,
                message: e.clone(),
            }),
            (None, None) => unreachable!("validated in new"),
        }
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).log.clone()
    }

    pub fn count(&self, kind: OracleKind) -> usize {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .log
            .iter()
            .filter(|c| c.oracle == kind)
            .count()
    }

    /// Clears the call log; rule budgets (`times`) are not reset.
    pub fn clear_log(&self) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).log.clear();
    }
}

impl Oracle for ScriptedOracle {
    fn call(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        self.lookup(request).map(OracleResponse::text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(kind: OracleKind, prompt: &str) -> OracleRequest {
        OracleRequest::new(kind, prompt)
    }

    #[test]
    fn contains_rule() {
        let o = ScriptedOracle::new(ScenarioScript::new(vec![
            Rule::respond(OracleKind::SimpleQuery, "yes").contains("a cat")
        ]))
        .unwrap();
        assert_eq!(
            o.lookup(&req(OracleKind::SimpleQuery, "Is white cat a cat?")).unwrap(),
            "yes"
        );
        assert_eq!(o.call_log().len(), 1);
        assert_eq!(o.call_log()[0].rule, Some(0));
    }

    #[test]
    fn question_scoped_rule() {
        let o = ScriptedOracle::new(ScenarioScript::new(vec![
            Rule::respond(OracleKind::Reasoner, "B")
                .for_question("q2")
                .contains("Choices"),
            Rule::respond(OracleKind::Reasoner, "A"),
        ]))
        .unwrap();
        let r = |q: &str, p: &str| req(OracleKind::Reasoner, p).arg(crate::oracles::arg::QUESTION_ID, q);
        assert_eq!(o.lookup(&r("q2", "Choices: ...")).unwrap(), "B");
        assert_eq!(o.lookup(&r("q1", "Choices: ...")).unwrap(), "A");
        assert_eq!(o.lookup(&r("q2", "other")).unwrap(), "A");
        let json = r#"[{"oracle": "reasoner", "match": {"question_id": "q9"}, "response": "E"}]"#;
        let o = ScriptedOracle::new(ScenarioScript::from_json(json).unwrap()).unwrap();
        assert_eq!(o.lookup(&r("q9", "x")).unwrap(), "E");
    }

    #[test]
    fn first_match_wins() {
        let o = ScriptedOracle::new(ScenarioScript::new(vec![
            Rule::respond(OracleKind::Reasoner, "A"),
            Rule::respond(OracleKind::Reasoner, "B"),
        ]))
        .unwrap();
        assert_eq!(o.lookup(&req(OracleKind::Reasoner, "q")).unwrap(), "A");
    }

    #[test]
    fn unmatched_is_error_and_logged() {
        let o = ScriptedOracle::new(ScenarioScript::default()).unwrap();
        assert!(matches!(
            o.lookup(&req(OracleKind::Captioner, "describe")),
            Err(OracleError::UnmatchedInvocation {
                oracle: OracleKind::Captioner,
                ..
            })
        ));
        assert_eq!(o.call_log()[0].rule, None);
    }

    #[test]
    fn times_and_fallthrough() {
        let o = ScriptedOracle::new(ScenarioScript::new(vec![
            Rule::respond(OracleKind::Reasoner, "I am not sure").times(2),
            Rule::respond(OracleKind::Reasoner, "B"),
        ]))
        .unwrap();
        let answers: Vec<_> = (0..3)
            .map(|_| o.lookup(&req(OracleKind::Reasoner, "q")).unwrap())
            .collect();
        assert_eq!(answers, ["I am not sure", "I am not sure", "B"]);
        assert_eq!(o.count(OracleKind::Reasoner), 3);
    }

    #[test]
    fn arg_equals_and_regex() {
        let o = ScriptedOracle::new(ScenarioScript::new(vec![
            Rule::respond(OracleKind::ClipRetriever, "clip_7")
                .on_arg("event_id")
                .equals("Sitting"),
            Rule::fail(OracleKind::ClipRetriever, "no clip").regex("^.*$"),
        ]))
        .unwrap();
        let sitting = req(OracleKind::ClipRetriever, "x").arg("event_id", "Sitting");
        assert_eq!(o.lookup(&sitting).unwrap(), "clip_7");
        let other = req(OracleKind::ClipRetriever, "x").arg("event_id", "Chasing");
        assert!(matches!(o.lookup(&other), Err(OracleError::Scripted { .. })));
    }

    #[test]
    fn json_form() {
        let script = ScenarioScript::from_json(
            r#"[{"oracle": "simpleQuery", "match": {"contains": "a cat"}, "response": "yes"},
                {"oracle": "reasoner", "response": "B", "times": 1}]"#,
        )
        .unwrap();
        assert_eq!(script.rules.len(), 2);
        assert!(ScenarioScript::from_json(r#"[{"oracle": "nobody", "response": "x"}]"#).is_err());
        let both = ScenarioScript::new(vec![Rule {
            error: Some("e".into()),
            ..Rule::respond(OracleKind::Reasoner, "x")
        }]);
        assert!(ScriptedOracle::new(both).is_err());
    }

    #[test]
    fn same_inputs_same_log() {
        let script = ScenarioScript::new(vec![Rule::respond(OracleKind::Reasoner, "C")]);
        let run = || {
            let o = ScriptedOracle::new(script.clone()).unwrap();
            for p in ["a", "b"] {
                o.lookup(&req(OracleKind::Reasoner, p)).unwrap();
            }
            o.call_log()
        };
        assert_eq!(run(), run());
    }
}
