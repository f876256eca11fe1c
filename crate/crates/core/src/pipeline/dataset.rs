use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    RecordInvalid { line: usize, reason: String },
    #[error("{path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One multiple-choice question. JSON-lines field names are snake_case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub id: String,
    pub video_ref: String,
    pub question: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<String>,
}

impl QuestionRecord {
    pub fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.choices.len() != 5 {
            return Err(format!("expected 5 choices, found {}", self.choices.len()));
        }
        if self.answer_index > 4 {
            return Err(format!("answer_index {} out of range 0..=4", self.answer_index));
        }
        Ok(())
    }

    pub fn choices_array(&self) -> [String; 5] {
        self.choices.clone().try_into().expect("checked on load")
    }
}

/// Reads a JSON-lines dataset. Blank lines are skipped; line numbers are
/// 1-based.
pub fn load_dataset(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    let records = parse_dataset(&text)?;
    if records.is_empty() {
        tracing::warn!(path = %path.display(), "dataset is empty");
    }
    Ok(records)
}

pub fn parse_dataset(text: &str) -> Result<Vec<QuestionRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |reason: String| DatasetError::RecordInvalid { line: line_no, reason };
        let rec: QuestionRecord = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        rec.check().map_err(invalid)?;
        if !seen.insert(rec.id.clone()) {
            return Err(invalid(format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, n: usize) -> String {
        let choices: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        serde_json::json!({"id": id, "video_ref": "v.mp4", "question": "why", "choices": choices, "answer_index": 1})
            .to_string()
    }

    #[test]
    fn three_lines_in_order() {
        let text = [line("a", 5), line("b", 5), line("c", 5)].join("\n");
        let ids: Vec<_> = parse_dataset(&text).unwrap().into_iter().map(|r| r.id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn four_choices_rejected() {
        let text = [line("a", 5), line("b", 4)].join("\n");
        assert!(matches!(
            parse_dataset(&text),
            Err(DatasetError::RecordInvalid { line: 2, .. })
        ));
    }

    #[test]
    fn empty_and_bad_index() {
        assert!(parse_dataset("").unwrap().is_empty());
        let bad = line("a", 5).replace("\"answer_index\":1", "\"answer_index\":7");
        assert!(matches!(
            parse_dataset(&bad),
            Err(DatasetError::RecordInvalid { line: 1, .. })
        ));
        let dup = [line("a", 5), line("a", 5)].join("\n");
        assert!(matches!(
            parse_dataset(&dup),
            Err(DatasetError::RecordInvalid { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/q.jsonl")),
            Err(DatasetError::IoFailure { .. })
        ));
    }
}
