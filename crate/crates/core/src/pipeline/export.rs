use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::QuestionRecord;
use super::run::{QuestionRun, RunSummary};

pub const TRACES_DIR: &str = "traces";
pub const INDEX_FILE: &str = "index.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexEntry {
    #[serde(flatten)]
    pub summary: RunSummary,
    /// Path relative to the output directory.
    pub trace_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIndex {
    pub runs: Vec<IndexEntry>,
}

impl RunIndex {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(|e| e.summary.clone()).collect()
    }
}

/// File-name-safe form of a question id.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Writes `traces/<id>.json` per run and `index.json`. Existing files are
/// overwritten.
pub fn export_traces(runs: &[QuestionRun], dir: &Path) -> io::Result<RunIndex> {
    let traces = dir.join(TRACES_DIR);
    fs::create_dir_all(&traces)?;
    let mut used = HashSet::new();
    let mut entries = Vec::with_capacity(runs.len());
    for run in runs {
        let base = sanitize_id(&run.question_id);
        let mut name = base.clone();
        let mut n = 1;
        while !used.insert(name.clone()) {
            name = format!("{base}~{n}");
            n += 1;
        }
        let rel = format!("{TRACES_DIR}/{name}.json");
        fs::write(dir.join(&rel), run.trace.to_json() + "\n")?;
        entries.push(IndexEntry {
            summary: run.summary(),
            trace_file: rel,
        });
    }
    let index = RunIndex { runs: entries };
    fs::write(dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(index)
}

pub fn read_index(dir: &Path) -> io::Result<RunIndex> {
    let text = fs::read_to_string(dir.join(INDEX_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Saves the records a run was made on, for later scoring.
pub fn write_records(records: &[QuestionRecord], dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(dir.join(RECORDS_FILE), out)
}
