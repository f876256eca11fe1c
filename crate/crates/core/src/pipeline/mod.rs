//! Batch runner: dataset ingestion, response caching, per-question
//! execution, scoring and trace export.

mod cache;
mod config;
mod dataset;
mod export;
mod report;
mod run;

pub use cache::{cache_key, DirCache};
pub use config::{CacheConfig, Config, ConfigError};
pub use dataset::{load_dataset, parse_dataset, DatasetError, QuestionRecord};
pub use export::{
    export_traces, read_index, sanitize_id, write_records, IndexEntry, RunIndex, INDEX_FILE, RECORDS_FILE, REPORT_FILE,
    TRACES_DIR,
};
pub use report::{render_report, score, RunReport, ScoreError, StageStats, TypeStats};
pub use run::{strip_code_fences, Pipeline, QuestionRun, RunError, RunSummary};
