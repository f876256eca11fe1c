use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use evgraph_core::graph_io::{parse_graph_response, serialize_graph, ParseMode};
use evgraph_core::oracles::{OracleSuite, ScenarioScript, ScriptedOracle};
use evgraph_core::pipeline::{
    export_traces, load_dataset, read_index, render_report, score, write_records, Config, Pipeline, RunReport,
    RECORDS_FILE, REPORT_FILE,
};
use evgraph_core::plan::{parse_plan, print_plan, validate_plan};

#[derive(Parser)]
#[command(name = "evgraph", version, about = "Event-graph video question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every question in a dataset and write traces and a report.
    Run {
        /// JSON-lines question file.
        #[arg(long)]
        dataset: PathBuf,
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `scripted:<scenario.json>` or `http`.
        #[arg(long)]
        oracles: String,
        #[arg(long)]
        out: PathBuf,
        /// Questions run concurrently.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Only the first N questions.
        #[arg(long)]
        limit: Option<usize>,
        /// Ignore the configured response cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Score a finished run and write report.json.
    Score {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the activation table of a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a plan file; exits non-zero on errors.
    ValidatePlan {
        file: PathBuf,
        /// Retry count above which a warning is issued.
        #[arg(long, default_value_t = 4)]
        ceiling: u32,
        /// Print the plan in canonical form.
        #[arg(long)]
        print: bool,
    },
    /// Parse a graph-generator response and print it in canonical form.
    ParseGraph {
        file: PathBuf,
        /// Reject anything the lenient parser would repair.
        #[arg(long)]
        strict: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run {
            dataset,
            config,
            oracles,
            out,
            workers,
            limit,
            no_cache,
        } => run(&dataset, config.as_deref(), &oracles, &out, workers, limit, no_cache),
        Command::Score { out } => {
            let report = score_dir(&out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { out } => {
            let path = out.join(REPORT_FILE);
            let report: RunReport = match fs::read_to_string(&path) {
                Ok(text) => serde_json::from_str(&text).with_context(|| path.display().to_string())?,
                Err(_) => score_dir(&out)?,
            };
            print!("{}", render_report(&report));
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidatePlan { file, ceiling, print } => {
            let text = fs::read_to_string(&file).with_context(|| file.display().to_string())?;
            let plan = match parse_plan(&text) {
                Ok(p) => p,
                Err(e) => {
                    println!("{}:{e}", file.display());
                    return Ok(ExitCode::FAILURE);
                }
            };
            let diagnostics = validate_plan(&plan, ceiling);
            for d in &diagnostics {
                println!("{}:{d}", file.display());
            }
            if print {
                print!("{}", print_plan(&plan));
            }
            let errors = diagnostics.iter().filter(|d| d.is_error()).count();
            if errors > 0 {
                eprintln!("{errors} error(s)");
                return Ok(ExitCode::FAILURE);
            }
            eprintln!(
                "ok: {} statement(s), {} warning(s)",
                plan.statements.len(),
                diagnostics.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ParseGraph { file, strict } => {
            let text = fs::read_to_string(&file).with_context(|| file.display().to_string())?;
            let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
            let parsed = parse_graph_response(&text, mode).with_context(|| file.display().to_string())?;
            for w in &parsed.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("{} events, {} edges", parsed.graph.len(), parsed.graph.edge_count());
            print!("{}", serialize_graph(&parsed.graph));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn suite(choice: &str, cfg: &Config) -> Result<OracleSuite> {
    if choice == "http" {
        return Ok(cfg.http_suite()?);
    }
    let Some(path) = choice.strip_prefix("scripted:") else {
        bail!("--oracles must be `scripted:<scenario.json>` or `http`, got {choice:?}");
    };
    let script = ScenarioScript::load(Path::new(path))?;
    Ok(OracleSuite::uniform(Arc::new(ScriptedOracle::new(script)?)))
}

fn run(
    dataset: &Path,
    config: Option<&Path>,
    oracles: &str,
    out: &Path,
    workers: usize,
    limit: Option<usize>,
    no_cache: bool,
) -> Result<ExitCode> {
    let mut cfg = match config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if no_cache {
        cfg.cache.dir = None;
    }
    let mut records = load_dataset(dataset)?;
    if let Some(n) = limit {
        records.truncate(n);
    }
    let pipeline = Pipeline::from_config(suite(oracles, &cfg)?, &cfg).context("opening cache")?;
    let runs = pipeline.run_batch(&records, workers);
    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let index = export_traces(&runs, out)?;
    write_records(&records, out)?;
    let report = score(&index.summaries(), &records)?;
    fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    let failed = runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} question(s) failed; see their traces");
    }
    print!("{}", render_report(&report));
    Ok(ExitCode::SUCCESS)
}

fn score_dir(out: &Path) -> Result<RunReport> {
    let index = read_index(out).with_context(|| format!("reading index in {}", out.display()))?;
    let records = load_dataset(&out.join(RECORDS_FILE))?;
    let report = score(&index.summaries(), &records)?;
    fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
