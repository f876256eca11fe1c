//! Event-graph question answering: typed event graphs, a closed reasoning
//! plan language and its interpreter, staged self-correction, and a batch
//! pipeline over pluggable model oracles.

pub mod event_graph;
pub mod graph_io;
pub mod interpreter;
pub mod oracles;
pub mod orchestrator;
pub mod pipeline;
pub mod plan;
pub mod trace;

pub use event_graph::{build_graph, Edge, EdgeKind, Event, EventGraph, EventId, GraphError, TraversalKind};
pub use graph_io::{merge_graphs, parse_graph_response, serialize_graph, ParseMode, ParsedGraph};
pub use interpreter::{
    extract_answer_letter, interpret, Budgets, EvidenceMap, InterpretError, Letter, Outcome, RunContext,
};
pub use oracles::{Oracle, OracleKind, OracleSuite};
pub use orchestrator::ActivationStage;
pub use plan::{parse_plan, print_plan, validate_plan, Plan};
pub use trace::Trace;
