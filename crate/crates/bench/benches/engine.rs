use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use evgraph_core::event_graph::{EventId, TraversalKind};
use evgraph_core::graph_io::{merge_graphs, parse_graph_response, serialize_graph, ParseMode};
use evgraph_core::oracles::{OracleSuite, ScenarioScript, ScriptedOracle};
use evgraph_core::pipeline::{parse_dataset, Pipeline};
use evgraph_core::plan::{parse_plan, validate_plan, DEFAULT_RETRY_CEILING};
use evgraph_core::Budgets;

const BOXING: &str = include_str!("../../core/tests/data/boxing.txt");
const TRAFFIC: &str = include_str!("../../core/tests/data/traffic.txt");
const PLAN: &str = include_str!("../../core/corpus/stand_up_feeling.plan");
const DATASET: &str = include_str!("../../../fixtures/batch10/dataset.jsonl");
const SCENARIO: &str = include_str!("../../../fixtures/batch10/scenario.json");

fn graphs(c: &mut Criterion) {
    let boxing = parse_graph_response(BOXING, ParseMode::Lenient).unwrap().graph;
    let traffic = parse_graph_response(TRAFFIC, ParseMode::Lenient).unwrap().graph;
    let canonical = serialize_graph(&boxing);

    c.bench_function("parse_lenient_boxing", |b| {
        b.iter(|| parse_graph_response(black_box(BOXING), ParseMode::Lenient).unwrap())
    });
    c.bench_function("parse_strict_canonical", |b| {
        b.iter(|| parse_graph_response(black_box(&canonical), ParseMode::Strict).unwrap())
    });
    c.bench_function("serialize_boxing", |b| b.iter(|| serialize_graph(black_box(&boxing))));
    c.bench_function("merge_boxing_traffic", |b| {
        b.iter(|| merge_graphs(black_box(&boxing), black_box(&traffic)))
    });

    let ids: Vec<EventId> = boxing.iterate_nodes().map(|e| e.id.clone()).collect();
    c.bench_function("traverse_all_kinds", |b| {
        b.iter(|| {
            let mut n = 0;
            for id in &ids {
                for kind in TraversalKind::ALL {
                    n += boxing.traverse(id, kind).unwrap().len();
                }
            }
            n
        })
    });
    c.bench_function("subgraph_one_hop", |b| {
        b.iter(|| boxing.extract_subgraph(black_box(&ids[..1]), 1).unwrap())
    });
}

fn plans(c: &mut Criterion) {
    c.bench_function("parse_plan", |b| b.iter(|| parse_plan(black_box(PLAN)).unwrap()));
    let plan = parse_plan(PLAN).unwrap();
    c.bench_function("validate_plan", |b| {
        b.iter(|| validate_plan(black_box(&plan), DEFAULT_RETRY_CEILING))
    });
}

fn batch(c: &mut Criterion) {
    let records = parse_dataset(DATASET).unwrap();
    let script = ScenarioScript::from_json(SCENARIO).unwrap();
    c.bench_function("scripted_batch_10", |b| {
        b.iter_batched(
            || {
                let oracle = Arc::new(ScriptedOracle::new(script.clone()).unwrap());
                Pipeline::new(OracleSuite::uniform(oracle), Budgets::default())
            },
            |p| p.run_batch(&records, 1),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, graphs, plans, batch);
criterion_main!(benches);
