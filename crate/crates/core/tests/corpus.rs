use std::fs;
use std::path::PathBuf;

use evgraph_core::plan::{parse_plan, print_plan, validate_plan, DEFAULT_RETRY_CEILING};

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "plan"))
        .map(|p| {
            (
                p.file_stem().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn corpus_is_complete() {
    assert_eq!(corpus().len(), 15);
}

#[test]
fn every_program_parses_without_errors() {
    for (name, text) in corpus() {
        let plan = parse_plan(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let errors: Vec<_> = validate_plan(&plan, DEFAULT_RETRY_CEILING)
            .into_iter()
            .filter(|d| d.is_error())
            .collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
}

#[test]
fn printer_roundtrip() {
    for (name, text) in corpus() {
        let plan = parse_plan(&text).unwrap();
        let printed = print_plan(&plan);
        let again = parse_plan(&printed).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
        assert_eq!(print_plan(&again), printed, "{name}");
        assert_eq!(again.statements.len(), plan.statements.len(), "{name}");
    }
}
