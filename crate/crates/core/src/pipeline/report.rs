use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::QuestionRecord;
use super::run::RunSummary;
use crate::interpreter::Letter;
use crate::orchestrator::ActivationStage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("run {index}: expected question {expected:?}, found {found:?}")]
    IdMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("{runs} runs for {records} records")]
    LengthMismatch { runs: usize, records: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TypeStats {
    pub total: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageStats {
    pub stage: ActivationStage,
    /// Questions whose highest activated stage is this one.
    pub count: usize,
    /// Share of all questions, 0 to 100.
    pub percent: Option<f64>,
    /// Accuracy within this stage's questions, 0 to 100.
    pub subset_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub total: usize,
    pub correct: usize,
    /// Fraction in 0..=1; null for an empty run.
    pub accuracy: Option<f64>,
    pub per_type: BTreeMap<String, TypeStats>,
    pub activation: Vec<StageStats>,
    pub unresolved_count: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scores runs against records; both must list the same ids in the same
/// order. Questions are binned by highest activated stage.
pub fn score(runs: &[RunSummary], records: &[QuestionRecord]) -> Result<RunReport, ScoreError> {
    if runs.len() != records.len() {
        return Err(ScoreError::LengthMismatch {
            runs: runs.len(),
            records: records.len(),
        });
    }
    let mut per_type: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut per_stage: BTreeMap<ActivationStage, (usize, usize)> =
        ActivationStage::ALL.iter().map(|s| (*s, (0, 0))).collect();
    let mut correct = 0;
    let mut unresolved = 0;
    for (index, (run, rec)) in runs.iter().zip(records).enumerate() {
        if run.id != rec.id {
            return Err(ScoreError::IdMismatch {
                index,
                expected: rec.id.clone(),
                found: run.id.clone(),
            });
        }
        let ok = Letter::from_index(rec.answer_index) == Some(run.answer);
        correct += ok as usize;
        unresolved += run.unresolved as usize;
        if let Some(t) = &rec.qtype {
            let e = per_type.entry(t.clone()).or_default();
            e.0 += 1;
            e.1 += ok as usize;
        }
        let e = per_stage.get_mut(&run.stage).expect("all stages present");
        e.0 += 1;
        e.1 += ok as usize;
    }
    let total = runs.len();
    Ok(RunReport {
        total,
        correct,
        accuracy: ratio(correct, total),
        per_type: per_type
            .into_iter()
            .map(|(k, (t, c))| {
                (
                    k,
                    TypeStats {
                        total: t,
                        correct: c,
                        accuracy: ratio(c, t),
                    },
                )
            })
            .collect(),
        activation: per_stage
            .into_iter()
            .map(|(stage, (n, c))| StageStats {
                stage,
                count: n,
                percent: ratio(n, total).map(|r| r * 100.0),
                subset_accuracy: ratio(c, n).map(|r| r * 100.0),
            })
            .collect(),
        unresolved_count: unresolved,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

/// Plain-text activation table plus totals.
pub fn render_report(r: &RunReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<14} {:>6} {:>8} {:>11}",
        "stage", "count", "percent", "subset acc"
    )
    .unwrap();
    for s in &r.activation {
        writeln!(
            out,
            "{:<14} {:>6} {:>8} {:>11}",
            s.stage.as_str(),
            s.count,
            pct(s.percent),
            pct(s.subset_accuracy)
        )
        .unwrap();
    }
    if !r.per_type.is_empty() {
        writeln!(out).unwrap();
        writeln!(out, "{:<14} {:>6} {:>8} {:>11}", "type", "total", "correct", "accuracy").unwrap();
        for (k, t) in &r.per_type {
            writeln!(
                out,
                "{:<14} {:>6} {:>8} {:>11}",
                k,
                t.total,
                t.correct,
                pct(t.accuracy.map(|a| a * 100.0))
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        "\ntotal {}  correct {}  accuracy {}  unresolved {}",
        r.total,
        r.correct,
        pct(r.accuracy.map(|a| a * 100.0)),
        r.unresolved_count
    )
    .unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn rec(id: &str, answer_index: usize, qtype: Option<&str>) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            video_ref: "v".into(),
            question: "q".into(),
            choices: ["a", "b", "c", "d", "e"].map(String::from).to_vec(),
            answer_index,
            qtype: qtype.map(String::from),
        }
    }

    fn run(id: &str, answer: Letter, stage: ActivationStage) -> RunSummary {
        RunSummary {
            id: id.into(),
            answer,
            stage,
            stages: BTreeSet::from([stage]),
            unresolved: false,
            error: None,
        }
    }

    #[test]
    fn three_of_four() {
        let recs: Vec<_> = (0..4)
            .map(|i| rec(&format!("q{i}"), 0, Some(if i < 2 { "causal" } else { "temporal" })))
            .collect();
        let runs: Vec<_> = (0..4)
            .map(|i| {
                run(
                    &format!("q{i}"),
                    if i == 3 { Letter::B } else { Letter::A },
                    ActivationStage::Base,
                )
            })
            .collect();
        let r = score(&runs, &recs).unwrap();
        assert_eq!(r.accuracy, Some(0.75));
        assert_eq!(r.per_type["causal"].correct, 2);
        assert_eq!(r.per_type["temporal"].accuracy, Some(0.5));
        assert_eq!(r.activation[0].count, 4);
        assert_eq!(r.activation.iter().map(|s| s.count).sum::<usize>(), 4);
    }

    #[test]
    fn empty_is_null() {
        let r = score(&[], &[]).unwrap();
        assert_eq!(r.total, 0);
        let v = serde_json::to_value(&r).unwrap();
        assert!(v["accuracy"].is_null());
        assert!(v["activation"][0]["percent"].is_null());
        assert!(render_report(&r).contains("accuracy -"));
    }

    #[test]
    fn id_mismatch() {
        let e = score(&[run("x", Letter::A, ActivationStage::Base)], &[rec("y", 0, None)]).unwrap_err();
        assert!(matches!(e, ScoreError::IdMismatch { index: 0, .. }));
        assert!(matches!(
            score(&[], &[rec("y", 0, None)]),
            Err(ScoreError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn json_keys() {
        let r = score(
            &[run("x", Letter::A, ActivationStage::Multimodal)],
            &[rec("x", 0, None)],
        )
        .unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in [
            "total",
            "correct",
            "accuracy",
            "perType",
            "activation",
            "unresolvedCount",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["activation"][3]["stage"], "Multimodal");
        assert_eq!(v["activation"][3]["subsetAccuracy"], 100.0);
    }
}
