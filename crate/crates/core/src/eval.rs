//! Accuracy evaluation, multi-seed aggregation, OOD retention, and
//! CSV export of convergence traces and cost counters.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::learner::{fit, LearnerError, SearchConfig, TrainReport};
use crate::program::{Program, Slot};
use crate::tasks::Dataset;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset vocabulary is not a subset of the program vocabulary")]
    VocabMismatch,
    #[error("OOD retention is undefined: original test accuracy is zero")]
    UndefinedRatio,
    #[error("run_seeds requires at least one seed")]
    NoSeeds,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct SlotCount {
    pub n: usize,
    pub errors: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: usize,
    pub errors: usize,
    pub parse_failures: usize,
    pub per_slot: Vec<(Slot, SlotCount)>,
    /// (true label, predicted label-or-unparsed) -> count
    pub confusion: BTreeMap<(String, String), usize>,
    pub wall_seconds: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let per_slot: Vec<serde_json::Value> = self
            .per_slot
            .iter()
            .map(|(slot, count)| {
                serde_json::json!({
                    "slot": slot.to_string(),
                    "n": count.n,
                    "errors": count.errors,
                })
            })
            .collect();
        let confusion: Vec<serde_json::Value> = self
            .confusion
            .iter()
            .map(|((truth, pred), count)| {
                serde_json::json!({"true": truth, "pred": pred, "count": count})
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "accuracy": self.accuracy,
            "n": self.n,
            "errors": self.errors,
            "parse_failures": self.parse_failures,
            "per_slot": per_slot,
            "confusion": confusion,
            "wall_seconds": self.wall_seconds,
        }))
        .unwrap()
    }
}

/// Predict every example and aggregate. Parse failures count as errors and
/// are also reported separately.
pub fn evaluate(
    program: &Program,
    dataset: &Dataset,
    backend: &dyn Backend,
) -> Result<EvalReport, EvalError> {
    if !dataset
        .label_vocab
        .iter()
        .all(|l| program.label_vocab().contains(l))
    {
        return Err(EvalError::VocabMismatch);
    }
    let started = Instant::now();
    let mut errors = 0usize;
    let mut parse_failures = 0usize;
    let mut per_slot: Vec<(Slot, SlotCount)> = Vec::new();
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    for example in &dataset.examples {
        let (outcome, trace) = program.predict(&example.input, backend)?;
        let slot = program.exit_slot(&trace);
        let is_error = outcome.as_label() != Some(&example.output);
        if is_error {
            errors += 1;
        }
        if outcome.as_label().is_none() {
            parse_failures += 1;
        }
        let entry = match per_slot.iter_mut().find(|(s, _)| *s == slot) {
            Some((_, count)) => count,
            None => {
                per_slot.push((slot, SlotCount::default()));
                &mut per_slot.last_mut().unwrap().1
            }
        };
        entry.n += 1;
        if is_error {
            entry.errors += 1;
        }
        *confusion
            .entry((example.output.as_str().to_string(), outcome.to_string()))
            .or_insert(0) += 1;
    }
    per_slot.sort_by_key(|(slot, _)| program.slot_order_key(slot));
    let n = dataset.len();
    Ok(EvalReport {
        accuracy: 1.0 - errors as f64 / n.max(1) as f64,
        n,
        errors,
        parse_failures,
        per_slot,
        confusion,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub train_report: TrainReport,
    pub test_report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub mean: f64,
    pub stddev: f64,
    pub per_seed: Vec<SeedRun>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Full fit + test evaluation per seed; mean and sample (n-1) stddev over
/// test accuracy.
pub fn run_seeds(
    train: &Dataset,
    test: &Dataset,
    cfg: &SearchConfig,
    learner: &dyn Backend,
    inference: &dyn Backend,
    seeds: &[u64],
) -> Result<AggregateReport, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let seeded = SearchConfig {
            seed,
            ..cfg.clone()
        };
        let train_report = fit(train, &seeded, learner, inference)?;
        let test_report = evaluate(&train_report.best_program, test, inference)?;
        per_seed.push(SeedRun {
            seed,
            train_report,
            test_report,
        });
    }
    let accuracies: Vec<f64> = per_seed.iter().map(|r| r.test_report.accuracy).collect();
    let (mean, stddev) = mean_std(&accuracies);
    Ok(AggregateReport {
        mean,
        stddev,
        per_seed,
    })
}

/// Ratio of OOD test accuracy to original test accuracy.
pub fn ood_retention(
    program: &Program,
    test: &Dataset,
    ood: &Dataset,
    backend: &dyn Backend,
) -> Result<f64, EvalError> {
    let original = evaluate(program, test, backend)?;
    if original.accuracy == 0.0 {
        return Err(EvalError::UndefinedRatio);
    }
    let shifted = evaluate(program, ood, backend)?;
    Ok(shifted.accuracy / original.accuracy)
}

/// Convergence trace as CSV: one row per optimization round.
pub fn export_trace(report: &TrainReport, path: &Path) -> Result<(), EvalError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "iteration,batch_accuracy_best,full_train_accuracy_best")?;
    for trace in &report.per_iteration {
        writeln!(
            file,
            "{},{},{}",
            trace.iteration, trace.batch_accuracy_best, trace.full_train_accuracy_best
        )?;
    }
    Ok(())
}

/// Cost counters as CSV.
pub fn export_costs(report: &TrainReport, path: &Path) -> Result<(), EvalError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "search_seconds,live_calls,cached_calls,tokens")?;
    writeln!(
        file,
        "{},{},{},{}",
        report.cost.search_seconds,
        report.cost.live_calls,
        report.cost.cached_calls,
        report.cost.tokens
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockRuleBackend;
    use crate::program::{Label, LlmModule, Program, Slot};
    use crate::tasks::{gen_dt_task, oracle_to_program, DtPreset, Example, SplitTag};

    fn dataset(pairs: &[(&str, &str)], v: &[&str]) -> Dataset {
        Dataset {
            name: "t".into(),
            label_vocab: v.iter().map(|l| Label::new(l).unwrap()).collect(),
            examples: pairs
                .iter()
                .map(|(i, o)| Example {
                    input: i.to_string(),
                    output: Label::new(o).unwrap(),
                })
                .collect(),
            split_tag: SplitTag::Test,
        }
    }

    #[test]
    fn oracle_program_scores_perfectly_on_its_own_task() {
        let backend = MockRuleBackend::new();
        let (_, test, oracle) = gen_dt_task(&DtPreset::Medium.config(0)).unwrap();
        let program = oracle_to_program(&oracle, "oracle").unwrap();
        let report = evaluate(&program, &test, &backend).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.errors, 0);
        assert_eq!(report.n, 200);
        let confusion_total: usize = report.confusion.values().sum();
        assert_eq!(confusion_total, report.n);
    }

    #[test]
    fn empty_program_accuracy_equals_default_label_share() {
        let backend = MockRuleBackend::new();
        // 3 of 10 examples carry the default (first-vocab) label
        let mut pairs = Vec::new();
        for i in 0..10 {
            pairs.push((format!("x1=A{i}"), if i < 3 { "foo" } else { "bar" }));
        }
        let pairs: Vec<(&str, &str)> = pairs.iter().map(|(i, o)| (i.as_str(), *o)).collect();
        let data = dataset(&pairs, &["foo", "bar"]);
        let program = Program::empty("e", data.label_vocab.clone()).unwrap();
        let report = evaluate(&program, &data, &backend).unwrap();
        assert!((report.accuracy - 0.30).abs() < 1e-12);
        assert_eq!(report.per_slot.len(), 1);
        assert_eq!(report.per_slot[0].0, Slot::Root);
    }

    #[test]
    fn evaluate_is_order_independent() {
        let backend = MockRuleBackend::new();
        let (_, test, oracle) = gen_dt_task(&DtPreset::Easy.config(1)).unwrap();
        let program = oracle_to_program(&oracle, "oracle").unwrap();
        let forward = evaluate(&program, &test, &backend).unwrap();
        let mut reversed = test.clone();
        reversed.examples.reverse();
        let backward = evaluate(&program, &reversed, &backend).unwrap();
        assert_eq!(forward.accuracy, backward.accuracy);
        assert_eq!(forward.confusion, backward.confusion);
    }

    #[test]
    fn parse_failures_count_as_errors() {
        let backend = MockRuleBackend::new();
        let data = dataset(&[("x1=A1", "foo"), ("x1=A2", "foo")], &["foo", "bar"]);
        // rule has no wildcard: x1=A2 is unparseable
        let program = Program::empty("p", data.label_vocab.clone())
            .unwrap()
            .expand(&Slot::Root, LlmModule::new("on x1: A1->foo").unwrap())
            .unwrap();
        let report = evaluate(&program, &data, &backend).unwrap();
        assert_eq!(report.parse_failures, 1);
        assert_eq!(report.errors, 1);
        assert_eq!(report.accuracy, 0.5);
    }

    #[test]
    fn ood_retention_identities() {
        let backend = MockRuleBackend::new();
        let (_, test, oracle) = gen_dt_task(&DtPreset::Easy.config(2)).unwrap();
        let program = oracle_to_program(&oracle, "oracle").unwrap();
        let r = ood_retention(&program, &test, &test, &backend).unwrap();
        assert_eq!(r, 1.0);

        // relabel half the OOD set: retention = ood accuracy since original is 1.0
        let mut ood = test.clone();
        let flip = |l: &Label, vocab: &[Label]| {
            vocab.iter().find(|c| *c != l).unwrap().clone()
        };
        for e in ood.examples.iter_mut().take(100) {
            e.output = flip(&e.output, &ood.label_vocab);
        }
        let r = ood_retention(&program, &test, &ood, &backend).unwrap();
        assert!((r - 0.5).abs() < 1e-9);

        // zero original accuracy is an error
        let mut all_wrong = test.clone();
        for e in all_wrong.examples.iter_mut() {
            let predicted = program.predict(&e.input, &backend).unwrap().0;
            e.output = flip(predicted.as_label().unwrap(), &all_wrong.label_vocab);
        }
        assert!(matches!(
            ood_retention(&program, &all_wrong, &test, &backend),
            Err(EvalError::UndefinedRatio)
        ));
    }

    #[test]
    fn run_seeds_aggregates_and_recomputes() {
        let backend = MockRuleBackend::new();
        let (train, test, _) = gen_dt_task(&DtPreset::Easy.config(0)).unwrap();
        let cfg = SearchConfig::default();
        let agg = run_seeds(&train, &test, &cfg, &backend, &backend, &[0, 1, 2]).unwrap();
        assert_eq!(agg.per_seed.len(), 3);
        let accs: Vec<f64> = agg.per_seed.iter().map(|r| r.test_report.accuracy).collect();
        let (mean, std) = mean_std(&accs);
        assert_eq!(agg.mean, mean);
        assert_eq!(agg.stddev, std);

        let single = run_seeds(&train, &test, &cfg, &backend, &backend, &[5]).unwrap();
        assert_eq!(single.stddev, 0.0);
        assert!(matches!(
            run_seeds(&train, &test, &cfg, &backend, &backend, &[]),
            Err(EvalError::NoSeeds)
        ));
    }

    #[test]
    fn csv_exports_have_expected_shape() {
        let backend = MockRuleBackend::new();
        let (train, _, _) = gen_dt_task(&DtPreset::Easy.config(0)).unwrap();
        let report = fit(&train, &SearchConfig::default(), &backend, &backend).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let trace_path = dir.path().join("trace.csv");
        let costs_path = dir.path().join("costs.csv");
        export_trace(&report, &trace_path).unwrap();
        export_costs(&report, &costs_path).unwrap();

        let trace = std::fs::read_to_string(&trace_path).unwrap();
        let lines: Vec<&str> = trace.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + report.per_iteration.len());
        assert_eq!(lines[0], "iteration,batch_accuracy_best,full_train_accuracy_best");

        let costs = std::fs::read_to_string(&costs_path).unwrap();
        assert!(costs.starts_with("search_seconds,live_calls,cached_calls,tokens\n"));
    }
}
