//! Plan-accuracy evaluation and error-breakdown tables.
//!
//! Evaluation issues exactly one generation per problem — no feedback, no
//! retries — and validates the result for assessment only. Accuracy is the
//! percentage of problems whose trace validates end to end; failures are
//! broken down by error class, and the class percentages sum to the total
//! failure rate, which equals 100 − accuracy.

use crate::datagen::PlanningInstance;
use crate::orchestrator::{
    render_prompt, GenerationParams, ModelBackend, PromptTemplate, TemplateName,
};
use crate::text::{print_domain, print_problem};
use crate::trace::parse_trace;
use crate::validator::{validate_trace, ErrorClass};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Generation settings for evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            temperature: 0.3,
            max_tokens: 2048,
        }
    }
}

/// Accuracy and failure percentages for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub domain: String,
    pub total: usize,
    pub valid: usize,
    pub accuracy_percent: f64,
    /// Failure counts keyed by error-class name; every class present.
    pub class_counts: BTreeMap<String, usize>,
    /// Failure percentages of all tasks, same keys.
    pub class_percent: BTreeMap<String, f64>,
    /// Problems whose backend call failed outright; these are counted as
    /// `invalid_sequence` failures but flagged here separately.
    pub backend_failures: usize,
}

/// Evaluates `instances` with a single generation each. `label` names the
/// run (usually the domain) in the result and breakdown tables.
pub fn evaluate(
    backend: &dyn ModelBackend,
    label: &str,
    instances: &[PlanningInstance],
    opts: &EvalOptions,
) -> EvalResult {
    let template = PromptTemplate::builtin(TemplateName::CotGenerate);
    let mut valid = 0usize;
    let mut backend_failures = 0usize;
    let mut counts: BTreeMap<ErrorClass, usize> = BTreeMap::new();

    for inst in instances {
        let bindings: BTreeMap<String, String> = [
            ("domain".to_string(), print_domain(&inst.domain)),
            ("problem".to_string(), print_problem(&inst.problem)),
        ]
        .into();
        let prompt = render_prompt(&template, &bindings).expect("builtin bindings complete");
        let params = GenerationParams {
            temperature: opts.temperature,
            max_tokens: opts.max_tokens,
            problem_id: inst.id.clone(),
            iteration: 1,
        };
        let class = match backend.generate(&prompt, &params) {
            Err(_) => {
                backend_failures += 1;
                Some(ErrorClass::InvalidSequence)
            }
            Ok(completion) => match parse_trace(&completion, &inst.domain) {
                Err(_) => Some(ErrorClass::InvalidSequence),
                Ok(trace) => {
                    let verdict = validate_trace(&inst.domain, &inst.problem, &trace);
                    if verdict.valid {
                        valid += 1;
                        None
                    } else {
                        verdict.error_class
                    }
                }
            },
        };
        if let Some(c) = class {
            *counts.entry(c).or_default() += 1;
        }
    }

    let total = instances.len();
    let mut class_counts = BTreeMap::new();
    let mut class_percent = BTreeMap::new();
    for class in ErrorClass::ALL {
        let n = counts.get(&class).copied().unwrap_or(0);
        class_counts.insert(class.to_string(), n);
        let pct = if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
        class_percent.insert(class.to_string(), pct);
    }
    EvalResult {
        domain: label.to_string(),
        total,
        valid,
        accuracy_percent: if total == 0 { 0.0 } else { 100.0 * valid as f64 / total as f64 },
        class_counts,
        class_percent,
        backend_failures,
    }
}

/// Failure percentages per error class, one column per evaluated domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub columns: Vec<String>,
    /// Rows in the fixed class order, percentages aligned with `columns`.
    pub rows: Vec<(String, Vec<f64>)>,
    pub total_failure_percent: Vec<f64>,
}

/// Builds the four-class breakdown across evaluation results. The total
/// failure row equals 100 − accuracy for each column.
pub fn error_breakdown(results: &[EvalResult]) -> ErrorBreakdown {
    let columns: Vec<String> = results.iter().map(|r| r.domain.clone()).collect();
    let rows = ErrorClass::ALL
        .iter()
        .map(|class| {
            let label = class.label().to_string();
            let key = class.to_string();
            let percents = results
                .iter()
                .map(|r| r.class_percent.get(&key).copied().unwrap_or(0.0))
                .collect();
            (label, percents)
        })
        .collect();
    let total_failure_percent = results
        .iter()
        .map(|r| 100.0 - r.accuracy_percent)
        .collect();
    ErrorBreakdown {
        columns,
        rows,
        total_failure_percent,
    }
}

impl ErrorBreakdown {
    /// Aligned text table, percentages to one decimal place.
    pub fn to_text_table(&self) -> String {
        let label_width = self
            .rows
            .iter()
            .map(|(l, _)| l.len())
            .chain(["Total Failure Rate".len(), "Error Type".len()])
            .max()
            .unwrap_or(10);
        let col_width = self.columns.iter().map(|c| c.len()).max().unwrap_or(8).max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<label_width$}", "Error Type");
        for c in &self.columns {
            let _ = write!(out, "  {c:>col_width$}");
        }
        out.push('\n');
        for (label, percents) in &self.rows {
            let _ = write!(out, "{label:<label_width$}");
            for p in percents {
                let _ = write!(out, "  {:>col_width$.1}", p);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<label_width$}", "Total Failure Rate");
        for p in &self.total_failure_percent {
            let _ = write!(out, "  {p:>col_width$.1}");
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_instance, InstanceKind};
    use crate::orchestrator::{BackendError, ScriptedBackend};
    use crate::planner::{solve, SearchLimits};
    use crate::trace::{render_trace, trace_from_plan};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn instances(n: u64) -> Vec<PlanningInstance> {
        (0..n)
            .map(|s| gen_instance(&InstanceKind::Blocksworld { blocks: 2 }, 100 + s).unwrap())
            .collect()
    }

    fn oracle_completion(inst: &PlanningInstance) -> String {
        let plan = solve(&inst.domain, &inst.problem, &SearchLimits::default())
            .unwrap()
            .plan()
            .unwrap()
            .clone();
        render_trace(&trace_from_plan(&inst.problem.init, &plan).unwrap())
    }

    /// Counts generate calls, then delegates.
    struct Counting<'a> {
        inner: &'a ScriptedBackend,
        calls: AtomicUsize,
    }

    impl ModelBackend for Counting<'_> {
        fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.generate(prompt, params)
        }
        fn identity(&self) -> String {
            "counting".into()
        }
    }

    #[test]
    fn oracle_backend_scores_full_accuracy() {
        let insts = instances(4);
        let mut script = std::collections::BTreeMap::new();
        for i in &insts {
            script.insert((i.id.clone(), 1), oracle_completion(i));
        }
        let backend = ScriptedBackend::new(script, "");
        let result = evaluate(&backend, "blocksworld", &insts, &EvalOptions::default());
        assert_eq!(result.accuracy_percent, 100.0);
        assert_eq!(result.valid, 4);
        assert!(result.class_percent.values().all(|&p| p == 0.0));
    }

    #[test]
    fn partial_backend_scores_fraction_and_one_call_each() {
        let insts = instances(4);
        let mut script = std::collections::BTreeMap::new();
        for (k, i) in insts.iter().enumerate() {
            if k != 0 {
                script.insert((i.id.clone(), 1), oracle_completion(i));
            }
        }
        let scripted = ScriptedBackend::new(script, "empty-handed");
        let backend = Counting {
            inner: &scripted,
            calls: AtomicUsize::new(0),
        };
        let result = evaluate(&backend, "blocksworld", &insts, &EvalOptions::default());
        assert_eq!(result.accuracy_percent, 75.0);
        assert_eq!(backend.calls.load(Ordering::Relaxed), insts.len());
        // "empty-handed" parses to an empty trace: the goal is unmet.
        assert_eq!(result.class_counts["goal_not_achieved"], 1);
    }

    #[test]
    fn breakdown_identity_and_formatting() {
        let insts = instances(4);
        let backend = ScriptedBackend::new(Default::default(), "prose only");
        let result = evaluate(&backend, "blocksworld", &insts, &EvalOptions::default());
        let breakdown = error_breakdown(std::slice::from_ref(&result));
        let class_sum: f64 = breakdown.rows.iter().map(|(_, p)| p[0]).sum();
        assert!((class_sum - breakdown.total_failure_percent[0]).abs() < 1e-9);
        assert!((result.accuracy_percent + breakdown.total_failure_percent[0] - 100.0).abs() < 1e-9);
        let table = breakdown.to_text_table();
        assert!(table.contains("Total Failure Rate"));
        assert!(table.contains("100.0"));
    }

    #[test]
    fn eval_result_json_round_trips() {
        let insts = instances(2);
        let backend = ScriptedBackend::new(Default::default(), "");
        let result = evaluate(&backend, "bw", &insts, &EvalOptions::default());
        let json = serde_json::to_string(&result).unwrap();
        let back: EvalResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, result);
    }
}
