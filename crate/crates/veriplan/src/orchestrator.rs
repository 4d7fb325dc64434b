//! The verifier-guided feedback loop over a pluggable model backend.
//!
//! Per problem, the loop renders a generation prompt, asks the backend for a
//! chain-of-thought trace, validates it, and — while invalid and under the
//! iteration limit η — re-prompts with the prior trace plus feedback (a bare
//! `invalid` in binary mode, the validator's detailed text otherwise). Every
//! iteration contributes its per-step triplets to the reasoning dataset and
//! one validity-labelled record to the final dataset, so a problem solved at
//! iteration k leaves validity bits `0, …, 0, 1` behind. A completion that
//! fails to parse still consumes an iteration and is recorded as an
//! `invalid_sequence` failure.
//!
//! Weight updates are delegated: each campaign iteration writes both
//! datasets to disk and optionally POSTs a manifest to an external trainer
//! hook, then the loop proceeds with the same backend. Problems are
//! independent; with a deterministic backend and concurrency 1 two campaign
//! runs are byte-identical.

use crate::datagen::{
    build_final_record, build_reasoning_records, write_jsonl, FinalRecord, PlanningInstance,
    ReasoningRecord,
};
use crate::losses::{loss_final, loss_reasoning, LossWeights};
use crate::text::{print_domain, print_problem};
use crate::trace::{parse_trace, CotTrace};
use crate::validator::{
    render_feedback, validate_trace, ErrorClass, Feedback, FeedbackMode, PlanVerdict,
    SequenceError,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("server returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl BackendError {
    /// Transient failures worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout(_))
    }
}

/// Per-call generation settings. `problem_id` and `iteration` identify the
/// call for test doubles; HTTP backends ignore them.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: usize,
    pub problem_id: String,
    pub iteration: u32,
}

/// A text-completion model. Implementations must not mutate toolkit state;
/// backends unsafe for concurrent calls return `true` from
/// [`ModelBackend::requires_serial`] and the orchestrator honors it.
pub trait ModelBackend: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError>;
    fn identity(&self) -> String;
    fn requires_serial(&self) -> bool {
        false
    }
}

/// Knobs of the feedback loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Iteration limit η.
    pub eta: u32,
    pub feedback_mode: FeedbackMode,
    /// Generation temperature for loop and evaluation calls.
    pub temperature: f64,
    /// Generation temperature for initial-phase examples; kept for
    /// completeness and passed through to callers that render them.
    pub phase1_temperature: f64,
    pub max_tokens: usize,
    pub timeout_secs: u64,
    /// Extra attempts per backend call on transient failures.
    pub max_retries: u32,
    /// Problem-level parallelism bound.
    pub concurrency: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            eta: 15,
            feedback_mode: FeedbackMode::Detailed,
            temperature: 0.3,
            phase1_temperature: 0.7,
            max_tokens: 2048,
            timeout_secs: 60,
            max_retries: 2,
            concurrency: 1,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.eta < 1 {
            return Err(format!("loop.eta must be at least 1, got {}", self.eta));
        }
        if self.concurrency < 1 {
            return Err(format!("loop.concurrency must be at least 1, got {}", self.concurrency));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("loop.temperature must lie in [0, 2], got {}", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("loop.max_tokens must be positive".into());
        }
        Ok(())
    }

    fn params(&self, problem_id: &str, iteration: u32) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            problem_id: problem_id.to_string(),
            iteration,
        }
    }
}

// ── prompt templates ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Phase1Correct,
    Phase1Incorrect,
    CotGenerate,
    CotFeedbackBinary,
    CotFeedbackDetailed,
}

/// A template body with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("unresolved placeholder `{{{0}}}`")]
    MissingPlaceholder(String),
}

/// Output-format instructions appended to every generation prompt; they
/// describe exactly the grammar [`crate::trace::parse_trace`] reads.
pub const TRACE_FORMAT_INSTRUCTIONS: &str = "\
Write your answer as one block per action, exactly in this format:

STATE: {(atom ...), (atom ...)}
ACTION: (action-name arg ...)
RESULT: {(atom ...), (atom ...)}

STATE is the complete set of atoms true before the action and RESULT the
complete set after it; atoms use PDDL syntax. Separate blocks with a blank
line. The first STATE must be the problem's initial state and each STATE
must repeat the previous RESULT. After the last block you may add
`VALID: yes` or `VALID: no`, and optionally `CONFIDENCE: <number in [0,1]>`.";

const COT_GENERATE_BODY: &str = "\
You are a planner for PDDL problems. Actions may only be applied when all
their preconditions hold; applying an action removes its delete effects and
adds its add effects.

Domain:
{domain}

Problem:
{problem}

Find a sequence of actions that reaches the goal, checking each action's
preconditions against the current state and tracking the state after each
action.

";

const COT_FEEDBACK_DETAILED_BODY: &str = "\
You are a planner for PDDL problems, revising an earlier attempt.

Domain:
{domain}

Problem:
{problem}

Your previous attempt:
{prior_trace}

The plan validator rejected it with this feedback:
{feedback}

Fix the problems the validator reported and produce a corrected answer,
re-checking every precondition and effect.

";

const COT_FEEDBACK_BINARY_BODY: &str = "\
You are a planner for PDDL problems, revising an earlier attempt.

Domain:
{domain}

Problem:
{problem}

Your previous attempt:
{prior_trace}

The plan validator judged it: {feedback}

Re-examine your reasoning and produce a corrected answer, re-checking every
precondition and effect.

";

const PHASE1_CORRECT_BODY: &str = "\
Below are a PDDL domain, a problem, and a plan that solves it. Explain why
the plan is correct: for every action, state which preconditions hold before
it and how its effects produce the next state.

Domain:
{domain}

Problem:
{problem}

Plan:
{plan}

Explanation:
{explanation}
";

const PHASE1_INCORRECT_BODY: &str = "\
Below are a PDDL domain, a problem, and a flawed plan. Explain exactly why
the plan is incorrect, naming the failing step and the preconditions,
effects, or goal atoms involved.

Domain:
{domain}

Problem:
{problem}

Plan:
{plan}

Explanation:
{explanation}
";

impl PromptTemplate {
    /// The built-in template for `name`. Generation templates end with the
    /// trace-format instructions so model output is machine-readable.
    pub fn builtin(name: TemplateName) -> Self {
        let body = match name {
            TemplateName::Phase1Correct => PHASE1_CORRECT_BODY.to_string(),
            TemplateName::Phase1Incorrect => PHASE1_INCORRECT_BODY.to_string(),
            TemplateName::CotGenerate => format!("{COT_GENERATE_BODY}{TRACE_FORMAT_INSTRUCTIONS}"),
            TemplateName::CotFeedbackBinary => {
                format!("{COT_FEEDBACK_BINARY_BODY}{TRACE_FORMAT_INSTRUCTIONS}")
            }
            TemplateName::CotFeedbackDetailed => {
                format!("{COT_FEEDBACK_DETAILED_BODY}{TRACE_FORMAT_INSTRUCTIONS}")
            }
        };
        PromptTemplate { name, body }
    }
}

/// Substitutes `{key}` slots from `bindings`; any slot left unresolved is an
/// error. PDDL payloads are inserted verbatim.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    let mut out = template.body.clone();
    for (key, value) in bindings {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    // Scan for unresolved {word} slots. Braces inside substituted PDDL or
    // trace payloads never wrap a bare lowercase word, so this is safe.
    let bytes = out.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let end = out[i + 1..].find(['}', '{', ' ', '\n']).map(|e| i + 1 + e);
            if let Some(end) = end {
                if bytes[end] == b'}' && end > i + 1 {
                    let name = &out[i + 1..end];
                    if name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
                        return Err(PromptError::MissingPlaceholder(name.to_string()));
                    }
                }
            }
        }
        i += 1;
    }
    Ok(out)
}

fn bindings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

// ── the loop ────────────────────────────────────────────────────────────

/// One generate→validate round for one problem.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub iteration: u32,
    /// Raw model output.
    pub completion: String,
    /// Parsed trace, absent when the completion was unparseable.
    pub trace: Option<CotTrace>,
    pub verdict: PlanVerdict,
    pub feedback: Feedback,
    pub reasoning_records: Vec<ReasoningRecord>,
    pub final_record: FinalRecord,
}

/// Everything the loop did for one problem.
#[derive(Debug, Clone)]
pub struct LoopResult {
    pub problem_id: String,
    pub valid: bool,
    pub iterations: Vec<IterationOutcome>,
    /// Set when the backend failed even after retries; the loop stops there.
    pub backend_failure: Option<String>,
}

fn generate_with_retries(
    backend: &dyn ModelBackend,
    prompt: &str,
    params: &GenerationParams,
    max_retries: u32,
) -> Result<String, BackendError> {
    let mut last = None;
    for _ in 0..=max_retries {
        match backend.generate(prompt, params) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_transient() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Verdict assigned to completions that do not parse as a trace.
fn unparseable_verdict(instance: &PlanningInstance, message: String) -> PlanVerdict {
    let unmet = instance
        .problem
        .goal
        .iter()
        .filter(|g| !instance.problem.init.contains(g))
        .cloned()
        .collect();
    PlanVerdict {
        valid: false,
        first_failure_index: None,
        per_step: vec![],
        final_state: instance.problem.init.clone(),
        error_class: Some(ErrorClass::InvalidSequence),
        unmet_goals: unmet,
        sequence_error: Some(SequenceError::UnknownAction {
            index: 0,
            action: "<unparseable output>".to_string(),
            cause: message,
        }),
    }
}

/// Runs the bounded generate→validate→re-prompt loop for one problem.
/// Stops as soon as a trace validates, after η attempts, or on a backend
/// failure that survives the retry budget.
pub fn run_feedback_loop(
    backend: &dyn ModelBackend,
    instance: &PlanningInstance,
    cfg: &LoopConfig,
) -> LoopResult {
    let domain_text = print_domain(&instance.domain);
    let problem_text = print_problem(&instance.problem);
    let generate_tpl = PromptTemplate::builtin(TemplateName::CotGenerate);
    let feedback_tpl = PromptTemplate::builtin(match cfg.feedback_mode {
        FeedbackMode::Binary => TemplateName::CotFeedbackBinary,
        FeedbackMode::Detailed => TemplateName::CotFeedbackDetailed,
    });

    let mut prompt = render_prompt(
        &generate_tpl,
        &bindings(&[("domain", &domain_text), ("problem", &problem_text)]),
    )
    .expect("builtin template bindings are complete");

    let mut iterations: Vec<IterationOutcome> = Vec::new();
    for t in 1..=cfg.eta {
        let completion =
            match generate_with_retries(backend, &prompt, &cfg.params(&instance.id, t), cfg.max_retries) {
                Ok(c) => c,
                Err(e) => {
                    return LoopResult {
                        problem_id: instance.id.clone(),
                        valid: false,
                        iterations,
                        backend_failure: Some(e.to_string()),
                    }
                }
            };

        let (trace, verdict, reasoning_records) = match parse_trace(&completion, &instance.domain) {
            Ok(trace) => {
                let verdict = validate_trace(&instance.domain, &instance.problem, &trace);
                let records = build_reasoning_records(
                    &instance.domain,
                    &instance.problem,
                    &instance.id,
                    t,
                    &trace,
                )
                .unwrap_or_default();
                (Some(trace), verdict, records)
            }
            Err(e) => (None, unparseable_verdict(instance, e.to_string()), vec![]),
        };
        let feedback = render_feedback(&verdict, cfg.feedback_mode);
        let final_record = build_final_record(
            &instance.domain,
            &instance.problem,
            &instance.id,
            t,
            trace.as_ref().unwrap_or(&CotTrace::default()),
        );
        let valid = verdict.valid;
        iterations.push(IterationOutcome {
            iteration: t,
            completion: completion.clone(),
            trace,
            verdict,
            feedback: feedback.clone(),
            reasoning_records,
            final_record,
        });
        if valid {
            break;
        }
        if t < cfg.eta {
            prompt = render_prompt(
                &feedback_tpl,
                &bindings(&[
                    ("domain", &domain_text),
                    ("problem", &problem_text),
                    ("prior_trace", &completion),
                    ("feedback", &feedback.text),
                ]),
            )
            .expect("builtin template bindings are complete");
        }
    }

    LoopResult {
        problem_id: instance.id.clone(),
        valid: iterations.last().map(|o| o.verdict.valid).unwrap_or(false),
        iterations,
        backend_failure: None,
    }
}

// ── campaigns ───────────────────────────────────────────────────────────

/// Where a campaign writes per-iteration datasets, and the optional trainer
/// hook to notify.
#[derive(Debug, Clone)]
pub struct CampaignEmit {
    pub output_dir: PathBuf,
    pub trainer_hook_url: Option<String>,
}

/// Per-problem outcome summary at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub problem_id: String,
    pub valid: bool,
    pub error_class: Option<ErrorClass>,
}

/// Aggregates for iteration `t` across all problems still in play.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub attempted: usize,
    pub newly_valid: usize,
    pub cumulative_valid: usize,
    /// Problems solved by the end of this iteration, as a percentage of the
    /// campaign's problem count.
    pub cumulative_accuracy_percent: f64,
    /// Failure counts keyed by error-class name.
    pub error_counts: BTreeMap<String, usize>,
    pub loss_reasoning: Option<f64>,
    pub loss_final: Option<f64>,
    pub outcomes: Vec<OutcomeSummary>,
    #[serde(skip)]
    pub reasoning_records: Vec<ReasoningRecord>,
    #[serde(skip)]
    pub final_records: Vec<FinalRecord>,
}

/// Per-problem summary across the whole campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub problem_id: String,
    pub valid: bool,
    pub iterations_used: u32,
    pub backend_failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignReport {
    pub backend: String,
    pub problems: usize,
    pub solved: usize,
    pub accuracy_percent: f64,
    pub iterations: Vec<IterationReport>,
    pub per_problem: Vec<ProblemSummary>,
}

/// Manifest POSTed to the trainer hook after each iteration's datasets hit
/// disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerManifest {
    pub iteration: u32,
    pub reasoning_path: String,
    pub final_path: String,
    pub reasoning_records: usize,
    pub final_records: usize,
    pub loss_reasoning: Option<f64>,
    pub loss_final: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Datagen(#[from] crate::datagen::DatagenError),
}

/// Runs the loop for every instance (respecting the concurrency bound and
/// backend serial requirements), aggregates per-iteration datasets and
/// losses, and optionally writes `d_reasoning_t{t}.jsonl` /
/// `d_final_t{t}.jsonl` files plus a trainer-hook notification per
/// iteration. Problems are processed independently; results are aggregated
/// in problem-id order, so a deterministic backend at concurrency 1 yields
/// byte-identical reports.
pub fn run_campaign(
    backend: &dyn ModelBackend,
    instances: &[PlanningInstance],
    cfg: &LoopConfig,
    weights: &LossWeights,
    emit: Option<&CampaignEmit>,
) -> Result<CampaignReport, CampaignError> {
    cfg.validate().map_err(CampaignError::Config)?;
    let mut results = run_all(backend, instances, cfg);
    results.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));

    let max_iter = results
        .iter()
        .flat_map(|r| r.iterations.last().map(|o| o.iteration))
        .max()
        .unwrap_or(0);

    let mut iterations = Vec::new();
    let mut cumulative: usize = 0;
    for t in 1..=max_iter {
        let mut report = IterationReport {
            iteration: t,
            attempted: 0,
            newly_valid: 0,
            cumulative_valid: 0,
            cumulative_accuracy_percent: 0.0,
            error_counts: BTreeMap::new(),
            loss_reasoning: None,
            loss_final: None,
            outcomes: Vec::new(),
            reasoning_records: Vec::new(),
            final_records: Vec::new(),
        };
        for r in &results {
            let Some(outcome) = r.iterations.iter().find(|o| o.iteration == t) else {
                continue;
            };
            report.attempted += 1;
            if outcome.verdict.valid {
                report.newly_valid += 1;
            } else if let Some(class) = outcome.verdict.error_class {
                *report.error_counts.entry(class.to_string()).or_default() += 1;
            }
            report.outcomes.push(OutcomeSummary {
                problem_id: r.problem_id.clone(),
                valid: outcome.verdict.valid,
                error_class: outcome.verdict.error_class,
            });
            report.reasoning_records.extend(outcome.reasoning_records.iter().cloned());
            report.final_records.push(outcome.final_record.clone());
        }
        cumulative += report.newly_valid;
        report.cumulative_valid = cumulative;
        report.cumulative_accuracy_percent = if instances.is_empty() {
            0.0
        } else {
            100.0 * cumulative as f64 / instances.len() as f64
        };
        report.loss_reasoning = loss_reasoning(&report.reasoning_records, weights).ok();
        report.loss_final = loss_final(&report.final_records, weights).ok();

        if let Some(emit) = emit {
            std::fs::create_dir_all(&emit.output_dir)?;
            let reasoning_path = emit.output_dir.join(format!("d_reasoning_t{t}.jsonl"));
            let final_path = emit.output_dir.join(format!("d_final_t{t}.jsonl"));
            write_jsonl(&reasoning_path, &report.reasoning_records)?;
            write_jsonl(&final_path, &report.final_records)?;
            if let Some(url) = &emit.trainer_hook_url {
                let manifest = TrainerManifest {
                    iteration: t,
                    reasoning_path: reasoning_path.display().to_string(),
                    final_path: final_path.display().to_string(),
                    reasoning_records: report.reasoning_records.len(),
                    final_records: report.final_records.len(),
                    loss_reasoning: report.loss_reasoning,
                    loss_final: report.loss_final,
                };
                notify_trainer(url, &manifest);
            }
        }
        iterations.push(report);
    }

    let solved = results.iter().filter(|r| r.valid).count();
    let per_problem = results
        .iter()
        .map(|r| ProblemSummary {
            problem_id: r.problem_id.clone(),
            valid: r.valid,
            iterations_used: r.iterations.last().map(|o| o.iteration).unwrap_or(0),
            backend_failure: r.backend_failure.clone(),
        })
        .collect();
    Ok(CampaignReport {
        backend: backend.identity(),
        problems: instances.len(),
        solved,
        accuracy_percent: if instances.is_empty() {
            0.0
        } else {
            100.0 * solved as f64 / instances.len() as f64
        },
        iterations,
        per_problem,
    })
}

fn run_all(
    backend: &dyn ModelBackend,
    instances: &[PlanningInstance],
    cfg: &LoopConfig,
) -> Vec<LoopResult> {
    let workers = cfg.concurrency.min(instances.len().max(1));
    if workers <= 1 || backend.requires_serial() {
        return instances
            .iter()
            .map(|inst| run_feedback_loop(backend, inst, cfg))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<LoopResult>>> = instances.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= instances.len() {
                    break;
                }
                let result = run_feedback_loop(backend, &instances[i], cfg);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

/// Fire-and-forget POST of the iteration manifest; failures are logged and
/// otherwise ignored.
fn notify_trainer(url: &str, manifest: &TrainerManifest) {
    let client = match reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
    {
        Ok(c) => c,
        Err(e) => {
            log::warn!("trainer hook client failed to build: {e}");
            return;
        }
    };
    match client.post(url).json(manifest).send() {
        Ok(resp) => log::info!(
            "trainer hook iteration {}: status {}",
            manifest.iteration,
            resp.status()
        ),
        Err(e) => log::warn!("trainer hook iteration {} failed: {e}", manifest.iteration),
    }
}

// ── backends ────────────────────────────────────────────────────────────

/// A recorded scripted-backend call.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub problem_id: String,
    pub iteration: u32,
    pub prompt: String,
}

/// Deterministic test double: completions looked up by (problem id,
/// iteration), with a configurable default for missing keys. Every call is
/// recorded for inspection.
pub struct ScriptedBackend {
    script: BTreeMap<(String, u32), String>,
    default: String,
    calls: Mutex<Vec<RecordedCall>>,
}

impl ScriptedBackend {
    pub fn new(script: BTreeMap<(String, u32), String>, default: impl Into<String>) -> Self {
        ScriptedBackend {
            script,
            default: default.into(),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// All calls made so far, in order.
    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap().clone()
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push(RecordedCall {
            problem_id: params.problem_id.clone(),
            iteration: params.iteration,
            prompt: prompt.to_string(),
        });
        Ok(self
            .script
            .get(&(params.problem_id.clone(), params.iteration))
            .cloned()
            .unwrap_or_else(|| self.default.clone()))
    }

    fn identity(&self) -> String {
        format!("scripted({} entries)", self.script.len())
    }
}

/// Settings for the chat-completion HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    /// Bearer token; sent in the Authorization header, never logged.
    #[serde(default)]
    pub api_key: Option<String>,
    pub model: String,
    #[serde(default = "default_http_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_http_retries")]
    pub max_retries: u32,
}

fn default_http_timeout() -> u64 {
    60
}

fn default_http_retries() -> u32 {
    2
}

/// Chat-completion client: POSTs `{model, messages, temperature,
/// max_tokens}` and reads `choices[0].message.content`. Transport errors and
/// 5xx responses are retried up to `max_retries`; other statuses and
/// malformed bodies fail immediately.
pub struct HttpBackend {
    cfg: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend { cfg, client })
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let mut req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(e.to_string())
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::HttpStatus {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        json.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::MalformedResponse("missing choices[0].message.content".to_string())
            })
    }
}

impl ModelBackend for HttpBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let mut last: Option<BackendError> = None;
        for _ in 0..=self.cfg.max_retries {
            match self.attempt(prompt, params) {
                Ok(text) => return Ok(text),
                Err(e @ BackendError::Transport(_)) | Err(e @ BackendError::Timeout(_)) => {
                    last = Some(e)
                }
                Err(BackendError::HttpStatus { status, body }) if status >= 500 => {
                    last = Some(BackendError::HttpStatus { status, body })
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn identity(&self) -> String {
        format!("http({}, model {})", self.cfg.endpoint, self.cfg.model)
    }
}
