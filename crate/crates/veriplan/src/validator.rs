//! Step- and plan-level verification with binary or detailed feedback.
//!
//! A step verdict checks, in fixed precedence, (1) that the action's
//! preconditions hold in the incoming state, (2) that the claimed resulting
//! state equals the transition formula's output, and (3) on the final step
//! only, that the goal atoms hold in the claimed state. The first failing
//! check determines the status. For an inapplicable action the expected
//! state is the incoming state itself — the action is treated as not
//! executed — so the state diff measures spurious effect claims.
//!
//! Plan verdicts simulate from the initial state; per-step verdicts are
//! computed against simulated (never claimed) states. Trace verdicts
//! additionally compare each claimed state to the simulation and check that
//! consecutive steps chain. Failures map onto four classes with precedence
//! `invalid_sequence > precondition_violation > incorrect_effect >
//! goal_not_achieved`; when several errors co-occur, the earliest failing
//! step wins, and within a step the precedence above applies.
//!
//! Detailed feedback follows a fixed template so datasets are reproducible:
//!
//! ```text
//! step 3: action (stack a b): missing preconditions: (clear b), (holding a)
//! step 2: action (put-down a): effect mismatch: missing: (handempty); extra: (holding a)
//! step 4: action (stack b a): goal not achieved: unmet goal atoms: (on a b)
//! step 2: state chain broken: missing: (clear a); extra: none
//! step 1: invalid action sequence: unknown action `fly`
//! goal not achieved: unmet goal atoms: (on a b)
//! ```
//!
//! Binary feedback is exactly `valid` or `invalid`. All functions here are
//! pure; verdicts are immutable values.

use crate::pddl::{
    applicable, apply_unchecked, resolve_action, Atom, Domain, GroundAction, PddlError, Plan,
    Problem, State,
};
use crate::trace::CotTrace;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Outcome of a single reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Valid,
    PreconditionViolation,
    EffectMismatch,
    GoalFailure,
}

/// Atoms the claimed state is missing relative to the expected state, and
/// atoms it has in excess.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StateDiff {
    pub missing: BTreeSet<Atom>,
    pub extra: BTreeSet<Atom>,
}

impl StateDiff {
    pub fn between(expected: &State, claimed: &State) -> Self {
        StateDiff {
            missing: expected.atoms().difference(claimed.atoms()).cloned().collect(),
            extra: claimed.atoms().difference(expected.atoms()).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty()
    }
}

/// Verdict for one state-action-state step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub status: StepStatus,
    /// Textual form of the checked action, e.g. `(stack a b)`.
    pub action: String,
    pub missing_preconditions: BTreeSet<Atom>,
    pub expected_state: State,
    pub claimed_state: State,
    pub state_diff: StateDiff,
    /// Goal atoms absent from the claimed state; only populated on a final
    /// step checked against a goal.
    pub unmet_goals: BTreeSet<Atom>,
}

impl StepVerdict {
    pub fn is_valid(&self) -> bool {
        self.status == StepStatus::Valid
    }
}

/// The four failure classes of plan-level verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    PreconditionViolation,
    IncorrectEffect,
    GoalNotAchieved,
    InvalidSequence,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] = [
        ErrorClass::PreconditionViolation,
        ErrorClass::IncorrectEffect,
        ErrorClass::GoalNotAchieved,
        ErrorClass::InvalidSequence,
    ];

    /// Table heading used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            ErrorClass::PreconditionViolation => "Precondition Violation",
            ErrorClass::IncorrectEffect => "Incorrect Effect Application",
            ErrorClass::GoalNotAchieved => "Goal Not Achieved",
            ErrorClass::InvalidSequence => "Invalid Action Sequence",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::PreconditionViolation => "precondition_violation",
            ErrorClass::IncorrectEffect => "incorrect_effect",
            ErrorClass::GoalNotAchieved => "goal_not_achieved",
            ErrorClass::InvalidSequence => "invalid_sequence",
        };
        f.write_str(s)
    }
}

/// A structural failure that prevents step-by-step checking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SequenceError {
    /// The action could not be resolved against the domain/problem.
    UnknownAction { index: usize, action: String, cause: String },
    /// A step's incoming state does not match the previous step's result.
    ChainBreak { index: usize, diff: StateDiff },
}

impl SequenceError {
    fn index(&self) -> usize {
        match self {
            SequenceError::UnknownAction { index, .. } | SequenceError::ChainBreak { index, .. } => {
                *index
            }
        }
    }
}

/// Verdict for a whole plan or trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanVerdict {
    pub valid: bool,
    /// 1-based index of the earliest failing step, if any. `None` for an
    /// empty plan that misses the goal.
    pub first_failure_index: Option<usize>,
    pub per_step: Vec<StepVerdict>,
    /// The simulated state after the last processed action.
    pub final_state: State,
    pub error_class: Option<ErrorClass>,
    /// Goal atoms not holding in the final simulated state.
    pub unmet_goals: BTreeSet<Atom>,
    pub sequence_error: Option<SequenceError>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerdictError {
    #[error("classify_error called on a valid verdict")]
    VerdictIsValid,
}

/// Feedback rendering mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Binary,
    Detailed,
}

/// Rendered feedback plus the verdict it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub mode: FeedbackMode,
    pub text: String,
    pub verdict: PlanVerdict,
}

/// Validates a single step in fixed precedence: applicability, then claimed
/// state against the transition formula, then (when `is_final` and a goal is
/// given) goal satisfaction in the claimed state.
///
/// Fails only when the action cannot be resolved in `domain`.
pub fn validate_step(
    domain: &Domain,
    s_prev: &State,
    action: &GroundAction,
    s_claimed: &State,
    goal: Option<&BTreeSet<Atom>>,
    is_final: bool,
) -> Result<StepVerdict, PddlError> {
    let schema = domain
        .action(&action.name)
        .ok_or_else(|| PddlError::UnknownAction(action.name.clone()))?;
    // Re-instantiate so the verdict reflects the domain's schemas even if the
    // caller hand-built the ground sets.
    let action = GroundAction::instantiate(schema, &action.args)?;

    let is_applicable = applicable(s_prev, &action);
    let expected = if is_applicable {
        apply_unchecked(s_prev, &action)
    } else {
        s_prev.clone()
    };
    let diff = StateDiff::between(&expected, s_claimed);
    let unmet: BTreeSet<Atom> = match goal {
        Some(g) if is_final => g.iter().filter(|a| !s_claimed.contains(a)).cloned().collect(),
        _ => BTreeSet::new(),
    };

    let (status, missing_preconditions) = if !is_applicable {
        let missing = action
            .pre
            .iter()
            .filter(|a| !s_prev.contains(a))
            .cloned()
            .collect();
        (StepStatus::PreconditionViolation, missing)
    } else if !diff.is_empty() {
        (StepStatus::EffectMismatch, BTreeSet::new())
    } else if !unmet.is_empty() {
        (StepStatus::GoalFailure, BTreeSet::new())
    } else {
        (StepStatus::Valid, BTreeSet::new())
    };

    Ok(StepVerdict {
        status,
        action: action.to_string(),
        missing_preconditions,
        expected_state: expected,
        claimed_state: s_claimed.clone(),
        state_diff: diff,
        unmet_goals: if status == StepStatus::GoalFailure { unmet } else { BTreeSet::new() },
    })
}

fn class_of(status: StepStatus) -> Option<ErrorClass> {
    match status {
        StepStatus::Valid => None,
        StepStatus::PreconditionViolation => Some(ErrorClass::PreconditionViolation),
        StepStatus::EffectMismatch => Some(ErrorClass::IncorrectEffect),
        StepStatus::GoalFailure => Some(ErrorClass::GoalNotAchieved),
    }
}

/// Simulates `plan` from the problem's initial state. Valid iff every action
/// is applicable in its simulated state and the final state satisfies the
/// goal. Inapplicable actions are treated as not executed; the simulation
/// continues so later steps still get verdicts.
pub fn validate_plan(domain: &Domain, problem: &Problem, plan: &Plan) -> PlanVerdict {
    let claims: Vec<Option<&State>> = plan.iter().map(|_| None).collect();
    let actions: Vec<&GroundAction> = plan.iter().collect();
    validate_sequence(domain, problem, &actions, &claims, &[])
}

/// Like [`validate_plan`], but each claimed intermediate state is compared
/// against the simulation (surfacing effect mismatches) and consecutive
/// steps must chain: step *i*'s incoming state must equal step *i−1*'s
/// claimed result (the first step chains from the initial state).
pub fn validate_trace(domain: &Domain, problem: &Problem, trace: &CotTrace) -> PlanVerdict {
    let actions: Vec<&GroundAction> = trace.steps.iter().map(|s| &s.action).collect();
    let claims: Vec<Option<&State>> = trace.steps.iter().map(|s| Some(&s.s_next)).collect();
    let prevs: Vec<&State> = trace.steps.iter().map(|s| &s.s_prev).collect();
    validate_sequence(domain, problem, &actions, &claims, &prevs)
}

/// Shared simulation. `claims[i]` is the claimed state after step *i* (when
/// absent the simulated state is checked against itself), and `claimed_prevs`
/// (empty for bare plans) are the claimed incoming states used for chaining.
fn validate_sequence(
    domain: &Domain,
    problem: &Problem,
    actions: &[&GroundAction],
    claims: &[Option<&State>],
    claimed_prevs: &[&State],
) -> PlanVerdict {
    let mut sim = problem.init.clone();
    let mut per_step = Vec::with_capacity(actions.len());
    let mut first_failure: Option<(usize, ErrorClass)> = None;
    let mut sequence_error = None;

    for (i, action) in actions.iter().enumerate() {
        let index = i + 1;
        let is_final = i + 1 == actions.len();

        let resolved = match resolve_action(domain, problem, &action.name, &action.args) {
            Ok(r) => r,
            Err(cause) => {
                sequence_error = Some(SequenceError::UnknownAction {
                    index,
                    action: action.to_string(),
                    cause: cause.to_string(),
                });
                first_failure.get_or_insert((index, ErrorClass::InvalidSequence));
                break;
            }
        };

        if let Some(&claimed_prev) = claimed_prevs.get(i) {
            let chain_ref: &State = if i == 0 {
                &problem.init
            } else {
                claims[i - 1].unwrap_or(&sim)
            };
            if claimed_prev != chain_ref {
                sequence_error = Some(SequenceError::ChainBreak {
                    index,
                    diff: StateDiff::between(chain_ref, claimed_prev),
                });
                first_failure.get_or_insert((index, ErrorClass::InvalidSequence));
                break;
            }
        }

        let expected = if applicable(&sim, &resolved) {
            apply_unchecked(&sim, &resolved)
        } else {
            sim.clone()
        };
        let claimed = claims[i].unwrap_or(&expected);
        let verdict = validate_step(domain, &sim, &resolved, claimed, Some(&problem.goal), is_final)
            .expect("action resolved above");
        if let Some(class) = class_of(verdict.status) {
            first_failure.get_or_insert((index, class));
        }
        per_step.push(verdict);
        sim = expected;
    }

    let unmet_goals: BTreeSet<Atom> = problem
        .goal
        .iter()
        .filter(|g| !sim.contains(g))
        .cloned()
        .collect();
    if first_failure.is_none() && !unmet_goals.is_empty() {
        // Only reachable for empty plans; otherwise the final step catches it.
        first_failure = Some((0, ErrorClass::GoalNotAchieved));
    }

    let (first_failure_index, error_class) = match first_failure {
        Some((0, class)) => (None, Some(class)),
        Some((idx, class)) => (Some(idx), Some(class)),
        None => (None, None),
    };
    PlanVerdict {
        valid: error_class.is_none(),
        first_failure_index,
        per_step,
        final_state: sim,
        error_class,
        unmet_goals,
        sequence_error,
    }
}

/// The error class of an invalid verdict, under the documented precedence.
/// Re-derived from the per-step record rather than read off the stored
/// field: the earliest failing step wins, and a structural failure at step
/// *i* cannot be outranked by anything later.
pub fn classify_error(verdict: &PlanVerdict) -> Result<ErrorClass, VerdictError> {
    if verdict.valid {
        return Err(VerdictError::VerdictIsValid);
    }
    let step_failure = verdict
        .per_step
        .iter()
        .enumerate()
        .find_map(|(i, v)| class_of(v.status).map(|c| (i + 1, c)));
    let sequence_failure = verdict
        .sequence_error
        .as_ref()
        .map(|e| (e.index(), ErrorClass::InvalidSequence));
    match (step_failure, sequence_failure) {
        (Some((si, sc)), Some((qi, qc))) => Ok(if si <= qi { sc } else { qc }),
        (Some((_, c)), None) | (None, Some((_, c))) => Ok(c),
        // No failing step and no structural failure: the goal is unmet.
        (None, None) => Ok(ErrorClass::GoalNotAchieved),
    }
}

fn join_atoms(atoms: &BTreeSet<Atom>) -> String {
    if atoms.is_empty() {
        return "none".to_string();
    }
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

/// The per-step message of the detailed-feedback grammar, `None` for valid
/// steps. `index` is 1-based.
pub fn step_message(index: usize, v: &StepVerdict) -> Option<String> {
    match v.status {
        StepStatus::Valid => None,
        StepStatus::PreconditionViolation => Some(format!(
            "step {index}: action {}: missing preconditions: {}",
            v.action,
            join_atoms(&v.missing_preconditions)
        )),
        StepStatus::EffectMismatch => Some(format!(
            "step {index}: action {}: effect mismatch: missing: {}; extra: {}",
            v.action,
            join_atoms(&v.state_diff.missing),
            join_atoms(&v.state_diff.extra)
        )),
        StepStatus::GoalFailure => Some(format!(
            "step {index}: action {}: goal not achieved: unmet goal atoms: {}",
            v.action,
            join_atoms(&v.unmet_goals)
        )),
    }
}

/// Renders a verdict as feedback text. Binary mode is exactly `valid` or
/// `invalid`; detailed mode emits one line per failure under the fixed
/// grammar in the module docs.
pub fn render_feedback(verdict: &PlanVerdict, mode: FeedbackMode) -> Feedback {
    let text = match mode {
        FeedbackMode::Binary => {
            if verdict.valid {
                "valid".to_string()
            } else {
                "invalid".to_string()
            }
        }
        FeedbackMode::Detailed => {
            if verdict.valid {
                "valid".to_string()
            } else {
                let mut lines = Vec::new();
                for (i, v) in verdict.per_step.iter().enumerate() {
                    if let Some(msg) = step_message(i + 1, v) {
                        lines.push(msg);
                    }
                }
                match &verdict.sequence_error {
                    Some(SequenceError::UnknownAction { index, action, cause }) => {
                        lines.push(format!("step {index}: invalid action sequence: {action}: {cause}"));
                    }
                    Some(SequenceError::ChainBreak { index, diff }) => {
                        lines.push(format!(
                            "step {index}: state chain broken: missing: {}; extra: {}",
                            join_atoms(&diff.missing),
                            join_atoms(&diff.extra)
                        ));
                    }
                    None => {}
                }
                if verdict.per_step.iter().all(|v| v.is_valid())
                    && verdict.sequence_error.is_none()
                    && !verdict.unmet_goals.is_empty()
                {
                    lines.push(format!(
                        "goal not achieved: unmet goal atoms: {}",
                        join_atoms(&verdict.unmet_goals)
                    ));
                }
                // Sequence errors abort the scan, so order lines by step index.
                if let Some(seq) = &verdict.sequence_error {
                    let idx = seq.index();
                    lines.sort_by_key(|l| {
                        l.strip_prefix("step ")
                            .and_then(|r| r.split(':').next())
                            .and_then(|n| n.parse::<usize>().ok())
                            .unwrap_or(idx)
                    });
                }
                lines.join("\n")
            }
        }
    };
    Feedback {
        mode,
        text,
        verdict: verdict.clone(),
    }
}
