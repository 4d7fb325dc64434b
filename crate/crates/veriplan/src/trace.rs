//! The textual chain-of-thought trace format.
//!
//! A trace is an ordered list of `<state, action, resulting state>` steps.
//! Each step renders as three lines, blank-line separated from the next:
//!
//! ```text
//! STATE: {(clear a), (handempty), (ontable a)}
//! ACTION: (pick-up a)
//! RESULT: {(holding a)}
//!
//! VALID: yes
//! CONFIDENCE: 0.95
//! ```
//!
//! The optional `VALID`/`CONFIDENCE` footer carries the model's own claim
//! about the plan. Parsing is tolerant: anything outside recognized
//! `STATE:`/`ACTION:`/`RESULT:`/`VALID:`/`CONFIDENCE:` lines is ignored, so
//! model output may interleave prose freely. Atoms use the PDDL grammar and
//! states print sorted, so `parse(render(t)) == t` (justifications are
//! in-memory only and are not rendered).

use crate::pddl::{apply_unchecked, applicable, Atom, Domain, GroundAction, Plan, State};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One reasoning step: the incoming state, the action taken, the claimed
/// resulting state, and free-text justification (never checked semantically;
/// the loop verifies states, not prose).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningStep {
    /// 1-based position in the trace.
    pub index: usize,
    pub s_prev: State,
    pub action: GroundAction,
    pub s_next: State,
    pub justification: String,
}

/// A parsed chain-of-thought trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CotTrace {
    pub steps: Vec<ReasoningStep>,
    /// The model's claimed validity bit, from a `VALID: yes|no` line.
    pub declared_valid: Option<bool>,
    /// Explicit confidence in `[0, 1]`, from a `CONFIDENCE:` line.
    pub confidence: Option<f64>,
}

impl CotTrace {
    pub fn new(steps: Vec<ReasoningStep>) -> Self {
        CotTrace {
            steps,
            declared_valid: None,
            confidence: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The claimed validity probability: an explicit `CONFIDENCE` wins,
    /// clamped to `[0.01, 0.99]`; otherwise `VALID: yes` maps to 0.99 and
    /// `VALID: no` to 0.01. `None` when the trace claims nothing.
    pub fn claimed_validity(&self) -> Option<f64> {
        match (self.confidence, self.declared_valid) {
            (Some(c), _) => Some(c.clamp(0.01, 0.99)),
            (None, Some(true)) => Some(0.99),
            (None, Some(false)) => Some(0.01),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceParseError {
    #[error("line {line}: step {step} is missing its {field} line")]
    MissingField {
        line: usize,
        step: usize,
        field: &'static str,
    },
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
}

/// Result of a coherence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coherence {
    Coherent,
    /// 1-based index of the first incoherent step.
    IncoherentAt(usize),
}

/// Renders the fixed grammar shown in the module docs. States print sorted;
/// justifications are omitted.
pub fn render_trace(trace: &CotTrace) -> String {
    let mut out = String::new();
    for (i, step) in trace.steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("STATE: {}\n", step.s_prev));
        out.push_str(&format!("ACTION: {}\n", step.action));
        out.push_str(&format!("RESULT: {}\n", step.s_next));
    }
    if let Some(v) = trace.declared_valid {
        if !trace.steps.is_empty() {
            out.push('\n');
        }
        out.push_str(if v { "VALID: yes\n" } else { "VALID: no\n" });
    }
    if let Some(c) = trace.confidence {
        if trace.declared_valid.is_none() && !trace.steps.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("CONFIDENCE: {c}\n"));
    }
    out
}

fn parse_state_line(body: &str, line: usize) -> Result<State, TraceParseError> {
    let t = body.trim();
    let inner = t
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(|| TraceParseError::BadLine {
            line,
            message: format!("expected `{{(atom ...), ...}}`, found `{t}`"),
        })?;
    let mut atoms = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        if rest.starts_with(',') {
            rest = rest[1..].trim_start();
            continue;
        }
        let open = rest.find('(').ok_or_else(|| TraceParseError::BadLine {
            line,
            message: format!("expected `(` in state, found `{rest}`"),
        })?;
        let close = rest[open..].find(')').ok_or_else(|| TraceParseError::BadLine {
            line,
            message: "unclosed atom in state".to_string(),
        })? + open;
        let atom: Atom = rest[open..=close].parse().map_err(|e| TraceParseError::BadLine {
            line,
            message: format!("{e}"),
        })?;
        atoms.push(atom);
        rest = rest[close + 1..].trim_start();
    }
    Ok(State::from_atoms(atoms))
}

fn parse_action_line(body: &str, domain: &Domain, line: usize) -> Result<GroundAction, TraceParseError> {
    let atom: Atom = body.trim().parse().map_err(|e| TraceParseError::BadLine {
        line,
        message: format!("{e}"),
    })?;
    let schema = domain
        .action(atom.predicate())
        .ok_or_else(|| TraceParseError::BadLine {
            line,
            message: format!("unknown action `{}`", atom.predicate()),
        })?;
    GroundAction::instantiate(schema, atom.args()).map_err(|e| TraceParseError::BadLine {
        line,
        message: format!("{e}"),
    })
}

/// Strips a recognized `KEY:` prefix, case-insensitively.
fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let t = line.trim_start();
    if t.len() >= key.len() && t[..key.len()].eq_ignore_ascii_case(key) {
        Some(&t[key.len()..])
    } else {
        None
    }
}

/// Parses model output into a structured trace, ignoring unrecognized prose.
/// Actions are resolved against `domain` (name and arity); object-level
/// checks happen later, during validation.
pub fn parse_trace(text: &str, domain: &Domain) -> Result<CotTrace, TraceParseError> {
    let mut trace = CotTrace::default();
    let mut pending_state: Option<(State, usize)> = None;
    let mut pending_action: Option<(GroundAction, usize)> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(body) = field(raw, "STATE:") {
            if pending_action.is_some() {
                return Err(TraceParseError::MissingField {
                    line: lineno,
                    step: trace.steps.len() + 1,
                    field: "RESULT",
                });
            }
            if pending_state.is_some() {
                return Err(TraceParseError::MissingField {
                    line: lineno,
                    step: trace.steps.len() + 1,
                    field: "ACTION",
                });
            }
            pending_state = Some((parse_state_line(body, lineno)?, lineno));
        } else if let Some(body) = field(raw, "ACTION:") {
            if pending_state.is_none() {
                return Err(TraceParseError::MissingField {
                    line: lineno,
                    step: trace.steps.len() + 1,
                    field: "STATE",
                });
            }
            if pending_action.is_some() {
                return Err(TraceParseError::MissingField {
                    line: lineno,
                    step: trace.steps.len() + 1,
                    field: "RESULT",
                });
            }
            pending_action = Some((parse_action_line(body, domain, lineno)?, lineno));
        } else if let Some(body) = field(raw, "RESULT:") {
            let (s_prev, _) = pending_state.take().ok_or(TraceParseError::MissingField {
                line: lineno,
                step: trace.steps.len() + 1,
                field: "STATE",
            })?;
            let (action, _) = pending_action.take().ok_or(TraceParseError::MissingField {
                line: lineno,
                step: trace.steps.len() + 1,
                field: "ACTION",
            })?;
            let s_next = parse_state_line(body, lineno)?;
            trace.steps.push(ReasoningStep {
                index: trace.steps.len() + 1,
                s_prev,
                action,
                s_next,
                justification: String::new(),
            });
        } else if let Some(body) = field(raw, "VALID:") {
            match body.trim().to_ascii_lowercase().as_str() {
                "yes" | "true" => trace.declared_valid = Some(true),
                "no" | "false" => trace.declared_valid = Some(false),
                other => {
                    return Err(TraceParseError::BadLine {
                        line: lineno,
                        message: format!("expected yes|no after VALID:, found `{other}`"),
                    })
                }
            }
        } else if let Some(body) = field(raw, "CONFIDENCE:") {
            let c: f64 = body.trim().parse().map_err(|_| TraceParseError::BadLine {
                line: lineno,
                message: format!("expected a number after CONFIDENCE:, found `{}`", body.trim()),
            })?;
            if !(0.0..=1.0).contains(&c) {
                return Err(TraceParseError::BadLine {
                    line: lineno,
                    message: format!("confidence {c} outside [0, 1]"),
                });
            }
            trace.confidence = Some(c);
        }
        // Anything else is prose; ignore it.
    }

    if let Some((_, line)) = pending_action {
        return Err(TraceParseError::MissingField {
            line,
            step: trace.steps.len() + 1,
            field: "RESULT",
        });
    }
    if let Some((_, line)) = pending_state {
        return Err(TraceParseError::MissingField {
            line,
            step: trace.steps.len() + 1,
            field: "ACTION",
        });
    }
    Ok(trace)
}

/// Logical coherence: every action applicable in its own incoming state,
/// every claimed result equal to the transition formula's output, and
/// consecutive steps chained. The empty trace is vacuously coherent.
pub fn check_coherence(trace: &CotTrace, domain: &Domain) -> Coherence {
    for (i, step) in trace.steps.iter().enumerate() {
        let index = i + 1;
        let resolved = match domain.action(&step.action.name) {
            Some(schema) => match GroundAction::instantiate(schema, &step.action.args) {
                Ok(a) => a,
                Err(_) => return Coherence::IncoherentAt(index),
            },
            None => return Coherence::IncoherentAt(index),
        };
        if i > 0 && trace.steps[i - 1].s_next != step.s_prev {
            return Coherence::IncoherentAt(index);
        }
        if !applicable(&step.s_prev, &resolved) {
            return Coherence::IncoherentAt(index);
        }
        if apply_unchecked(&step.s_prev, &resolved) != step.s_next {
            return Coherence::IncoherentAt(index);
        }
    }
    Coherence::Coherent
}

/// The action sequence of the trace, states discarded.
pub fn extract_plan(trace: &CotTrace) -> Plan {
    Plan::new(trace.steps.iter().map(|s| s.action.clone()).collect())
}

/// Builds the coherent trace obtained by simulating `plan` from `init`;
/// actions must be applicable in sequence.
pub fn trace_from_plan(init: &State, plan: &Plan) -> Result<CotTrace, crate::pddl::PddlError> {
    let mut steps = Vec::with_capacity(plan.len());
    let mut s = init.clone();
    for (i, a) in plan.iter().enumerate() {
        let next = crate::pddl::apply(&s, a)?;
        steps.push(ReasoningStep {
            index: i + 1,
            s_prev: s,
            action: a.clone(),
            s_next: next.clone(),
            justification: String::new(),
        });
        s = next;
    }
    Ok(CotTrace::new(steps))
}

/// Serialized form used inside dataset records: the rendered text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraceText(pub String);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_domain, parse_plan, parse_problem};

    const BW: &str = r#"
(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block)
               (clear ?x - block) (handempty) (holding ?x - block))
  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (not (ontable ?x)) (not (clear ?x)) (not (handempty)) (holding ?x)))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y))))
"#;

    fn fixtures() -> (crate::pddl::Domain, crate::pddl::Problem) {
        let d = parse_domain(BW).unwrap();
        let p = parse_problem(
            r#"(define (problem t) (:domain blocksworld)
               (:objects a b - block)
               (:init (ontable a) (ontable b) (clear a) (clear b) (handempty))
               (:goal (and (on a b))))"#,
            &d,
        )
        .unwrap();
        (d, p)
    }

    fn sample_trace() -> (crate::pddl::Domain, CotTrace) {
        let (d, p) = fixtures();
        let plan = parse_plan("(pick-up a)\n(stack a b)\n", &d, &p).unwrap();
        let t = trace_from_plan(&p.init, &plan).unwrap();
        (d, t)
    }

    #[test]
    fn render_shape() {
        let (_, t) = sample_trace();
        let text = render_trace(&t);
        assert_eq!(text.lines().filter(|l| l.starts_with("STATE:")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("ACTION:")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("RESULT:")).count(), 2);
        assert!(!text.contains("VALID:"));
    }

    #[test]
    fn render_parse_round_trip() {
        let (d, mut t) = sample_trace();
        t.declared_valid = Some(true);
        t.confidence = Some(0.75);
        let parsed = parse_trace(&render_trace(&t), &d).unwrap();
        assert_eq!(parsed, t);
    }

    #[test]
    fn empty_trace_renders_footer_only() {
        let t = CotTrace {
            steps: vec![],
            declared_valid: Some(false),
            confidence: None,
        };
        assert_eq!(render_trace(&t), "VALID: no\n");
        let (d, _) = fixtures();
        let parsed = parse_trace("VALID: no\n", &d).unwrap();
        assert_eq!(parsed, t);
    }

    #[test]
    fn prose_is_ignored() {
        let (d, t) = sample_trace();
        let clean = render_trace(&t);
        let mut noisy = String::from("Let me think about this problem step by step.\n");
        for line in clean.lines() {
            noisy.push_str(line);
            noisy.push('\n');
            noisy.push_str("So far so good, continuing the analysis...\n");
        }
        assert_eq!(parse_trace(&noisy, &d).unwrap(), parse_trace(&clean, &d).unwrap());
    }

    #[test]
    fn missing_result_reported() {
        let (d, _) = fixtures();
        let text = "STATE: {(ontable a), (clear a), (handempty)}\nACTION: (pick-up a)\n";
        match parse_trace(text, &d) {
            Err(TraceParseError::MissingField { field: "RESULT", step: 1, .. }) => {}
            other => panic!("expected MissingField(RESULT), got {other:?}"),
        }
    }

    #[test]
    fn coherence_of_simulated_trace() {
        let (d, t) = sample_trace();
        assert_eq!(check_coherence(&t, &d), Coherence::Coherent);
        assert_eq!(check_coherence(&CotTrace::default(), &d), Coherence::Coherent);
    }

    #[test]
    fn coherence_flags_flipped_atom() {
        let (d, mut t) = sample_trace();
        t.steps[1].s_next.insert("(holding a)".parse().unwrap());
        assert_eq!(check_coherence(&t, &d), Coherence::IncoherentAt(2));
    }

    #[test]
    fn coherence_flags_chain_break() {
        let (d, mut t) = sample_trace();
        t.steps[1].s_prev.remove(&"(holding a)".parse().unwrap());
        assert_eq!(check_coherence(&t, &d), Coherence::IncoherentAt(2));
    }

    #[test]
    fn extract_plan_keeps_actions_in_order() {
        let (_, t) = sample_trace();
        let plan = extract_plan(&t);
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.actions[0].to_string(), "(pick-up a)");
        assert_eq!(plan.actions[1].to_string(), "(stack a b)");
        assert_eq!(extract_plan(&CotTrace::default()).len(), 0);
    }

    #[test]
    fn claimed_validity_rules() {
        let mut t = CotTrace::default();
        assert_eq!(t.claimed_validity(), None);
        t.declared_valid = Some(true);
        assert_eq!(t.claimed_validity(), Some(0.99));
        t.declared_valid = Some(false);
        assert_eq!(t.claimed_validity(), Some(0.01));
        t.confidence = Some(0.7);
        assert_eq!(t.claimed_validity(), Some(0.7));
        t.confidence = Some(1.0);
        assert_eq!(t.claimed_validity(), Some(0.99));
    }
}
