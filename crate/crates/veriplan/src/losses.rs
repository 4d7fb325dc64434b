//! Loss metrics over reasoning and final datasets.
//!
//! These are reported numbers, not training signals — there are no model
//! weights here. Two families:
//!
//! - the step loss `L_step = d_state(claimed, expected) + λ · L_feedback`,
//!   where `d_state` is the symmetric-difference distance and `L_feedback`
//!   is 0 for a valid step, `α_precond` for a precondition violation,
//!   `α_effect` for a wrong effect, and `α_goal` for a missed goal;
//!   `L_reasoning` is its mean over a reasoning dataset;
//! - the plan loss `L_plan = 1[v=0]·β + α·BCE(v, v̂)` over final records;
//!   `L_final` is its mean.
//!
//! Default weights: `α_precond = 1.0`, `α_effect = 1.0`, `α_goal = 1.5`,
//! `λ = 0.1`, `β = 2.0`, `α = 0.5`. The BCE clamp ε (default `1e-6`) keeps
//! the cross-entropy finite at v̂ ∈ {0, 1}.

use crate::datagen::{FinalRecord, ReasoningRecord};
use crate::pddl::state_distance;
use crate::validator::{StepStatus, StepVerdict};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LossError {
    #[error("cannot aggregate losses over an empty dataset")]
    EmptyDataset,
}

/// Penalty weights and coefficients; `Default` is the reference setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha_precond: f64,
    pub alpha_effect: f64,
    pub alpha_goal: f64,
    pub lambda_feedback: f64,
    pub beta: f64,
    pub alpha: f64,
    pub bce_epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_precond: 1.0,
            alpha_effect: 1.0,
            alpha_goal: 1.5,
            lambda_feedback: 0.1,
            beta: 2.0,
            alpha: 0.5,
            bce_epsilon: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("alpha_precond", self.alpha_precond),
            ("alpha_effect", self.alpha_effect),
            ("alpha_goal", self.alpha_goal),
            ("lambda_feedback", self.lambda_feedback),
            ("beta", self.beta),
            ("alpha", self.alpha),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(format!("weights.{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.bce_epsilon > 0.0 && self.bce_epsilon < 0.5) {
            return Err(format!(
                "weights.bce_epsilon must lie in (0, 0.5), got {}",
                self.bce_epsilon
            ));
        }
        Ok(())
    }
}

/// The verification-feedback penalty of a step verdict: 0 when valid, the
/// matching α otherwise.
pub fn loss_feedback(feedback: &StepVerdict, w: &LossWeights) -> f64 {
    match feedback.status {
        StepStatus::Valid => 0.0,
        StepStatus::PreconditionViolation => w.alpha_precond,
        StepStatus::EffectMismatch => w.alpha_effect,
        StepStatus::GoalFailure => w.alpha_goal,
    }
}

/// `d_state(claimed, expected) + λ · L_feedback`.
pub fn loss_step(rec: &ReasoningRecord, w: &LossWeights) -> f64 {
    let d = state_distance(&rec.s_claimed, &rec.feedback.expected_state) as f64;
    d + w.lambda_feedback * loss_feedback(&rec.feedback, w)
}

/// Mean step loss over a nonempty reasoning dataset.
pub fn loss_reasoning(records: &[ReasoningRecord], w: &LossWeights) -> Result<f64, LossError> {
    if records.is_empty() {
        return Err(LossError::EmptyDataset);
    }
    Ok(records.iter().map(|r| loss_step(r, w)).sum::<f64>() / records.len() as f64)
}

/// Binary cross-entropy with the prediction clamped to `[ε, 1−ε]`.
pub fn bce(v: bool, v_hat: f64, epsilon: f64) -> f64 {
    let v_hat = v_hat.clamp(epsilon, 1.0 - epsilon);
    if v {
        -v_hat.ln()
    } else {
        -(1.0 - v_hat).ln()
    }
}

/// `1[v=0]·β + α·BCE(v, v̂)`.
pub fn loss_plan(rec: &FinalRecord, w: &LossWeights) -> f64 {
    let invalid_penalty = if rec.valid == 0 { w.beta } else { 0.0 };
    invalid_penalty + w.alpha * bce(rec.valid != 0, rec.claimed_validity, w.bce_epsilon)
}

/// Mean plan loss over a nonempty final dataset.
pub fn loss_final(records: &[FinalRecord], w: &LossWeights) -> Result<f64, LossError> {
    if records.is_empty() {
        return Err(LossError::EmptyDataset);
    }
    Ok(records.iter().map(|r| loss_plan(r, w)).sum::<f64>() / records.len() as f64)
}

/// Per-record losses plus their means and step-status counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step_losses: Vec<f64>,
    pub plan_losses: Vec<f64>,
    pub loss_reasoning: Option<f64>,
    pub loss_final: Option<f64>,
    /// Step feedback counts keyed by status name.
    pub step_status_counts: BTreeMap<String, usize>,
    pub valid_plans: usize,
    pub invalid_plans: usize,
}

/// Computes everything in one pass; empty inputs yield `None` aggregates.
pub fn compute_report(
    reasoning: &[ReasoningRecord],
    finals: &[FinalRecord],
    w: &LossWeights,
) -> LossReport {
    let step_losses: Vec<f64> = reasoning.iter().map(|r| loss_step(r, w)).collect();
    let plan_losses: Vec<f64> = finals.iter().map(|r| loss_plan(r, w)).collect();
    let mut step_status_counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in reasoning {
        let key = match r.feedback.status {
            StepStatus::Valid => "valid",
            StepStatus::PreconditionViolation => "precondition_violation",
            StepStatus::EffectMismatch => "effect_mismatch",
            StepStatus::GoalFailure => "goal_failure",
        };
        *step_status_counts.entry(key.to_string()).or_default() += 1;
    }
    LossReport {
        loss_reasoning: loss_reasoning(reasoning, w).ok(),
        loss_final: loss_final(finals, w).ok(),
        step_losses,
        plan_losses,
        step_status_counts,
        valid_plans: finals.iter().filter(|r| r.valid == 1).count(),
        invalid_plans: finals.iter().filter(|r| r.valid == 0).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::SCHEMA_VERSION;
    use crate::pddl::{Atom, State};
    use crate::validator::StateDiff;
    use std::collections::BTreeSet;

    fn st(atoms: &[&str]) -> State {
        atoms.iter().map(|s| s.parse::<Atom>().unwrap()).collect()
    }

    fn verdict(status: StepStatus, expected: State, claimed: State) -> StepVerdict {
        StepVerdict {
            status,
            action: "(noop)".into(),
            missing_preconditions: BTreeSet::new(),
            expected_state: expected.clone(),
            claimed_state: claimed.clone(),
            state_diff: StateDiff::between(&expected, &claimed),
            unmet_goals: BTreeSet::new(),
        }
    }

    fn reasoning_record(status: StepStatus, expected: State, claimed: State) -> ReasoningRecord {
        ReasoningRecord {
            schema_version: SCHEMA_VERSION.to_string(),
            problem_id: "p".into(),
            iteration: 1,
            step_index: 1,
            s_prev: expected.clone(),
            action: "(noop)".into(),
            s_claimed: claimed.clone(),
            is_final: false,
            feedback: verdict(status, expected, claimed),
        }
    }

    fn final_record(valid: u8, v_hat: f64) -> FinalRecord {
        FinalRecord {
            schema_version: SCHEMA_VERSION.to_string(),
            problem_id: "p".into(),
            iteration: 1,
            domain: String::new(),
            problem: String::new(),
            plan: String::new(),
            valid,
            claimed_validity: v_hat,
        }
    }

    #[test]
    fn feedback_loss_hits_the_four_constants() {
        let w = LossWeights::default();
        let s = st(&["(p)"]);
        let cases = [
            (StepStatus::Valid, 0.0),
            (StepStatus::PreconditionViolation, 1.0),
            (StepStatus::EffectMismatch, 1.0),
            (StepStatus::GoalFailure, 1.5),
        ];
        for (status, want) in cases {
            assert_eq!(loss_feedback(&verdict(status, s.clone(), s.clone()), &w), want);
        }
    }

    #[test]
    fn step_loss_hand_evaluations() {
        let w = LossWeights::default();
        // Valid step with matching state: both terms zero.
        let s = st(&["(p)", "(q)"]);
        let rec = reasoning_record(StepStatus::Valid, s.clone(), s.clone());
        assert_eq!(loss_step(&rec, &w), 0.0);

        // Inapplicable action; claimed state differs from s_prev by 2 atoms:
        // 2 + 0.1 * 1.0 = 2.1.
        let expected = st(&["(p)", "(q)"]);
        let claimed = st(&["(p)", "(r)"]);
        let rec = reasoning_record(StepStatus::PreconditionViolation, expected, claimed);
        assert!((loss_step(&rec, &w) - 2.1).abs() < 1e-12);

        // Final step, states match, goal unmet: 0 + 0.1 * 1.5 = 0.15.
        let s = st(&["(p)"]);
        let rec = reasoning_record(StepStatus::GoalFailure, s.clone(), s.clone());
        assert!((loss_step(&rec, &w) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn reasoning_loss_is_permutation_invariant_mean() {
        let w = LossWeights::default();
        let s = st(&["(p)", "(q)"]);
        let zero = reasoning_record(StepStatus::Valid, s.clone(), s.clone());
        let high = reasoning_record(
            StepStatus::PreconditionViolation,
            st(&["(p)", "(q)"]),
            st(&["(p)", "(r)"]),
        );
        let a = loss_reasoning(&[zero.clone(), high.clone()], &w).unwrap();
        let b = loss_reasoning(&[high, zero], &w).unwrap();
        assert!((a - 1.05).abs() < 1e-12);
        assert_eq!(a, b);
        assert_eq!(loss_reasoning(&[], &w), Err(LossError::EmptyDataset));
    }

    #[test]
    fn bce_hand_evaluations() {
        let eps = 1e-6;
        assert!(bce(true, 1.0 - eps, eps) < 1e-5);
        assert!((bce(false, 0.5, eps) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(true, 0.9, eps) - 0.105_360_515_657_826_3).abs() < 1e-9);
        // Clamping keeps the loss finite at the endpoints.
        assert!(bce(true, 0.0, eps).is_finite());
        assert!(bce(false, 1.0, eps).is_finite());
    }

    #[test]
    fn plan_loss_hand_evaluations() {
        let w = LossWeights::default();
        assert!(loss_plan(&final_record(1, 1.0), &w) < 1e-5);
        let invalid = loss_plan(&final_record(0, 0.5), &w);
        assert!((invalid - 2.346_573_590_279_972_6).abs() < 1e-9);
        assert!(invalid >= w.beta);
        let confident = loss_plan(&final_record(1, 0.9), &w);
        assert!((confident - 0.052_680_257_828_913_16).abs() < 1e-9);
    }

    #[test]
    fn final_loss_mean_and_beta_scaling() {
        let w = LossWeights::default();
        let records = [final_record(0, 0.5), final_record(1, 1.0)];
        let mean = loss_final(&records, &w).unwrap();
        let expect = (loss_plan(&records[0], &w) + loss_plan(&records[1], &w)) / 2.0;
        assert_eq!(mean, expect);
        assert!((mean - 1.173_3).abs() < 1e-4);

        // Doubling beta shifts only invalid-record contributions.
        let w4 = LossWeights { beta: 4.0, ..w };
        assert!((loss_plan(&records[0], &w4) - loss_plan(&records[0], &w) - 2.0).abs() < 1e-12);
        assert_eq!(loss_plan(&records[1], &w4), loss_plan(&records[1], &w));
        assert_eq!(loss_final(&[], &w), Err(LossError::EmptyDataset));
    }

    #[test]
    fn report_aggregates_match_direct_sums() {
        let w = LossWeights::default();
        let s = st(&["(p)"]);
        let reasoning = vec![
            reasoning_record(StepStatus::Valid, s.clone(), s.clone()),
            reasoning_record(StepStatus::GoalFailure, s.clone(), s.clone()),
        ];
        let finals = vec![final_record(0, 0.5), final_record(1, 0.99)];
        let report = compute_report(&reasoning, &finals, &w);
        let mean: f64 = report.step_losses.iter().sum::<f64>() / report.step_losses.len() as f64;
        assert_eq!(report.loss_reasoning, Some(mean));
        assert_eq!(report.valid_plans, 1);
        assert_eq!(report.invalid_plans, 1);
        assert_eq!(report.step_status_counts["valid"], 1);
        assert_eq!(report.step_status_counts["goal_failure"], 1);
    }
}
