//! Brute-force satisficing planner used as ground truth.
//!
//! Plain breadth-first search over the grounded state space: returned plans
//! are minimal-length, and exhausting the finite reachable space proves
//! unsolvability. Ground actions are expanded in the deterministic order
//! produced by [`crate::pddl::ground`], and states are deduplicated by their
//! canonical sorted-atom form, so results are reproducible run to run.
//! Desk-scale problems only; there is no heuristic.

use crate::pddl::{
    applicable, apply_unchecked, ground, satisfies_goal, Domain, GroundAction, PddlError, Plan,
    Problem, State,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Caps on the search effort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchLimits {
    pub max_expanded_states: usize,
    pub max_plan_length: usize,
    pub timeout: Duration,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_expanded_states: 1_000_000,
            max_plan_length: 1_000,
            timeout: Duration::from_secs(30),
        }
    }
}

/// Search effort counters, reported when a limit is hit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Solved(Plan),
    Unsolvable,
    LimitExceeded(SearchStats),
}

impl SolveOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            SolveOutcome::Solved(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("no applicable action at step {at}")]
    DeadEnd { at: usize },
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

/// Breadth-first search from the initial state. A returned plan is minimal
/// in length; `Unsolvable` means the whole reachable space was enumerated
/// without meeting the goal.
pub fn solve(domain: &Domain, problem: &Problem, limits: &SearchLimits) -> Result<SolveOutcome, PddlError> {
    let start = Instant::now();
    let actions = ground(domain, &problem.objects)?;
    if satisfies_goal(&problem.init, &problem.goal) {
        return Ok(SolveOutcome::Solved(Plan::empty()));
    }

    let mut states: Vec<State> = vec![problem.init.clone()];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None];
    let mut depth: Vec<usize> = vec![0];
    let mut seen: HashMap<State, usize> = HashMap::new();
    seen.insert(problem.init.clone(), 0);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);
    let mut stats = SearchStats::default();

    while let Some(si) = queue.pop_front() {
        if depth[si] >= limits.max_plan_length {
            continue;
        }
        stats.expanded += 1;
        if stats.expanded > limits.max_expanded_states || start.elapsed() > limits.timeout {
            stats.elapsed = start.elapsed();
            return Ok(SolveOutcome::LimitExceeded(stats));
        }
        for (ai, action) in actions.iter().enumerate() {
            if !applicable(&states[si], action) {
                continue;
            }
            let next = apply_unchecked(&states[si], action);
            if seen.contains_key(&next) {
                continue;
            }
            stats.generated += 1;
            let ni = states.len();
            seen.insert(next.clone(), ni);
            states.push(next);
            parent.push(Some((si, ai)));
            depth.push(depth[si] + 1);
            if satisfies_goal(&states[ni], &problem.goal) {
                let mut rev = Vec::new();
                let mut cur = ni;
                while let Some((prev, act)) = parent[cur] {
                    rev.push(actions[act].clone());
                    cur = prev;
                }
                rev.reverse();
                return Ok(SolveOutcome::Solved(Plan::new(rev)));
            }
            queue.push_back(ni);
        }
    }
    Ok(SolveOutcome::Unsolvable)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReachError {
    #[error("state cap {0} exceeded while enumerating reachable states")]
    LimitExceeded(usize),
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

const REACHABLE_CAP: usize = 1_000_000;

/// All states reachable from the initial state in at most `bound` steps
/// (the initial state included).
pub fn reachable_states(
    domain: &Domain,
    problem: &Problem,
    bound: usize,
) -> Result<BTreeSet<State>, ReachError> {
    let actions = ground(domain, &problem.objects)?;
    let mut out: BTreeSet<State> = BTreeSet::new();
    out.insert(problem.init.clone());
    let mut frontier: Vec<State> = vec![problem.init.clone()];
    for _ in 0..bound {
        let mut next_frontier = Vec::new();
        for s in &frontier {
            for action in &actions {
                if !applicable(s, action) {
                    continue;
                }
                let next = apply_unchecked(s, action);
                if out.insert(next.clone()) {
                    if out.len() > REACHABLE_CAP {
                        return Err(ReachError::LimitExceeded(REACHABLE_CAP));
                    }
                    next_frontier.push(next);
                }
            }
        }
        if next_frontier.is_empty() {
            break;
        }
        frontier = next_frontier;
    }
    Ok(out)
}

/// A seeded random applicable-action walk of exactly `length` steps. Every
/// prefix executes from the initial state; the goal is ignored.
pub fn random_walk(
    domain: &Domain,
    problem: &Problem,
    length: usize,
    seed: u64,
) -> Result<Plan, WalkError> {
    let actions = ground(domain, &problem.objects).map_err(WalkError::Pddl)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = problem.init.clone();
    let mut picked: Vec<GroundAction> = Vec::with_capacity(length);
    for at in 0..length {
        let options: Vec<&GroundAction> = actions.iter().filter(|a| applicable(&s, a)).collect();
        if options.is_empty() {
            return Err(WalkError::DeadEnd { at });
        }
        let choice = options[rng.gen_range(0..options.len())];
        s = apply_unchecked(&s, choice);
        picked.push(choice.clone());
    }
    Ok(Plan::new(picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_domain, parse_problem, print_plan};
    use crate::validator::validate_plan;

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
  (:action put-down
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (ontable ?x)))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y)))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty)) (not (on ?x ?y)))))
"#;

    fn two_blocks(goal: &str) -> (Domain, Problem) {
        let d = parse_domain(BW).unwrap();
        let p = parse_problem(
            &format!(
                r#"(define (problem bw-2) (:domain blocksworld)
                   (:objects a b - block)
                   (:init (ontable a) (ontable b) (clear a) (clear b) (handempty))
                   (:goal (and {goal})))"#
            ),
            &d,
        )
        .unwrap();
        (d, p)
    }

    #[test]
    fn solves_two_block_stack() {
        let (d, p) = two_blocks("(on b a)");
        let out = solve(&d, &p, &SearchLimits::default()).unwrap();
        let plan = out.plan().expect("solvable");
        assert_eq!(print_plan(plan), "(pick-up b)\n(stack b a)\n");
        assert!(validate_plan(&d, &p, plan).valid);
    }

    #[test]
    fn satisfied_goal_gives_empty_plan() {
        let (d, p) = two_blocks("(handempty)");
        let out = solve(&d, &p, &SearchLimits::default()).unwrap();
        assert_eq!(out.plan().unwrap().len(), 0);
    }

    #[test]
    fn unreachable_goal_is_unsolvable() {
        let (d, p) = two_blocks("(on a a)");
        let out = solve(&d, &p, &SearchLimits::default()).unwrap();
        assert_eq!(out, SolveOutcome::Unsolvable);
    }

    #[test]
    fn limit_exceeded_reports_stats() {
        let (d, p) = two_blocks("(on a a)");
        let limits = SearchLimits {
            max_expanded_states: 1,
            ..SearchLimits::default()
        };
        match solve(&d, &p, &limits).unwrap() {
            SolveOutcome::LimitExceeded(stats) => assert!(stats.expanded >= 1),
            other => panic!("expected LimitExceeded, got {other:?}"),
        }
    }

    #[test]
    fn reachable_one_block() {
        let d = parse_domain(BW).unwrap();
        let p = parse_problem(
            r#"(define (problem bw-1) (:domain blocksworld)
               (:objects a - block)
               (:init (ontable a) (clear a) (handempty))
               (:goal (and)))"#,
            &d,
        )
        .unwrap();
        // Hand enumeration: on the table or in hand.
        let all = reachable_states(&d, &p, 50).unwrap();
        assert_eq!(all.len(), 2);
        let bound0 = reachable_states(&d, &p, 0).unwrap();
        assert_eq!(bound0, [p.init.clone()].into_iter().collect());
    }

    #[test]
    fn reachable_two_blocks_matches_hand_enumeration() {
        use crate::pddl::Atom;
        let (d, p) = two_blocks("(on a b)");
        // Direct enumeration of the physical configurations of two blocks:
        // both on the table, one held, or one stacked on the other.
        let st = |atoms: &[&str]| -> State { atoms.iter().map(|s| s.parse::<Atom>().unwrap()).collect() };
        let expect: BTreeSet<State> = [
            st(&["(ontable a)", "(ontable b)", "(clear a)", "(clear b)", "(handempty)"]),
            st(&["(holding a)", "(ontable b)", "(clear b)"]),
            st(&["(holding b)", "(ontable a)", "(clear a)"]),
            st(&["(on a b)", "(ontable b)", "(clear a)", "(handempty)"]),
            st(&["(on b a)", "(ontable a)", "(clear b)", "(handempty)"]),
        ]
        .into_iter()
        .collect();
        let all = reachable_states(&d, &p, 50).unwrap();
        assert_eq!(all, expect);
    }

    #[test]
    fn random_walk_deterministic_and_applicable() {
        let (d, p) = two_blocks("(on a b)");
        let w1 = random_walk(&d, &p, 6, 7).unwrap();
        let w2 = random_walk(&d, &p, 6, 7).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(w1.len(), 6);
        // Every prefix executes; only the goal check may fail.
        let mut relaxed = p.clone();
        relaxed.goal.clear();
        assert!(validate_plan(&d, &relaxed, &w1).valid);
        assert_eq!(random_walk(&d, &p, 0, 1).unwrap().len(), 0);
    }
}
