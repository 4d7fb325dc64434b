//! Evaluation domains, instance generators, plan corruption, and dataset
//! assembly.
//!
//! Three canned domains are provided: the classical Blocksworld, a Mystery
//! variant with all predicate, action, and object names bijectively renamed
//! to meaningless tokens, and the standard typed Logistics domain. Problem
//! instances are generated so they are solvable by construction: the goal is
//! the projection of a state reached by a seeded random walk from the
//! initial state.
//!
//! Valid plans can be corrupted four ways, each landing in a distinct spot
//! of the validator's taxonomy:
//!
//! - `precondition_unsatisfied` — swap two actions or insert one that is not
//!   applicable at its position (plan-level artifact);
//! - `effect_misapplied` — mis-state one of the action's own effect atoms in
//!   a claimed trace state (trace-level artifact);
//! - `frame_violation` — toggle an atom the action does not touch in a
//!   claimed trace state (trace-level artifact);
//! - `goal_not_reached` — truncate the plan before goal achievement.
//!
//! The first two trace corruptions exist because a bare action sequence
//! cannot misapply effects; only claimed states can. Everything is
//! deterministic per seed. Dataset files are UTF-8 JSONL, one record per
//! line, schema version `v1`.

use crate::pddl::{
    apply, ground, satisfies_goal, Atom, Domain, GroundAction, PddlError, Plan, Problem, State,
    TypedName,
};
use crate::planner::{random_walk, solve, SearchLimits, SolveOutcome, WalkError};
use crate::text::{parse_domain, print_domain, print_plan, print_problem};
use crate::trace::{render_trace, trace_from_plan, CotTrace};
use crate::validator::{
    classify_error, render_feedback, validate_plan, validate_trace, ErrorClass, FeedbackMode,
    PlanVerdict, StepVerdict,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// Schema version stamped into every dataset record.
pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("cannot corrupt plan as {kind}: {reason}")]
    Uncorruptible { kind: CorruptionKind, reason: String },
    #[error("generation failed for {id}: {reason}")]
    Generation { id: String, reason: String },
    #[error("bad specification: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

// ── canned domains ──────────────────────────────────────────────────────

const BLOCKSWORLD_PDDL: &str = r#"(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block - object)
  (:predicates
    (on ?x - block ?y - block)
    (ontable ?x - block)
    (clear ?x - block)
    (handempty)
    (holding ?x - block))
  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (holding ?x) (not (clear ?x)) (not (ontable ?x)) (not (handempty))))
  (:action put-down
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (clear ?x) (ontable ?x) (handempty) (not (holding ?x))))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (on ?x ?y) (clear ?x) (handempty) (not (holding ?x)) (not (clear ?y))))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (on ?x ?y)) (not (clear ?x)) (not (handempty)))))
"#;

const LOGISTICS_PDDL: &str = r#"(define (domain logistics)
  (:requirements :strips :typing)
  (:types city location package truck airplane - object airport - location)
  (:predicates
    (at ?o - object ?l - location)
    (in ?p - package ?v - object)
    (in-city ?l - location ?c - city))
  (:action load-truck
    :parameters (?p - package ?t - truck ?l - location)
    :precondition (and (at ?t ?l) (at ?p ?l))
    :effect (and (in ?p ?t) (not (at ?p ?l))))
  (:action unload-truck
    :parameters (?p - package ?t - truck ?l - location)
    :precondition (and (at ?t ?l) (in ?p ?t))
    :effect (and (at ?p ?l) (not (in ?p ?t))))
  (:action drive-truck
    :parameters (?t - truck ?from - location ?to - location ?c - city)
    :precondition (and (at ?t ?from) (in-city ?from ?c) (in-city ?to ?c))
    :effect (and (at ?t ?to) (not (at ?t ?from))))
  (:action load-airplane
    :parameters (?p - package ?a - airplane ?l - airport)
    :precondition (and (at ?a ?l) (at ?p ?l))
    :effect (and (in ?p ?a) (not (at ?p ?l))))
  (:action unload-airplane
    :parameters (?p - package ?a - airplane ?l - airport)
    :precondition (and (at ?a ?l) (in ?p ?a))
    :effect (and (at ?p ?l) (not (in ?p ?a))))
  (:action fly-airplane
    :parameters (?a - airplane ?from - airport ?to - airport)
    :precondition (at ?a ?from)
    :effect (and (at ?a ?to) (not (at ?a ?from)))))
"#;

/// The classical four-action Blocksworld.
pub fn blocksworld_domain() -> Domain {
    parse_domain(BLOCKSWORLD_PDDL).expect("canned blocksworld parses")
}

/// The standard typed Logistics domain: trucks move within a city, airplanes
/// between airports.
pub fn logistics_domain() -> Domain {
    parse_domain(LOGISTICS_PDDL).expect("canned logistics parses")
}

/// The three evaluation domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Blocksworld,
    MysteryBlocksworld,
    Logistics,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::Blocksworld => "blocksworld",
            DomainKind::MysteryBlocksworld => "mystery-blocksworld",
            DomainKind::Logistics => "logistics",
        };
        f.write_str(s)
    }
}

// ── instance generation ─────────────────────────────────────────────────

/// Size parameters for the plain generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemParams {
    Blocksworld {
        blocks: usize,
    },
    Logistics {
        cities: usize,
        locations_per_city: usize,
        packages: usize,
        trucks: usize,
        airplanes: usize,
    },
}

/// A domain kind together with its size, enough to generate an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKind {
    Blocksworld {
        blocks: usize,
    },
    MysteryBlocksworld {
        blocks: usize,
    },
    Logistics {
        cities: usize,
        locations_per_city: usize,
        packages: usize,
        trucks: usize,
        airplanes: usize,
    },
}

impl InstanceKind {
    pub fn domain_kind(&self) -> DomainKind {
        match self {
            InstanceKind::Blocksworld { .. } => DomainKind::Blocksworld,
            InstanceKind::MysteryBlocksworld { .. } => DomainKind::MysteryBlocksworld,
            InstanceKind::Logistics { .. } => DomainKind::Logistics,
        }
    }
}

/// A ready-to-use problem with its domain and a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningInstance {
    pub id: String,
    pub kind: DomainKind,
    pub domain: Domain,
    pub problem: Problem,
}

fn blocksworld_arrangement(rng: &mut ChaCha8Rng, names: &[String]) -> State {
    let mut order: Vec<&String> = names.iter().collect();
    order.shuffle(rng);
    let mut towers: Vec<Vec<&String>> = Vec::new();
    for block in order {
        let slot = rng.gen_range(0..=towers.len());
        if slot == towers.len() {
            towers.push(vec![block]);
        } else {
            towers[slot].push(block);
        }
    }
    let mut state = State::new();
    state.insert(Atom::new("handempty", &[] as &[&str]));
    for tower in &towers {
        state.insert(Atom::new("ontable", &[tower[0].as_str()]));
        for pair in tower.windows(2) {
            state.insert(Atom::new("on", &[pair[1].as_str(), pair[0].as_str()]));
        }
        state.insert(Atom::new("clear", &[tower.last().unwrap().as_str()]));
    }
    state
}

/// Simulates `plan` from `init`; the plan must be applicable in sequence.
fn replay(init: &State, plan: &Plan) -> State {
    let mut s = init.clone();
    for a in plan.iter() {
        s = apply(&s, a).expect("walk plans are applicable");
    }
    s
}

/// Projects the goal-relevant atoms of a state: block positions for
/// Blocksworld, package locations for Logistics.
fn project_goal(domain_kind: DomainKind, s: &State) -> BTreeSet<Atom> {
    let keep: &[&str] = match domain_kind {
        DomainKind::Blocksworld | DomainKind::MysteryBlocksworld => &["on", "ontable"],
        DomainKind::Logistics => &["at"],
    };
    s.iter()
        .filter(|a| keep.contains(&a.predicate()))
        .filter(|a| {
            // Logistics: only package positions make useful goals.
            domain_kind != DomainKind::Logistics || a.args()[0].starts_with('p')
        })
        .cloned()
        .collect()
}

/// Draws a goal from the reachable space: walk randomly, project the final
/// state, retry with longer walks while the projection is trivial (already
/// satisfied by the initial state).
fn walk_goal(
    domain: &Domain,
    base: &Problem,
    kind: DomainKind,
    base_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeSet<Atom>, DatagenError> {
    let mut last = BTreeSet::new();
    for attempt in 0..32u64 {
        let len = base_len * (attempt as usize + 1);
        let plan = random_walk(domain, base, len, rng.gen())?;
        let end = replay(&base.init, &plan);
        let goal = project_goal(kind, &end);
        if !goal.is_empty() && !satisfies_goal(&base.init, &goal) {
            return Ok(goal);
        }
        last = goal;
    }
    // Degenerate sizes (e.g. one block) admit only trivial goals.
    Ok(last)
}

/// Generates a solvable problem for the given sizes, deterministic per seed.
pub fn gen_problem(params: &ProblemParams, seed: u64) -> Result<Problem, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match params {
        ProblemParams::Blocksworld { blocks } => {
            assert!(*blocks >= 1, "need at least one block");
            let domain = blocksworld_domain();
            let names: Vec<String> = (1..=*blocks).map(|i| format!("b{i}")).collect();
            let objects: Vec<TypedName> =
                names.iter().map(|n| TypedName::new(n, "block")).collect();
            let init = blocksworld_arrangement(&mut rng, &names);
            let name = format!("bw-{blocks}-{seed:08x}");
            let base = Problem::new(&domain, &name, objects, init, BTreeSet::new())?;
            let goal = walk_goal(&domain, &base, DomainKind::Blocksworld, 2 * blocks + 2, &mut rng)?;
            Ok(Problem { goal, ..base })
        }
        ProblemParams::Logistics {
            cities,
            locations_per_city,
            packages,
            trucks,
            airplanes,
        } => {
            assert!(
                *cities >= 1 && *locations_per_city >= 1 && *packages >= 1 && *trucks >= 1 && *airplanes >= 1,
                "all logistics sizes must be positive"
            );
            let domain = logistics_domain();
            let mut objects = Vec::new();
            let mut locations: Vec<Vec<String>> = Vec::new(); // per city
            for c in 1..=*cities {
                objects.push(TypedName::new(&format!("c{c}"), "city"));
                let mut locs = Vec::new();
                // The first location of each city is its airport.
                let ap = format!("ap{c}");
                objects.push(TypedName::new(&ap, "airport"));
                locs.push(ap);
                for l in 1..*locations_per_city {
                    let name = format!("l{c}-{l}");
                    objects.push(TypedName::new(&name, "location"));
                    locs.push(name);
                }
                locations.push(locs);
            }
            let mut init = State::new();
            for (ci, locs) in locations.iter().enumerate() {
                let city = format!("c{}", ci + 1);
                for l in locs {
                    init.insert(Atom::new("in-city", &[l.as_str(), city.as_str()]));
                }
            }
            for t in 1..=*trucks {
                let name = format!("t{t}");
                objects.push(TypedName::new(&name, "truck"));
                let city = &locations[(t - 1) % *cities];
                let loc = &city[rng.gen_range(0..city.len())];
                init.insert(Atom::new("at", &[name.as_str(), loc.as_str()]));
            }
            for a in 1..=*airplanes {
                let name = format!("a{a}");
                objects.push(TypedName::new(&name, "airplane"));
                let ap = format!("ap{}", rng.gen_range(0..*cities) + 1);
                init.insert(Atom::new("at", &[name.as_str(), ap.as_str()]));
            }
            for p in 1..=*packages {
                let name = format!("p{p}");
                objects.push(TypedName::new(&name, "package"));
                let city = &locations[rng.gen_range(0..*cities)];
                let loc = &city[rng.gen_range(0..city.len())];
                init.insert(Atom::new("at", &[name.as_str(), loc.as_str()]));
            }
            let name = format!("log-{cities}-{packages}-{seed:08x}");
            let base = Problem::new(&domain, &name, objects, init, BTreeSet::new())?;
            let goal = walk_goal(&domain, &base, DomainKind::Logistics, 4 * packages + 4, &mut rng)?;
            Ok(Problem { goal, ..base })
        }
    }
}

/// Generates a full instance; the Mystery variant is Blocksworld run through
/// [`obfuscate`] with a seed derived from the instance seed.
pub fn gen_instance(kind: &InstanceKind, seed: u64) -> Result<PlanningInstance, DatagenError> {
    match kind {
        InstanceKind::Blocksworld { blocks } => {
            let problem = gen_problem(&ProblemParams::Blocksworld { blocks: *blocks }, seed)?;
            Ok(PlanningInstance {
                id: problem.name.clone(),
                kind: DomainKind::Blocksworld,
                domain: blocksworld_domain(),
                problem,
            })
        }
        InstanceKind::MysteryBlocksworld { blocks } => {
            let problem = gen_problem(&ProblemParams::Blocksworld { blocks: *blocks }, seed)?;
            let domain = blocksworld_domain();
            let (domain, problem, _) = obfuscate(&domain, &problem, seed ^ 0x9e37_79b9_7f4a_7c15);
            Ok(PlanningInstance {
                id: format!("m{}", problem.name),
                kind: DomainKind::MysteryBlocksworld,
                domain,
                problem,
            })
        }
        InstanceKind::Logistics {
            cities,
            locations_per_city,
            packages,
            trucks,
            airplanes,
        } => {
            let problem = gen_problem(
                &ProblemParams::Logistics {
                    cities: *cities,
                    locations_per_city: *locations_per_city,
                    packages: *packages,
                    trucks: *trucks,
                    airplanes: *airplanes,
                },
                seed,
            )?;
            Ok(PlanningInstance {
                id: problem.name.clone(),
                kind: DomainKind::Logistics,
                domain: logistics_domain(),
                problem,
            })
        }
    }
}

/// Generates `count` instances spread round-robin over `kinds`, with
/// per-instance seeds drawn from one master stream.
pub fn gen_instances(
    kinds: &[InstanceKind],
    count: usize,
    seed: u64,
) -> Result<Vec<PlanningInstance>, DatagenError> {
    if kinds.is_empty() {
        return Err(DatagenError::BadSpec("no domain kinds given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(gen_instance(&kinds[i % kinds.len()], rng.gen())?);
    }
    Ok(out)
}

// ── obfuscation ─────────────────────────────────────────────────────────

/// A bijective renaming of predicate, action, and object names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Renaming {
    pub predicates: BTreeMap<String, String>,
    pub actions: BTreeMap<String, String>,
    pub objects: BTreeMap<String, String>,
}

impl Renaming {
    fn map<'a>(table: &'a BTreeMap<String, String>, name: &'a str) -> &'a str {
        table.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn rename_atom(&self, atom: &Atom) -> Atom {
        let args: Vec<&str> = atom
            .args()
            .iter()
            .map(|a| Self::map(&self.objects, a))
            .collect();
        Atom::new(Self::map(&self.predicates, atom.predicate()), &args)
    }

    pub fn rename_state(&self, s: &State) -> State {
        s.iter().map(|a| self.rename_atom(a)).collect()
    }

    pub fn rename_domain(&self, d: &Domain) -> Domain {
        let mut out = d.clone();
        for p in &mut out.predicates {
            p.name = Self::map(&self.predicates, &p.name).to_string();
        }
        for a in &mut out.actions {
            a.name = Self::map(&self.actions, &a.name).to_string();
            for set in [&mut a.pre, &mut a.add, &mut a.del] {
                *set = set
                    .iter()
                    .map(|l| {
                        let mut l = l.clone();
                        l.predicate = Self::map(&self.predicates, &l.predicate).to_string();
                        l
                    })
                    .collect();
            }
        }
        out
    }

    pub fn rename_problem(&self, p: &Problem) -> Problem {
        let mut out = p.clone();
        for o in &mut out.objects {
            o.name = Self::map(&self.objects, &o.name).to_string();
        }
        out.init = self.rename_state(&p.init);
        out.goal = p.goal.iter().map(|a| self.rename_atom(a)).collect();
        out
    }

    pub fn rename_ground_action(&self, a: &GroundAction) -> GroundAction {
        GroundAction {
            name: Self::map(&self.actions, &a.name).to_string(),
            args: a
                .args
                .iter()
                .map(|o| Self::map(&self.objects, o).to_string())
                .collect(),
            pre: a.pre.iter().map(|x| self.rename_atom(x)).collect(),
            add: a.add.iter().map(|x| self.rename_atom(x)).collect(),
            del: a.del.iter().map(|x| self.rename_atom(x)).collect(),
        }
    }

    pub fn rename_plan(&self, plan: &Plan) -> Plan {
        Plan::new(plan.iter().map(|a| self.rename_ground_action(a)).collect())
    }

    pub fn rename_trace(&self, t: &CotTrace) -> CotTrace {
        let mut out = t.clone();
        for step in &mut out.steps {
            step.s_prev = self.rename_state(&step.s_prev);
            step.s_next = self.rename_state(&step.s_next);
            step.action = self.rename_ground_action(&step.action);
        }
        out
    }
}

fn shuffled_tokens(prefix: &str, names: &[&String], rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    let mut indices: Vec<usize> = (0..names.len()).collect();
    indices.shuffle(rng);
    names
        .iter()
        .zip(indices)
        .map(|(n, i)| ((*n).clone(), format!("{prefix}-{i}")))
        .collect()
}

/// Renames every predicate, action, and object to meaningless `pred-k` /
/// `act-k` / `obj-k` tokens under a seeded shuffle. Structure — arities,
/// types, schema shapes — is untouched, so any verdict is invariant under
/// the renaming.
pub fn obfuscate(d: &Domain, p: &Problem, seed: u64) -> (Domain, Problem, Renaming) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds: Vec<&String> = d.predicates.iter().map(|x| &x.name).collect();
    let acts: Vec<&String> = d.actions.iter().map(|x| &x.name).collect();
    let objs: Vec<&String> = p.objects.iter().map(|x| &x.name).collect();
    let renaming = Renaming {
        predicates: shuffled_tokens("pred", &preds, &mut rng),
        actions: shuffled_tokens("act", &acts, &mut rng),
        objects: shuffled_tokens("obj", &objs, &mut rng),
    };
    (
        renaming.rename_domain(d),
        renaming.rename_problem(p),
        renaming,
    )
}

// ── plan corruption ─────────────────────────────────────────────────────

/// The four ways a correct plan is turned into teaching material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    PreconditionUnsatisfied,
    EffectMisapplied,
    FrameViolation,
    GoalNotReached,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [
        CorruptionKind::PreconditionUnsatisfied,
        CorruptionKind::EffectMisapplied,
        CorruptionKind::FrameViolation,
        CorruptionKind::GoalNotReached,
    ];

    /// The error class the validator assigns to this corruption.
    pub fn expected_class(&self) -> ErrorClass {
        match self {
            CorruptionKind::PreconditionUnsatisfied => ErrorClass::PreconditionViolation,
            CorruptionKind::EffectMisapplied | CorruptionKind::FrameViolation => {
                ErrorClass::IncorrectEffect
            }
            CorruptionKind::GoalNotReached => ErrorClass::GoalNotAchieved,
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorruptionKind::PreconditionUnsatisfied => "precondition_unsatisfied",
            CorruptionKind::EffectMisapplied => "effect_misapplied",
            CorruptionKind::FrameViolation => "frame_violation",
            CorruptionKind::GoalNotReached => "goal_not_reached",
        };
        f.write_str(s)
    }
}

/// Plan-level corruptions return a plan; the two effect corruptions return
/// an invalid trace over a valid action sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum CorruptedArtifact {
    Plan(Plan),
    Trace(CotTrace),
}

impl CorruptedArtifact {
    /// Validates the artifact with whichever validator fits it.
    pub fn validate(&self, d: &Domain, p: &Problem) -> PlanVerdict {
        match self {
            CorruptedArtifact::Plan(plan) => validate_plan(d, p, plan),
            CorruptedArtifact::Trace(t) => validate_trace(d, p, t),
        }
    }
}

/// The simulated state before each step (index 0 = the initial state,
/// length = plan length + 1).
fn prefix_states(init: &State, plan: &Plan) -> Vec<State> {
    let mut out = vec![init.clone()];
    for a in plan.iter() {
        out.push(apply(out.last().unwrap(), a).expect("plan is valid"));
    }
    out
}

fn uncorruptible(kind: CorruptionKind, reason: &str) -> DatagenError {
    DatagenError::Uncorruptible {
        kind,
        reason: reason.to_string(),
    }
}

/// Mutates a valid plan into the requested failure kind; deterministic per
/// seed. See the module docs for what each kind produces.
pub fn corrupt_plan(
    d: &Domain,
    p: &Problem,
    plan: &Plan,
    kind: CorruptionKind,
    seed: u64,
) -> Result<CorruptedArtifact, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        CorruptionKind::PreconditionUnsatisfied => {
            // Prefer a swap when one works; fall back to inserting an action
            // that is inapplicable at its position.
            let mut swaps = Vec::new();
            for i in 0..plan.len() {
                for j in i + 1..plan.len() {
                    if plan.actions[i] == plan.actions[j] {
                        continue;
                    }
                    let mut cand = plan.clone();
                    cand.actions.swap(i, j);
                    let v = validate_plan(d, p, &cand);
                    if !v.valid && classify_error(&v).unwrap() == ErrorClass::PreconditionViolation
                    {
                        swaps.push(cand);
                    }
                }
            }
            if !swaps.is_empty() && rng.gen_bool(0.5) {
                return Ok(CorruptedArtifact::Plan(
                    swaps[rng.gen_range(0..swaps.len())].clone(),
                ));
            }
            let states = prefix_states(&p.init, plan);
            let all = ground(d, &p.objects)?;
            let mut inserts = Vec::new();
            for (pos, s) in states.iter().enumerate() {
                for (ai, a) in all.iter().enumerate() {
                    if !crate::pddl::applicable(s, a) {
                        inserts.push((pos, ai));
                    }
                }
            }
            if !inserts.is_empty() {
                let (pos, ai) = inserts[rng.gen_range(0..inserts.len())];
                let mut actions = plan.actions.clone();
                actions.insert(pos, all[ai].clone());
                return Ok(CorruptedArtifact::Plan(Plan::new(actions)));
            }
            if let Some(cand) = swaps.first() {
                return Ok(CorruptedArtifact::Plan(cand.clone()));
            }
            Err(uncorruptible(kind, "every ground action is applicable everywhere"))
        }
        CorruptionKind::EffectMisapplied => {
            let mut trace = trace_from_plan(&p.init, plan)?;
            let mut candidates = Vec::new();
            for (i, step) in trace.steps.iter().enumerate() {
                for atom in step.action.add.iter().chain(&step.action.del) {
                    candidates.push((i, atom.clone()));
                }
            }
            if candidates.is_empty() {
                return Err(uncorruptible(kind, "plan has no effects to misapply"));
            }
            let (i, atom) = candidates[rng.gen_range(0..candidates.len())].clone();
            toggle(&mut trace.steps[i].s_next, &atom);
            Ok(CorruptedArtifact::Trace(trace))
        }
        CorruptionKind::FrameViolation => {
            let mut trace = trace_from_plan(&p.init, plan)?;
            if trace.is_empty() {
                return Err(uncorruptible(kind, "empty plan has no trace steps"));
            }
            let universe = crate::pddl::ground_atoms(d, &p.objects)?;
            let mut candidates = Vec::new();
            for (i, step) in trace.steps.iter().enumerate() {
                let touched: BTreeSet<&Atom> = step.action.add.iter().chain(&step.action.del).collect();
                for atom in &universe {
                    if !touched.contains(atom) {
                        candidates.push((i, atom.clone()));
                    }
                }
            }
            if candidates.is_empty() {
                return Err(uncorruptible(kind, "every atom is touched by its action"));
            }
            let (i, atom) = candidates[rng.gen_range(0..candidates.len())].clone();
            toggle(&mut trace.steps[i].s_next, &atom);
            Ok(CorruptedArtifact::Trace(trace))
        }
        CorruptionKind::GoalNotReached => {
            let states = prefix_states(&p.init, plan);
            let candidates: Vec<usize> = (0..plan.len())
                .filter(|&l| !satisfies_goal(&states[l], &p.goal))
                .collect();
            if candidates.is_empty() {
                return Err(uncorruptible(
                    kind,
                    "no truncation misses the goal (plan may be empty)",
                ));
            }
            let keep = candidates[rng.gen_range(0..candidates.len())];
            Ok(CorruptedArtifact::Plan(Plan::new(
                plan.actions[..keep].to_vec(),
            )))
        }
    }
}

fn toggle(state: &mut State, atom: &Atom) {
    if state.contains(atom) {
        state.remove(atom);
    } else {
        state.insert(atom.clone());
    }
}

// ── phase-1 records ─────────────────────────────────────────────────────

/// Labels for phase-1 instruction examples: one correct class plus the four
/// corruption kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase1Label {
    Correct,
    PreconditionUnsatisfied,
    EffectMisapplied,
    FrameViolation,
    GoalNotReached,
}

impl Phase1Label {
    pub const ALL: [Phase1Label; 5] = [
        Phase1Label::Correct,
        Phase1Label::PreconditionUnsatisfied,
        Phase1Label::EffectMisapplied,
        Phase1Label::FrameViolation,
        Phase1Label::GoalNotReached,
    ];

    pub fn corruption(&self) -> Option<CorruptionKind> {
        match self {
            Phase1Label::Correct => None,
            Phase1Label::PreconditionUnsatisfied => Some(CorruptionKind::PreconditionUnsatisfied),
            Phase1Label::EffectMisapplied => Some(CorruptionKind::EffectMisapplied),
            Phase1Label::FrameViolation => Some(CorruptionKind::FrameViolation),
            Phase1Label::GoalNotReached => Some(CorruptionKind::GoalNotReached),
        }
    }
}

/// One phase-1 example: PDDL payloads as text, a label, and the detailed
/// feedback explaining it. The two trace-level corruptions carry the
/// corrupted trace alongside the underlying valid plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Record {
    pub schema_version: String,
    pub id: String,
    pub problem_id: String,
    pub domain_kind: DomainKind,
    pub label: Phase1Label,
    pub domain: String,
    pub problem: String,
    pub plan: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    pub explanation: String,
}

/// Proportions over the five labels; must sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMix {
    pub correct: f64,
    pub precondition_unsatisfied: f64,
    pub effect_misapplied: f64,
    pub frame_violation: f64,
    pub goal_not_reached: f64,
}

impl Default for LabelMix {
    fn default() -> Self {
        LabelMix {
            correct: 0.5,
            precondition_unsatisfied: 0.125,
            effect_misapplied: 0.125,
            frame_violation: 0.125,
            goal_not_reached: 0.125,
        }
    }
}

impl LabelMix {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.correct,
            self.precondition_unsatisfied,
            self.effect_misapplied,
            self.frame_violation,
            self.goal_not_reached,
        ]
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let arr = self.as_array();
        if arr.iter().any(|&x| x < 0.0) {
            return Err(DatagenError::BadSpec("mix proportions must be nonnegative".into()));
        }
        let sum: f64 = arr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatagenError::BadSpec(format!(
                "mix proportions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Splits `total` into integer counts proportional to `ratios`: floors
/// first, then leftovers go to the largest ratios (ties by position).
pub fn apportion(total: usize, ratios: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = ratios.iter().map(|r| (r * total as f64).floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| ratios[b].partial_cmp(&ratios[a]).unwrap().then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Generates `count` phase-1 records spread round-robin over `kinds`, with
/// the label histogram fixed by `mix` (exact apportioning). Every record is
/// re-validated before emission: a corrupted artifact must classify as its
/// label's class.
pub fn make_phase1_dataset(
    kinds: &[InstanceKind],
    count: usize,
    mix: &LabelMix,
    seed: u64,
) -> Result<Vec<Phase1Record>, DatagenError> {
    mix.validate()?;
    if kinds.is_empty() {
        return Err(DatagenError::BadSpec("no domain kinds given".into()));
    }
    let counts = apportion(count, &mix.as_array());
    let mut labels = Vec::with_capacity(count);
    for (label, &n) in Phase1Label::ALL.iter().zip(&counts) {
        labels.extend(std::iter::repeat_n(*label, n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);

    let limits = SearchLimits::default();
    let mut out = Vec::with_capacity(count);
    for (i, label) in labels.into_iter().enumerate() {
        let kind = &kinds[i % kinds.len()];
        let record = gen_phase1_record(kind, label, i, &limits, &mut rng)?;
        out.push(record);
    }
    Ok(out)
}

fn gen_phase1_record(
    kind: &InstanceKind,
    label: Phase1Label,
    index: usize,
    limits: &SearchLimits,
    rng: &mut ChaCha8Rng,
) -> Result<Phase1Record, DatagenError> {
    for _attempt in 0..64 {
        let inst = gen_instance(kind, rng.gen())?;
        let plan = match solve(&inst.domain, &inst.problem, limits)? {
            SolveOutcome::Solved(p) => p,
            _ => continue,
        };
        // Corruptions need a step to mangle.
        if plan.is_empty() && label != Phase1Label::Correct {
            continue;
        }
        let artifact = match label.corruption() {
            None => CorruptedArtifact::Plan(plan.clone()),
            Some(c) => match corrupt_plan(&inst.domain, &inst.problem, &plan, c, rng.gen()) {
                Ok(a) => a,
                Err(DatagenError::Uncorruptible { .. }) => continue,
                Err(e) => return Err(e),
            },
        };
        let verdict = artifact.validate(&inst.domain, &inst.problem);
        let ok = match label {
            Phase1Label::Correct => verdict.valid,
            _ => {
                !verdict.valid
                    && classify_error(&verdict).unwrap()
                        == label.corruption().unwrap().expected_class()
            }
        };
        if !ok {
            continue;
        }
        let explanation = render_feedback(&verdict, FeedbackMode::Detailed).text;
        let (plan_text, trace_text) = match &artifact {
            CorruptedArtifact::Plan(pl) => (print_plan(pl), None),
            CorruptedArtifact::Trace(t) => (print_plan(&plan), Some(render_trace(t))),
        };
        return Ok(Phase1Record {
            schema_version: SCHEMA_VERSION.to_string(),
            id: format!("{}-{index:04}", inst.kind),
            problem_id: inst.id.clone(),
            domain_kind: inst.kind,
            label,
            domain: print_domain(&inst.domain),
            problem: print_problem(&inst.problem),
            plan: plan_text,
            trace: trace_text,
            explanation,
        });
    }
    Err(DatagenError::Generation {
        id: format!("{kind:?}-{index}"),
        reason: format!("could not realize label {label:?} after 64 attempts"),
    })
}

// ── loop datasets ───────────────────────────────────────────────────────

/// One state-action-state triplet with its step-level feedback, extracted
/// from a chain-of-thought trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningRecord {
    pub schema_version: String,
    pub problem_id: String,
    pub iteration: u32,
    pub step_index: usize,
    pub s_prev: State,
    pub action: String,
    pub s_claimed: State,
    pub is_final: bool,
    pub feedback: StepVerdict,
}

/// One complete planning attempt with its validity judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub schema_version: String,
    pub problem_id: String,
    pub iteration: u32,
    pub domain: String,
    pub problem: String,
    pub plan: String,
    /// 1 when the validator accepted the attempt, else 0.
    pub valid: u8,
    /// The model's own claim in `[0, 1]`; 0.5 when it claimed nothing.
    pub claimed_validity: f64,
}

/// Step-level feedback for every triplet of `trace`, judged exactly as
/// claimed (each step against its own stated incoming state).
pub fn build_reasoning_records(
    d: &Domain,
    p: &Problem,
    problem_id: &str,
    iteration: u32,
    trace: &CotTrace,
) -> Result<Vec<ReasoningRecord>, PddlError> {
    let mut out = Vec::with_capacity(trace.len());
    for (i, step) in trace.steps.iter().enumerate() {
        let is_final = i + 1 == trace.len();
        let feedback = crate::validator::validate_step(
            d,
            &step.s_prev,
            &step.action,
            &step.s_next,
            Some(&p.goal),
            is_final,
        )?;
        out.push(ReasoningRecord {
            schema_version: SCHEMA_VERSION.to_string(),
            problem_id: problem_id.to_string(),
            iteration,
            step_index: i + 1,
            s_prev: step.s_prev.clone(),
            action: step.action.to_string(),
            s_claimed: step.s_next.clone(),
            is_final,
            feedback,
        });
    }
    Ok(out)
}

/// The plan-level record for one loop attempt. The validity bit judges the
/// extracted action sequence with `validate_plan`, so it is reproducible
/// from the record's stored fields alone; the loop's own continue/stop
/// decision is the stricter trace verdict.
pub fn build_final_record(
    d: &Domain,
    p: &Problem,
    problem_id: &str,
    iteration: u32,
    trace: &CotTrace,
) -> FinalRecord {
    let plan = crate::trace::extract_plan(trace);
    let plan_verdict = validate_plan(d, p, &plan);
    FinalRecord {
        schema_version: SCHEMA_VERSION.to_string(),
        problem_id: problem_id.to_string(),
        iteration,
        domain: print_domain(d),
        problem: print_problem(p),
        plan: print_plan(&plan),
        valid: plan_verdict.valid as u8,
        claimed_validity: trace.claimed_validity().unwrap_or(0.5),
    }
}

/// Assembles reasoning records for a batch of validated traces.
pub fn build_reasoning_dataset(
    items: &[(&PlanningInstance, u32, &CotTrace)],
) -> Result<Vec<ReasoningRecord>, PddlError> {
    let mut out = Vec::new();
    for (inst, iteration, trace) in items {
        out.extend(build_reasoning_records(
            &inst.domain,
            &inst.problem,
            &inst.id,
            *iteration,
            trace,
        )?);
    }
    Ok(out)
}

/// Assembles final records for a batch of traces.
pub fn build_final_dataset(items: &[(&PlanningInstance, u32, &CotTrace)]) -> Vec<FinalRecord> {
    items
        .iter()
        .map(|(inst, iteration, trace)| {
            build_final_record(&inst.domain, &inst.problem, &inst.id, *iteration, trace)
        })
        .collect()
}

// ── splitting ───────────────────────────────────────────────────────────

/// Ratios and seed for the three-way split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub d1: f64,
    pub d2: f64,
    pub d_test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(d1: f64, d2: f64, d_test: f64, seed: u64) -> Result<Self, DatagenError> {
        let s = SplitSpec { d1, d2, d_test, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let arr = [self.d1, self.d2, self.d_test];
        if arr.iter().any(|&x| x <= 0.0) {
            return Err(DatagenError::BadSpec("split ratios must be positive".into()));
        }
        let sum: f64 = arr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatagenError::BadSpec(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Anything attributable to a problem, so splits never leak a problem
/// across partitions.
pub trait ProblemKeyed {
    fn problem_key(&self) -> &str;
}

impl ProblemKeyed for Phase1Record {
    fn problem_key(&self) -> &str {
        &self.problem_id
    }
}

impl ProblemKeyed for ReasoningRecord {
    fn problem_key(&self) -> &str {
        &self.problem_id
    }
}

impl ProblemKeyed for FinalRecord {
    fn problem_key(&self) -> &str {
        &self.problem_id
    }
}

impl ProblemKeyed for PlanningInstance {
    fn problem_key(&self) -> &str {
        &self.id
    }
}

/// The three partitions produced by [`split_dataset`].
pub type Splits<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Deterministic three-way split by problem identity: distinct problem keys
/// are shuffled under the seed and apportioned by the ratios; records follow
/// their problem. Disjoint and exhaustive by construction.
pub fn split_dataset<T: ProblemKeyed + Clone>(
    records: &[T],
    spec: &SplitSpec,
) -> Result<Splits<T>, DatagenError> {
    spec.validate()?;
    let mut keys: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in records {
        if seen.insert(r.problem_key()) {
            keys.push(r.problem_key());
        }
    }
    keys.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    keys.shuffle(&mut rng);
    let counts = apportion(keys.len(), &[spec.d1, spec.d2, spec.d_test]);
    let d1_keys: BTreeSet<&str> = keys[..counts[0]].iter().copied().collect();
    let d2_keys: BTreeSet<&str> = keys[counts[0]..counts[0] + counts[1]].iter().copied().collect();

    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    let mut d_test = Vec::new();
    for r in records {
        if d1_keys.contains(r.problem_key()) {
            d1.push(r.clone());
        } else if d2_keys.contains(r.problem_key()) {
            d2.push(r.clone());
        } else {
            d_test.push(r.clone());
        }
    }
    Ok((d1, d2, d_test))
}

// ── JSONL files ─────────────────────────────────────────────────────────

/// Writes records as newline-delimited JSON, one record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatagenError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Reads newline-delimited JSON records; blank lines are ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatagenError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
