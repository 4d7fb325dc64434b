//! Property tests for the core invariants: transition semantics, the state
//! metric, grounding cardinality, coherence, and split behavior. Random
//! structure comes from seeded generators driven by proptest-chosen seeds,
//! so every failure is reproducible.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use veriplan::datagen::{
    blocksworld_domain, gen_instance, gen_problem, split_dataset, FinalRecord, InstanceKind,
    ProblemParams, SplitSpec, SCHEMA_VERSION,
};
use veriplan::pddl::{
    applicable, apply, apply_unchecked, ground, ground_atoms, state_distance, Atom, GroundAction,
    State,
};
use veriplan::planner::random_walk;
use veriplan::text::{parse_domain, parse_problem, print_domain, print_problem};
use veriplan::trace::{check_coherence, extract_plan, trace_from_plan, Coherence};
use veriplan::validator::{validate_plan, validate_step, ErrorClass, StepStatus};

/// A random subset of the blocksworld fluent universe over 3 blocks.
fn random_state(rng: &mut ChaCha8Rng) -> State {
    let d = blocksworld_domain();
    let p = gen_problem(&ProblemParams::Blocksworld { blocks: 3 }, 1).unwrap();
    let universe = ground_atoms(&d, &p.objects).unwrap();
    universe
        .into_iter()
        .filter(|_| rng.gen_bool(0.4))
        .collect()
}

fn random_atom_set(rng: &mut ChaCha8Rng, bias: f64) -> BTreeSet<Atom> {
    random_state(rng)
        .iter()
        .filter(|_| rng.gen_bool(bias))
        .cloned()
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_distance_is_a_metric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_state(&mut rng);
        let b = random_state(&mut rng);
        let c = random_state(&mut rng);
        prop_assert_eq!(state_distance(&a, &a), 0);
        prop_assert_eq!(state_distance(&a, &b), state_distance(&b, &a));
        prop_assert!(state_distance(&a, &c) <= state_distance(&a, &b) + state_distance(&b, &c));
        // Zero distance only between equal states.
        prop_assert_eq!(state_distance(&a, &b) == 0, a == b);
    }

    #[test]
    fn transition_semantics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng);
        let action = GroundAction {
            name: "synthetic".into(),
            args: vec![],
            pre: BTreeSet::new(),
            add: random_atom_set(&mut rng, 0.5),
            del: random_atom_set(&mut rng, 0.5),
        };
        let out = apply_unchecked(&s, &action);
        // Adds always present afterwards.
        for a in &action.add {
            prop_assert!(out.contains(a));
        }
        // Deletes stay out unless re-added.
        for d in &action.del {
            prop_assert_eq!(out.contains(d), action.add.contains(d));
        }
        // Untouched atoms are unchanged.
        for atom in s.iter().chain(out.iter()) {
            if !action.add.contains(atom) && !action.del.contains(atom) {
                prop_assert_eq!(s.contains(atom), out.contains(atom));
            }
        }
        // Empty effects are the identity.
        let noop = GroundAction {
            name: "noop".into(),
            args: vec![],
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
        };
        prop_assert_eq!(apply(&s, &noop).unwrap(), s.clone());
    }

    #[test]
    fn grounding_cardinality(blocks in 1usize..5) {
        let d = blocksworld_domain();
        let p = gen_problem(&ProblemParams::Blocksworld { blocks }, 3).unwrap();
        let grounded = ground(&d, &p.objects).unwrap();
        let expected: usize = d
            .actions
            .iter()
            .map(|schema| {
                schema
                    .params
                    .iter()
                    .map(|param| {
                        p.objects
                            .iter()
                            .filter(|o| d.types.is_subtype(&o.ty, &param.ty))
                            .count()
                    })
                    .product::<usize>()
            })
            .sum();
        prop_assert_eq!(grounded.len(), expected);
    }

    #[test]
    fn coherent_traces_fail_only_on_the_goal(seed in any::<u64>(), len in 0usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = gen_instance(&InstanceKind::Blocksworld { blocks: 3 }, rng.gen()).unwrap();
        let walk = random_walk(&inst.domain, &inst.problem, len, rng.gen()).unwrap();
        let trace = trace_from_plan(&inst.problem.init, &walk).unwrap();
        prop_assert_eq!(check_coherence(&trace, &inst.domain), Coherence::Coherent);
        let verdict = validate_plan(&inst.domain, &inst.problem, &extract_plan(&trace));
        prop_assert!(
            verdict.valid || verdict.error_class == Some(ErrorClass::GoalNotAchieved),
            "coherent trace failed with {:?}", verdict.error_class
        );
    }

    #[test]
    fn coherence_equals_stepwise_validity_plus_chaining(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = gen_instance(&InstanceKind::Blocksworld { blocks: 3 }, rng.gen()).unwrap();
        let walk = random_walk(&inst.domain, &inst.problem, 4, rng.gen()).unwrap();
        let mut trace = trace_from_plan(&inst.problem.init, &walk).unwrap();
        // Randomly perturb one claimed state (or none).
        let universe = ground_atoms(&inst.domain, &inst.problem.objects).unwrap();
        if rng.gen_bool(0.7) && !trace.is_empty() {
            let i = rng.gen_range(0..trace.len());
            let atom = universe[rng.gen_range(0..universe.len())].clone();
            if trace.steps[i].s_next.contains(&atom) {
                trace.steps[i].s_next.remove(&atom);
            } else {
                trace.steps[i].s_next.insert(atom);
            }
        }
        let by_definition = trace.steps.iter().enumerate().all(|(i, step)| {
            let chained = i == 0 || trace.steps[i - 1].s_next == step.s_prev;
            let v = validate_step(&inst.domain, &step.s_prev, &step.action, &step.s_next, None, false)
                .unwrap();
            chained && v.status == StepStatus::Valid
        });
        prop_assert_eq!(
            check_coherence(&trace, &inst.domain) == Coherence::Coherent,
            by_definition
        );
    }

    #[test]
    fn parse_print_identity_on_generated_instances(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = if rng.gen_bool(0.5) {
            InstanceKind::MysteryBlocksworld { blocks: rng.gen_range(2..4) }
        } else {
            InstanceKind::Logistics {
                cities: rng.gen_range(1..3),
                locations_per_city: rng.gen_range(1..3),
                packages: 1,
                trucks: rng.gen_range(1..3),
                airplanes: 1,
            }
        };
        let inst = gen_instance(&kind, rng.gen()).unwrap();
        let d2 = parse_domain(&print_domain(&inst.domain)).unwrap();
        prop_assert_eq!(&d2, &inst.domain);
        let p2 = parse_problem(&print_problem(&inst.problem), &inst.domain).unwrap();
        prop_assert_eq!(&p2, &inst.problem);
        // Printing twice is byte-identical.
        prop_assert_eq!(print_domain(&inst.domain), print_domain(&d2));
        prop_assert_eq!(print_problem(&inst.problem), print_problem(&p2));
    }

    #[test]
    fn applicability_matches_subset(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = gen_instance(&InstanceKind::Blocksworld { blocks: 3 }, rng.gen()).unwrap();
        let actions = ground(&inst.domain, &inst.problem.objects).unwrap();
        let s = random_state(&mut rng);
        for a in actions.iter().take(10) {
            prop_assert_eq!(applicable(&s, a), a.pre.iter().all(|x| s.contains(x)));
        }
    }

    #[test]
    fn split_partitions_by_problem(seed in any::<u64>(), n_problems in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Synthetic final records, several per problem.
        let mut records = Vec::new();
        for p in 0..n_problems {
            for it in 0..rng.gen_range(1..4u32) {
                records.push(FinalRecord {
                    schema_version: SCHEMA_VERSION.to_string(),
                    problem_id: format!("prob-{p}"),
                    iteration: it,
                    domain: String::new(),
                    problem: String::new(),
                    plan: String::new(),
                    valid: rng.gen_range(0..2),
                    claimed_validity: 0.5,
                });
            }
        }
        let spec = SplitSpec::new(0.5, 0.3, 0.2, rng.gen()).unwrap();
        let (d1, d2, dt) = split_dataset(&records, &spec).unwrap();
        prop_assert_eq!(d1.len() + d2.len() + dt.len(), records.len());
        let keys = |v: &[FinalRecord]| -> BTreeSet<String> {
            v.iter().map(|r| r.problem_id.clone()).collect()
        };
        let (k1, k2, kt) = (keys(&d1), keys(&d2), keys(&dt));
        prop_assert!(k1.is_disjoint(&k2));
        prop_assert!(k1.is_disjoint(&kt));
        prop_assert!(k2.is_disjoint(&kt));
        // Deterministic under the same seed.
        let again = split_dataset(&records, &spec).unwrap();
        prop_assert_eq!((d1, d2, dt), again);
    }
}
