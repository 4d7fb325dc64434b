//! End-to-end tests of the `veriplan` binary: exit codes, file outputs, and
//! the documented subcommand behavior.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use veriplan::datagen::{gen_instances, InstanceKind};
use veriplan::planner::{solve, SearchLimits};
use veriplan::trace::{render_trace, trace_from_plan};

const BIN: &str = env!("CARGO_BIN_EXE_veriplan");

const BW_DOMAIN: &str = r#"(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block - object)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block)
               (clear ?x - block) (handempty) (holding ?x - block))
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

const BW_PROBLEM: &str = r#"(define (problem bw-2)
  (:domain blocksworld)
  (:objects a b - block)
  (:init (ontable a) (ontable b) (clear a) (clear b) (handempty))
  (:goal (and (on b a))))
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_fixtures(dir: &Path) -> (String, String) {
    let domain = dir.join("domain.pddl");
    let problem = dir.join("problem.pddl");
    fs::write(&domain, BW_DOMAIN).unwrap();
    fs::write(&problem, BW_PROBLEM).unwrap();
    (
        domain.to_string_lossy().into_owned(),
        problem.to_string_lossy().into_owned(),
    )
}

#[test]
fn validate_good_plan_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (domain, problem) = write_fixtures(dir.path());
    let plan = dir.path().join("plan.txt");
    fs::write(&plan, "(pick-up b)\n(stack b a)\n").unwrap();
    let out = run(&[
        "validate",
        "--domain",
        &domain,
        "--problem",
        &problem,
        "--plan",
        plan.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "valid");
}

#[test]
fn validate_bad_plan_names_the_step_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (domain, problem) = write_fixtures(dir.path());
    let plan = dir.path().join("plan.txt");
    fs::write(&plan, "(stack b a)\n(pick-up b)\n").unwrap();
    let out = run(&[
        "validate",
        "--domain",
        &domain,
        "--problem",
        &problem,
        "--plan",
        plan.to_str().unwrap(),
        "--feedback",
        "detailed",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("step 1: action (stack b a): missing preconditions"), "{stdout}");
}

#[test]
fn validate_binary_mode_prints_exactly_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let (domain, problem) = write_fixtures(dir.path());
    let plan = dir.path().join("plan.txt");
    fs::write(&plan, "").unwrap();
    let out = run(&[
        "validate",
        "--domain",
        &domain,
        "--problem",
        &problem,
        "--plan",
        plan.to_str().unwrap(),
        "--feedback",
        "binary",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "invalid");
}

#[test]
fn validate_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let (domain_path, problem_path) = write_fixtures(dir.path());
    let d = veriplan::text::parse_domain(BW_DOMAIN).unwrap();
    let p = veriplan::text::parse_problem(BW_PROBLEM, &d).unwrap();
    let plan = veriplan::text::parse_plan("(pick-up b)\n(stack b a)\n", &d, &p).unwrap();
    let trace_text = render_trace(&trace_from_plan(&p.init, &plan).unwrap());
    let trace = dir.path().join("trace.txt");
    fs::write(&trace, trace_text).unwrap();
    let out = run(&[
        "validate",
        "--domain",
        &domain_path,
        "--problem",
        &problem_path,
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (domain, problem) = write_fixtures(dir.path());
    let broken = dir.path().join("broken.pddl");
    fs::write(&broken, "(define (domain d) (:predicates (p)").unwrap();
    let out = run(&["validate", "--domain", broken.to_str().unwrap(), "--problem", &problem, "--plan", &domain]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["no-such-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plan_solves_and_output_validates() {
    let dir = tempfile::tempdir().unwrap();
    let (domain, problem) = write_fixtures(dir.path());
    let plan_path = dir.path().join("out.plan");
    let out = run(&[
        "plan",
        "--domain",
        &domain,
        "--problem",
        &problem,
        "--output",
        plan_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&plan_path).unwrap(), "(pick-up b)\n(stack b a)\n");

    let out = run(&[
        "validate",
        "--domain",
        &domain,
        "--problem",
        &problem,
        "--plan",
        plan_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn plan_reports_unsolvable_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (domain, _) = write_fixtures(dir.path());
    let problem = dir.path().join("impossible.pddl");
    fs::write(
        &problem,
        r#"(define (problem impossible) (:domain blocksworld)
           (:objects a - block)
           (:init (ontable a) (clear a) (handempty))
           (:goal (and (on a a))))"#,
    )
    .unwrap();
    let out = run(&["plan", "--domain", &domain, "--problem", problem.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsolvable"));
}

#[test]
fn gen_data_writes_dataset_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("data");
    let out = run(&[
        "--seed",
        "11",
        "gen-data",
        "--kind",
        "blocksworld,logistics",
        "--count",
        "12",
        "--split",
        "0.5,0.25,0.25",
        "--output",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let lines = |name: &str| -> usize {
        fs::read_to_string(outdir.join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .count()
    };
    assert_eq!(lines("phase1.jsonl"), 12);
    assert_eq!(lines("d1.jsonl") + lines("d2.jsonl") + lines("d_test.jsonl"), 12);
    assert_eq!(lines("d1.jsonl"), 6);
}

#[test]
fn run_loop_with_scripted_backend_and_losses() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("loop");
    // Instances the CLI will generate for --seed 5 / --count 2.
    let instances = gen_instances(&[InstanceKind::Blocksworld { blocks: 3 }], 2, 5).unwrap();
    let entries: Vec<serde_json::Value> = instances
        .iter()
        .map(|inst| {
            let plan = solve(&inst.domain, &inst.problem, &SearchLimits::default())
                .unwrap()
                .plan()
                .unwrap()
                .clone();
            let trace = render_trace(&trace_from_plan(&inst.problem.init, &plan).unwrap());
            serde_json::json!({"problem_id": inst.id, "iteration": 2, "completion": trace})
        })
        .collect();
    let script = dir.path().join("script.json");
    fs::write(
        &script,
        serde_json::json!({"default": "thinking...", "entries": entries}).to_string(),
    )
    .unwrap();

    let out = run(&[
        "--seed",
        "5",
        "run-loop",
        "--kind",
        "blocksworld",
        "--count",
        "2",
        "--eta",
        "3",
        "--script",
        script.to_str().unwrap(),
        "--output",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2/2 solved (100.0%)"), "{stdout}");
    assert!(outdir.join("campaign.json").exists());
    assert!(outdir.join("d_reasoning_t2.jsonl").exists());

    // Feed the emitted datasets to the losses subcommand.
    let report_path = dir.path().join("losses.json");
    let out = run(&[
        "losses",
        "--reasoning",
        outdir.join("d_reasoning_t2.jsonl").to_str().unwrap(),
        "--final",
        outdir.join("d_final_t2.jsonl").to_str().unwrap(),
        "--output",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["loss_reasoning"], serde_json::json!(0.0));
    assert_eq!(report["invalid_plans"], serde_json::json!(0));
}

#[test]
fn evaluate_with_scripted_backend_prints_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let instances = gen_instances(&[InstanceKind::Blocksworld { blocks: 3 }], 4, 9).unwrap();
    let entries: Vec<serde_json::Value> = instances
        .iter()
        .take(3)
        .map(|inst| {
            let plan = solve(&inst.domain, &inst.problem, &SearchLimits::default())
                .unwrap()
                .plan()
                .unwrap()
                .clone();
            let trace = render_trace(&trace_from_plan(&inst.problem.init, &plan).unwrap());
            serde_json::json!({"problem_id": inst.id, "iteration": 1, "completion": trace})
        })
        .collect();
    let script = dir.path().join("script.json");
    fs::write(
        &script,
        serde_json::json!({"default": "no idea", "entries": entries}).to_string(),
    )
    .unwrap();
    let report = dir.path().join("eval.json");
    let out = run(&[
        "--seed",
        "9",
        "evaluate",
        "--kind",
        "blocksworld",
        "--count",
        "4",
        "--script",
        script.to_str().unwrap(),
        "--output",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("accuracy 75.0%"), "{stdout}");
    assert!(stdout.contains("Total Failure Rate"), "{stdout}");
    let payload: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(payload["results"][0]["accuracy_percent"], serde_json::json!(75.0));
}
